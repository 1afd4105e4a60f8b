//! Versioned JSON envelope shared by every file the crate reads or writes.
//!
//! Each file is `{"format": .., "version": .., "units": .., "data": ..}`.
//! A wrong format or units string is a parse error and a wrong version is a
//! [`Error::SchemaVersion`]; nothing is coerced.

use std::fs;
use std::path::Path;

use serde::de::{DeserializeOwned, IgnoredAny};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version of every schema written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format: &'a str,
    version: u32,
    units: &'a str,
    data: &'a T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    units: String,
    #[allow(dead_code)]
    data: IgnoredAny,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeIn<T> {
    #[allow(dead_code)]
    format: String,
    #[allow(dead_code)]
    version: u32,
    #[allow(dead_code)]
    units: String,
    data: T,
}

pub(crate) fn parse_error(file: &Path, record: impl Into<String>, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        record: record.into(),
        field: field.into(),
        message: message.into(),
    }
}

pub(crate) fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

/// Serializes `data` into the envelope.
pub fn to_document_string<T: Serialize>(format: &str, units: &str, data: &T) -> Result<String> {
    let env = EnvelopeOut { format, version: SCHEMA_VERSION, units, data };
    let mut s = serde_json::to_string_pretty(&env).map_err(|e| Error::InvalidArgument(format!("cannot serialize {format}: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Parses an envelope from `text`; `file` is used for diagnostics only.
pub fn from_document_str<T: DeserializeOwned>(text: &str, file: &Path, format: &str, units: &str) -> Result<T> {
    let header: Header = serde_json::from_str(text).map_err(|e| parse_error(file, "document", "header", e.to_string()))?;
    if header.format != format {
        return Err(parse_error(file, "document", "format", format!("expected `{format}`, found `{}`", header.format)));
    }
    if header.version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            file: file.to_path_buf(),
            format: format.into(),
            found: header.version,
            expected: SCHEMA_VERSION,
        });
    }
    if header.units != units {
        return Err(parse_error(file, "document", "units", format!("expected `{units}`, found `{}`", header.units)));
    }
    let mut de = serde_json::Deserializer::from_str(text);
    let env: EnvelopeIn<T> = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let (record, field) = match path.rfind('.') {
            Some(i) => (path[..i].to_string(), path[i + 1..].to_string()),
            None => ("document".to_string(), path.clone()),
        };
        parse_error(file, record, field, e.into_inner().to_string())
    })?;
    Ok(env.data)
}

/// Writes a document, creating parent directories.
pub fn write_document<T: Serialize>(path: &Path, format: &str, units: &str, data: &T) -> Result<()> {
    let text = to_document_string(format, units, data)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn read_document<T: DeserializeOwned>(path: &Path, format: &str, units: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    from_document_str(&text, path, format, units)
}

/// `f64` that may be infinite or NaN: finite values are JSON numbers, the
/// others the strings `"inf"`, `"-inf"` and `"nan"`.
pub mod extended_f64 {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct V;

    impl Visitor<'_> for V {
        type Value = f64;
        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
        }
        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }
        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }
        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }
        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Doc {
        name: String,
        #[serde(with = "extended_f64")]
        x: f64,
    }

    fn file() -> PathBuf {
        PathBuf::from("doc.json")
    }

    #[test]
    fn round_trip_with_infinity() {
        for x in [1.5, f64::INFINITY, f64::NEG_INFINITY, 0.1 + 0.2] {
            let d = Doc { name: "a".into(), x };
            let s = to_document_string("doc", "m", &d).unwrap();
            assert_eq!(from_document_str::<Doc>(&s, &file(), "doc", "m").unwrap(), d);
        }
    }

    #[test]
    fn version_mismatch_is_hard_error() {
        let s = to_document_string("doc", "m", &Doc { name: "a".into(), x: 1.0 }).unwrap().replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(from_document_str::<Doc>(&s, &file(), "doc", "m"), Err(Error::SchemaVersion { found: 2, .. })));
    }

    #[test]
    fn wrong_units_or_format_rejected() {
        let s = to_document_string("doc", "mm", &Doc { name: "a".into(), x: 1.0 }).unwrap();
        assert!(matches!(from_document_str::<Doc>(&s, &file(), "doc", "m"), Err(Error::Parse { ref field, .. }) if field == "units"));
        assert!(matches!(from_document_str::<Doc>(&s, &file(), "other", "mm"), Err(Error::Parse { ref field, .. }) if field == "format"));
    }

    #[test]
    fn malformed_field_names_record_and_field() {
        let s = r#"{"format":"doc","version":1,"units":"m","data":{"name":"a","x":"oops"}}"#;
        match from_document_str::<Doc>(s, &file(), "doc", "m") {
            Err(Error::Parse { file, record, field, .. }) => {
                assert_eq!(file, PathBuf::from("doc.json"));
                assert_eq!(record, "data");
                assert_eq!(field, "x");
            }
            other => panic!("{other:?}"),
        }
    }
}
