//! Central finite-difference check of the analytic objective gradient.

use super::composite::{Objective, Params};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Flat index attaining the maximum.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares `d total / d x_i` for each flat index in `indices` against
/// `(L(x + h e_i) - L(x - h e_i)) / 2h`. `floor` keeps near-zero entries
/// from dominating the relative error.
pub fn check_gradient(obj: &Objective, params: &Params, indices: &[usize], h: f64, floor: f64) -> Result<GradCheck> {
    let full = obj.evaluate(params, true)?.grad.expect("gradient requested").flatten();
    let x0 = params.flatten();
    let mut p = params.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst_index: indices.first().copied().unwrap_or(0),
        analytic: Vec::with_capacity(indices.len()),
        numeric: Vec::with_capacity(indices.len()),
    };
    for &i in indices {
        let mut x = x0.clone();
        x[i] = x0[i] + h;
        p.assign(&x);
        let up = obj.evaluate(&p, false)?.loss.total;
        x[i] = x0[i] - h;
        p.assign(&x);
        let down = obj.evaluate(&p, false)?.loss.total;
        let num = (up - down) / (2.0 * h);
        let ana = full[i];
        let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(floor);
        if rel > out.max_rel_error {
            out.max_rel_error = rel;
            out.worst_index = i;
        }
        out.analytic.push(ana);
        out.numeric.push(num);
    }
    Ok(out)
}
