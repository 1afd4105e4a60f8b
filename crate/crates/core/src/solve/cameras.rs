//! Per-frame camera subsets.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Keep the current set and replace a member only when it disappears,
    /// preferring cameras with the longest upcoming availability run.
    Greedy,
    /// Uniform `k`-subset of the available cameras, drawn per frame.
    Random,
}

/// Length of the availability run of `cam` starting at `frame`.
fn run_length(availability: &[Vec<String>], frame: usize, cam: &str) -> usize {
    availability[frame..].iter().take_while(|a| a.iter().any(|c| c == cam)).count()
}

/// Chooses at most `k` cameras per frame from `availability` (ids per frame).
/// Frames with nothing available get an empty set. Output ids are sorted.
pub fn select_cameras(availability: &[Vec<String>], policy: SelectionPolicy, k: usize, seed: u64) -> Vec<Vec<String>> {
    match policy {
        SelectionPolicy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            availability
                .iter()
                .map(|a| {
                    let mut s: Vec<String> = a.choose_multiple(&mut rng, k.min(a.len())).cloned().collect();
                    s.sort();
                    s
                })
                .collect()
        }
        SelectionPolicy::Greedy => {
            let mut current: Vec<String> = Vec::new();
            let mut out = Vec::with_capacity(availability.len());
            for (n, avail) in availability.iter().enumerate() {
                current.retain(|c| avail.contains(c));
                if current.len() < k {
                    let mut candidates: Vec<(usize, &String)> = avail
                        .iter()
                        .filter(|c| !current.contains(c))
                        .map(|c| (run_length(availability, n, c), c))
                        .collect();
                    // Longest run first, ties by id.
                    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
                    let need = k - current.len();
                    current.extend(candidates.into_iter().take(need).map(|(_, c)| c.clone()));
                    current.sort();
                }
                out.push(current.clone());
            }
            out
        }
    }
}

/// Number of frames whose set differs from the previous frame's.
pub fn count_switches(selection: &[Vec<String>]) -> usize {
    selection.windows(2).filter(|w| w[0] != w[1]).count()
}
