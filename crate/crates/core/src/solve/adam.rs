//! Bias-corrected Adam over a flat parameter vector.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One update. `lr` is per coordinate; coordinates with `lr == 0` are left
/// bit-identical (their moments still decay).
pub fn adam_step(x: &mut [f64], grad: &[f64], state: &mut AdamState, lr: &[f64], cfg: &AdamConfig) {
    assert!(x.len() == grad.len() && x.len() == lr.len() && x.len() == state.m.len());
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..x.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        if lr[i] != 0.0 {
            let mh = state.m[i] / c1;
            let vh = state.v[i] / c2;
            x[i] -= lr[i] * mh / (vh.sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut x = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        s.m = vec![0.5, 0.5];
        s.v = vec![1.0, 1.0];
        adam_step(&mut x, &[0.0, 0.0], &mut s, &[0.0, 0.0], &AdamConfig::default());
        assert_eq!(x, vec![1.0, -2.0]);
        assert!((s.m[0] - 0.45).abs() < 1e-15 && (s.v[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // Oracle: the same recurrence written out by hand for x0 = (5, 5).
        let mut x = vec![5.0, 5.0];
        let mut s = AdamState::new(2);
        let cfg = AdamConfig::default();
        let (mut m, mut v, mut r) = (0.0f64, 0.0f64, 5.0f64);
        for t in 1..=100 {
            let g: Vec<f64> = x.iter().map(|x| 2.0 * x).collect();
            adam_step(&mut x, &g, &mut s, &[0.1, 0.1], &cfg);
            let gr = 2.0 * r;
            m = 0.9 * m + 0.1 * gr;
            v = 0.999 * v + 0.001 * gr * gr;
            r -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        assert!((x[0] - r).abs() < 1e-12);
        assert!((x[0] * x[0] + x[1] * x[1]).sqrt() < 0.1);
    }

    proptest! {
        #[test]
        fn first_step_moves_by_learning_rate(g in prop::collection::vec(-1e3f64..1e3, 1..8), lr in 1e-4f64..1.0) {
            prop_assume!(g.iter().all(|g| g.abs() > 1e-3));
            let mut x = vec![0.0; g.len()];
            let mut s = AdamState::new(g.len());
            adam_step(&mut x, &g, &mut s, &vec![lr; g.len()], &AdamConfig::default());
            for (x, g) in x.iter().zip(&g) {
                prop_assert!((x + lr * g.signum()).abs() < 1e-6 * lr);
            }
        }

        #[test]
        fn frozen_coordinates_are_bit_identical(x0 in prop::collection::vec(-10f64..10.0, 4), g in prop::collection::vec(-5f64..5.0, 4)) {
            let mut x = x0.clone();
            let mut s = AdamState::new(4);
            for _ in 0..3 {
                adam_step(&mut x, &g, &mut s, &[0.1, 0.0, 0.1, 0.0], &AdamConfig::default());
            }
            prop_assert_eq!(x[1].to_bits(), x0[1].to_bits());
            prop_assert_eq!(x[3].to_bits(), x0[3].to_bits());
        }
    }
}
