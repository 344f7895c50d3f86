//! Adam, the stepwise learning-rate decay and plateau detection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Steps per decay interval of the learning rate.
pub const DECAY_INTERVAL: usize = 150;
pub const DECAY_FACTOR: f64 = 0.99;
/// Consecutive non-finite gradients tolerated before aborting.
pub const MAX_CONSECUTIVE_SKIPS: usize = 10;

/// `ρ_k = 0.99^{⌊k/150⌋} ρ₀`.
pub fn lr_schedule(k: usize, rho0: f64) -> f64 {
    rho0 * DECAY_FACTOR.powi((k / DECAY_INTERVAL) as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    consecutive_skips: usize,
    total_skips: usize,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0, consecutive_skips: 0, total_skips: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn total_skips(&self) -> usize {
        self.total_skips
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Applies one bias-corrected update. Returns `false` when a non-finite
    /// gradient caused the update to be skipped.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<bool> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch { context: "optimizer state", expected: self.m.len(), actual: grads.len() });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            self.consecutive_skips += 1;
            self.total_skips += 1;
            log::warn!("skipping update with non-finite gradient ({} in a row)", self.consecutive_skips);
            if self.consecutive_skips >= MAX_CONSECUTIVE_SKIPS {
                return Err(Error::TooManySkippedUpdates(self.consecutive_skips));
            }
            return Ok(false);
        }
        self.consecutive_skips = 0;
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(true)
    }
}

/// Resets the decay counter when the windowed median loss stalls.
///
/// Every `window` steps, once two full windows have elapsed since the last reset,
/// compares the median of the latest window with the one before it.
#[derive(Clone, Debug)]
pub struct Plateau {
    window: usize,
    min_improvement: f64,
    history: VecDeque<f64>,
    since_reset: usize,
}

impl Plateau {
    pub fn new(window: usize, min_improvement: f64) -> Self {
        Self { window: window.max(1), min_improvement, history: VecDeque::new(), since_reset: 0 }
    }

    /// Steps since the last reset; this is the `k` fed to [`lr_schedule`].
    pub fn decay_step(&self) -> usize {
        self.since_reset
    }

    /// Records the loss of the step just taken; returns `true` on a reset.
    pub fn observe(&mut self, loss: f64) -> bool {
        self.history.push_back(loss);
        if self.history.len() > 2 * self.window {
            self.history.pop_front();
        }
        self.since_reset += 1;
        if self.since_reset >= 2 * self.window && self.since_reset.is_multiple_of(self.window) {
            let (older, newer): (Vec<f64>, Vec<f64>) = {
                let v: Vec<f64> = self.history.iter().copied().collect();
                (v[..self.window].to_vec(), v[self.window..].to_vec())
            };
            let (a, b) = (median(older), median(newer));
            if a - b < self.min_improvement * a.abs() {
                self.since_reset = 0;
                self.history.clear();
                return true;
            }
        }
        false
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_uses_integer_division() {
        assert_eq!(lr_schedule(0, 1e-3), 1e-3);
        assert_eq!(lr_schedule(149, 1e-3), 1e-3);
        assert!((lr_schedule(150, 1e-3) - 0.99e-3).abs() < 1e-18);
        assert!((lr_schedule(450, 2.0) - 2.0 * 0.99f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let mut adam = Adam::new(2);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[0.5, 0.5], 0.1).unwrap();
        let after_first = p.clone();
        let (m0, v0) = (adam.m.clone(), adam.v.clone());
        let mut adam2 = adam.clone();
        adam2.step(&mut p, &[0.0, 0.0], 0.1).unwrap();
        // Zero gradient still moves along the decayed first moment.
        assert_ne!(p, after_first);
        assert!((adam2.m[0] - 0.9 * m0[0]).abs() < 1e-16);
        assert!((adam2.v[0] - 0.999 * v0[0]).abs() < 1e-16);
        let mut fresh = Adam::new(2);
        let mut q = vec![1.0, -1.0];
        fresh.step(&mut q, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(q, vec![1.0, -1.0]);
    }

    #[test]
    fn first_step_matches_hand_formula() {
        // m̂ = g, v̂ = g² ⇒ Δ = −lr g/(|g| + ε).
        let mut adam = Adam::new(3);
        let g = [2.0, -0.5, 1e-3];
        let mut p = vec![0.0; 3];
        adam.step(&mut p, &g, 0.01).unwrap();
        for i in 0..3 {
            let expected = -0.01 * g[i] / (g[i].abs() + 1e-8);
            assert!((p[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_step_length_tends_to_lr() {
        let mut adam = Adam::new(1);
        let mut p = vec![0.0];
        let mut last = 0.0;
        for _ in 0..1000 {
            let before = p[0];
            adam.step(&mut p, &[3.0], 1e-3).unwrap();
            last = p[0] - before;
        }
        assert!((last.abs() / 1e-3 - 1.0).abs() < 0.01);
        assert!(last < 0.0);
    }

    #[test]
    fn aborts_after_consecutive_non_finite_gradients() {
        let mut adam = Adam::new(1);
        let mut p = vec![1.0];
        for _ in 0..MAX_CONSECUTIVE_SKIPS - 1 {
            assert!(!adam.step(&mut p, &[f64::NAN], 0.1).unwrap());
        }
        assert_eq!(p, vec![1.0]);
        assert!(matches!(adam.step(&mut p, &[f64::INFINITY], 0.1), Err(Error::TooManySkippedUpdates(10))));
        let mut adam = Adam::new(1);
        for _ in 0..20 {
            let _ = adam.step(&mut p, &[f64::NAN], 0.1);
            adam.step(&mut p, &[1.0], 0.1).unwrap();
        }
        assert_eq!(adam.total_skips(), 20);
    }

    #[test]
    fn plateau_resets_on_flat_loss_only() {
        let mut flat = Plateau::new(10, 0.01);
        let resets: Vec<usize> = (0..60).filter(|_| flat.observe(1.0)).collect();
        assert_eq!(resets.len(), 3);
        let mut falling = Plateau::new(10, 0.01);
        assert!((0..200).all(|k| !falling.observe(0.9f64.powi(k))));
        assert_eq!(falling.decay_step(), 200);
    }
}
