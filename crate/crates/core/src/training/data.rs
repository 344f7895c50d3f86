//! Reduced training data, input scaling and pair sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative floor applied to singular values before scaling.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Mode-wise scaling `ũ_k ↦ σ_k^{-1/2} ũ_k`, shared by the position and velocity blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    inv_sqrt: Vec<f64>,
}

impl Scaling {
    pub fn from_singular_values(sigma: &[f64]) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::invalid("scaling needs at least one singular value"));
        }
        if let Some(&s) = sigma.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("singular values must be positive and finite, got {s}")));
        }
        let floor = SIGMA_FLOOR * sigma.iter().cloned().fold(0.0, f64::max);
        Ok(Self { inv_sqrt: sigma.iter().map(|&s| 1.0 / s.max(floor).sqrt()).collect() })
    }

    pub fn identity(m: usize) -> Self {
        Self { inv_sqrt: vec![1.0; m] }
    }

    pub fn m(&self) -> usize {
        self.inv_sqrt.len()
    }

    pub fn factors(&self) -> &[f64] {
        &self.inv_sqrt
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != 2 * self.m() {
            return Err(Error::DimensionMismatch { context: "scaled intermediate state", expected: 2 * self.m(), actual: u.len() });
        }
        Ok(())
    }

    pub fn preprocess(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check(u)?;
        let m = self.m();
        Ok(u.iter().enumerate().map(|(i, &x)| x * self.inv_sqrt[i % m]).collect())
    }

    pub fn postprocess(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check(u)?;
        let m = self.m();
        Ok(u.iter().enumerate().map(|(i, &x)| x / self.inv_sqrt[i % m]).collect())
    }
}

/// One trajectory of preprocessed intermediate states, stored row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedTrajectory {
    pub alpha: f64,
    pub sigma: f64,
    states: Vec<f64>,
}

impl ReducedTrajectory {
    pub fn len(&self, dim: usize) -> usize {
        self.states.len() / dim
    }
}

/// `(trajectory, step)` of the first element of a training pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairIndex {
    pub trajectory: usize,
    pub step: usize,
}

/// Preprocessed intermediate states of several trajectories at a common time step.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedDataset {
    scaling: Scaling,
    trajectories: Vec<ReducedTrajectory>,
}

impl ReducedDataset {
    pub fn new(scaling: Scaling) -> Self {
        Self { scaling, trajectories: Vec::new() }
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    /// Half-dimension `m` of the intermediate states.
    pub fn m(&self) -> usize {
        self.scaling.m()
    }

    pub fn dim(&self) -> usize {
        2 * self.m()
    }

    /// Appends a trajectory of raw (unscaled) states, one `2m` row per step.
    pub fn push_raw(&mut self, alpha: f64, sigma: f64, rows: &[f64]) -> Result<()> {
        let dim = self.dim();
        if rows.is_empty() || !rows.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { context: "reduced trajectory", expected: dim, actual: rows.len() % dim });
        }
        let mut states = Vec::with_capacity(rows.len());
        for row in rows.chunks_exact(dim) {
            states.extend(self.scaling.preprocess(row)?);
        }
        self.trajectories.push(ReducedTrajectory { alpha, sigma, states });
        Ok(())
    }

    /// Groups the columns of a reduced snapshot set (`n = m`) by trajectory label,
    /// keeping column order within each trajectory.
    pub fn from_snapshots(set: &crate::psd::SnapshotSet, scaling: Scaling) -> Result<Self> {
        if set.n() != scaling.m() {
            return Err(Error::DimensionMismatch { context: "reduced snapshots vs scaling", expected: scaling.m(), actual: set.n() });
        }
        let mut order: Vec<usize> = Vec::new();
        let mut groups: std::collections::BTreeMap<usize, (f64, f64, Vec<f64>)> = Default::default();
        for (j, meta) in set.meta().iter().enumerate() {
            let g = groups.entry(meta.trajectory).or_insert_with(|| {
                order.push(meta.trajectory);
                (meta.alpha, meta.sigma, Vec::new())
            });
            g.2.extend_from_slice(set.column(j));
        }
        let mut d = Self::new(scaling);
        for t in order {
            let (alpha, sigma, rows) = &groups[&t];
            d.push_raw(*alpha, *sigma, rows)?;
        }
        Ok(d)
    }

    pub fn trajectories(&self) -> &[ReducedTrajectory] {
        &self.trajectories
    }

    pub fn trajectory_len(&self, t: usize) -> usize {
        self.trajectories[t].len(self.dim())
    }

    /// Preprocessed state `n` of trajectory `t`.
    pub fn state(&self, t: usize, n: usize) -> &[f64] {
        let dim = self.dim();
        &self.trajectories[t].states[n * dim..(n + 1) * dim]
    }

    /// Preprocessed pair `(ũⁿ, ũⁿ⁺ˢ)`; panics when the pair leaves its trajectory.
    pub fn pair(&self, idx: PairIndex, s: usize) -> (&[f64], &[f64]) {
        assert!(idx.step + s < self.trajectory_len(idx.trajectory), "pair crosses a trajectory boundary");
        (self.state(idx.trajectory, idx.step), self.state(idx.trajectory, idx.step + s))
    }

    pub fn n_pairs(&self, s: usize) -> usize {
        (0..self.trajectories.len()).map(|t| self.trajectory_len(t).saturating_sub(s)).sum()
    }

    /// `batch` pairs drawn uniformly from all valid `(trajectory, n)` with `n + s` in range.
    pub fn sample_pairs<R: Rng>(&self, s: usize, batch: usize, rng: &mut R) -> Result<Vec<PairIndex>> {
        let counts: Vec<usize> = (0..self.trajectories.len()).map(|t| self.trajectory_len(t).saturating_sub(s)).collect();
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::WatchTooLong {
                s,
                longest: (0..self.trajectories.len()).map(|t| self.trajectory_len(t)).max().unwrap_or(0),
            });
        }
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mut r = rng.random_range(0..total);
            let mut t = 0;
            while r >= counts[t] {
                r -= counts[t];
                t += 1;
            }
            debug_assert!(r + s < self.trajectory_len(t));
            out.push(PairIndex { trajectory: t, step: r });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_sigma_is_identity() {
        let s = Scaling::from_singular_values(&[1.0, 1.0]).unwrap();
        assert_eq!(s.preprocess(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn sigma_four_halves_every_coordinate() {
        let s = Scaling::from_singular_values(&[4.0; 3]).unwrap();
        assert_eq!(s.preprocess(&[2.0; 6]).unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn mode_pairing_and_round_trip() {
        let s = Scaling::from_singular_values(&[9.0, 0.25, 1e-30]).unwrap();
        let u = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0];
        let p = s.preprocess(&u).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[3] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 2.0).abs() < 1e-15 && (p[4] - 4.0).abs() < 1e-15);
        // floor at 1e-8·σ₁ = 9e-8
        assert!((p[2] - 1.0 / 9e-8f64.sqrt()).abs() < 1e-9);
        let back = s.postprocess(&p).unwrap();
        for (a, b) in back.iter().zip(&u) {
            assert!((a - b).abs() <= 1e-14 * b.abs());
        }
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        assert!(Scaling::from_singular_values(&[1.0, 0.0]).is_err());
        assert!(Scaling::from_singular_values(&[1.0, -2.0]).is_err());
    }

    fn dataset(lens: &[usize]) -> ReducedDataset {
        let mut d = ReducedDataset::new(Scaling::identity(1));
        for (t, &len) in lens.iter().enumerate() {
            let rows: Vec<f64> = (0..len).flat_map(|n| [t as f64, n as f64]).collect();
            d.push_raw(0.0, 1.0, &rows).unwrap();
        }
        d
    }

    #[test]
    fn single_short_trajectory_has_one_pair() {
        let d = dataset(&[4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairs = d.sample_pairs(3, 10, &mut rng).unwrap();
        assert!(pairs.iter().all(|p| *p == PairIndex { trajectory: 0, step: 0 }));
        assert!(matches!(d.sample_pairs(4, 1, &mut rng), Err(Error::WatchTooLong { .. })));
    }

    #[test]
    fn sampling_is_reproducible_and_stays_inside_trajectories() {
        let d = dataset(&[10, 3, 7]);
        let a = d.sample_pairs(2, 500, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = d.sample_pairs(2, 500, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        for p in a {
            let (u0, u1) = d.pair(p, 2);
            assert_eq!(u0[0], u1[0]);
            assert_eq!(u1[1] - u0[1], 2.0);
        }
    }

    #[test]
    fn sampling_is_uniform_over_valid_pairs() {
        let d = dataset(&[12, 5, 9]);
        let s = 3;
        let n_valid = d.n_pairs(s);
        let draws = 100_000;
        let pairs = d.sample_pairs(s, draws, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let mut counts = std::collections::HashMap::new();
        for p in pairs {
            *counts.entry(p).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), n_valid);
        let p = 1.0 / n_valid as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for (_, c) in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd + 1.0, "{c} vs {mean}±{sd}");
        }
    }
}
