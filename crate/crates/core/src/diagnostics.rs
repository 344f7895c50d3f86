//! Relative trajectory errors, exponential rate fits and phase-space histograms.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::PhaseState;
use crate::psd::SnapshotSet;

/// Pointwise mean, min and max across parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// One entry per parameter.
    pub err_x_mu: Vec<f64>,
    pub err_v_mu: Vec<f64>,
    /// Snapshot step indices shared by every trajectory.
    pub steps: Vec<usize>,
    pub err_x_t: Aggregate,
    pub err_v_t: Aggregate,
}

impl ErrorReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,err_x_mean,err_x_min,err_x_max,err_v_mean,err_v_min,err_v_max")?;
        for (i, s) in self.steps.iter().enumerate() {
            let (x, v) = (&self.err_x_t, &self.err_v_t);
            writeln!(w, "{s},{:e},{:e},{:e},{:e},{:e},{:e}", x.mean[i], x.min[i], x.max[i], v.mean[i], v.min[i], v.max[i])?;
        }
        Ok(())
    }
}

/// Squared norms `(‖Δx‖², ‖x_ref‖², ‖Δv‖², ‖v_ref‖²)` of one snapshot pair.
///
/// With a domain length, position differences use the minimal periodic image and
/// reference positions are measured in `[0, L)`.
fn snapshot_sums(r: &[f64], t: &[f64], n: usize, period: Option<f64>) -> [f64; 4] {
    let mut s = [0.0; 4];
    for i in 0..n {
        let (dx, xr) = match period {
            Some(l) => {
                let d = t[i] - r[i];
                (d - l * (d / l).round(), r[i].rem_euclid(l))
            }
            None => (t[i] - r[i], r[i]),
        };
        s[0] += dx * dx;
        s[1] += xr * xr;
        let dv = t[n + i] - r[n + i];
        s[2] += dv * dv;
        s[3] += r[n + i] * r[n + i];
    }
    s
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Relative Frobenius errors for index-aligned reference/test trajectories, one pair per parameter.
pub fn relative_errors(refs: &[SnapshotSet], tests: &[SnapshotSet], period: Option<f64>) -> Result<ErrorReport> {
    if refs.len() != tests.len() || refs.is_empty() {
        return Err(Error::DimensionMismatch { context: "trajectory count", expected: refs.len(), actual: tests.len() });
    }
    let n_t = refs[0].len();
    let mut report = ErrorReport { steps: refs[0].meta().iter().map(|m| m.step).collect(), ..Default::default() };
    let mut per_t_x = vec![Vec::with_capacity(refs.len()); n_t];
    let mut per_t_v = vec![Vec::with_capacity(refs.len()); n_t];
    for (r, t) in refs.iter().zip(tests) {
        if r.len() != n_t || t.len() != n_t {
            return Err(Error::DimensionMismatch { context: "snapshot count", expected: n_t, actual: t.len().min(r.len()) });
        }
        if r.n() != t.n() {
            return Err(Error::DimensionMismatch { context: "particle count", expected: r.n(), actual: t.n() });
        }
        let mut tot = [0.0; 4];
        for j in 0..n_t {
            let s = snapshot_sums(r.column(j), t.column(j), r.n(), period);
            per_t_x[j].push(ratio(s[0], s[1]));
            per_t_v[j].push(ratio(s[2], s[3]));
            for q in 0..4 {
                tot[q] += s[q];
            }
        }
        report.err_x_mu.push(ratio(tot[0], tot[1]));
        report.err_v_mu.push(ratio(tot[2], tot[3]));
    }
    let agg = |per: &[Vec<f64>]| {
        let mut a = Aggregate::default();
        for v in per {
            a.mean.push(v.iter().sum::<f64>() / v.len() as f64);
            a.min.push(v.iter().cloned().fold(f64::INFINITY, f64::min));
            a.max.push(v.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
        a
    };
    report.err_x_t = agg(&per_t_x);
    report.err_v_t = agg(&per_t_v);
    Ok(report)
}

/// Least-squares line through `(t_peak, ln E_peak)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: [f64; 2],
    pub r2: f64,
    pub peaks: Vec<(f64, f64)>,
}

/// Fits the exponential rate of the peaks of `energy` inside `[t0, t1]`.
///
/// Peaks are strict local maxima. A series that is constant on the window fits with
/// slope 0 through all of its samples.
pub fn fit_rate(times: &[f64], energy: &[f64], window: [f64; 2]) -> Result<RateFit> {
    if times.len() != energy.len() {
        return Err(Error::DimensionMismatch { context: "rate-fit series", expected: times.len(), actual: energy.len() });
    }
    let [t0, t1] = window;
    if !(t0 < t1) {
        return Err(Error::invalid(format!("rate-fit window must satisfy t0 < t1, got [{t0}, {t1}]")));
    }
    let inside: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= t0 && times[i] <= t1).collect();
    if let Some(&i) = inside.iter().find(|&&i| !(energy[i] > 0.0)) {
        return Err(Error::invalid(format!("rate fit needs positive energies, got {} at t = {}", energy[i], times[i])));
    }
    let constant = inside.len() >= 3 && inside.iter().all(|&i| energy[i] == energy[inside[0]]);
    let picked: Vec<usize> = if constant {
        inside.clone()
    } else {
        inside.iter().copied().filter(|&i| i > 0 && i + 1 < energy.len() && energy[i] > energy[i - 1] && energy[i] > energy[i + 1]).collect()
    };
    if picked.len() < 3 {
        return Err(Error::TooFewPeaks { t0, t1, found: picked.len() });
    }
    let peaks: Vec<(f64, f64)> = picked.iter().map(|&i| (times[i], energy[i].ln())).collect();
    let n = peaks.len() as f64;
    let mt = peaks.iter().map(|p| p.0).sum::<f64>() / n;
    let my = peaks.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = peaks.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = peaks.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = peaks.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let r2 = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Ok(RateFit { slope, intercept, window, r2, peaks })
}

/// Bin masses on a periodic-in-`x` grid; rows are `x` bins, columns `v` bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub bins_x: usize,
    pub bins_v: usize,
    pub length: f64,
    pub v_range: [f64; 2],
    pub mass: Vec<f64>,
}

impl Histogram2d {
    pub fn at(&self, ix: usize, iv: usize) -> f64 {
        self.mass[ix * self.bins_v + iv]
    }

    pub fn x_marginal(&self) -> Vec<f64> {
        self.mass.chunks_exact(self.bins_v).map(|r| r.iter().sum()).collect()
    }

    pub fn v_marginal(&self) -> Vec<f64> {
        (0..self.bins_v).map(|iv| (0..self.bins_x).map(|ix| self.at(ix, iv)).sum()).collect()
    }

    /// Mass divided by bin area.
    pub fn density(&self) -> Vec<f64> {
        let area = (self.length / self.bins_x as f64) * ((self.v_range[1] - self.v_range[0]) / self.bins_v as f64);
        self.mass.iter().map(|m| m / area).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,v,density")?;
        let dx = self.length / self.bins_x as f64;
        let dv = (self.v_range[1] - self.v_range[0]) / self.bins_v as f64;
        let d = self.density();
        for ix in 0..self.bins_x {
            for iv in 0..self.bins_v {
                let (x, v) = ((ix as f64 + 0.5) * dx, self.v_range[0] + (iv as f64 + 0.5) * dv);
                writeln!(w, "{x:e},{v:e},{:e}", d[ix * self.bins_v + iv])?;
            }
        }
        Ok(())
    }
}

/// Equal-weight particle histogram normalized to unit mass; velocities outside
/// `v_range` are counted in the edge bins.
pub fn phase_space_histogram(state: &PhaseState, length: f64, bins_x: usize, bins_v: usize, v_range: [f64; 2]) -> Result<Histogram2d> {
    if bins_x < 2 || bins_v < 2 {
        return Err(Error::invalid("histogram needs at least 2 bins per axis"));
    }
    if !(v_range[0] < v_range[1]) || !(length > 0.0) {
        return Err(Error::invalid("histogram needs a positive domain length and v_min < v_max"));
    }
    let n = state.dim();
    if n == 0 {
        return Err(Error::invalid("histogram of an empty state"));
    }
    let mut mass = vec![0.0; bins_x * bins_v];
    let w = 1.0 / n as f64;
    let dv = (v_range[1] - v_range[0]) / bins_v as f64;
    for (&x, &v) in state.x.iter().zip(&state.v) {
        let ix = (((x.rem_euclid(length)) / length * bins_x as f64) as usize).min(bins_x - 1);
        let iv = (((v - v_range[0]) / dv).floor().max(0.0) as usize).min(bins_v - 1);
        mass[ix * bins_v + iv] += w;
    }
    Ok(Histogram2d { bins_x, bins_v, length, v_range, mass })
}
