//! Deterministic quiet-start sampling of the parameterized initial distributions.
//!
//! Positions take the equispaced Hammersley coordinate pushed through the inverse
//! CDF of `(k/2π)(1 + α cos kx)`; velocities take the base-2 radical inverse pushed
//! through a Gaussian quantile (or a stratified two-Gaussian mixture).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::integrator::PhaseState;

/// Velocity domain half-width; samples are clamped into `[−V_MAX, V_MAX]`.
pub const V_MAX: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    LinearLandau,
    NonlinearLandau,
    TwoStream,
}

/// Benchmark setup shared by all parameters of a case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseDefaults {
    pub k: f64,
    pub n_particles: usize,
    pub n_x: usize,
    pub t_final: f64,
    pub dt: f64,
    pub alpha_range: [f64; 2],
    pub sigma_range: [f64; 2],
    pub n_train: usize,
}

impl Case {
    pub fn defaults(self) -> CaseDefaults {
        match self {
            Case::LinearLandau => CaseDefaults {
                k: 0.5,
                n_particles: 100_000,
                n_x: 48,
                t_final: 20.0,
                dt: 2.5e-3,
                alpha_range: [0.03, 0.06],
                sigma_range: [0.8, 1.0],
                n_train: 64,
            },
            Case::NonlinearLandau => CaseDefaults {
                k: 0.5,
                n_particles: 100_000,
                n_x: 64,
                t_final: 40.0,
                dt: 2.5e-3,
                alpha_range: [0.46, 0.5],
                sigma_range: [0.96, 1.0],
                n_train: 64,
            },
            Case::TwoStream => CaseDefaults {
                k: 0.2,
                n_particles: 150_000,
                n_x: 64,
                t_final: 20.0,
                dt: 2.5e-3,
                alpha_range: [0.009, 0.011],
                sigma_range: [0.98, 1.02],
                n_train: 36,
            },
        }
    }

    pub fn stream_offset(self) -> f64 {
        match self {
            Case::TwoStream => 3.0,
            _ => 0.0,
        }
    }
}

/// One parameterized initial-value problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub case: Case,
    pub alpha: f64,
    pub sigma: f64,
    pub k: f64,
    pub n_particles: usize,
    pub t_final: f64,
    pub dt: f64,
}

impl ScenarioSpec {
    pub fn new(case: Case, alpha: f64, sigma: f64) -> Self {
        let d = case.defaults();
        Self { case, alpha, sigma, k: d.k, n_particles: d.n_particles, t_final: d.t_final, dt: d.dt }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha in (0, 1) required, got {}", self.alpha)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("sigma > 0 required, got {}", self.sigma)));
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::invalid(format!("k > 0 required, got {}", self.k)));
        }
        if self.n_particles == 0 {
            return Err(Error::invalid("n_particles >= 1 required"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid(format!("dt > 0 required, got {}", self.dt)));
        }
        self.n_steps().map(|_| ())
    }

    /// `T / dt`, which must be integral to within `1e-9`.
    pub fn n_steps(&self) -> Result<usize> {
        let r = self.t_final / self.dt;
        let n = r.round();
        if !(self.t_final >= 0.0) || (r - n).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::invalid(format!(
                "T / dt must be integral, got T = {}, dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn domain_length(&self) -> f64 {
        2.0 * PI / self.k
    }
}

/// Base-2 radical inverse (van der Corput) of `i`.
pub fn radical_inverse(mut i: u64) -> f64 {
    let mut inv = 0.5;
    let mut out = 0.0;
    while i > 0 {
        if i & 1 == 1 {
            out += inv;
        }
        inv *= 0.5;
        i >>= 1;
    }
    out
}

/// Two-dimensional Hammersley point set: `dim 0` is `(i + ½)/N`, `dim 1` the radical inverse of `i`.
pub fn hammersley(n: usize, dim_index: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("hammersley needs N >= 1"));
    }
    match dim_index {
        0 => Ok((0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()),
        1 => Ok((0..n as u64).map(radical_inverse).collect()),
        d => Err(Error::invalid(format!("hammersley dimension must be 0 or 1, got {d}"))),
    }
}

/// Radical-inverse coordinate shifted by half its resolution: values lie strictly
/// inside `(0, 1)` and are symmetric about ½ when `N` is a power of two.
pub fn velocity_coordinates(n: usize) -> Vec<f64> {
    let bits = (usize::BITS - n.saturating_sub(1).leading_zeros()).max(1);
    let shift = 0.5f64.powi(bits as i32 + 1);
    (0..n as u64).map(|i| radical_inverse(i) + shift).collect()
}

/// Root `x ∈ [0, 2π/k)` of `(k x + α sin kx)/(2π) = u`.
pub fn inverse_cdf_position(u: f64, alpha: f64, k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) || !(0.0..1.0).contains(&alpha) || !(k > 0.0) {
        return Err(Error::invalid(format!("inverse position CDF needs u, alpha in [0, 1), k > 0; got u={u}, alpha={alpha}, k={k}")));
    }
    let target = 2.0 * PI * u;
    let f = |t: f64| t + alpha * t.sin() - target;
    let tol = 1e-13 * 2.0 * PI;
    let mut theta = target;
    for _ in 0..100 {
        let r = f(theta);
        if r.abs() <= tol {
            return Ok((theta / k).clamp(0.0, 2.0 * PI / k));
        }
        let next = theta - r / (1.0 + alpha * theta.cos());
        if !next.is_finite() {
            break;
        }
        theta = next.clamp(0.0, 2.0 * PI);
    }
    // F is strictly increasing on [0, 2π], so bisection always brackets the root.
    let (mut lo, mut hi) = (0.0, 2.0 * PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 {
            break;
        }
    }
    let theta = 0.5 * (lo + hi);
    if f(theta).abs() <= 1e-11 {
        Ok(theta / k)
    } else {
        Err(Error::RootNotFound { u, alpha, k })
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: rational approximation refined by one Halley step.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::QuantileOutOfRange(p));
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Φ(x) − p, evaluated in the tail that keeps full relative precision.
    let e = if p < 0.5 { normal_cdf(x) - p } else { (1.0 - p) - normal_cdf(-x) };
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// Velocity quantile for the case's distribution, clamped into `[−V_MAX, V_MAX]`.
pub fn inverse_cdf_velocity(u: f64, sigma: f64, case: Case, stream_offset: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::QuantileOutOfRange(u));
    }
    let v = match case {
        Case::LinearLandau | Case::NonlinearLandau => sigma * normal_quantile(u)?,
        Case::TwoStream => {
            if u < 0.5 {
                -stream_offset + sigma * normal_quantile(2.0 * u)?
            } else {
                stream_offset + sigma * normal_quantile(2.0 * u - 1.0)?
            }
        }
    };
    Ok(v.clamp(-V_MAX, V_MAX))
}

/// Quiet-start particle state; a pure function of `spec`.
pub fn quiet_start(spec: &ScenarioSpec) -> Result<PhaseState> {
    spec.validate()?;
    let n = spec.n_particles;
    let x = hammersley(n, 0)?
        .into_iter()
        .map(|u| inverse_cdf_position(u, spec.alpha, spec.k))
        .collect::<Result<Vec<_>>>()?;
    let offset = spec.case.stream_offset();
    let v = velocity_coordinates(n)
        .into_iter()
        .map(|u| inverse_cdf_velocity(u, spec.sigma, spec.case, offset))
        .collect::<Result<Vec<_>>>()?;
    PhaseState::new(x, v, 0.0)
}
