//! Full-order physics, energy conservation and basis structure.

use std::sync::OnceLock;
use std::time::Instant;

use hamrom::diagnostics::fit_rate;
use hamrom::fom::{run_fom, FomOptions, FomRun};
use hamrom::init::{Case, ScenarioSpec};
use hamrom::psd::{reconstruction_error, SvdOptions, SymplecticBasis};
use hamrom::ExecMode;

use crate::Verdict;

pub const BASIS_TOLERANCE: f64 = 1e-10;

pub struct TimedRun {
    pub run: FomRun,
    pub seconds: f64,
}

fn timed(spec: &ScenarioSpec, opts: &FomOptions) -> TimedRun {
    let start = Instant::now();
    let run = run_fom(spec, opts, None).expect("full-order run");
    TimedRun { run, seconds: start.elapsed().as_secs_f64() }
}

/// Linear Landau at μ = (0.035, 0.84), N = 7e4, single-threaded.
pub fn linear_landau() -> &'static TimedRun {
    static RUN: OnceLock<TimedRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let spec = ScenarioSpec { n_particles: 70_000, ..ScenarioSpec::new(Case::LinearLandau, 0.035, 0.84) };
        let opts = FomOptions { mode: ExecMode::Sequential, diagnostic_stride: 4, snapshot_stride: Some(100), ..FomOptions::new(48) };
        timed(&spec, &opts)
    })
}

/// Nonlinear Landau at μ = (0.465, 0.986), N = 3e4, single-threaded.
pub fn nonlinear_landau() -> &'static TimedRun {
    static RUN: OnceLock<TimedRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let spec = ScenarioSpec { n_particles: 30_000, ..ScenarioSpec::new(Case::NonlinearLandau, 0.465, 0.986) };
        let opts = FomOptions { mode: ExecMode::Sequential, diagnostic_stride: 4, ..FomOptions::new(64) };
        timed(&spec, &opts)
    })
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

pub fn criterion_1() -> anyhow::Result<Verdict> {
    let r = linear_landau();
    let fit = fit_rate(&r.run.times, &r.run.field_amplitude, [2.0, 18.0])?;
    let rate_ok = within(fit.slope, -8.42e-2, 0.15);
    let time_ok = r.seconds <= 60.0;
    Ok(Verdict::new(
        rate_ok && time_ok,
        format!("rate {:.4e} (target -8.42e-2 ± 15%, {} peaks), runtime {:.1} s (limit 60 s)", fit.slope, fit.peaks.len(), r.seconds),
    ))
}

pub fn criterion_2() -> anyhow::Result<Verdict> {
    let r = nonlinear_landau();
    let damping = fit_rate(&r.run.times, &r.run.field_amplitude, [0.0, 10.0])?;
    let growth = fit_rate(&r.run.times, &r.run.field_amplitude, [20.0, 40.0])?;
    let ok = within(damping.slope, -3.23e-1, 0.15) && within(growth.slope, 8.55e-2, 0.20) && r.seconds <= 120.0;
    Ok(Verdict::new(
        ok,
        format!(
            "damping {:.4e} (target -3.23e-1 ± 15%), growth {:.4e} (target 8.55e-2 ± 20%), runtime {:.1} s (limit 120 s)",
            damping.slope, growth.slope, r.seconds
        ),
    ))
}

pub fn criterion_3() -> anyhow::Result<Verdict> {
    let drifts = [linear_landau().run.energy_drift(), nonlinear_landau().run.energy_drift()];
    let worst = drifts.iter().cloned().fold(0.0, f64::max);
    Ok(Verdict::new(worst <= 1e-2, format!("relative drift linear {:.3e}, nonlinear {:.3e} (limit 1e-2)", drifts[0], drifts[1])))
}

pub fn criterion_4() -> anyhow::Result<Verdict> {
    let snapshots = linear_landau().run.snapshots.as_ref().expect("snapshots stored");
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for m in [1, 2, 4, 8, 16, 32, 64] {
        let basis = SymplecticBasis::build(snapshots, m, &SvdOptions::default())?;
        worst = worst.max(basis.symplectic_residual()).max(basis.inverse_residual());
        errors.push(reconstruction_error(&basis, snapshots)?);
    }
    let randomized = SymplecticBasis::build(snapshots, 16, &SvdOptions { force_randomized: true, ..SvdOptions::default() })?;
    worst = worst.max(randomized.symplectic_residual()).max(randomized.inverse_residual());
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    Ok(Verdict::new(
        worst <= BASIS_TOLERANCE && monotone,
        format!(
            "max residual {worst:.2e} (limit 1e-10), reconstruction error over M = 1..64: {} ({})",
            errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" "),
            if monotone { "non-increasing" } else { "NOT monotone" }
        ),
    ))
}
