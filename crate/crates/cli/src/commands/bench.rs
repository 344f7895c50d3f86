//! Wall-time comparison of full-order steps at several N against reduced steps.

use std::io::Write;
use std::time::Instant;

use hamrom::fom::pic_model;
use hamrom::init::quiet_start;
use hamrom::integrator::integrate;
use hamrom::io;
use hamrom::neural::NetworkParams;
use hamrom::psd::SymplecticBasis;
use hamrom::rom::RomPipeline;
use hamrom::training::Scaling;
use hamrom::ExecMode;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::online::WEIGHTS_FILE;
use super::RunContext;
use crate::config::Config;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_particles: usize,
    /// Seconds per full-order step (fastest repeat).
    pub fom_step: f64,
    /// Seconds per latent step.
    pub rom_step: f64,
    /// Seconds for `A⁺` plus the encoder on one state.
    pub rom_encode: f64,
    /// Seconds for the decoder plus `A` on one state.
    pub rom_decode: f64,
    /// Full-order time over reduced time (encode, all steps, one decode) for the same horizon.
    pub speedup: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub steps: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n_particles,steps,fom_step_s,rom_step_s,rom_encode_s,rom_decode_s,speedup")?;
        for r in &self.rows {
            writeln!(w, "{},{},{:e},{:e},{:e},{:e},{:e}", r.n_particles, self.steps, r.fom_step, r.rom_step, r.rom_encode, r.rom_decode, r.speedup)?;
        }
        Ok(())
    }
}

fn fastest(repeats: usize, mut f: impl FnMut() -> anyhow::Result<()>) -> anyhow::Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats {
        let start = Instant::now();
        f()?;
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// `A = blockdiag(Φ, Φ)` with `Φ` the first `m` canonical vectors; as costly to apply as any dense basis.
fn canonical_basis(n: usize, m: usize) -> anyhow::Result<SymplecticBasis> {
    let phi = DMatrix::from_fn(n, m, |i, j| if i == j { 1.0 } else { 0.0 });
    Ok(SymplecticBasis::new(phi, DMatrix::zeros(n, m), vec![1.0; m])?)
}

/// Times the configured particle counts; reduced timings use `params` on a canonical basis of each size.
pub fn bench_table(cfg: &Config, params: &NetworkParams, mode: ExecMode) -> anyhow::Result<BenchTable> {
    let steps = cfg.bench.steps;
    let repeats = cfg.bench.repeats;
    let p = &cfg.parameters;
    let mu = [0.5 * (p.alpha_range[0] + p.alpha_range[1]), 0.5 * (p.sigma_range[0] + p.sigma_range[1])];
    let m = params.arch().m;
    let mut rows = Vec::new();
    for &n in &cfg.bench.n_particles {
        let spec = hamrom::init::ScenarioSpec { n_particles: n, ..cfg.scenario_spec(mu) };
        let u0 = quiet_start(&spec)?;
        let mut pic = pic_model(&spec, cfg.scenario.n_x, mode)?;
        let fom = fastest(repeats, || {
            integrate(u0.clone(), &mut pic, spec.dt, steps, usize::MAX, |_, _| Ok(()))?;
            Ok(())
        })?;
        let rom = RomPipeline::new(canonical_basis(n, m.min(n))?, Scaling::identity(m), params.clone(), spec.dt)?;
        let stacked = u0.stacked();
        let ub0 = rom.encode_full(&stacked, 0.0)?;
        let encode = fastest(repeats, || {
            rom.encode_full(&stacked, 0.0)?;
            Ok(())
        })?;
        let rollout = fastest(repeats, || {
            rom.rollout(ub0.clone(), steps, usize::MAX)?;
            Ok(())
        })?;
        let decode = fastest(repeats, || {
            rom.decode_full(&ub0)?;
            Ok(())
        })?;
        let row = BenchRow {
            n_particles: n,
            fom_step: fom / steps as f64,
            rom_step: rollout / steps as f64,
            rom_encode: encode,
            rom_decode: decode,
            speedup: fom / (encode + rollout + decode),
        };
        log::info!("bench N = {n}: {row:?}");
        rows.push(row);
    }
    Ok(BenchTable { steps, rows })
}

pub fn bench(ctx: &mut RunContext) -> anyhow::Result<()> {
    let weights = ctx.path(WEIGHTS_FILE);
    let params = if weights.is_file() {
        ctx.manifest.input(&ctx.out_dir, &weights)?;
        io::read_weights(&weights)?
    } else {
        log::warn!("{} not found; timing an untrained network of the configured architecture", weights.display());
        NetworkParams::init(ctx.cfg.network.architecture.clone(), ctx.cfg.network.init_seed)?
    };
    let cfg = ctx.cfg.clone();
    let mode = ctx.mode;
    let table = ctx.manifest.time("bench", || bench_table(&cfg, &params, mode))?;
    let path = ctx.path("bench.csv");
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    io::write_atomic(&path, &buf)?;
    ctx.output(&path)?;
    ctx.manifest.summary = json!(table);
    Ok(())
}
