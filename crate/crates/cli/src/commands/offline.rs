//! Full-order phases: simulate, build-psd, project.

use std::io::Write;
use std::path::Path;

use hamrom::fom::{run_fom, FomOptions};
use hamrom::io;
use hamrom::psd::{reconstruction_error, SnapshotMeta, SnapshotSet, SymplecticBasis};
use serde_json::json;

use super::{trajectory_file, RunContext};
use crate::config::ParamSet;

pub const BASIS_FILE: &str = "basis.psdb";
pub const REDUCED_FILE: &str = "reduced.vpsn";

pub fn scenario_hash(ctx: &RunContext, mu: [f64; 2]) -> anyhow::Result<[u8; 32]> {
    Ok(io::scenario_hash(&(ctx.cfg.scenario_spec(mu), ctx.cfg.scenario.n_x))?)
}

/// Writes `t,<columns>` rows.
pub fn write_series(path: &Path, header: &str, times: &[f64], columns: &[&[f64]]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "t,{header}")?;
    for (i, t) in times.iter().enumerate() {
        write!(buf, "{t}")?;
        for c in columns {
            write!(buf, ",{:e}", c[i])?;
        }
        writeln!(buf)?;
    }
    io::write_atomic(path, &buf)?;
    Ok(())
}

pub fn simulate(ctx: &mut RunContext, set: ParamSet) -> anyhow::Result<()> {
    ctx.ensure_dir("fom")?;
    let mut drifts = Vec::new();
    for (i, &mu) in ctx.cfg.params(set).to_vec().iter().enumerate() {
        let spec = ctx.cfg.scenario_spec(mu);
        let opts = FomOptions {
            n_x: ctx.cfg.scenario.n_x,
            mode: ctx.mode,
            diagnostic_stride: ctx.cfg.output.diagnostic_stride,
            snapshot_stride: Some(ctx.cfg.output.snapshot_stride),
            trajectory: i,
        };
        let run = ctx.manifest.time(&format!("fom {} {i}", set.name()), || Ok(run_fom(&spec, &opts, None)?))?;
        log::info!("{} {i}: mu = {mu:?}, energy drift {:.3e}", set.name(), run.energy_drift());
        drifts.push(run.energy_drift());
        let snap = ctx.path(trajectory_file("fom", set, i, ".vpsn"));
        io::write_snapshots(&snap, run.snapshots.as_ref().expect("snapshot stride set"), scenario_hash(ctx, mu)?)?;
        ctx.output(&snap)?;
        let diag = ctx.path(trajectory_file("fom", set, i, "_diag.csv"));
        write_series(&diag, "field_amplitude,hamiltonian", &run.times, &[&run.field_amplitude, &run.hamiltonian])?;
        ctx.output(&diag)?;
    }
    ctx.manifest.summary = json!({ "set": set.name(), "energy_drift": drifts });
    Ok(())
}

pub fn load_trajectories(ctx: &mut RunContext, dir: &str, set: ParamSet, producer: &'static str) -> anyhow::Result<Vec<SnapshotSet>> {
    let mut out = Vec::new();
    for i in 0..ctx.cfg.params(set).len() {
        let path = ctx.input(trajectory_file(dir, set, i, ".vpsn"), producer)?;
        out.push(io::read_snapshots(&path)?.0);
    }
    Ok(out)
}

pub fn build_psd(ctx: &mut RunContext) -> anyhow::Result<()> {
    let sets = load_trajectories(ctx, "fom", ParamSet::Train, "simulate --set train")?;
    let mut all = SnapshotSet::new(sets[0].n(), sets[0].stride());
    for s in &sets {
        all.extend(s)?;
    }
    let m = ctx.cfg.psd.m;
    let opts = ctx.cfg.psd.svd_options();
    let basis = ctx.manifest.time("complex svd", || Ok(SymplecticBasis::build(&all, m, &opts)?))?;
    let path = ctx.path(BASIS_FILE);
    io::write_basis(&path, &basis)?;
    ctx.output(&path)?;
    ctx.manifest.summary = json!({
        "m": m,
        "snapshots": all.len(),
        "symplectic_residual": basis.symplectic_residual(),
        "inverse_residual": basis.inverse_residual(),
        "reconstruction_error": reconstruction_error(&basis, &all)?,
        "singular_values": basis.singular_values(),
    });
    Ok(())
}

/// Re-runs every training trajectory and stores `A⁺u` at every step.
pub fn project(ctx: &mut RunContext) -> anyhow::Result<()> {
    let basis_path = ctx.input(BASIS_FILE, "build-psd")?;
    let basis = io::read_basis(&basis_path)?;
    let m = basis.m();
    let mut reduced = SnapshotSet::new(m, 1);
    for (i, &mu) in ctx.cfg.params(ParamSet::Train).to_vec().iter().enumerate() {
        let spec = ctx.cfg.scenario_spec(mu);
        let opts = FomOptions { mode: ctx.mode, diagnostic_stride: usize::MAX, ..FomOptions::new(ctx.cfg.scenario.n_x) };
        let run = ctx.manifest.time(&format!("projected fom {i}"), || Ok(run_fom(&spec, &opts, Some(&basis))?))?;
        let rows = run.projected.expect("projector supplied");
        for (step, row) in rows.chunks_exact(2 * m).enumerate() {
            let state = hamrom::PhaseState::from_stacked(row, step as f64 * spec.dt)?;
            reduced.push(&state, SnapshotMeta { trajectory: i, alpha: mu[0], sigma: mu[1], step })?;
        }
    }
    let path = ctx.path(REDUCED_FILE);
    let hash = io::scenario_hash(&(&ctx.cfg.scenario, ctx.cfg.case, &ctx.cfg.parameters.train, io::file_digest(&basis_path)?))?;
    io::write_snapshots(&path, &reduced, hash)?;
    ctx.output(&path)?;
    ctx.manifest.summary = json!({ "m": m, "trajectories": ctx.cfg.params(ParamSet::Train).len(), "states": reduced.len() });
    Ok(())
}
