//! Training and reduced-model prediction.

use std::path::PathBuf;

use hamrom::fom::pic_model;
use hamrom::init::quiet_start;
use hamrom::io;
use hamrom::neural::NetworkParams;
use hamrom::pic::field_amplitude;
use hamrom::psd::{SnapshotMeta, SnapshotSet};
use hamrom::rom::RomPipeline;
use hamrom::training::{train as run_training, ReducedDataset, ReportRow, Scaling, TrainingObserver};
use hamrom::PhaseState;
use serde_json::json;

use super::offline::{scenario_hash, write_series, BASIS_FILE, REDUCED_FILE};
use super::{trajectory_file, RunContext};
use crate::config::ParamSet;

pub const WEIGHTS_FILE: &str = "weights.aehn";
pub const TRAINING_REPORT: &str = "training.csv";

struct Progress {
    dir: PathBuf,
    written: Vec<PathBuf>,
    log_every: usize,
}

impl TrainingObserver for Progress {
    fn on_step(&mut self, row: &ReportRow) -> hamrom::Result<()> {
        if row.step.is_multiple_of(self.log_every) {
            log::info!("step {} stage {} s {} lr {:.3e} loss {:.4e}", row.step, row.stage, row.s, row.lr, row.total);
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, step: usize, stage: u8, params: &NetworkParams) -> hamrom::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(format!("stage{stage}_step{:07}.aehn", step + 1));
        io::write_weights(&path, params)?;
        self.written.push(path);
        Ok(())
    }
}

pub fn train(ctx: &mut RunContext) -> anyhow::Result<()> {
    let basis = io::read_basis(&ctx.input(BASIS_FILE, "build-psd")?)?;
    let (reduced, _) = io::read_snapshots(&ctx.input(REDUCED_FILE, "project")?)?;
    let scaling = Scaling::from_singular_values(basis.singular_values())?;
    let dataset = ReducedDataset::from_snapshots(&reduced, scaling)?;
    let arch = ctx.cfg.network.architecture.clone();
    let init = NetworkParams::init(arch, ctx.cfg.network.init_seed)?;
    let mut progress = Progress { dir: ctx.path("checkpoints"), written: Vec::new(), log_every: 100 };
    let cfg = ctx.cfg.training.clone();
    let mode = ctx.mode;
    let outcome = ctx.manifest.time("training", || Ok(run_training(&dataset, init, &cfg, mode, &mut progress)?))?;
    for p in &progress.written {
        ctx.output(p)?;
    }
    let weights = ctx.path(WEIGHTS_FILE);
    io::write_weights(&weights, &outcome.params)?;
    ctx.output(&weights)?;
    let report_path = ctx.path(TRAINING_REPORT);
    let mut buf = Vec::new();
    outcome.report.write_csv(&mut buf)?;
    io::write_atomic(&report_path, &buf)?;
    ctx.output(&report_path)?;
    let r = &outcome.report;
    ctx.manifest.summary = json!({
        "parameters": outcome.params.len(),
        "transition_step": r.transition_step,
        "stage1_converged": r.stage1_converged,
        "lr_resets": r.lr_resets,
        "skipped_updates": r.skipped_updates,
        "final": r.rows.last(),
    });
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn load_pipeline(ctx: &mut RunContext) -> anyhow::Result<RomPipeline> {
    let basis = io::read_basis(&ctx.input(BASIS_FILE, "build-psd")?)?;
    let params = io::read_weights(&ctx.input(WEIGHTS_FILE, "train")?)?;
    let scaling = Scaling::from_singular_values(basis.singular_values())?;
    Ok(RomPipeline::new(basis, scaling, params, ctx.cfg.scenario.dt)?)
}

pub fn predict(ctx: &mut RunContext, set: ParamSet) -> anyhow::Result<()> {
    let rom = load_pipeline(ctx)?;
    ctx.ensure_dir("rom")?;
    let n_steps = ctx.cfg.n_steps();
    let snap = ctx.cfg.output.snapshot_stride;
    let diag = ctx.cfg.output.diagnostic_stride;
    let stride = gcd(snap, diag);
    let mut summary = Vec::new();
    for (i, &mu) in ctx.cfg.params(set).to_vec().iter().enumerate() {
        let spec = ctx.cfg.scenario_spec(mu);
        let pic = pic_model(&spec, ctx.cfg.scenario.n_x, ctx.mode)?;
        let u0 = quiet_start(&spec)?.stacked();
        let (set_out, times, amplitude, latent) = ctx.manifest.time(&format!("rom {} {i}", set.name()), || {
            let ub0 = rom.encode_full(&u0, 0.0)?;
            let (_, record) = rom.rollout(ub0, n_steps, stride)?;
            let mut out = SnapshotSet::new(spec.n_particles, snap);
            let (mut times, mut amplitude, mut latent) = (Vec::new(), Vec::new(), Vec::new());
            for ((state, &step), &h) in record.states.iter().zip(&record.steps).zip(&record.energy) {
                if step % snap != 0 && step % diag != 0 {
                    continue;
                }
                let full = PhaseState::from_stacked(&rom.decode_full(state)?, state.t)?;
                if step % diag == 0 {
                    let fields = pic.field_state(&full.x)?;
                    times.push(state.t);
                    amplitude.push(field_amplitude(&fields.e_cells, pic.grid()));
                    latent.push(h);
                }
                if step % snap == 0 {
                    out.push(&full, SnapshotMeta { trajectory: i, alpha: mu[0], sigma: mu[1], step })?;
                }
            }
            Ok((out, times, amplitude, latent))
        })?;
        let path = ctx.path(trajectory_file("rom", set, i, ".vpsn"));
        io::write_snapshots(&path, &set_out, scenario_hash(ctx, mu)?)?;
        ctx.output(&path)?;
        let dpath = ctx.path(trajectory_file("rom", set, i, "_diag.csv"));
        write_series(&dpath, "field_amplitude,latent_energy", &times, &[&amplitude, &latent])?;
        ctx.output(&dpath)?;
        let h0 = latent[0];
        let drift = latent.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max);
        summary.push(json!({ "alpha": mu[0], "sigma": mu[1], "latent_energy_initial": h0, "latent_energy_drift": drift }));
    }
    ctx.manifest.summary = json!({ "set": set.name(), "trajectories": summary });
    Ok(())
}
