//! Two-stage training loop.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::NetworkParams;
use crate::parallel::ExecMode;

use super::data::ReducedDataset;
use super::loss::{batch_losses, LossWeights, Losses};
use super::optim::{lr_schedule, Adam, Plateau};

/// Watch duration `s` switches to `s` at stage-2 step `step`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WatchMilestone {
    pub step: usize,
    pub s: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Stage-2 loss weights.
    pub weights: LossWeights,
    /// Initial watch duration of stage 2.
    pub watch: usize,
    pub watch_ramp: Vec<WatchMilestone>,
    pub rho0: f64,
    pub batch_size: usize,
    /// Stage 1 ends once the recent mean AE loss drops to the upper end of this band.
    pub stage1_exit: [f64; 2],
    /// Batches averaged for the stage-1 exit test.
    pub stage1_exit_window: usize,
    pub stage1_max_steps: usize,
    pub stage2_steps: usize,
    pub plateau_window: usize,
    pub plateau_improvement: f64,
    pub seed: u64,
    /// Latent integration step (the snapshot spacing of the dataset).
    pub dt: f64,
    /// Samples per gradient-accumulation chunk.
    pub chunk: usize,
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    pub divergence_factor: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::STAGE2,
            watch: 16,
            watch_ramp: Vec::new(),
            rho0: 1e-3,
            batch_size: 64,
            stage1_exit: [5e-3, 1e-2],
            stage1_exit_window: 20,
            stage1_max_steps: 20_000,
            stage2_steps: 20_000,
            plateau_window: 500,
            plateau_improvement: 0.01,
            seed: 0,
            dt: 2.5e-3,
            chunk: 4,
            checkpoint_every: 0,
            divergence_factor: 1e3,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let [lo, hi] = self.stage1_exit;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::invalid("stage1_exit must satisfy 0 < lower ≤ upper < 1"));
        }
        if self.watch == 0 || self.watch_ramp.iter().any(|m| m.s == 0) {
            return Err(Error::invalid("watch duration must be ≥ 1"));
        }
        if !self.watch_ramp.windows(2).all(|w| w[0].step < w[1].step) {
            return Err(Error::invalid("watch_ramp milestones must have increasing steps"));
        }
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(Error::invalid("rho0 must be > 0"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt must be > 0"));
        }
        if self.batch_size == 0 || self.chunk == 0 || self.stage1_exit_window == 0 {
            return Err(Error::invalid("batch_size, chunk and stage1_exit_window must be ≥ 1"));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::invalid("divergence_factor must be > 1"));
        }
        Ok(())
    }

    /// Watch duration in effect at stage-2 step `step`.
    pub fn watch_at(&self, step: usize) -> usize {
        self.watch_ramp.iter().rev().find(|m| m.step <= step).map_or(self.watch, |m| m.s)
    }

    pub fn max_watch(&self) -> usize {
        self.watch_ramp.iter().map(|m| m.s).chain([self.watch]).max().unwrap_or(self.watch)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub step: usize,
    pub stage: u8,
    pub lr: f64,
    pub s: usize,
    pub losses: Losses,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub rows: Vec<ReportRow>,
    /// First global step of stage 2.
    pub transition_step: Option<usize>,
    /// Whether stage 1 ended through its exit criterion (rather than the step cap).
    pub stage1_converged: bool,
    pub lr_resets: Vec<usize>,
    pub skipped_updates: usize,
}

impl TrainingReport {
    pub const CSV_HEADER: &'static str = "step,stage,lr,s,ae,pred_reduced,stability,pred,total";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        let f = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:e},{},{},{},{},{},{:e}",
                r.step,
                r.stage,
                r.lr,
                r.s,
                f(r.losses.ae),
                f(r.losses.pred_reduced),
                f(r.losses.stability),
                f(r.losses.pred),
                r.total
            )?;
        }
        Ok(())
    }

    pub fn last(&self, stage: u8) -> Option<&ReportRow> {
        self.rows.iter().rev().find(|r| r.stage == stage)
    }
}

/// Hooks invoked by [`train`].
pub trait TrainingObserver {
    fn on_step(&mut self, _row: &ReportRow) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _step: usize, _stage: u8, _params: &NetworkParams) -> Result<()> {
        Ok(())
    }
}

impl TrainingObserver for () {}

pub struct TrainingOutcome {
    pub params: NetworkParams,
    pub report: TrainingReport,
}

/// Stage 1 trains the autoencoder alone; stage 2 trains everything with `cfg.weights`.
pub fn train(
    dataset: &ReducedDataset,
    init: NetworkParams,
    cfg: &TrainingConfig,
    mode: ExecMode,
    observer: &mut dyn TrainingObserver,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if init.arch().m != dataset.m() {
        return Err(Error::DimensionMismatch { context: "dataset vs architecture m", expected: init.arch().m, actual: dataset.m() });
    }
    if dataset.n_pairs(cfg.max_watch()) == 0 {
        let longest = (0..dataset.trajectories().len()).map(|t| dataset.trajectory_len(t)).max().unwrap_or(0);
        return Err(Error::WatchTooLong { s: cfg.max_watch(), longest });
    }
    let mut params = init;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(params.len());
    let mut report = TrainingReport::default();
    let mut step = 0usize;

    // Stage 1.
    let mut plateau = Plateau::new(cfg.plateau_window, cfg.plateau_improvement);
    let mut recent: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
    let mut reference = None;
    for _ in 0..cfg.stage1_max_steps {
        let row = train_step(dataset, &mut params, cfg, &LossWeights::STAGE1, 0, 1, step, &mut rng, &mut adam, &mut plateau, &mut report, mode)?;
        check_divergence(&mut reference, row.total, cfg.divergence_factor, step)?;
        observer.on_step(&row)?;
        checkpoint(cfg, step, 1, &params, observer)?;
        step += 1;
        recent.push_back(row.losses.ae.unwrap_or(0.0));
        if recent.len() > cfg.stage1_exit_window {
            recent.pop_front();
        }
        let mean = recent.iter().sum::<f64>() / recent.len() as f64;
        if mean <= cfg.stage1_exit[1] {
            report.stage1_converged = true;
            break;
        }
    }
    if !report.stage1_converged {
        log::warn!("stage 1 reached its step cap ({}) before the exit criterion", cfg.stage1_max_steps);
    }
    report.transition_step = Some(step);
    log::info!("stage 2 starts at step {step}");

    // Stage 2.
    let mut plateau = Plateau::new(cfg.plateau_window, cfg.plateau_improvement);
    let mut reference = None;
    for j in 0..cfg.stage2_steps {
        let s = cfg.watch_at(j);
        let row = train_step(dataset, &mut params, cfg, &cfg.weights, s, 2, step, &mut rng, &mut adam, &mut plateau, &mut report, mode)?;
        check_divergence(&mut reference, row.total, cfg.divergence_factor, step)?;
        observer.on_step(&row)?;
        checkpoint(cfg, step, 2, &params, observer)?;
        step += 1;
    }
    report.skipped_updates = adam.total_skips();
    Ok(TrainingOutcome { params, report })
}

fn check_divergence(reference: &mut Option<f64>, total: f64, factor: f64, step: usize) -> Result<()> {
    let r = *reference.get_or_insert(total);
    let limit = factor * r;
    if r > 0.0 && total > limit {
        return Err(Error::Diverged { step, loss: total, limit });
    }
    Ok(())
}

fn checkpoint(cfg: &TrainingConfig, step: usize, stage: u8, params: &NetworkParams, observer: &mut dyn TrainingObserver) -> Result<()> {
    if cfg.checkpoint_every > 0 && (step + 1).is_multiple_of(cfg.checkpoint_every) {
        observer.on_checkpoint(step, stage, params)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    dataset: &ReducedDataset,
    params: &mut NetworkParams,
    cfg: &TrainingConfig,
    weights: &LossWeights,
    s: usize,
    stage: u8,
    step: usize,
    rng: &mut ChaCha8Rng,
    adam: &mut Adam,
    plateau: &mut Plateau,
    report: &mut TrainingReport,
    mode: ExecMode,
) -> Result<ReportRow> {
    let idx = dataset.sample_pairs(s, cfg.batch_size, rng)?;
    let pairs: Vec<(&[f64], &[f64])> = idx.iter().map(|&p| dataset.pair(p, s)).collect();
    let (losses, grad) = batch_losses(params, &pairs, s, cfg.dt, weights, false, true, mode, cfg.chunk, step)?;
    let total = losses.total(weights);
    let lr = lr_schedule(plateau.decay_step(), cfg.rho0);
    adam.step(&mut params.values, &grad, lr)?;
    if plateau.observe(total) {
        log::debug!("learning-rate decay reset at step {step}");
        report.lr_resets.push(step);
    }
    let row = ReportRow { step, stage, lr, s, losses, total };
    report.rows.push(row);
    Ok(row)
}
