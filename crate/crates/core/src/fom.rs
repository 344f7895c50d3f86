//! Full-order particle runs with on-the-fly diagnostics, snapshot capture and projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{quiet_start, ScenarioSpec};
use crate::integrator::{integrate, PhaseState};
use crate::parallel::ExecMode;
use crate::pic::{field_amplitude, GridSpec, PhysicalConstants, PicModel};
use crate::psd::{SnapshotMeta, SnapshotSet, SymplecticBasis};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FomOptions {
    pub n_x: usize,
    pub mode: ExecMode,
    /// Steps between recorded field amplitude and energy samples.
    pub diagnostic_stride: usize,
    /// Steps between stored full snapshots; `None` stores none.
    pub snapshot_stride: Option<usize>,
    /// Trajectory label written into snapshot metadata.
    pub trajectory: usize,
}

impl FomOptions {
    pub fn new(n_x: usize) -> Self {
        Self { n_x, mode: ExecMode::default(), diagnostic_stride: 1, snapshot_stride: None, trajectory: 0 }
    }
}

/// Everything recorded along one full-order trajectory.
#[derive(Clone, Debug)]
pub struct FomRun {
    pub times: Vec<f64>,
    /// `½‖E‖₂` at each diagnostic time.
    pub field_amplitude: Vec<f64>,
    pub hamiltonian: Vec<f64>,
    pub snapshots: Option<SnapshotSet>,
    /// `A⁺u` at every step, one `2m` row per step, when a basis was supplied.
    pub projected: Option<Vec<f64>>,
    pub final_state: PhaseState,
}

impl FomRun {
    /// `max_n |H_n − H_0| / |H_0|`.
    pub fn energy_drift(&self) -> f64 {
        let h0 = self.hamiltonian.first().copied().unwrap_or(0.0);
        self.hamiltonian.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max) / h0.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn pic_model(spec: &ScenarioSpec, n_x: usize, mode: ExecMode) -> Result<PicModel> {
    let grid = GridSpec::new(n_x, spec.k)?;
    let consts = PhysicalConstants::normalized(&grid, spec.n_particles)?;
    Ok(PicModel::new(grid, consts, mode))
}

/// Integrates the scenario from its quiet start to `t_final`.
pub fn run_fom(spec: &ScenarioSpec, opts: &FomOptions, projector: Option<&SymplecticBasis>) -> Result<FomRun> {
    spec.validate()?;
    if let Some(b) = projector {
        if b.n() != spec.n_particles {
            return Err(Error::DimensionMismatch { context: "projection basis", expected: spec.n_particles, actual: b.n() });
        }
    }
    let mut pic = pic_model(spec, opts.n_x, opts.mode)?;
    let n_steps = spec.n_steps()?;
    let diag = opts.diagnostic_stride.max(1);
    let mut times = Vec::new();
    let mut amplitude = Vec::new();
    let mut energy = Vec::new();
    let mut snapshots = opts.snapshot_stride.map(|s| SnapshotSet::new(spec.n_particles, s));
    let mut projected = projector.map(|b| Vec::with_capacity(2 * b.m() * (n_steps + 1)));
    let mut stacked = vec![0.0; 2 * spec.n_particles];
    let mut row = projector.map(|b| vec![0.0; 2 * b.m()]);
    let observer_pic = pic_model(spec, opts.n_x, opts.mode)?;
    let final_state = integrate(quiet_start(spec)?, &mut pic, spec.dt, n_steps, 1, |step, state| {
        if step % diag == 0 {
            let fields = observer_pic.field_state(&state.x)?;
            times.push(state.t);
            amplitude.push(field_amplitude(&fields.e_cells, observer_pic.grid()));
            let kinetic = 0.5 * state.v.iter().map(|v| v * v).sum::<f64>();
            energy.push(kinetic + observer_pic.potential_from_fields(&fields));
        }
        if let (Some(set), Some(stride)) = (snapshots.as_mut(), opts.snapshot_stride) {
            if step % stride.max(1) == 0 {
                set.push(state, SnapshotMeta { trajectory: opts.trajectory, alpha: spec.alpha, sigma: spec.sigma, step })?;
            }
        }
        if let (Some(b), Some(out), Some(row)) = (projector, projected.as_mut(), row.as_mut()) {
            stacked[..state.x.len()].copy_from_slice(&state.x);
            stacked[state.x.len()..].copy_from_slice(&state.v);
            b.project_into(&stacked, row)?;
            out.extend_from_slice(row);
        }
        Ok(())
    })?;
    Ok(FomRun { times, field_amplitude: amplitude, hamiltonian: energy, snapshots, projected, final_state })
}
