//! Online reduced model: `E = E_θ ∘ A⁺`, latent Verlet flow, `D = A ∘ D_θ`.

use crate::error::{Error, Result};
use crate::integrator::{integrate, PhaseState};
use crate::neural::NetworkParams;
use crate::psd::{SnapshotMeta, SnapshotSet, SymplecticBasis};
use crate::training::Scaling;

/// Latent state `(x̄, v̄, t)`.
pub type ReducedState = PhaseState;

/// Latent trajectory captured by [`RomPipeline::rollout`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LatentTrajectory {
    pub steps: Vec<usize>,
    pub states: Vec<ReducedState>,
    /// `H̄` at each captured state.
    pub energy: Vec<f64>,
}

impl LatentTrajectory {
    /// `max_n |H̄_n − H̄_0|`.
    pub fn energy_drift(&self) -> f64 {
        let h0 = self.energy.first().copied().unwrap_or(0.0);
        self.energy.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct RomPipeline {
    basis: SymplecticBasis,
    scaling: Scaling,
    params: NetworkParams,
    dt: f64,
}

impl RomPipeline {
    pub fn new(basis: SymplecticBasis, scaling: Scaling, params: NetworkParams, dt: f64) -> Result<Self> {
        let m = params.arch().m;
        if basis.m() != m {
            return Err(Error::DimensionMismatch { context: "basis rank vs network input", expected: m, actual: basis.m() });
        }
        if scaling.m() != m {
            return Err(Error::DimensionMismatch { context: "scaling vs network input", expected: m, actual: scaling.m() });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("reduced time step must be > 0"));
        }
        Ok(Self { basis, scaling, params, dt })
    }

    pub fn basis(&self) -> &SymplecticBasis {
        &self.basis
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn k(&self) -> usize {
        self.params.arch().k
    }

    /// Project, scale, encode.
    pub fn encode_full(&self, u: &[f64], t: f64) -> Result<ReducedState> {
        let ut = self.scaling.preprocess(&self.basis.project(u)?)?;
        ReducedState::from_stacked(&self.params.encode(&ut)?, t)
    }

    /// Decode, unscale, lift.
    pub fn decode_full(&self, ub: &ReducedState) -> Result<Vec<f64>> {
        if ub.dim() != self.k() {
            return Err(Error::DimensionMismatch { context: "latent state", expected: self.k(), actual: ub.dim() });
        }
        let ut = self.scaling.postprocess(&self.params.decode(&ub.stacked())?)?;
        self.basis.lift(&ut)
    }

    /// `n_steps` Verlet steps of the latent Hamiltonian flow, captured every `stride`.
    pub fn rollout(&self, ub0: ReducedState, n_steps: usize, stride: usize) -> Result<(ReducedState, LatentTrajectory)> {
        let mut record = LatentTrajectory::default();
        let mut sys = self.params.reduced_system();
        let end = integrate(ub0, &mut sys, self.dt, n_steps, stride, |step, s| {
            record.steps.push(step);
            record.energy.push(self.params.hnn_value(&s.stacked())?);
            record.states.push(s.clone());
            Ok(())
        })?;
        Ok((end, record))
    }

    /// Reconstructed full states over `[0, n_steps·dt]` every `stride` steps.
    pub fn predict_trajectory(&self, u_init: &[f64], n_steps: usize, stride: usize) -> Result<(SnapshotSet, LatentTrajectory)> {
        let ub0 = self.encode_full(u_init, 0.0)?;
        let (_, record) = self.rollout(ub0, n_steps, stride)?;
        let mut set = SnapshotSet::new(self.basis.n(), stride.max(1));
        for (state, &step) in record.states.iter().zip(&record.steps) {
            let u = self.decode_full(state)?;
            let full = PhaseState::from_stacked(&u, state.t)?;
            set.push(&full, SnapshotMeta { trajectory: 0, alpha: f64::NAN, sigma: f64::NAN, step })?;
        }
        Ok((set, record))
    }
}
