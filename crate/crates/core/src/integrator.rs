//! Störmer–Verlet (kick–drift–kick) integration of separable Hamiltonian systems.
//!
//! The same integrator drives the particle model, the PSD baseline and the learned
//! reduced model; each supplies its two partial gradients through [`SeparableSystem`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in phase space: generalized positions, momenta and the current time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, v: Vec<f64>, t: f64) -> Result<Self> {
        if x.len() != v.len() {
            return Err(Error::DimensionMismatch {
                context: "phase state",
                expected: x.len(),
                actual: v.len(),
            });
        }
        Ok(Self { x, v, t })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { x: vec![0.0; dim], v: vec![0.0; dim], t: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Stacked `(x; v)` vector.
    pub fn stacked(&self) -> Vec<f64> {
        let mut u = Vec::with_capacity(2 * self.dim());
        u.extend_from_slice(&self.x);
        u.extend_from_slice(&self.v);
        u
    }

    pub fn from_stacked(u: &[f64], t: f64) -> Result<Self> {
        if !u.len().is_multiple_of(2) {
            return Err(Error::invalid(format!("stacked state of odd length {}", u.len())));
        }
        let n = u.len() / 2;
        Ok(Self { x: u[..n].to_vec(), v: u[n..].to_vec(), t })
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.v.iter()).all(|a| a.is_finite())
    }
}

/// Separable Hamiltonian `H(x, v) = H_pot(x) + H_kin(v)` exposed through its partial gradients.
pub trait SeparableSystem {
    /// Phase-space half dimension.
    fn dim(&self) -> usize;

    fn grad_potential(&mut self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn grad_kinetic(&mut self, v: &[f64], out: &mut [f64]) -> Result<()>;

    /// Optional idempotent map applied to positions after each drift.
    fn wrap(&self, _x: &mut [f64]) {}
}

/// Kinetic energy `½‖v‖²`, shared by all particle-type systems.
pub fn quadratic_kinetic_gradient(v: &[f64], out: &mut [f64]) {
    out.copy_from_slice(v);
}

/// Stateful kick–drift–kick stepper that reuses the end-of-step potential gradient
/// as the start-of-step gradient of the next step.
pub struct Verlet {
    dt: f64,
    grad_pot: Vec<f64>,
    grad_kin: Vec<f64>,
    cached_for: Option<Vec<f64>>,
    step: usize,
}

impl Verlet {
    pub fn new(dim: usize, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt > 0 required, got {dt}")));
        }
        Ok(Self {
            dt,
            grad_pot: vec![0.0; dim],
            grad_kin: vec![0.0; dim],
            cached_for: None,
            step: 0,
        })
    }

    /// Signed variant for reversibility checks; negative steps run the scheme backwards.
    pub fn with_signed_dt(dim: usize, dt: f64) -> Result<Self> {
        if dt == 0.0 || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be finite and nonzero, got {dt}")));
        }
        Ok(Self {
            dt,
            grad_pot: vec![0.0; dim],
            grad_kin: vec![0.0; dim],
            cached_for: None,
            step: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step<S: SeparableSystem + ?Sized>(&mut self, state: &mut PhaseState, system: &mut S) -> Result<()> {
        let n = state.dim();
        if n != system.dim() || n != self.grad_pot.len() {
            return Err(Error::DimensionMismatch {
                context: "verlet step",
                expected: system.dim(),
                actual: n,
            });
        }
        let half = 0.5 * self.dt;
        let cache_valid = self.cached_for.as_deref() == Some(state.x.as_slice());
        if !cache_valid {
            system.grad_potential(&state.x, &mut self.grad_pot)?;
        }
        for (v, g) in state.v.iter_mut().zip(&self.grad_pot) {
            *v -= half * g;
        }
        system.grad_kinetic(&state.v, &mut self.grad_kin)?;
        for (x, g) in state.x.iter_mut().zip(&self.grad_kin) {
            *x += self.dt * g;
        }
        system.wrap(&mut state.x);
        system.grad_potential(&state.x, &mut self.grad_pot)?;
        for (v, g) in state.v.iter_mut().zip(&self.grad_pot) {
            *v -= half * g;
        }
        state.t += self.dt;
        self.step += 1;
        if !state.is_finite() {
            self.cached_for = None;
            return Err(Error::NonFiniteState {
                step: self.step,
                time: state.t,
                what: "verlet update",
            });
        }
        match &mut self.cached_for {
            Some(c) => c.copy_from_slice(&state.x),
            None => self.cached_for = Some(state.x.clone()),
        }
        Ok(())
    }
}

/// One kick–drift–kick step.
pub fn verlet_step<S: SeparableSystem + ?Sized>(state: &mut PhaseState, system: &mut S, dt: f64) -> Result<()> {
    Verlet::with_signed_dt(state.dim(), dt)?.step(state, system)
}

/// Calls `observer(step, state)` at step 0 and every `stride` steps thereafter.
pub fn integrate<S, F>(
    state0: PhaseState,
    system: &mut S,
    dt: f64,
    n_steps: usize,
    stride: usize,
    mut observer: F,
) -> Result<PhaseState>
where
    S: SeparableSystem + ?Sized,
    F: FnMut(usize, &PhaseState) -> Result<()>,
{
    let stride = stride.max(1);
    let mut state = state0;
    let mut stepper = Verlet::new(state.dim(), dt)?;
    observer(0, &state)?;
    for n in 1..=n_steps {
        stepper.step(&mut state, system)?;
        if n % stride == 0 {
            observer(n, &state)?;
        }
    }
    Ok(state)
}

/// Canonical-form system whose vector field is supplied whole; integrated with the
/// implicit midpoint rule, which is symplectic for any Hamiltonian. Used for the
/// linear-reduction baseline whose reduced Hamiltonian is not separable.
pub trait HamiltonianVectorField {
    fn dim(&self) -> usize;

    /// Writes `J ∇H(u)` for the stacked state `u` of length `2 * dim`.
    fn vector_field(&mut self, u: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Implicit midpoint step solved by fixed-point iteration.
pub fn implicit_midpoint_step<S: HamiltonianVectorField + ?Sized>(
    u: &mut [f64],
    system: &mut S,
    dt: f64,
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = u.len();
    let mut f = vec![0.0; n];
    let mut mid = u.to_vec();
    system.vector_field(u, &mut f)?;
    let mut next: Vec<f64> = u.iter().zip(&f).map(|(a, b)| a + dt * b).collect();
    for iter in 1..=max_iter {
        for i in 0..n {
            mid[i] = 0.5 * (u[i] + next[i]);
        }
        system.vector_field(&mid, &mut f)?;
        let mut delta: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            let candidate = u[i] + dt * f[i];
            delta = delta.max((candidate - next[i]).abs());
            scale = scale.max(candidate.abs());
            next[i] = candidate;
        }
        if !delta.is_finite() {
            return Err(Error::NonFiniteState { step: iter, time: f64::NAN, what: "implicit midpoint" });
        }
        if delta <= tol * scale.max(1.0) {
            u.copy_from_slice(&next);
            return Ok(iter);
        }
    }
    u.copy_from_slice(&next);
    log::warn!("implicit midpoint did not converge in {max_iter} iterations");
    Ok(max_iter)
}
