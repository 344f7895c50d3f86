//! Hamiltonian particle-in-cell model on a periodic 1D grid with piecewise-linear
//! (hat) finite elements.
//!
//! Charge is deposited with hat functions, the periodic stiffness system
//! `K φ = ρ_h − h ρ₀ 𝟙`, `K = (1/h)·circ(−1, 2, −1)`, is solved under the zero-mean
//! gauge, and the field is the piecewise-constant derivative of `φ`. The potential
//! energy `U = bᵀφ / (2 m ω)` and its gradient `(q/m) (φ_{j+1} − φ_j)/h` form an exact
//! gradient pair, so the particle system is Hamiltonian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{PhaseState, SeparableSystem};
use crate::parallel::{chunk_ranges, for_each_chunk_zip, map_indices, ExecMode};

/// Particles per work unit in the parallel kernels. Fixed so that results do not
/// depend on the thread count.
const PARTICLE_CHUNK: usize = 8192;

/// Uniform periodic grid on `[0, 2π/k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n_x: usize,
    k: f64,
    domain_length: f64,
    h: f64,
}

impl GridSpec {
    pub fn new(n_x: usize, k: f64) -> Result<Self> {
        if n_x < 4 {
            return Err(Error::invalid(format!("n_x >= 4 required, got {n_x}")));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::invalid(format!("wave number k > 0 required, got {k}")));
        }
        let domain_length = 2.0 * std::f64::consts::PI / k;
        Ok(Self { n_x, k, domain_length, h: domain_length / n_x as f64 })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Maps any real position into `[0, L)`.
    #[inline]
    pub fn wrap(&self, x: f64) -> f64 {
        let y = x - self.domain_length * (x / self.domain_length).floor();
        if y >= self.domain_length { 0.0 } else { y }
    }

    /// Minimal periodic displacement `a − b`, in `[−L/2, L/2]`.
    #[inline]
    pub fn periodic_difference(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        d - self.domain_length * (d / self.domain_length).round()
    }

    /// Cell index `j` (cell `[jh, (j+1)h)` after wrapping) and the fractional offset in `[0, 1)`.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = x / self.h;
        let sf = s.floor();
        let j = (sf as i64).rem_euclid(self.n_x as i64) as usize;
        (j, s - sf)
    }

    #[inline]
    fn next(&self, j: usize) -> usize {
        if j + 1 == self.n_x { 0 } else { j + 1 }
    }
}

/// Charge, mass, background density and macro-particle weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    q: f64,
    m: f64,
    rho0: f64,
    omega_w: f64,
    n_particles: usize,
}

impl PhysicalConstants {
    /// `ω = L ρ₀ / (q N)`.
    pub fn new(q: f64, m: f64, rho0: f64, grid: &GridSpec, n_particles: usize) -> Result<Self> {
        if q == 0.0 || !q.is_finite() || !(m > 0.0) || !rho0.is_finite() || n_particles == 0 {
            return Err(Error::invalid(format!(
                "invalid constants q={q}, m={m}, rho0={rho0}, N={n_particles}"
            )));
        }
        let omega_w = grid.domain_length() * rho0 / (q * n_particles as f64);
        Ok(Self { q, m, rho0, omega_w, n_particles })
    }

    /// Unit charge, mass and background density.
    pub fn normalized(grid: &GridSpec, n_particles: usize) -> Result<Self> {
        Self::new(1.0, 1.0, 1.0, grid, n_particles)
    }

    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn m(&self) -> f64 {
        self.m
    }
    pub fn rho0(&self) -> f64 {
        self.rho0
    }
    pub fn omega_w(&self) -> f64 {
        self.omega_w
    }
    pub fn n_particles(&self) -> usize {
        self.n_particles
    }
}

/// Grid quantities derived from a particle configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub rho_h: Vec<f64>,
    pub phi_h: Vec<f64>,
    pub e_cells: Vec<f64>,
}

/// Direct solver for the periodic stiffness system. Pinning `φ₀ = 0` leaves the
/// symmetric positive definite tridiagonal `tridiag(−1, 2, −1)` of size `n_x − 1`,
/// whose Thomas factors are precomputed.
#[derive(Clone, Debug)]
pub struct PoissonSolver {
    h: f64,
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl PoissonSolver {
    pub fn new(grid: &GridSpec) -> Self {
        let m = grid.n_x() - 1;
        let mut c_prime = vec![0.0; m];
        let mut inv_denom = vec![0.0; m];
        let mut prev = 0.0;
        for i in 0..m {
            let denom = 2.0 + prev;
            inv_denom[i] = 1.0 / denom;
            c_prime[i] = -inv_denom[i];
            prev = c_prime[i];
        }
        Self { h: grid.h(), c_prime, inv_denom }
    }

    /// Solves `K φ = b` with `Σ φ = 0`. `b` must sum to zero within `tolerance`.
    pub fn solve(&self, b: &[f64], tolerance: f64, phi: &mut [f64]) -> Result<()> {
        let n = self.c_prime.len() + 1;
        if b.len() != n || phi.len() != n {
            return Err(Error::DimensionMismatch { context: "poisson solve", expected: n, actual: b.len() });
        }
        let sum: f64 = b.iter().sum();
        if !sum.is_finite() || sum.abs() > tolerance {
            return Err(Error::ChargeImbalance { imbalance: sum.abs(), tolerance });
        }
        let mean = sum / n as f64;
        // Forward sweep on rows 1..n of h·b projected to exact compatibility.
        phi[0] = 0.0;
        let mut prev = 0.0;
        for i in 0..n - 1 {
            let d = self.h * (b[i + 1] - mean);
            let val = (d + prev) * self.inv_denom[i];
            phi[i + 1] = val;
            prev = val;
        }
        for i in (0..n - 2).rev() {
            phi[i + 1] -= self.c_prime[i] * phi[i + 2];
        }
        let phi_mean = phi.iter().sum::<f64>() / n as f64;
        for p in phi.iter_mut() {
            *p -= phi_mean;
        }
        Ok(())
    }
}

/// Full-order particle model: grid, constants, solver and execution mode.
#[derive(Clone, Debug)]
pub struct PicModel {
    grid: GridSpec,
    consts: PhysicalConstants,
    solver: PoissonSolver,
    mode: ExecMode,
    wrap_positions: bool,
}

impl PicModel {
    pub fn new(grid: GridSpec, consts: PhysicalConstants, mode: ExecMode) -> Self {
        let solver = PoissonSolver::new(&grid);
        Self { grid, consts, solver, mode, wrap_positions: false }
    }

    /// Wrap positions into `[0, L)` after every drift. Off by default: the kernels
    /// are periodic anyway, and unwrapped trajectories are continuous in time.
    pub fn with_wrapping(mut self, wrap: bool) -> Self {
        self.wrap_positions = wrap;
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn consts(&self) -> &PhysicalConstants {
        &self.consts
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: ExecMode) {
        self.mode = mode;
    }

    /// Nodal charge `ρ_h = q ω Λ⁰(x)ᵀ 𝟙`.
    pub fn deposit_charge(&self, x: &[f64], rho: &mut [f64]) -> Result<()> {
        let n_x = self.grid.n_x();
        if rho.len() != n_x {
            return Err(Error::DimensionMismatch { context: "charge density", expected: n_x, actual: rho.len() });
        }
        let qw = self.consts.q * self.consts.omega_w;
        let ranges = chunk_ranges(x.len(), PARTICLE_CHUNK);
        if self.mode.is_parallel() && ranges.len() > 1 {
            let partials = map_indices(self.mode, ranges.len(), |c| {
                let mut buf = vec![0.0; n_x];
                let r = ranges[c].clone();
                deposit_range(&self.grid, qw, &x[r.clone()], r.start, &mut buf).map(|_| buf)
            });
            rho.fill(0.0);
            for p in partials {
                for (a, b) in rho.iter_mut().zip(p?) {
                    *a += b;
                }
            }
            Ok(())
        } else {
            rho.fill(0.0);
            deposit_range(&self.grid, qw, x, 0, rho)
        }
    }

    /// Right-hand side `b = ρ_h − h ρ₀ 𝟙` and its compatibility tolerance.
    fn rhs(&self, rho: &[f64]) -> (Vec<f64>, f64) {
        let shift = self.grid.h() * self.consts.rho0;
        let b: Vec<f64> = rho.iter().map(|r| r - shift).collect();
        let l1_b: f64 = b.iter().map(|a| a.abs()).sum();
        let l1_rho: f64 = rho.iter().map(|a| a.abs()).sum();
        (b, 1e-10 * (l1_b + l1_rho))
    }

    /// Potential solving `K φ = ρ_h − h ρ₀ 𝟙` with `Σ φ = 0`.
    pub fn solve_poisson(&self, rho: &[f64], phi: &mut [f64]) -> Result<()> {
        let (b, tol) = self.rhs(rho);
        self.solver.solve(&b, tol, phi)
    }

    /// Cell fields `E_j = −(φ_{j+1} − φ_j)/h`.
    pub fn cell_field(&self, phi: &[f64]) -> Vec<f64> {
        let h = self.grid.h();
        (0..self.grid.n_x()).map(|j| -(phi[self.grid.next(j)] - phi[j]) / h).collect()
    }

    /// Field at each particle; a particle on node `j` takes the value of cell `[jh, (j+1)h)`.
    pub fn interpolate_field(&self, x: &[f64], phi: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("field at particles", x.len(), out.len())?;
        let e = self.cell_field(phi);
        let grid = &self.grid;
        for_each_chunk_zip(self.mode, x, out, PARTICLE_CHUNK, |_, xs, os| {
            for (o, &xi) in os.iter_mut().zip(xs) {
                *o = e[grid.locate(xi).0];
            }
        });
        Ok(())
    }

    pub fn field_state(&self, x: &[f64]) -> Result<FieldState> {
        let n_x = self.grid.n_x();
        let mut rho_h = vec![0.0; n_x];
        self.deposit_charge(x, &mut rho_h)?;
        let mut phi_h = vec![0.0; n_x];
        self.solve_poisson(&rho_h, &mut phi_h)?;
        let e_cells = self.cell_field(&phi_h);
        Ok(FieldState { rho_h, phi_h, e_cells })
    }

    /// `∇ₓU(x) = −(q/m) E_h(x)`.
    pub fn potential_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("potential gradient", x.len(), out.len())?;
        let fields = self.field_state(x)?;
        let scale = -self.consts.q / self.consts.m;
        let g: Vec<f64> = fields.e_cells.iter().map(|e| scale * e).collect();
        let grid = &self.grid;
        for_each_chunk_zip(self.mode, x, out, PARTICLE_CHUNK, |_, xs, os| {
            for (o, &xi) in os.iter_mut().zip(xs) {
                *o = g[grid.locate(xi).0];
            }
        });
        Ok(())
    }

    /// `U(x) = bᵀφ / (2 m ω)`.
    pub fn potential_energy(&self, x: &[f64]) -> Result<f64> {
        let fields = self.field_state(x)?;
        Ok(self.potential_from_fields(&fields))
    }

    pub fn potential_from_fields(&self, fields: &FieldState) -> f64 {
        let shift = self.grid.h() * self.consts.rho0;
        let bphi: f64 = fields.rho_h.iter().zip(&fields.phi_h).map(|(r, p)| (r - shift) * p).sum();
        bphi / (2.0 * self.consts.m * self.consts.omega_w)
    }

    /// `H = ½‖v‖² + U(x)`.
    pub fn hamiltonian(&self, state: &PhaseState) -> Result<f64> {
        let kinetic = 0.5 * state.v.iter().map(|v| v * v).sum::<f64>();
        Ok(kinetic + self.potential_energy(&state.x)?)
    }

    /// `½ h Σ E_j²`.
    pub fn electric_energy(&self, phi: &[f64]) -> f64 {
        electric_energy(&self.cell_field(phi), &self.grid)
    }
}

/// `½ h Σ E_j²` for cell fields `e`.
pub fn electric_energy(e_cells: &[f64], grid: &GridSpec) -> f64 {
    0.5 * grid.h() * e_cells.iter().map(|e| e * e).sum::<f64>()
}

/// `½‖E‖₂ = ½ (h Σ E_j²)^{1/2}`, the field amplitude used for damping and growth rates.
pub fn field_amplitude(e_cells: &[f64], grid: &GridSpec) -> f64 {
    0.5 * (grid.h() * e_cells.iter().map(|e| e * e).sum::<f64>()).sqrt()
}

fn deposit_range(grid: &GridSpec, qw: f64, x: &[f64], offset: usize, rho: &mut [f64]) -> Result<()> {
    for (i, &xi) in x.iter().enumerate() {
        if !xi.is_finite() {
            return Err(Error::NonFinitePosition { index: offset + i, value: xi });
        }
        let (j, f) = grid.locate(xi);
        rho[j] += qw * (1.0 - f);
        rho[grid.next(j)] += qw * f;
    }
    Ok(())
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { context, expected, actual });
    }
    Ok(())
}

impl SeparableSystem for PicModel {
    fn dim(&self) -> usize {
        self.consts.n_particles
    }

    fn grad_potential(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.potential_gradient(x, out)
    }

    fn grad_kinetic(&mut self, v: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(v);
        Ok(())
    }

    fn wrap(&self, x: &mut [f64]) {
        if self.wrap_positions {
            for xi in x.iter_mut() {
                *xi = self.grid.wrap(*xi);
            }
        }
    }
}
