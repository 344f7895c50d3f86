//! Linear symplectic reduced model `dũ/dt = J₂ₘ Aᵀ ∇H(Aũ)`.
//!
//! The reduced Hamiltonian `H∘A` mixes positions and velocities whenever `Ψ ≠ 0`,
//! so the baseline is advanced with the implicit midpoint rule.

use crate::error::Result;
use crate::integrator::HamiltonianVectorField;
use crate::pic::PicModel;

use super::SymplecticBasis;

/// `∇(H∘A)(ũ) = Aᵀ ∇H(Aũ)`, which equals `A⁺ ∇H(Aũ)` for this block structure.
pub fn psd_reduced_gradient(basis: &SymplecticBasis, ut: &[f64], pic: &PicModel) -> Result<Vec<f64>> {
    let n = basis.n();
    let u = basis.lift(ut)?;
    let mut grad = vec![0.0; 2 * n];
    pic.potential_gradient(&u[..n], &mut grad[..n])?;
    grad[n..].copy_from_slice(&u[n..]);
    basis.project(&grad)
}

/// Baseline reduced model bound to a basis and the particle model.
pub struct PsdRom<'a> {
    pub basis: &'a SymplecticBasis,
    pub pic: &'a PicModel,
}

impl PsdRom<'_> {
    /// `H(Aũ)`.
    pub fn hamiltonian(&self, ut: &[f64]) -> Result<f64> {
        let u = self.basis.lift(ut)?;
        let state = crate::integrator::PhaseState::from_stacked(&u, 0.0)?;
        self.pic.hamiltonian(&state)
    }
}

impl HamiltonianVectorField for PsdRom<'_> {
    fn dim(&self) -> usize {
        self.basis.m()
    }

    fn vector_field(&mut self, ut: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.basis.m();
        let g = psd_reduced_gradient(self.basis, ut, self.pic)?;
        out[..m].copy_from_slice(&g[m..]);
        for i in 0..m {
            out[m + i] = -g[i];
        }
        Ok(())
    }
}
