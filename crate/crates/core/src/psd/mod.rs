//! Proper symplectic decomposition: snapshot assembly, the symplectic basis
//! `A = [[Φ, −Ψ], [Ψ, Φ]]` from the complex SVD, projection and lifting, and the
//! linear reduced model used as a baseline.
//!
//! `A` and its symplectic inverse `A⁺ = J₂ₘᵀ Aᵀ J₂ₙ` are only ever applied through
//! the `N × M` blocks `Φ` and `Ψ`. For this block structure `A⁺ = Aᵀ`.

mod baseline;
mod svd;

pub use baseline::{psd_reduced_gradient, PsdRom};
pub use svd::{orthonormalize, truncated_complex_svd, ComplexSnapshots, SvdOptions, TruncatedSvd, C64, GRAM_LIMIT};

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::PhaseState;

/// Origin of one snapshot column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub trajectory: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub step: usize,
}

/// Column-major `2N × S` matrix of stacked `(x; v)` states.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    n: usize,
    data: Vec<f64>,
    meta: Vec<SnapshotMeta>,
    stride: usize,
}

impl SnapshotSet {
    pub fn new(n: usize, stride: usize) -> Self {
        Self { n, data: Vec::new(), meta: Vec::new(), stride: stride.max(1) }
    }

    pub fn from_columns(n: usize, stride: usize, data: Vec<f64>, meta: Vec<SnapshotMeta>) -> Result<Self> {
        if data.len() != 2 * n * meta.len() {
            return Err(Error::DimensionMismatch { context: "snapshot payload", expected: 2 * n * meta.len(), actual: data.len() });
        }
        Ok(Self { n, data, meta, stride: stride.max(1) })
    }

    pub fn push(&mut self, state: &PhaseState, meta: SnapshotMeta) -> Result<()> {
        if state.dim() != self.n {
            return Err(Error::DimensionMismatch { context: "snapshot column", expected: self.n, actual: state.dim() });
        }
        if !state.is_finite() {
            return Err(Error::NonFiniteState { step: meta.step, time: state.t, what: "snapshot column" });
        }
        self.data.extend_from_slice(&state.x);
        self.data.extend_from_slice(&state.v);
        self.meta.push(meta);
        Ok(())
    }

    /// Appends all columns of `other`, which must have the same `N`.
    pub fn extend(&mut self, other: &SnapshotSet) -> Result<()> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch { context: "snapshot merge", expected: self.n, actual: other.n });
        }
        self.data.extend_from_slice(&other.data);
        self.meta.extend_from_slice(&other.meta);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn meta(&self) -> &[SnapshotMeta] {
        &self.meta
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[2 * self.n * j..2 * self.n * (j + 1)]
    }

    pub fn state(&self, j: usize) -> PhaseState {
        let c = self.column(j);
        PhaseState { x: c[..self.n].to_vec(), v: c[self.n..].to_vec(), t: f64::NAN }
    }

    pub fn matrix(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, 2 * self.n, self.len())
    }
}

/// Complex view `X + iV` of a snapshot set; no data is copied.
pub fn assemble_complex_snapshots(snapshots: &SnapshotSet) -> Result<ComplexSnapshots<'_>> {
    if snapshots.is_empty() {
        return Err(Error::invalid("empty snapshot set"));
    }
    let (n, s) = (snapshots.n(), snapshots.len());
    let data = snapshots.data();
    Ok(ComplexSnapshots {
        re: DMatrixView::from_slice_with_strides(data, n, s, 1, 2 * n),
        im: DMatrixView::from_slice_with_strides(&data[n..], n, s, 1, 2 * n),
    })
}

/// Symplectic basis stored as its `N × M` blocks plus the singular values.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticBasis {
    phi: DMatrix<f64>,
    psi: DMatrix<f64>,
    sigma: Vec<f64>,
}

/// Tolerance above which a candidate basis is rejected as non-symplectic.
pub const SYMPLECTIC_TOLERANCE: f64 = 1e-8;

impl SymplecticBasis {
    pub fn new(phi: DMatrix<f64>, psi: DMatrix<f64>, sigma: Vec<f64>) -> Result<Self> {
        if phi.shape() != psi.shape() || sigma.len() != phi.ncols() {
            return Err(Error::DimensionMismatch { context: "basis blocks", expected: phi.ncols(), actual: psi.ncols().min(sigma.len()) });
        }
        if phi.ncols() == 0 {
            return Err(Error::invalid("basis needs M >= 1"));
        }
        if sigma.iter().any(|s| !(*s > 0.0)) || sigma.windows(2).any(|p| p[1] > p[0]) {
            return Err(Error::invalid("singular values must be positive and non-increasing"));
        }
        let basis = Self { phi, psi, sigma };
        let residual = basis.symplectic_residual();
        if !(residual <= SYMPLECTIC_TOLERANCE) {
            return Err(Error::NotSymplectic { residual, tolerance: SYMPLECTIC_TOLERANCE });
        }
        Ok(basis)
    }

    /// `Φ = Re W`, `Ψ = Im W`.
    pub fn from_svd(svd: &TruncatedSvd) -> Result<Self> {
        Self::new(svd.w_re.clone(), svd.w_im.clone(), svd.sigma.clone())
    }

    /// Snapshots → complex SVD → basis of rank at most `m`.
    pub fn build(snapshots: &SnapshotSet, m: usize, opts: &SvdOptions) -> Result<Self> {
        let u = assemble_complex_snapshots(snapshots)?;
        Self::from_svd(&truncated_complex_svd(u, m, opts)?)
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn m(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    /// Leading `m` columns of this basis.
    pub fn truncate(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.m() {
            return Err(Error::invalid(format!("truncation rank must be in 1..={}, got {m}", self.m())));
        }
        Self::new(self.phi.columns(0, m).into_owned(), self.psi.columns(0, m).into_owned(), self.sigma[..m].to_vec())
    }

    /// `‖AᵀJ₂ₙA − J₂ₘ‖_F = (2‖ΦᵀΨ − ΨᵀΦ‖² + 2‖ΦᵀΦ + ΨᵀΨ − I‖²)^{1/2}`.
    pub fn symplectic_residual(&self) -> f64 {
        let (skew, sym) = self.gram_blocks();
        (2.0 * skew.norm_squared() + 2.0 * sym.norm_squared()).sqrt()
    }

    /// `‖A⁺A − I₂ₘ‖_F`; the same two blocks appear, so this equals the symplectic residual.
    pub fn inverse_residual(&self) -> f64 {
        let (skew, sym) = self.gram_blocks();
        (2.0 * skew.norm_squared() + 2.0 * sym.norm_squared()).sqrt()
    }

    fn gram_blocks(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let pt_s = self.phi.tr_mul(&self.psi);
        let skew = &pt_s - pt_s.transpose();
        let sym = self.phi.tr_mul(&self.phi) + self.psi.tr_mul(&self.psi) - DMatrix::identity(self.m(), self.m());
        (skew, sym)
    }

    /// `A⁺u = (Φᵀx + Ψᵀv; −Ψᵀx + Φᵀv)`.
    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; 2 * self.m()];
        self.project_into(u, &mut out)?;
        Ok(out)
    }

    pub fn project_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        check(2 * n, u.len(), "project input")?;
        check(2 * m, out.len(), "project output")?;
        let x = DVectorView::from_slice(&u[..n], n);
        let v = DVectorView::from_slice(&u[n..], n);
        let mut xt = DVector::zeros(m);
        let mut vt = DVector::zeros(m);
        xt.gemv_tr(1.0, &self.phi, &x, 0.0);
        xt.gemv_tr(1.0, &self.psi, &v, 1.0);
        vt.gemv_tr(-1.0, &self.psi, &x, 0.0);
        vt.gemv_tr(1.0, &self.phi, &v, 1.0);
        out[..m].copy_from_slice(xt.as_slice());
        out[m..].copy_from_slice(vt.as_slice());
        Ok(())
    }

    /// `Aũ = (Φx̃ − Ψṽ; Ψx̃ + Φṽ)`.
    pub fn lift(&self, ut: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; 2 * self.n()];
        self.lift_into(ut, &mut out)?;
        Ok(out)
    }

    pub fn lift_into(&self, ut: &[f64], out: &mut [f64]) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        check(2 * m, ut.len(), "lift input")?;
        check(2 * n, out.len(), "lift output")?;
        let xt = DVectorView::from_slice(&ut[..m], m);
        let vt = DVectorView::from_slice(&ut[m..], m);
        let mut x = DVector::zeros(n);
        let mut v = DVector::zeros(n);
        x.gemv(1.0, &self.phi, &xt, 0.0);
        x.gemv(-1.0, &self.psi, &vt, 1.0);
        v.gemv(1.0, &self.psi, &xt, 0.0);
        v.gemv(1.0, &self.phi, &vt, 1.0);
        out[..n].copy_from_slice(x.as_slice());
        out[n..].copy_from_slice(v.as_slice());
        Ok(())
    }

    /// `A⁺U` for a whole snapshot block (`2N × S` → `2M × S`).
    pub fn project_matrix(&self, u: DMatrixView<'_, f64>) -> Result<DMatrix<f64>> {
        let (n, m) = (self.n(), self.m());
        check(2 * n, u.nrows(), "project matrix")?;
        let x = u.rows(0, n);
        let v = u.rows(n, n);
        let xt = self.phi.tr_mul(&x) + self.psi.tr_mul(&v);
        let vt = self.phi.tr_mul(&v) - self.psi.tr_mul(&x);
        let mut out = DMatrix::zeros(2 * m, u.ncols());
        out.rows_mut(0, m).copy_from(&xt);
        out.rows_mut(m, m).copy_from(&vt);
        Ok(out)
    }

    /// `A Ũ` for a whole block (`2M × S` → `2N × S`).
    pub fn lift_matrix(&self, ut: DMatrixView<'_, f64>) -> Result<DMatrix<f64>> {
        let (n, m) = (self.n(), self.m());
        check(2 * m, ut.nrows(), "lift matrix")?;
        let xt = ut.rows(0, m);
        let vt = ut.rows(m, m);
        let x = &self.phi * xt - &self.psi * vt;
        let v = &self.psi * xt + &self.phi * vt;
        let mut out = DMatrix::zeros(2 * n, ut.ncols());
        out.rows_mut(0, n).copy_from(&x);
        out.rows_mut(n, n).copy_from(&v);
        Ok(out)
    }
}

/// `‖U − AA⁺U‖_F / ‖U‖_F`, evaluated in column blocks.
pub fn reconstruction_error(basis: &SymplecticBasis, snapshots: &SnapshotSet) -> Result<f64> {
    check(basis.n(), snapshots.n(), "reconstruction")?;
    let u = snapshots.matrix();
    let (mut num, mut den) = (0.0, 0.0);
    const BLOCK: usize = 256;
    let mut start = 0;
    while start < u.ncols() {
        let w = BLOCK.min(u.ncols() - start);
        let block = u.columns(start, w);
        let rec = basis.lift_matrix(basis.project_matrix(block)?.as_view())?;
        num += (rec - block).norm_squared();
        den += block.norm_squared();
        start += w;
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { 0.0 })
}

fn check(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { context, expected, actual });
    }
    Ok(())
}
