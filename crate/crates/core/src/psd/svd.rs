//! Truncated SVD of the complex snapshot matrix `U' = X + iV`.
//!
//! `U'` is never materialized: its real and imaginary parts are the two row blocks
//! of the stacked snapshot matrix, and every complex product is assembled from real
//! matrix products. A candidate range `Y` (Gram eigenvectors or a randomized
//! sketch) is orthonormalized to `Q`, and the SVD of the small matrix `Q*U'` gives
//! the singular values and `W = Q Ũ`.

use nalgebra::{Complex, DMatrix, DMatrixView, Dyn, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Largest snapshot count handled by the Gram eigen-decomposition route.
pub const GRAM_LIMIT: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdOptions {
    pub oversample: usize,
    pub power_iterations: usize,
    pub seed: u64,
    /// Force the randomized route even when the Gram route applies.
    pub force_randomized: bool,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self { oversample: 10, power_iterations: 2, seed: 0x5053_4442, force_randomized: false }
    }
}

/// `U' = re + i·im`, both `N × S`.
#[derive(Clone, Copy, Debug)]
pub struct ComplexSnapshots<'a> {
    pub re: DMatrixView<'a, f64, Dyn, Dyn>,
    pub im: DMatrixView<'a, f64, Dyn, Dyn>,
}

impl<'a> ComplexSnapshots<'a> {
    pub fn from_parts(re: &'a DMatrix<f64>, im: &'a DMatrix<f64>) -> Self {
        let (n, s) = re.shape();
        Self {
            re: DMatrixView::from_slice_with_strides(re.as_slice(), n, s, 1, n),
            im: DMatrixView::from_slice_with_strides(im.as_slice(), im.nrows(), im.ncols(), 1, im.nrows()),
        }
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.re.ncols()
    }

    /// `U' Z` for a complex `S × r` matrix.
    fn mul(&self, z: &DMatrix<C64>) -> DMatrix<C64> {
        let (zr, zi) = split(z);
        let yr = self.re * &zr - self.im * &zi;
        let yi = self.re * &zi + self.im * &zr;
        join(&yr, &yi)
    }

    /// `U'* Q` for a complex `N × r` matrix.
    fn adjoint_mul(&self, q: &DMatrix<C64>) -> DMatrix<C64> {
        let (qr, qi) = split(q);
        let br = self.re.tr_mul(&qr) + self.im.tr_mul(&qi);
        let bi = self.re.tr_mul(&qi) - self.im.tr_mul(&qr);
        join(&br, &bi)
    }

    /// Hermitian Gram matrix `U'* U'`.
    fn gram(&self) -> DMatrix<C64> {
        let gr = self.re.tr_mul(&self.re) + self.im.tr_mul(&self.im);
        let cross = self.re.tr_mul(&self.im);
        let gi = &cross - cross.transpose();
        join(&gr, &gi)
    }
}

/// `W Σ V*` with `W` stored as real and imaginary parts.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    pub w_re: DMatrix<f64>,
    pub w_im: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<C64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn w(&self) -> DMatrix<C64> {
        join(&self.w_re, &self.w_im)
    }
}

pub(crate) fn split(z: &DMatrix<C64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (z.map(|c| c.re), z.map(|c| c.im))
}

pub(crate) fn join(re: &DMatrix<f64>, im: &DMatrix<f64>) -> DMatrix<C64> {
    re.zip_map(im, C64::new)
}

/// Rank-`m` truncated SVD. Returns fewer than `m` triplets (with a warning) when the
/// numerical rank of `U'` is smaller.
pub fn truncated_complex_svd(u: ComplexSnapshots<'_>, m: usize, opts: &SvdOptions) -> Result<TruncatedSvd> {
    let (n, s) = (u.nrows(), u.ncols());
    if m == 0 || m > n.min(s) {
        return Err(Error::invalid(format!("rank M must satisfy 1 <= M <= min(N, S) = {}, got {m}", n.min(s))));
    }
    if u.im.nrows() != n || u.im.ncols() != s {
        return Err(Error::DimensionMismatch { context: "complex snapshots", expected: n, actual: u.im.nrows() });
    }
    let r = (m + opts.oversample).min(n.min(s));
    let y = if s <= GRAM_LIMIT && !opts.force_randomized {
        let eig = SymmetricEigen::new(u.gram());
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let z = DMatrix::from_fn(s, r, |i, j| eig.eigenvectors[(i, order[j])]);
        u.mul(&z)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let omega = DMatrix::from_fn(s, r, |_, _| {
            C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let mut q = orthonormalize(u.mul(&omega));
        for _ in 0..opts.power_iterations {
            let z = orthonormalize(u.adjoint_mul(&q));
            q = orthonormalize(u.mul(&z));
        }
        q
    };
    let q = orthonormalize(y);
    if q.ncols() == 0 {
        log::warn!("snapshot matrix is numerically zero; empty basis");
        return Ok(TruncatedSvd {
            w_re: DMatrix::zeros(n, 0),
            w_im: DMatrix::zeros(n, 0),
            sigma: Vec::new(),
            v: DMatrix::zeros(s, 0),
        });
    }
    // B = Q* U' is small (r × S); its SVD completes the decomposition.
    let b = u.adjoint_mul(&q).adjoint();
    let svd = b.svd(true, true);
    let (ub, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested V"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma_max = svd.singular_values[order[0]];
    let tol = n.max(s) as f64 * f64::EPSILON * sigma_max;
    let keep: Vec<usize> = order.into_iter().filter(|&j| svd.singular_values[j] > tol).take(m).collect();
    if keep.len() < m {
        log::warn!("requested rank {m} exceeds numerical rank {}; returning {}", keep.len(), keep.len());
    }
    let mut w = DMatrix::<C64>::zeros(n, keep.len());
    let mut v = DMatrix::<C64>::zeros(s, keep.len());
    let mut sigma = Vec::with_capacity(keep.len());
    for (c, &j) in keep.iter().enumerate() {
        let wj = &q * ub.column(j);
        // Fix the free phase: the largest-modulus entry becomes real positive.
        let (imax, _) = wj.iter().enumerate().fold((0, -1.0), |acc, (i, z)| {
            if z.norm() > acc.1 { (i, z.norm()) } else { acc }
        });
        let phase = wj[imax].conj() / wj[imax].norm();
        w.set_column(c, &(wj * phase));
        let vj = vt.row(j).adjoint() * phase;
        v.set_column(c, &vj);
        sigma.push(svd.singular_values[j]);
    }
    let (w_re, w_im) = split(&w);
    Ok(TruncatedSvd { w_re, w_im, sigma, v })
}

/// Classical Gram–Schmidt with reorthogonalization; columns whose residual falls
/// below `1e-12` of their original norm are dropped as linearly dependent.
pub fn orthonormalize(y: DMatrix<C64>) -> DMatrix<C64> {
    let (n, r) = y.shape();
    let scale = (0..r).map(|j| y.column(j).norm()).fold(0.0, f64::max);
    let mut q = DMatrix::<C64>::zeros(n, r);
    let mut k = 0;
    for j in 0..r {
        let mut col = y.column(j).into_owned();
        let norm0 = col.norm();
        if norm0 <= 1e-300 || norm0 <= 1e-14 * scale {
            continue;
        }
        for _ in 0..2 {
            if k > 0 {
                let basis = q.columns(0, k);
                let coeff = basis.ad_mul(&col);
                col -= basis * coeff;
            }
        }
        let norm = col.norm();
        if norm <= 1e-12 * norm0 {
            continue;
        }
        q.set_column(k, &(col / C64::new(norm, 0.0)));
        k += 1;
    }
    q.columns(0, k).into_owned()
}
