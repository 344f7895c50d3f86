//! Independent numerical oracles: Jacobi SVD and central differences.

use hamrom::init::Case;
use hamrom::neural::{Activation, Architecture, LayerSpec, NetworkParams, Subnet};
use hamrom::psd::{truncated_complex_svd, ComplexSnapshots, SvdOptions};
use hamrom::training::{sample_losses, LossWeights};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Verdict;

/// One-sided Jacobi on the columns of `a`: returns singular values (descending) and
/// the matching right singular vectors as columns.
fn jacobi_svd(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let mut g = a.clone();
    let n = g.ncols();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = g.column(p).norm_squared();
                let beta = g.column(q).norm_squared();
                let gamma = g.column(p).dot(&g.column(q));
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut g, &mut v] {
                    for i in 0..m.nrows() {
                        let (x, y) = (m[(i, p)], m[(i, q)]);
                        m[(i, p)] = c * x - s * y;
                        m[(i, q)] = s * x + c * y;
                    }
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| g.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma = order.iter().map(|&j| norms[j]).collect();
    let vs = DMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    (sigma, vs)
}

/// `[[A, −B], [B, A]]` for `A + iB`.
fn real_embedding(re: &DMatrix<f64>, im: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, s) = re.shape();
    DMatrix::from_fn(2 * n, 2 * s, |i, j| {
        let (bi, bj) = (i / n, j / s);
        let (ii, jj) = (i % n, j % s);
        match (bi, bj) {
            (0, 0) | (1, 1) => re[(ii, jj)],
            (0, 1) => -im[(ii, jj)],
            _ => im[(ii, jj)],
        }
    })
}

pub fn criterion_5() -> anyhow::Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_sigma, mut worst_proj, mut instances) = (0.0f64, 0.0f64, 0);
    while instances < 200 {
        let n = rng.random_range(2..=16);
        let s = rng.random_range(2..=32);
        let m = rng.random_range(1..=n.min(s));
        // Even instances are full rank and take the default route; odd ones have a rank the
        // randomized sketch can hold exactly and force that route.
        let randomized = instances % 2 == 1;
        let (re, im) = if randomized {
            let r = rng.random_range(m..=(m + 4).min(n.min(s)));
            let mut part = |rows, cols| DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
            let (lr, li, rr, ri) = (part(n, r), part(n, r), part(r, s), part(r, s));
            (&lr * &rr - &li * &ri, &lr * &ri + &li * &rr)
        } else {
            let mut part = |rows, cols| DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
            (part(n, s), part(n, s))
        };
        // Right singular vectors of the transposed embedding are left singular vectors of the embedding.
        let (sig2, u2) = jacobi_svd(&real_embedding(&re, &im).transpose());
        let oracle: Vec<f64> = sig2.iter().step_by(2).cloned().collect();
        let gap = if m < oracle.len() { oracle[m - 1] - oracle[m] } else { oracle[m - 1] };
        if gap < 1e-3 * oracle[0] {
            continue;
        }
        let uk = u2.columns(0, 2 * m).into_owned();
        let p_oracle = &uk * uk.transpose();
        let opts = SvdOptions { force_randomized: randomized, ..SvdOptions::default() };
        let svd = truncated_complex_svd(ComplexSnapshots::from_parts(&re, &im), m, &opts)?;
        for (a, b) in svd.sigma.iter().zip(&oracle) {
            worst_sigma = worst_sigma.max((a - b).abs() / oracle[0].max(1.0));
        }
        let w = real_embedding(&svd.w_re, &svd.w_im);
        // Columns of the embedding of W span the embedding of range(W); W has orthonormal columns.
        let p = &w * w.transpose();
        worst_proj = worst_proj.max((p - p_oracle).norm());
        instances += 1;
    }
    Ok(Verdict::new(
        worst_sigma <= 1e-10 && worst_proj <= 1e-8,
        format!("{instances} instances up to 16x32, half full-rank on the default route and half low-rank on the randomized route: max sigma error {worst_sigma:.2e} (limit 1e-10), max projector error {worst_proj:.2e} (limit 1e-8)"),
    ))
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if num == 0.0 {
        0.0
    } else {
        num / den.max(1e-300)
    }
}

/// Central differences of `f` at `x` with step `h`.
fn central(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_activation(rng: &mut ChaCha8Rng) -> Activation {
    [Activation::Linear, Activation::Elu, Activation::Softplus][rng.random_range(0..3)]
}

fn random_layer(rng: &mut ChaCha8Rng) -> LayerSpec {
    let act = random_activation(rng);
    match rng.random_range(0..3) {
        0 => LayerSpec::dense(rng.random_range(1..=8), rng.random_range(1..=8), act),
        1 => LayerSpec::conv(rng.random_range(1..=3), rng.random_range(3..=13), rng.random_range(1..=4), act).unwrap(),
        _ => {
            let l_in = rng.random_range(1..=4);
            LayerSpec::conv_transpose(rng.random_range(1..=3), l_in, rng.random_range(1..=3), 3 * l_in + rng.random_range(0..3), act).unwrap()
        }
    }
}

const H: f64 = 1e-5;
const LIMIT: f64 = 1e-5;

fn layer_gradients(rng: &mut ChaCha8Rng) -> f64 {
    let net = Subnet::new(vec![random_layer(rng)]).unwrap();
    let p = random_vec(rng, net.n_params(), 1.0);
    let x = random_vec(rng, net.in_dim(), 1.0);
    let ybar = random_vec(rng, net.out_dim(), 1.0);
    let trace = net.forward_trace(&p, &x).unwrap();
    let mut gp = vec![0.0; p.len()];
    let gx = net.backward(&p, &trace, &ybar, &mut gp);
    let objective = |p: &[f64], x: &[f64]| net.forward(p, x).unwrap().iter().zip(&ybar).map(|(a, b)| a * b).sum::<f64>();
    let fd_p = central(&p, H, |q| objective(q, &x));
    let fd_x = central(&x, H, |y| objective(&p, y));
    rel_err(&[gp, gx].concat(), &[fd_p, fd_x].concat())
}

fn hnn_input_gradient(rng: &mut ChaCha8Rng) -> f64 {
    let k = rng.random_range(1..=4);
    let widths: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(2..=8)).collect();
    let net = Subnet::dense_stack(2 * k, &widths, 1, Activation::Softplus).unwrap();
    let p = random_vec(rng, net.n_params(), 1.0);
    let x = random_vec(rng, 2 * k, 2.0);
    let (_, g) = net.value_and_gradient(&p, &x).unwrap();
    let fd = central(&x, H, |y| net.forward(&p, y).unwrap()[0]);
    rel_err(&g, &fd)
}

fn verlet_double_backprop(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.random_range(3..=9);
    let k = rng.random_range(1..=2);
    let conv = if m >= 3 && rng.random_bool(0.5) { vec![rng.random_range(1..=3)] } else { vec![] };
    let arch = Architecture {
        conv_filters: conv,
        ae_widths: vec![rng.random_range(2..=5)],
        hnn_widths: vec![rng.random_range(2..=5), rng.random_range(2..=5)],
        ae_activation: random_activation(rng),
        ..Architecture::for_case(Case::LinearLandau, m, k)
    };
    let params = NetworkParams::init(arch.clone(), rng.random()).unwrap();
    let u0 = random_vec(rng, 2 * m, 1.0);
    let u1 = random_vec(rng, 2 * m, 1.0);
    let dt = rng.random_range(0.01..0.2);
    let w = LossWeights::STAGE2;
    let mut grad = vec![0.0; params.len()];
    sample_losses(&params, &u0, &u1, 1, dt, &w, true, Some(&mut grad)).unwrap();
    let fd = central(&params.values, H, |q| {
        let p = NetworkParams::from_values(arch.clone(), q.to_vec()).unwrap();
        sample_losses(&p, &u0, &u1, 1, dt, &w, true, None).unwrap().total(&w)
    });
    rel_err(&grad, &fd)
}

pub fn criterion_6() -> anyhow::Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        worst[0] = worst[0].max(layer_gradients(&mut rng));
        worst[1] = worst[1].max(hnn_input_gradient(&mut rng));
        worst[2] = worst[2].max(verlet_double_backprop(&mut rng));
    }
    Ok(Verdict::new(
        worst.iter().all(|&e| e <= LIMIT),
        format!(
            "100 instances each, max relative error: layers {:.2e}, HNN input gradients {:.2e}, one Verlet step through the full loss {:.2e} (limit 1e-5)",
            worst[0], worst[1], worst[2]
        ),
    ))
}
