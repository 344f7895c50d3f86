//! The four training losses and their joint reverse pass.
//!
//! Per-sample conventions: reconstruction and prediction errors are squared norms
//! divided by the vector length, the stability term is the squared Hamiltonian gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{NetworkParams, SubnetId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub ae: f64,
    pub pred_reduced: f64,
    pub stability: f64,
    pub pred: f64,
}

impl LossWeights {
    /// Autoencoder alone.
    pub const STAGE1: LossWeights = LossWeights { ae: 1.0, pred_reduced: 0.0, stability: 0.0, pred: 0.0 };
    /// Joint training.
    pub const STAGE2: LossWeights = LossWeights { ae: 1.0, pred_reduced: 10.0, stability: 1e-4, pred: 1.0 };

    pub fn validate(&self) -> Result<()> {
        let all = [self.ae, self.pred_reduced, self.stability, self.pred];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("loss weights must be finite and ≥ 0"));
        }
        Ok(())
    }

    fn needs_dynamics(&self) -> bool {
        self.pred_reduced > 0.0 || self.stability > 0.0 || self.pred > 0.0
    }
}

/// Loss components; `None` when the component was not evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub ae: Option<f64>,
    pub pred_reduced: Option<f64>,
    pub stability: Option<f64>,
    pub pred: Option<f64>,
}

impl Losses {
    /// `Σ ω_• L_•` over evaluated components.
    pub fn total(&self, w: &LossWeights) -> f64 {
        let term = |l: Option<f64>, w: f64| if w > 0.0 { w * l.unwrap_or(0.0) } else { 0.0 };
        term(self.ae, w.ae) + term(self.pred_reduced, w.pred_reduced) + term(self.stability, w.stability) + term(self.pred, w.pred)
    }

    fn add_scaled(&mut self, other: &Losses, c: f64) {
        fn acc(a: &mut Option<f64>, b: Option<f64>, c: f64) {
            if let Some(b) = b {
                *a = Some(a.unwrap_or(0.0) + c * b);
            }
        }
        acc(&mut self.ae, other.ae, c);
        acc(&mut self.pred_reduced, other.pred_reduced, c);
        acc(&mut self.stability, other.stability, c);
        acc(&mut self.pred, other.pred, c);
    }

    pub fn is_finite(&self) -> bool {
        [self.ae, self.pred_reduced, self.stability, self.pred].iter().flatten().all(|v| v.is_finite())
    }
}

/// `P_s`: `s` Verlet steps of the latent Hamiltonian flow from `ub`.
pub fn prediction_operator(params: &NetworkParams, ub: &[f64], s: usize, dt: f64) -> Result<Vec<f64>> {
    let k = params.arch().k;
    if ub.len() != 2 * k {
        return Err(Error::DimensionMismatch { context: "latent state", expected: 2 * k, actual: ub.len() });
    }
    Ok(Rollout::forward(params, ub, s, dt)?.end)
}

/// Forward record of `s` Verlet steps: `(x_i, v_{i+½}, x_{i+1})` for each step.
struct Rollout {
    steps: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    end: Vec<f64>,
}

impl Rollout {
    fn forward(params: &NetworkParams, ub: &[f64], s: usize, dt: f64) -> Result<Self> {
        let k = params.arch().k;
        let pot = (params.subnet(SubnetId::HnnPot), params.slice(SubnetId::HnnPot));
        let kin = (params.subnet(SubnetId::HnnKin), params.slice(SubnetId::HnnKin));
        let mut x = ub[..k].to_vec();
        let mut v = ub[k..].to_vec();
        let mut gp = pot.0.value_and_gradient(pot.1, &x)?.1;
        let mut steps = Vec::with_capacity(s);
        for _ in 0..s {
            let vh: Vec<f64> = v.iter().zip(&gp).map(|(v, g)| v - 0.5 * dt * g).collect();
            let gk = kin.0.value_and_gradient(kin.1, &vh)?.1;
            let x1: Vec<f64> = x.iter().zip(&gk).map(|(x, g)| x + dt * g).collect();
            gp = pot.0.value_and_gradient(pot.1, &x1)?.1;
            v = vh.iter().zip(&gp).map(|(v, g)| v - 0.5 * dt * g).collect();
            steps.push((std::mem::replace(&mut x, x1.clone()), vh, x1));
        }
        let mut end = x;
        end.extend(v);
        Ok(Self { steps, end })
    }

    /// Pulls the cotangent of the end state back to the start state, accumulating
    /// Hamiltonian-network parameter gradients into `grad`.
    fn backward(&self, params: &NetworkParams, end_bar: &[f64], dt: f64, grad: &mut [f64]) -> Result<Vec<f64>> {
        let k = params.arch().k;
        let pot_net = params.subnet(SubnetId::HnnPot);
        let kin_net = params.subnet(SubnetId::HnnKin);
        let (pp, pk) = (params.slice(SubnetId::HnnPot), params.slice(SubnetId::HnnKin));
        let (rp, rk) = (params.range(SubnetId::HnnPot), params.range(SubnetId::HnnKin));
        let mut xbar = end_bar[..k].to_vec();
        let mut vbar = end_bar[k..].to_vec();
        for (x0, vh, x1) in self.steps.iter().rev() {
            // v₁ = v½ − ½dt ∇P(x₁)
            let g: Vec<f64> = vbar.iter().map(|b| -0.5 * dt * b).collect();
            pot_net.gradient_vjp(pp, x1, &g, 0.0, &mut grad[rp.clone()], &mut xbar)?;
            // x₁ = x₀ + dt ∇K(v½)
            let g: Vec<f64> = xbar.iter().map(|b| dt * b).collect();
            kin_net.gradient_vjp(pk, vh, &g, 0.0, &mut grad[rk.clone()], &mut vbar)?;
            // v½ = v₀ − ½dt ∇P(x₀)
            let g: Vec<f64> = vbar.iter().map(|b| -0.5 * dt * b).collect();
            pot_net.gradient_vjp(pp, x0, &g, 0.0, &mut grad[rp.clone()], &mut xbar)?;
        }
        xbar.extend(vbar);
        Ok(xbar)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Split encoder with traces kept for the reverse pass.
struct Encoded {
    tx: crate::neural::Trace,
    tv: crate::neural::Trace,
    ub: Vec<f64>,
}

fn encode_traced(params: &NetworkParams, u: &[f64]) -> Result<Encoded> {
    let m = params.arch().m;
    let tx = params.subnet(SubnetId::EncoderX).forward_trace(params.slice(SubnetId::EncoderX), &u[..m])?;
    let tv = params.subnet(SubnetId::EncoderV).forward_trace(params.slice(SubnetId::EncoderV), &u[m..])?;
    let mut ub = tx.output().to_vec();
    ub.extend_from_slice(tv.output());
    Ok(Encoded { tx, tv, ub })
}

fn encode_backward(params: &NetworkParams, enc: &Encoded, ub_bar: &[f64], grad: &mut [f64]) {
    let k = params.arch().k;
    for (id, trace, bar) in [(SubnetId::EncoderX, &enc.tx, &ub_bar[..k]), (SubnetId::EncoderV, &enc.tv, &ub_bar[k..])] {
        let r = params.range(id);
        params.subnet(id).backward(params.slice(id), trace, bar, &mut grad[r]);
    }
}

/// Decodes `ub`, returns `‖target − D(ub)‖²/len` and, when `weight > 0` and a gradient
/// buffer is present, accumulates decoder gradients and returns the latent cotangent.
fn decode_loss(
    params: &NetworkParams,
    ub: &[f64],
    target: &[f64],
    weight: f64,
    grad: Option<&mut [f64]>,
) -> Result<(f64, Option<Vec<f64>>)> {
    let (m, k) = (params.arch().m, params.arch().k);
    let tx = params.subnet(SubnetId::DecoderX).forward_trace(params.slice(SubnetId::DecoderX), &ub[..k])?;
    let tv = params.subnet(SubnetId::DecoderV).forward_trace(params.slice(SubnetId::DecoderV), &ub[k..])?;
    let n = (2 * m) as f64;
    let loss = (sq_dist(tx.output(), &target[..m]) + sq_dist(tv.output(), &target[m..])) / n;
    let Some(grad) = grad else { return Ok((loss, None)) };
    let mut ub_bar = Vec::with_capacity(2 * k);
    for (id, trace, tgt) in [(SubnetId::DecoderX, &tx, &target[..m]), (SubnetId::DecoderV, &tv, &target[m..])] {
        let ybar: Vec<f64> = trace.output().iter().zip(tgt).map(|(y, t)| 2.0 * weight * (y - t) / n).collect();
        let r = params.range(id);
        ub_bar.extend(params.subnet(id).backward(params.slice(id), trace, &ybar, &mut grad[r]));
    }
    Ok((loss, Some(ub_bar)))
}

/// `∂(ω H̄)/∂θ` and `∂(ω H̄)/∂ū` accumulated into `grad` and `ub_bar`.
fn hnn_value_backward(params: &NetworkParams, ub: &[f64], weight: f64, grad: &mut [f64], ub_bar: &mut [f64]) -> Result<()> {
    let k = params.arch().k;
    let zeros = vec![0.0; k];
    let (xb, vb) = ub_bar.split_at_mut(k);
    for (id, input, bar) in [(SubnetId::HnnPot, &ub[..k], xb), (SubnetId::HnnKin, &ub[k..], vb)] {
        let r = params.range(id);
        params.subnet(id).gradient_vjp(params.slice(id), input, &zeros, weight, &mut grad[r], bar)?;
    }
    Ok(())
}

/// Losses of one pair `(ũⁿ, ũⁿ⁺ˢ)`; with `grad`, also accumulates `∂(Σ ω_• L_•)/∂θ`.
///
/// Components with zero weight are skipped unless `evaluate_all` is set.
pub fn sample_losses(
    params: &NetworkParams,
    u0: &[f64],
    u1: &[f64],
    s: usize,
    dt: f64,
    w: &LossWeights,
    evaluate_all: bool,
    mut grad: Option<&mut [f64]>,
) -> Result<Losses> {
    let (m, k) = (params.arch().m, params.arch().k);
    for u in [u0, u1] {
        if u.len() != 2 * m {
            return Err(Error::DimensionMismatch { context: "training pair", expected: 2 * m, actual: u.len() });
        }
    }
    let mut out = Losses::default();
    let enc0 = encode_traced(params, u0)?;
    let mut ub0_bar = vec![0.0; 2 * k];

    if w.ae > 0.0 || evaluate_all {
        let g = if w.ae > 0.0 { grad.as_deref_mut() } else { None };
        let (l, bar) = decode_loss(params, &enc0.ub, u0, w.ae, g)?;
        out.ae = Some(l);
        if let Some(bar) = bar {
            add_into(&mut ub0_bar, &bar);
        }
    }

    if w.needs_dynamics() || evaluate_all {
        let enc1 = encode_traced(params, u1)?;
        let rollout = Rollout::forward(params, &enc0.ub, s, dt)?;
        let p = &rollout.end;
        let mut p_bar = vec![0.0; 2 * k];
        let mut ub1_bar = vec![0.0; 2 * k];

        out.pred_reduced = Some(sq_dist(&enc1.ub, p) / (2 * k) as f64);
        if w.pred_reduced > 0.0 {
            for i in 0..2 * k {
                let d = 2.0 * w.pred_reduced * (p[i] - enc1.ub[i]) / (2 * k) as f64;
                p_bar[i] += d;
                ub1_bar[i] -= d;
            }
        }

        let h1 = params.hnn_value(&enc1.ub)?;
        let h0 = params.hnn_value(&enc0.ub)?;
        out.stability = Some((h1 - h0) * (h1 - h0));

        let g = if w.pred > 0.0 { grad.as_deref_mut() } else { None };
        let (l, bar) = decode_loss(params, p, u1, w.pred, g)?;
        out.pred = Some(l);
        if let Some(bar) = bar {
            add_into(&mut p_bar, &bar);
        }

        if let Some(grad) = grad.as_deref_mut() {
            if w.stability > 0.0 {
                let c = 2.0 * w.stability * (h1 - h0);
                hnn_value_backward(params, &enc1.ub, c, grad, &mut ub1_bar)?;
                hnn_value_backward(params, &enc0.ub, -c, grad, &mut ub0_bar)?;
            }
            if p_bar.iter().any(|&b| b != 0.0) {
                let bar = rollout.backward(params, &p_bar, dt, grad)?;
                add_into(&mut ub0_bar, &bar);
            }
            encode_backward(params, &enc1, &ub1_bar, grad);
        }
    }

    if let Some(grad) = grad {
        encode_backward(params, &enc0, &ub0_bar, grad);
    }
    Ok(out)
}

/// Batch-mean losses and parameter gradient.
///
/// Samples are processed in fixed-size chunks whose partial sums are reduced in
/// chunk order, so the result does not depend on the number of worker threads.
pub fn batch_losses(
    params: &NetworkParams,
    pairs: &[(&[f64], &[f64])],
    s: usize,
    dt: f64,
    w: &LossWeights,
    evaluate_all: bool,
    with_grad: bool,
    mode: crate::parallel::ExecMode,
    chunk: usize,
    batch_id: usize,
) -> Result<(Losses, Vec<f64>)> {
    let chunk = chunk.max(1);
    let n_chunks = pairs.len().div_ceil(chunk);
    let partials: Vec<Result<(Losses, Vec<f64>)>> = crate::parallel::map_indices(mode, n_chunks, |c| {
        let mut losses = Losses::default();
        let mut g = if with_grad { vec![0.0; params.len()] } else { Vec::new() };
        for &(u0, u1) in &pairs[c * chunk..((c + 1) * chunk).min(pairs.len())] {
            let gr = if with_grad { Some(g.as_mut_slice()) } else { None };
            let l = sample_losses(params, u0, u1, s, dt, w, evaluate_all, gr)?;
            losses.add_scaled(&l, 1.0);
        }
        Ok((losses, g))
    });
    let inv = 1.0 / pairs.len().max(1) as f64;
    let mut total = Losses::default();
    let mut grad = if with_grad { vec![0.0; params.len()] } else { Vec::new() };
    for part in partials {
        let (l, g) = part?;
        total.add_scaled(&l, inv);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += inv * b;
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss { batch: batch_id });
    }
    Ok((total, grad))
}
