//! A feed-forward chain of layers over a flat parameter slice.

use crate::error::{Error, Result};

use super::layers::{dot, Activation, LayerKind, LayerSpec};

/// Layers plus their parameter offsets within the subnet's slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Subnet {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    n_params: usize,
}

/// Inputs and pre-activations of every layer from one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    pub acts: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Subnet {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("subnet needs at least one layer"));
        }
        for l in 1..layers.len() {
            if layers[l].in_dim() != layers[l - 1].out_dim() {
                return Err(Error::Shape {
                    layer: l,
                    message: format!(
                        "input size {} does not match previous output size {}",
                        layers[l].in_dim(),
                        layers[l - 1].out_dim()
                    ),
                });
            }
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut n_params = 0;
        for l in &layers {
            offsets.push(n_params);
            n_params += l.n_params();
        }
        Ok(Self { layers, offsets, n_params })
    }

    /// Dense chain `n_in → widths… → n_out`; `hidden` on all but the last layer.
    pub fn dense_stack(n_in: usize, widths: &[usize], n_out: usize, hidden: Activation) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len() + 1);
        let mut prev = n_in;
        for &w in widths {
            layers.push(LayerSpec::dense(prev, w, hidden));
            prev = w;
        }
        layers.push(LayerSpec::dense(prev, n_out, Activation::Linear));
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Parameter slice of layer `l` within the subnet slice `p`.
    pub fn layer_params<'a>(&self, l: usize, p: &'a [f64]) -> &'a [f64] {
        &p[self.offsets[l]..self.offsets[l] + self.layers[l].n_params()]
    }

    fn layer_params_mut<'a>(&self, l: usize, p: &'a mut [f64]) -> &'a mut [f64] {
        &mut p[self.offsets[l]..self.offsets[l] + self.layers[l].n_params()]
    }

    fn check(&self, p: &[f64], x: &[f64]) -> Result<()> {
        if p.len() != self.n_params {
            return Err(Error::DimensionMismatch { context: "subnet parameters", expected: self.n_params, actual: p.len() });
        }
        if x.len() != self.in_dim() {
            return Err(Error::Shape {
                layer: 0,
                message: format!("expected input of length {}, got {}", self.in_dim(), x.len()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check(p, x)?;
        let mut a = x.to_vec();
        for (l, spec) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; spec.out_dim()];
            spec.affine(self.layer_params(l, p), &a, &mut z);
            for v in &mut z {
                *v = spec.activation.apply(*v);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_trace(&self, p: &[f64], x: &[f64]) -> Result<Trace> {
        self.check(p, x)?;
        let mut trace = Trace { acts: Vec::with_capacity(self.layers.len() + 1), pre: Vec::with_capacity(self.layers.len()) };
        trace.acts.push(x.to_vec());
        for (l, spec) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; spec.out_dim()];
            spec.affine(self.layer_params(l, p), &trace.acts[l], &mut z);
            let a = z.iter().map(|&v| spec.activation.apply(v)).collect();
            trace.pre.push(z);
            trace.acts.push(a);
        }
        Ok(trace)
    }

    /// Accumulates `(∂y/∂p)ᵀ ybar` into `gp` and returns `(∂y/∂x)ᵀ ybar`.
    pub fn backward(&self, p: &[f64], trace: &Trace, ybar: &[f64], gp: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(ybar.len(), self.out_dim());
        let mut abar = ybar.to_vec();
        for l in (0..self.layers.len()).rev() {
            let spec = &self.layers[l];
            for (ab, &z) in abar.iter_mut().zip(&trace.pre[l]) {
                *ab *= spec.activation.derivative(z);
            }
            let mut xbar = vec![0.0; spec.in_dim()];
            spec.affine_backward(self.layer_params(l, p), &trace.acts[l], &abar, self.layer_params_mut(l, gp), &mut xbar);
            abar = xbar;
        }
        abar
    }

    fn require_scalar_dense(&self) -> Result<()> {
        if self.out_dim() != 1 || self.layers.iter().any(|l| l.kind != LayerKind::Dense) {
            return Err(Error::invalid("input-gradient operations need a dense stack with scalar output"));
        }
        Ok(())
    }

    /// Scalar value `y(x)` and its input gradient `∇ₓy`.
    pub fn value_and_gradient(&self, p: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.require_scalar_dense()?;
        let trace = self.forward_trace(p, x)?;
        let (d, _) = self.gradient_sweep(p, &trace);
        Ok((trace.output()[0], d[0].clone()))
    }

    /// Input gradient of a scalar dense stack written into `out`.
    pub fn input_gradient_into(&self, p: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        let (_, g) = self.value_and_gradient(p, x)?;
        out.copy_from_slice(&g);
        Ok(())
    }

    /// Backward sweep for `∇ₓy`: returns `d[l] = ∂y/∂a_l` and `e[l] = ∂y/∂z_l`.
    fn gradient_sweep(&self, p: &[f64], trace: &Trace) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.layers.len();
        let mut d: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        let mut e: Vec<Vec<f64>> = vec![Vec::new(); n];
        d[n] = vec![1.0];
        for l in (0..n).rev() {
            let spec = &self.layers[l];
            let el: Vec<f64> = d[l + 1].iter().zip(&trace.pre[l]).map(|(&dv, &z)| dv * spec.activation.derivative(z)).collect();
            let w = &self.layer_params(l, p)[..spec.n_weights()];
            let (n_in, n_out) = (spec.in_len, spec.out_len);
            let mut dl = vec![0.0; n_in];
            for o in 0..n_out {
                let eo = el[o];
                if eo != 0.0 {
                    for (di, wi) in dl.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *di += eo * wi;
                    }
                }
            }
            e[l] = el;
            d[l] = dl;
        }
        (d, e)
    }

    /// Reverse mode through `x ↦ (y(x), ∇ₓy(x))` for a scalar dense stack.
    ///
    /// With cotangents `gbar` on `∇ₓy` and `ybar` on `y`, accumulates the parameter
    /// gradient into `gp` and the input gradient into `gx`.
    pub fn gradient_vjp(&self, p: &[f64], x: &[f64], gbar: &[f64], ybar: f64, gp: &mut [f64], gx: &mut [f64]) -> Result<()> {
        self.require_scalar_dense()?;
        let trace = self.forward_trace(p, x)?;
        let (d, e) = self.gradient_sweep(p, &trace);
        let n = self.layers.len();
        // Reverse of the gradient sweep, from the input side upward.
        let mut dbar = gbar.to_vec();
        let mut zbar: Vec<Vec<f64>> = vec![Vec::new(); n];
        for l in 0..n {
            let spec = &self.layers[l];
            let (n_in, n_out) = (spec.in_len, spec.out_len);
            let nw = spec.n_weights();
            let w = &self.layer_params(l, p)[..nw];
            // d_l = W_lᵀ e_l
            let mut ebar = vec![0.0; n_out];
            {
                let gw = &mut self.layer_params_mut(l, gp)[..nw];
                for o in 0..n_out {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    ebar[o] = dot(row, &dbar);
                    let eo = e[l][o];
                    if eo != 0.0 {
                        for (g, db) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(&dbar) {
                            *g += eo * db;
                        }
                    }
                }
            }
            // e_l = σ'(z_l) ⊙ d_{l+1}
            let act = spec.activation;
            let mut zb = vec![0.0; n_out];
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let z = trace.pre[l][o];
                next[o] = act.derivative(z) * ebar[o];
                zb[o] = act.second_derivative(z) * d[l + 1][o] * ebar[o];
            }
            zbar[l] = zb;
            dbar = next;
        }
        // dbar now holds the cotangent of d_n = 1, a constant.
        // Reverse of the forward pass with the accumulated pre-activation cotangents.
        let mut abar = vec![ybar];
        for l in (0..n).rev() {
            let spec = &self.layers[l];
            let act = spec.activation;
            let total: Vec<f64> = abar
                .iter()
                .zip(&trace.pre[l])
                .zip(&zbar[l])
                .map(|((&ab, &z), &zb)| ab * act.derivative(z) + zb)
                .collect();
            let mut xbar = vec![0.0; spec.in_dim()];
            spec.affine_backward(self.layer_params(l, p), &trace.acts[l], &total, self.layer_params_mut(l, gp), &mut xbar);
            abar = xbar;
        }
        for (g, a) in gx.iter_mut().zip(&abar) {
            *g += a;
        }
        Ok(())
    }
}
