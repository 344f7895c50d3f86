//! Split autoencoder and separable Hamiltonian network with hand-written reverse mode.
//!
//! All six subnets share one flat parameter vector, laid out in [`SubnetId::ALL`] order.
//! Within a subnet, layers appear in evaluation order and each layer stores its weights
//! before its biases.

mod layers;
mod subnet;

pub use layers::{conv_output_len, Activation, LayerKind, LayerSpec, KERNEL, STRIDE};
pub use subnet::{Subnet, Trace};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::Case;
use crate::integrator::SeparableSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubnetId {
    EncoderX,
    EncoderV,
    DecoderX,
    DecoderV,
    HnnKin,
    HnnPot,
}

impl SubnetId {
    pub const ALL: [SubnetId; 6] =
        [SubnetId::EncoderX, SubnetId::EncoderV, SubnetId::DecoderX, SubnetId::DecoderV, SubnetId::HnnKin, SubnetId::HnnPot];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SubnetId::EncoderX => "encoder_x",
            SubnetId::EncoderV => "encoder_v",
            SubnetId::DecoderX => "decoder_x",
            SubnetId::DecoderV => "decoder_v",
            SubnetId::HnnKin => "hnn_kin",
            SubnetId::HnnPot => "hnn_pot",
        }
    }
}

/// Hyperparameters that fix every subnet shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Intermediate (PSD) half-dimension.
    pub m: usize,
    /// Latent half-dimension.
    pub k: usize,
    /// Filters of each strided convolution block, encoder order.
    pub conv_filters: Vec<usize>,
    pub ae_widths: Vec<usize>,
    pub ae_activation: Activation,
    pub hnn_widths: Vec<usize>,
    pub hnn_activation: Activation,
}

impl Architecture {
    pub fn for_case(case: Case, m: usize, k: usize) -> Self {
        let (ae, hnn): (&[usize], &[usize]) = match case {
            Case::NonlinearLandau => (&[250, 150, 100, 50, 25], &[96, 48, 48, 48, 24]),
            Case::LinearLandau | Case::TwoStream => (&[150, 100, 50, 25], &[48, 24, 24, 24, 12]),
        };
        Self {
            m,
            k,
            conv_filters: vec![12, 36],
            ae_widths: ae.to_vec(),
            ae_activation: Activation::Elu,
            hnn_widths: hnn.to_vec(),
            hnn_activation: Activation::Softplus,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 {
            return Err(Error::invalid("architecture needs m ≥ 1 and k ≥ 1"));
        }
        if self.conv_filters.iter().chain(&self.ae_widths).chain(&self.hnn_widths).any(|&w| w == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if matches!(self.hnn_activation, Activation::Elu) {
            return Err(Error::invalid("the Hamiltonian network needs a twice continuously differentiable activation"));
        }
        Ok(())
    }

    fn encoder(&self) -> Result<Subnet> {
        let act = self.ae_activation;
        let mut layers = Vec::new();
        let (mut ch, mut len) = (1, self.m);
        for &f in &self.conv_filters {
            let l = LayerSpec::conv(ch, len, f, act)?;
            (ch, len) = (l.out_channels, l.out_len);
            layers.push(l);
        }
        let mut prev = ch * len;
        for &w in &self.ae_widths {
            layers.push(LayerSpec::dense(prev, w, act));
            prev = w;
        }
        layers.push(LayerSpec::dense(prev, self.k, Activation::Linear));
        Subnet::new(layers)
    }

    fn decoder(&self, encoder: &Subnet) -> Result<Subnet> {
        let act = self.ae_activation;
        let convs: Vec<LayerSpec> = encoder.layers().iter().filter(|l| l.kind == LayerKind::Conv1d).copied().collect();
        let flat = convs.last().map_or(self.m, LayerSpec::out_dim);
        let mut layers = Vec::new();
        let mut prev = self.k;
        for &w in self.ae_widths.iter().rev() {
            layers.push(LayerSpec::dense(prev, w, act));
            prev = w;
        }
        let last_dense_act = if convs.is_empty() { Activation::Linear } else { act };
        layers.push(LayerSpec::dense(prev, flat, last_dense_act));
        for (i, c) in convs.iter().enumerate().rev() {
            let a = if i == 0 { Activation::Linear } else { act };
            layers.push(LayerSpec::conv_transpose(c.out_channels, c.out_len, c.in_channels, c.in_len, a)?);
        }
        Subnet::new(layers)
    }

    /// The six subnets in [`SubnetId::ALL`] order.
    pub fn subnets(&self) -> Result<Vec<Subnet>> {
        self.validate()?;
        let enc = self.encoder()?;
        let dec = self.decoder(&enc)?;
        let hnn = Subnet::dense_stack(self.k, &self.hnn_widths, 1, self.hnn_activation)?;
        Ok(vec![enc.clone(), enc, dec.clone(), dec, hnn.clone(), hnn])
    }
}

/// Architecture plus the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    nets: Vec<Subnet>,
    offsets: Vec<usize>,
    pub values: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        let nets = arch.subnets()?;
        let mut offsets = vec![0];
        for n in &nets {
            offsets.push(offsets.last().unwrap() + n.n_params());
        }
        let total = *offsets.last().unwrap();
        Ok(Self { arch, nets, offsets, values: vec![0.0; total] })
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        if values.len() != p.values.len() {
            return Err(Error::DimensionMismatch { context: "network parameters", expected: p.values.len(), actual: values.len() });
        }
        p.values = values;
        Ok(p)
    }

    /// Glorot-uniform weights and zero biases, fully determined by `seed`.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for id in SubnetId::ALL {
            let net = &p.nets[id.index()];
            let base = p.offsets[id.index()];
            let mut off = base;
            for spec in net.layers() {
                let (fan_in, fan_out) = spec.fans();
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for w in &mut p.values[off..off + spec.n_weights()] {
                    *w = a * (2.0 * rng.random::<f64>() - 1.0);
                }
                off += spec.n_params();
            }
        }
        Ok(p)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn subnet(&self, id: SubnetId) -> &Subnet {
        &self.nets[id.index()]
    }

    pub fn range(&self, id: SubnetId) -> std::ops::Range<usize> {
        self.offsets[id.index()]..self.offsets[id.index() + 1]
    }

    pub fn slice(&self, id: SubnetId) -> &[f64] {
        &self.values[self.range(id)]
    }

    pub fn slice_mut(&mut self, id: SubnetId) -> &mut [f64] {
        let r = self.range(id);
        &mut self.values[r]
    }

    pub fn forward(&self, id: SubnetId, x: &[f64]) -> Result<Vec<f64>> {
        self.subnet(id).forward(self.slice(id), x)
    }

    /// `(E₁(x̃), E₂(ṽ))` for a preprocessed intermediate state of length `2m`.
    pub fn encode(&self, ut: &[f64]) -> Result<Vec<f64>> {
        let m = self.arch.m;
        check_len("intermediate state", 2 * m, ut.len())?;
        let mut out = self.forward(SubnetId::EncoderX, &ut[..m])?;
        out.extend(self.forward(SubnetId::EncoderV, &ut[m..])?);
        Ok(out)
    }

    /// `(D₁(x̄), D₂(v̄))` for a latent state of length `2k`.
    pub fn decode(&self, ub: &[f64]) -> Result<Vec<f64>> {
        let k = self.arch.k;
        check_len("latent state", 2 * k, ub.len())?;
        let mut out = self.forward(SubnetId::DecoderX, &ub[..k])?;
        out.extend(self.forward(SubnetId::DecoderV, &ub[k..])?);
        Ok(out)
    }

    /// `H̄(x̄, v̄) = H̄_kin(v̄) + H̄_pot(x̄)`.
    pub fn hnn_value(&self, ub: &[f64]) -> Result<f64> {
        let k = self.arch.k;
        check_len("latent state", 2 * k, ub.len())?;
        let pot = self.forward(SubnetId::HnnPot, &ub[..k])?[0];
        let kin = self.forward(SubnetId::HnnKin, &ub[k..])?[0];
        Ok(kin + pot)
    }

    /// `(∇_x̄ H̄_pot, ∇_v̄ H̄_kin)`.
    pub fn hnn_input_gradient(&self, ub: &[f64]) -> Result<Vec<f64>> {
        let k = self.arch.k;
        check_len("latent state", 2 * k, ub.len())?;
        let (_, mut g) = self.subnet(SubnetId::HnnPot).value_and_gradient(self.slice(SubnetId::HnnPot), &ub[..k])?;
        let (_, gv) = self.subnet(SubnetId::HnnKin).value_and_gradient(self.slice(SubnetId::HnnKin), &ub[k..])?;
        g.extend(gv);
        Ok(g)
    }

    /// The learned reduced dynamics as a separable system for the Verlet integrator.
    pub fn reduced_system(&self) -> LatentHamiltonian<'_> {
        LatentHamiltonian { params: self }
    }
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { context, expected, actual });
    }
    Ok(())
}

/// `H̄` viewed as a separable Hamiltonian on `R^{2k}`.
pub struct LatentHamiltonian<'a> {
    params: &'a NetworkParams,
}

impl SeparableSystem for LatentHamiltonian<'_> {
    fn dim(&self) -> usize {
        self.params.arch.k
    }

    fn grad_potential(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let p = self.params;
        p.subnet(SubnetId::HnnPot).input_gradient_into(p.slice(SubnetId::HnnPot), x, out)
    }

    fn grad_kinetic(&mut self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let p = self.params;
        p.subnet(SubnetId::HnnKin).input_gradient_into(p.slice(SubnetId::HnnKin), v, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_shapes_compose_to_identity() {
        for (case, m) in [(Case::LinearLandau, 121), (Case::NonlinearLandau, 256), (Case::TwoStream, 121), (Case::LinearLandau, 64), (Case::LinearLandau, 12)] {
            let arch = Architecture::for_case(case, m, 3);
            let nets = arch.subnets().unwrap();
            assert_eq!(nets[0].in_dim(), m);
            assert_eq!(nets[0].out_dim(), 3);
            assert_eq!(nets[2].in_dim(), 3);
            assert_eq!(nets[2].out_dim(), m);
            assert_eq!(nets[4].in_dim(), 3);
            assert_eq!(nets[4].out_dim(), 1);
            let p = NetworkParams::init(arch, 1).unwrap();
            let ub = p.encode(&vec![0.1; 2 * m]).unwrap();
            assert_eq!(p.decode(&ub).unwrap().len(), 2 * m);
        }
    }

    #[test]
    fn decoder_mirrors_encoder() {
        let arch = Architecture::for_case(Case::LinearLandau, 121, 4);
        let nets = arch.subnets().unwrap();
        let enc = nets[0].layers();
        let dec = nets[2].layers();
        assert_eq!(enc.len(), dec.len());
        for (e, d) in enc.iter().zip(dec.iter().rev()) {
            assert_eq!((e.in_channels, e.in_len, e.out_channels, e.out_len), (d.out_channels, d.out_len, d.in_channels, d.in_len));
        }
        assert_eq!(dec.last().unwrap().activation, Activation::Linear);
        assert_eq!(enc.last().unwrap().activation, Activation::Linear);
        assert_eq!(enc[0].out_channels, 12);
        assert_eq!(enc[1].out_channels, 36);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let arch = Architecture::for_case(Case::LinearLandau, 64, 3);
        let a = NetworkParams::init(arch.clone(), 5).unwrap();
        let b = NetworkParams::init(arch.clone(), 5).unwrap();
        let c = NetworkParams::init(arch, 6).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn glorot_variance_on_a_large_layer() {
        let arch = Architecture::for_case(Case::NonlinearLandau, 256, 3);
        let p = NetworkParams::init(arch, 11).unwrap();
        let net = p.subnet(SubnetId::EncoderX);
        // First dense layer after the convolutions: 36·27 → 250.
        let l = net.layers().iter().position(|l| l.kind == LayerKind::Dense).unwrap();
        let spec = net.layers()[l];
        let w = &net.layer_params(l, p.slice(SubnetId::EncoderX))[..spec.n_weights()];
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let target = 2.0 / (spec.in_len + spec.out_len) as f64;
        assert!((var / target - 1.0).abs() < 0.2, "{var} vs {target}");
    }

    #[test]
    fn zero_networks_are_inert() {
        let p = NetworkParams::zeros(Architecture::for_case(Case::LinearLandau, 12, 2)).unwrap();
        let ub = [0.3, -1.0, 2.0, 0.1];
        assert_eq!(p.hnn_value(&ub).unwrap(), 0.0);
        assert!(p.hnn_input_gradient(&ub).unwrap().iter().all(|&g| g == 0.0));
        assert!(p.encode(&[1.0; 24]).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn hnn_input_gradient_matches_finite_differences() {
        let arch = Architecture { hnn_widths: vec![8, 6], ..Architecture::for_case(Case::LinearLandau, 12, 4) };
        let p = NetworkParams::init(arch, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let ub: Vec<f64> = (0..8).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let g = p.hnn_input_gradient(&ub).unwrap();
            for i in 0..8 {
                let h = 1e-6;
                let mut a = ub.clone();
                a[i] += h;
                let mut b = ub.clone();
                b[i] -= h;
                let fd = (p.hnn_value(&a).unwrap() - p.hnn_value(&b).unwrap()) / (2.0 * h);
                assert!((g[i] - fd).abs() <= 1e-6 * g[i].abs().max(1e-3), "{} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn rejects_non_smooth_hnn_activation() {
        let arch = Architecture { hnn_activation: Activation::Elu, ..Architecture::for_case(Case::LinearLandau, 12, 2) };
        assert!(NetworkParams::zeros(arch).is_err());
    }
}
