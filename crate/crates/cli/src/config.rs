//! Run configuration: one TOML file drives every phase.
//!
//! Unset scenario values fall back to the defaults of the selected case; the
//! resolved configuration (every value concrete) is what the manifest records.

use std::path::Path;

use anyhow::Context;
use hamrom::init::{Case, ScenarioSpec};
use hamrom::neural::{Activation, Architecture};
use hamrom::psd::SvdOptions;
use hamrom::training::TrainingConfig;
use serde::{Deserialize, Serialize};

/// Configuration rejected during validation; the message names the key and the violated constraint.
#[derive(Debug, thiserror::Error)]
#[error("{key}: {constraint}")]
pub struct ConfigError {
    pub key: String,
    pub constraint: String,
}

fn reject(key: &str, constraint: impl Into<String>) -> anyhow::Error {
    ConfigError { key: key.to_string(), constraint: constraint.into() }.into()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub k: Option<f64>,
    pub n_particles: Option<usize>,
    pub n_x: Option<usize>,
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametersFile {
    pub alpha_range: Option<[f64; 2]>,
    pub sigma_range: Option<[f64; 2]>,
    /// Points per axis of the training grid (`P = n²`).
    pub train_grid: Option<usize>,
    /// Points per axis of the test grid; ignored when `test` lists explicit parameters.
    pub test_grid: Option<usize>,
    pub test: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Steps between stored full snapshots of simulated and predicted trajectories.
    pub snapshot_stride: usize,
    /// Steps between field-energy and Hamiltonian samples.
    pub diagnostic_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { snapshot_stride: 100, diagnostic_stride: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsdConfig {
    pub m: usize,
    pub oversample: usize,
    pub power_iterations: usize,
    pub seed: u64,
    pub force_randomized: bool,
}

impl Default for PsdConfig {
    fn default() -> Self {
        let svd = SvdOptions::default();
        Self { m: 121, oversample: svd.oversample, power_iterations: svd.power_iterations, seed: svd.seed, force_randomized: false }
    }
}

impl PsdConfig {
    pub fn svd_options(&self) -> SvdOptions {
        SvdOptions {
            oversample: self.oversample,
            power_iterations: self.power_iterations,
            seed: self.seed,
            force_randomized: self.force_randomized,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub k: Option<usize>,
    pub conv_filters: Option<Vec<usize>>,
    pub ae_widths: Option<Vec<usize>>,
    pub hnn_widths: Option<Vec<usize>>,
    pub ae_activation: Option<Activation>,
    pub hnn_activation: Option<Activation>,
    pub init_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct EvaluationConfig {
    /// Rate-fitting windows; empty selects the case defaults.
    pub rate_windows: Vec<[f64; 2]>,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramConfig {
    pub bins_x: usize,
    pub bins_v: usize,
    pub v_range: [f64; 2],
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self { bins_x: 64, bins_v: 64, v_range: [-6.0, 6.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    /// Particle counts of the timed full-order runs.
    pub n_particles: Vec<usize>,
    /// Time steps per timed run.
    pub steps: usize,
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { n_particles: vec![10_000, 70_000, 100_000], steps: 200, repeats: 3 }
    }
}

/// The configuration file as written by the user.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    case: Case,
    #[serde(default)]
    scenario: ScenarioFile,
    #[serde(default)]
    parameters: ParametersFile,
    #[serde(default)]
    output: OutputConfig,
    #[serde(default)]
    psd: PsdConfig,
    #[serde(default)]
    network: NetworkFile,
    #[serde(default)]
    training: toml::Table,
    #[serde(default)]
    evaluation: EvaluationConfig,
    #[serde(default)]
    histogram: HistogramConfig,
    #[serde(default)]
    bench: BenchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub k: f64,
    pub n_particles: usize,
    pub n_x: usize,
    pub t_final: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    pub alpha_range: [f64; 2],
    pub sigma_range: [f64; 2],
    pub train: Vec<[f64; 2]>,
    pub test: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub architecture: Architecture,
    pub init_seed: u64,
}

/// Fully resolved and validated configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub case: Case,
    pub scenario: Scenario,
    pub parameters: Parameters,
    pub output: OutputConfig,
    pub psd: PsdConfig,
    pub network: Network,
    pub training: TrainingConfig,
    pub evaluation: EvaluationConfig,
    pub histogram: HistogramConfig,
    pub bench: BenchConfig,
}

/// Parameter set selected on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ParamSet {
    Train,
    Test,
}

impl ParamSet {
    pub fn name(self) -> &'static str {
        match self {
            ParamSet::Train => "train",
            ParamSet::Test => "test",
        }
    }
}

/// `n` equispaced values over `[lo, hi]`, endpoints included; a single value sits at the midpoint.
pub fn linspace(range: [f64; 2], n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (range[0] + range[1])],
        _ => (0..n).map(|i| range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Tensor grid, α-major.
pub fn tensor_grid(alpha: [f64; 2], sigma: [f64; 2], n: usize) -> Vec<[f64; 2]> {
    let a = linspace(alpha, n);
    let s = linspace(sigma, n);
    a.iter().flat_map(|&x| s.iter().map(move |&y| [x, y])).collect()
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let file: ConfigFile = toml::from_str(text)?;
        Self::resolve(file)
    }

    fn resolve(file: ConfigFile) -> anyhow::Result<Self> {
        let d = file.case.defaults();
        let s = &file.scenario;
        let scenario = Scenario {
            k: s.k.unwrap_or(d.k),
            n_particles: s.n_particles.unwrap_or(d.n_particles),
            n_x: s.n_x.unwrap_or(d.n_x),
            t_final: s.t_final.unwrap_or(d.t_final),
            dt: s.dt.unwrap_or(d.dt),
        };
        let p = &file.parameters;
        let alpha_range = p.alpha_range.unwrap_or(d.alpha_range);
        let sigma_range = p.sigma_range.unwrap_or(d.sigma_range);
        let train_grid = p.train_grid.unwrap_or((d.n_train as f64).sqrt().round() as usize);
        let test = match &p.test {
            Some(list) => list.clone(),
            None => tensor_grid(alpha_range, sigma_range, p.test_grid.unwrap_or(20)),
        };
        let parameters = Parameters { alpha_range, sigma_range, train: tensor_grid(alpha_range, sigma_range, train_grid), test };

        let n = &file.network;
        let mut architecture = Architecture::for_case(file.case, file.psd.m, n.k.unwrap_or(3));
        if let Some(v) = &n.conv_filters {
            architecture.conv_filters = v.clone();
        }
        if let Some(v) = &n.ae_widths {
            architecture.ae_widths = v.clone();
        }
        if let Some(v) = &n.hnn_widths {
            architecture.hnn_widths = v.clone();
        }
        if let Some(a) = n.ae_activation {
            architecture.ae_activation = a;
        }
        if let Some(a) = n.hnn_activation {
            architecture.hnn_activation = a;
        }
        let network = Network { architecture, init_seed: n.init_seed.unwrap_or(0) };

        if file.training.contains_key("dt") {
            return Err(reject("training.dt", "derived from scenario.dt; remove the key"));
        }
        let mut training: TrainingConfig = file.training.clone().try_into().context("training")?;
        training.dt = scenario.dt;

        let cfg = Self {
            case: file.case,
            scenario,
            parameters,
            output: file.output,
            psd: file.psd,
            network,
            training,
            evaluation: file.evaluation,
            histogram: file.histogram,
            bench: file.bench,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let s = &self.scenario;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(reject("scenario.dt", "dt > 0"));
        }
        if !(s.t_final > 0.0 && s.t_final.is_finite()) {
            return Err(reject("scenario.t_final", "t_final > 0"));
        }
        if !(s.k > 0.0 && s.k.is_finite()) {
            return Err(reject("scenario.k", "k > 0"));
        }
        if s.n_particles == 0 {
            return Err(reject("scenario.n_particles", "n_particles ≥ 1"));
        }
        if s.n_x < 3 {
            return Err(reject("scenario.n_x", "n_x ≥ 3"));
        }
        let r = s.t_final / s.dt;
        if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
            return Err(reject("scenario.t_final", "t_final / dt must be an integer"));
        }
        let p = &self.parameters;
        for (key, range) in [("parameters.alpha_range", p.alpha_range), ("parameters.sigma_range", p.sigma_range)] {
            if !(range[0] > 0.0 && range[0] <= range[1] && range[1].is_finite()) {
                return Err(reject(key, "0 < lower ≤ upper"));
            }
        }
        if p.alpha_range[1] >= 1.0 {
            return Err(reject("parameters.alpha_range", "alpha < 1"));
        }
        if p.train.is_empty() {
            return Err(reject("parameters.train_grid", "train_grid ≥ 1"));
        }
        if p.test.iter().any(|mu| !(mu[0] > 0.0 && mu[0] < 1.0 && mu[1] > 0.0)) {
            return Err(reject("parameters.test", "every entry needs 0 < alpha < 1 and sigma > 0"));
        }
        if self.output.snapshot_stride == 0 {
            return Err(reject("output.snapshot_stride", "snapshot_stride ≥ 1"));
        }
        if self.output.diagnostic_stride == 0 {
            return Err(reject("output.diagnostic_stride", "diagnostic_stride ≥ 1"));
        }
        if self.psd.m == 0 || self.psd.m > s.n_particles {
            return Err(reject("psd.m", "1 ≤ m ≤ n_particles"));
        }
        self.network.architecture.validate().map_err(|e| reject("network", e.to_string()))?;
        self.network.architecture.subnets().map_err(|e| reject("network", e.to_string()))?;
        self.training.validate().map_err(|e| reject("training", e.to_string()))?;
        for w in &self.evaluation.rate_windows {
            if !(w[0] >= 0.0 && w[0] < w[1]) {
                return Err(reject("evaluation.rate_windows", "0 ≤ t0 < t1"));
            }
        }
        let h = &self.histogram;
        if h.bins_x < 2 || h.bins_v < 2 {
            return Err(reject("histogram", "bins_x ≥ 2 and bins_v ≥ 2"));
        }
        if !(h.v_range[0] < h.v_range[1]) {
            return Err(reject("histogram.v_range", "lower < upper"));
        }
        if self.bench.n_particles.is_empty() || self.bench.n_particles.contains(&0) {
            return Err(reject("bench.n_particles", "non-empty list of positive counts"));
        }
        if self.bench.steps == 0 || self.bench.repeats == 0 {
            return Err(reject("bench", "steps ≥ 1 and repeats ≥ 1"));
        }
        Ok(())
    }

    pub fn params(&self, set: ParamSet) -> &[[f64; 2]] {
        match set {
            ParamSet::Train => &self.parameters.train,
            ParamSet::Test => &self.parameters.test,
        }
    }

    pub fn scenario_spec(&self, mu: [f64; 2]) -> ScenarioSpec {
        ScenarioSpec {
            case: self.case,
            alpha: mu[0],
            sigma: mu[1],
            k: self.scenario.k,
            n_particles: self.scenario.n_particles,
            t_final: self.scenario.t_final,
            dt: self.scenario.dt,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.scenario.t_final / self.scenario.dt).round() as usize
    }

    /// Rate windows in effect: configured ones, else the case defaults.
    pub fn rate_windows(&self) -> Vec<[f64; 2]> {
        if !self.evaluation.rate_windows.is_empty() {
            return self.evaluation.rate_windows.clone();
        }
        match self.case {
            Case::LinearLandau => vec![[2.0, 18.0]],
            Case::NonlinearLandau => vec![[0.0, 10.0], [20.0, 40.0]],
            Case::TwoStream => vec![[0.0, self.scenario.t_final]],
        }
        .into_iter()
        .map(|[a, b]| [a, b.min(self.scenario.t_final)])
        .filter(|w| w[0] < w[1])
        .collect()
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}
