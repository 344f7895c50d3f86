//! Training-pipeline gates: the synthetic linear system and the desk-scale Landau model.

use std::path::Path;

use clap::Parser;
use hamrom::init::quiet_start;
use hamrom::io;
use hamrom::neural::{Activation, Architecture, NetworkParams};
use hamrom::psd::SymplecticBasis;
use hamrom::rom::RomPipeline;
use hamrom::training::{batch_losses, train, ReducedDataset, Scaling, TrainingConfig, WatchMilestone};
use hamrom::ExecMode;
use hamrom_cli::Cli;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fom::BASIS_TOLERANCE;
use crate::Verdict;

const M: usize = 12;
const K: usize = 2;
const DT: f64 = 0.01;
const STEPS: usize = 1000;
/// `H̄(x̄, v̄) = a·x̄ + b·v̄`, so `x̄' = b` and `v̄' = −a`.
const A: [f64; K] = [0.3, -0.2];
const B: [f64; K] = [0.25, 0.15];

/// Embedding column `j` at coordinate `i`. Valid stride-3 convolutions over 12 inputs only
/// read the first 9, so the embedding vanishes on the last 3.
fn embedding(i: usize, j: usize) -> f64 {
    if i >= 9 {
        return 0.0;
    }
    0.5 * ((i as f64 + 0.5) * (j as f64 + 1.0) * std::f64::consts::PI / 9.0).cos() + 0.1 * j as f64
}

fn embed(xb: &[f64], vb: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; 2 * M];
    for i in 0..M {
        for j in 0..K {
            u[i] += embedding(i, j) * xb[j];
            u[M + i] += embedding(i, j) * vb[j];
        }
    }
    u
}

/// Exact flow sampled at every step, one `2M` row per state.
fn exact_trajectory(x0: [f64; K], v0: [f64; K]) -> Vec<f64> {
    (0..=STEPS)
        .flat_map(|n| {
            let t = n as f64 * DT;
            let x: Vec<f64> = (0..K).map(|j| x0[j] + B[j] * t).collect();
            let v: Vec<f64> = (0..K).map(|j| v0[j] - A[j] * t).collect();
            embed(&x, &v)
        })
        .collect()
}

fn relative_trajectory_error(test: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = test.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = reference.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

pub fn criterion_7() -> anyhow::Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut data = ReducedDataset::new(Scaling::identity(M));
    for _ in 0..8 {
        let ic: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        data.push_raw(0.0, 1.0, &exact_trajectory([ic[0], ic[1]], [ic[2], ic[3]]))?;
    }
    let arch = Architecture {
        m: M,
        k: K,
        conv_filters: vec![4, 8],
        ae_widths: vec![16],
        ae_activation: Activation::Linear,
        hnn_widths: vec![8],
        hnn_activation: Activation::Linear,
    };
    let cfg = TrainingConfig {
        dt: DT,
        watch: 4,
        watch_ramp: vec![WatchMilestone { step: 20_000, s: 16 }, WatchMilestone { step: 40_000, s: 32 }],
        batch_size: 32,
        stage2_steps: 60_000,
        plateau_window: 5_000,
        seed: 7,
        ..TrainingConfig::default()
    };
    let outcome = train(&data, NetworkParams::init(arch, 1)?, &cfg, ExecMode::Sequential, &mut ())?;

    // Final loss over a fixed evaluation batch at the last watch duration.
    let s = cfg.max_watch();
    let idx = data.sample_pairs(s, 1024, &mut ChaCha8Rng::seed_from_u64(70))?;
    let pairs: Vec<(&[f64], &[f64])> = idx.iter().map(|&p| data.pair(p, s)).collect();
    let (losses, _) = batch_losses(&outcome.params, &pairs, s, DT, &cfg.weights, true, false, ExecMode::Sequential, 64, 0)?;
    let total = losses.total(&cfg.weights);

    let basis = SymplecticBasis::new(DMatrix::identity(M, M), DMatrix::zeros(M, M), vec![1.0; M])?;
    let rom = RomPipeline::new(basis, Scaling::identity(M), outcome.params, DT)?;
    let mut worst: f64 = 0.0;
    for (x0, v0) in [([0.3, -0.4], [0.5, 0.2]), ([-0.6, 0.1], [-0.2, 0.7])] {
        let reference = exact_trajectory(x0, v0);
        let (set, _) = rom.predict_trajectory(&reference[..2 * M], STEPS, 1)?;
        worst = worst.max(relative_trajectory_error(set.data(), &reference));
    }
    Ok(Verdict::new(
        total < 1e-6 && worst <= 1e-4,
        format!(
            "stage 2 from step {:?}, total loss {total:.3e} (limit 1e-6), worst held-out trajectory error over {STEPS} steps {worst:.3e} (limit 1e-4)",
            outcome.report.transition_step
        ),
    ))
}

/// Stage-2 steps of the desk-scale run; `HAMROM_DESK_STEPS` overrides.
fn desk_steps() -> usize {
    std::env::var("HAMROM_DESK_STEPS").ok().and_then(|v| v.parse().ok()).unwrap_or(8_000)
}

fn desk_config(steps: usize) -> String {
    format!(
        r#"
case = "linear-landau"

[scenario]
n_particles = 10000

[parameters]
train_grid = 3
test = [[0.0375, 0.85], [0.0375, 0.95], [0.0525, 0.85], [0.0525, 0.95]]

[output]
snapshot_stride = 40
diagnostic_stride = 10

[psd]
m = 64

[network]
k = 3

[training]
watch = 8
batch_size = 32
stage1_max_steps = 3000
stage2_steps = {steps}
"#,
    )
}

fn cli(dir: &Path, args: &[&str]) -> anyhow::Result<()> {
    let mut argv = vec!["hamrom".to_string(), "--config".into(), dir.join("desk.toml").display().to_string()];
    argv.extend(["--out-dir".to_string(), dir.join("out").display().to_string()]);
    argv.extend(args.iter().map(|s| s.to_string()));
    hamrom_cli::run(&Cli::try_parse_from(argv)?)?;
    Ok(())
}

fn manifest(dir: &Path, command: &str) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::from_slice(&std::fs::read(dir.join("out").join(format!("manifest_{command}.json")))?)?)
}

pub fn criterion_8() -> anyhow::Result<Verdict> {
    let tmp = tempfile::tempdir()?;
    let dir = tmp.path();
    std::fs::write(dir.join("desk.toml"), desk_config(desk_steps()))?;
    for args in [
        &["simulate", "--set", "train"][..],
        &["simulate", "--set", "test"],
        &["build-psd"],
        &["project"],
        &["train"],
        &["predict", "--set", "test"],
        &["evaluate", "--set", "test"],
    ] {
        cli(dir, args)?;
    }
    let psd = manifest(dir, "build-psd")?;
    let residual = psd["summary"]["symplectic_residual"].as_f64().unwrap_or(f64::NAN).max(psd["summary"]["inverse_residual"].as_f64().unwrap_or(f64::NAN));
    let eval = manifest(dir, "evaluate")?;
    let ex: Vec<f64> = serde_json::from_value(eval["summary"]["err_x_mu"].clone())?;
    let ev: Vec<f64> = serde_json::from_value(eval["summary"]["err_v_mu"].clone())?;

    // Spread of the reduced Hamiltonian over the encoded training initial conditions.
    let cfg = hamrom_cli::Config::load(&dir.join("desk.toml"))?;
    let out = dir.join("out");
    let basis = io::read_basis(&out.join("basis.psdb"))?;
    let params = io::read_weights(&out.join("weights.aehn"))?;
    let scaling = Scaling::from_singular_values(basis.singular_values())?;
    let rom = RomPipeline::new(basis, scaling, params, cfg.scenario.dt)?;
    let mut h0 = Vec::new();
    for &mu in &cfg.parameters.train {
        let ub = rom.encode_full(&quiet_start(&cfg.scenario_spec(mu))?.stacked(), 0.0)?;
        h0.push(rom.params().hnn_value(&ub.stacked())?);
    }
    let spread = h0.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - h0.iter().cloned().fold(f64::INFINITY, f64::min);
    let predict = manifest(dir, "predict")?;
    let drifts: Vec<f64> = predict["summary"]["trajectories"]
        .as_array()
        .map(|a| a.iter().map(|t| t["latent_energy_drift"].as_f64().unwrap_or(f64::NAN)).collect())
        .unwrap_or_default();

    let passing: Vec<usize> = (0..ex.len()).filter(|&i| ex[i] <= 5e-2 && ev[i] <= 1e-1 && drifts[i] <= 0.1 * spread).collect();
    let pass = !passing.is_empty() && residual <= BASIS_TOLERANCE;
    let fmt = |v: &[f64]| v.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" ");
    Ok(Verdict::new(
        pass,
        format!(
            "{} stage-2 steps; held-out err_X {} (limit 5e-2), err_V {} (limit 1e-1), latent energy drift {} vs 10% of spread {:.3e}; basis residual {residual:.1e}; passing parameters {passing:?}",
            desk_steps(),
            fmt(&ex),
            fmt(&ev),
            fmt(&drifts),
            0.1 * spread
        ),
    ))
}
