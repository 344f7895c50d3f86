//! Cost scaling of the reduced model and reproducibility of the pipeline artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Parser;
use hamrom::neural::NetworkParams;
use hamrom::ExecMode;
use hamrom_cli::commands::bench_table;
use hamrom_cli::{Cli, Config};

use crate::Verdict;

const BENCH: &str = r#"
case = "linear-landau"

[psd]
m = 64

[network]
k = 3

[bench]
n_particles = [10000, 100000]
steps = 2000
repeats = 5
"#;

pub fn criterion_9() -> anyhow::Result<Verdict> {
    let cfg = Config::parse(BENCH)?;
    let params = NetworkParams::init(cfg.network.architecture.clone(), cfg.network.init_seed)?;
    let table = bench_table(&cfg, &params, ExecMode::Sequential)?;
    let (small, large) = (&table.rows[0], &table.rows[1]);
    let variation = (large.rom_step - small.rom_step).abs() / small.rom_step;
    Ok(Verdict::new(
        variation < 0.25 && small.speedup > 1.0,
        format!(
            "latent step {:.3e} s at N = {} and {:.3e} s at N = {}, variation {:.1}% (limit 25%); speedup at N = {} is {:.1} (must exceed 1)",
            small.rom_step,
            small.n_particles,
            large.rom_step,
            large.n_particles,
            100.0 * variation,
            small.n_particles,
            small.speedup
        ),
    ))
}

const SMALL: &str = r#"
case = "linear-landau"

[scenario]
n_particles = 2000
n_x = 32
t_final = 10.0
dt = 0.025

[parameters]
train_grid = 2

[output]
snapshot_stride = 10
diagnostic_stride = 5

[psd]
m = 12

[network]
k = 2

[training]
watch = 4
batch_size = 16
stage1_max_steps = 50
stage2_steps = 100
"#;

fn artifacts(root: &Path) -> anyhow::Result<BTreeMap<PathBuf, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("manifest_")) {
                // Manifests carry wall times; everything else must match.
                out.insert(path.strip_prefix(root)?.to_path_buf(), std::fs::read(&path)?);
            }
        }
    }
    Ok(out)
}

fn deterministic_run(dir: &Path) -> anyhow::Result<BTreeMap<PathBuf, Vec<u8>>> {
    std::fs::write(dir.join("small.toml"), SMALL)?;
    for command in ["simulate", "build-psd", "project", "train"] {
        let argv = [
            "hamrom",
            "--config",
            &dir.join("small.toml").display().to_string(),
            "--out-dir",
            &dir.join("out").display().to_string(),
            "--deterministic",
            command,
        ]
        .map(String::from);
        hamrom_cli::run(&Cli::try_parse_from(argv)?)?;
    }
    artifacts(&dir.join("out"))
}

pub fn criterion_10() -> anyhow::Result<Verdict> {
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    let first = deterministic_run(a.path())?;
    let second = deterministic_run(b.path())?;
    let differing: Vec<String> = first
        .keys()
        .chain(second.keys())
        .filter(|k| first.get(*k) != second.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let kinds = ["vpsn", "psdb", "aehn"].map(|ext| first.keys().filter(|k| k.extension().is_some_and(|e| e == ext)).count());
    Ok(Verdict::new(
        differing.is_empty() && kinds.iter().all(|&c| c > 0),
        format!(
            "{} artifacts compared ({} snapshot, {} basis, {} weight files); differing: {:?}",
            first.len(),
            kinds[0],
            kinds[1],
            kinds[2],
            differing
        ),
    ))
}
