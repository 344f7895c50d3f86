use std::path::Path;
use std::process::Command;

const MINI: &str = r#"
case = "linear-landau"

[scenario]
n_particles = 600
n_x = 16
t_final = 10.0
dt = 0.05

[parameters]
train_grid = 2
test = [[0.045, 0.9]]

[output]
snapshot_stride = 5
diagnostic_stride = 1

[psd]
m = 6

[network]
k = 1
conv_filters = [2]
ae_widths = [4]
hnn_widths = [4]

[training]
watch = 2
batch_size = 8
stage1_max_steps = 5
stage2_steps = 10
checkpoint_every = 8

[evaluation]
rate_windows = [[0.0, 10.0]]

[histogram]
bins_x = 8
bins_v = 8

[bench]
n_particles = [200, 2000]
steps = 5
repeats = 1
"#;

fn hamrom(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hamrom"))
        .arg("--config")
        .arg(dir.join("mini.toml"))
        .arg("--out-dir")
        .arg(dir.join("out"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = hamrom(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("mini.toml"), config).unwrap();
    dir
}

fn single_error_line(out: &std::process::Output) -> String {
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr).to_string();
    let lines: Vec<&str> = stderr.lines().filter(|l| l.starts_with("error[")).collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    lines[0].to_string()
}

#[test]
fn negative_dt_is_rejected_naming_the_constraint() {
    let dir = workspace(&MINI.replace("dt = 0.05", "dt = -0.05"));
    let line = single_error_line(&hamrom(dir.path(), &["simulate"]));
    assert!(line.starts_with("error[config]:"), "{line}");
    assert!(line.contains("dt > 0"), "{line}");
}

#[test]
fn unknown_key_is_rejected_naming_the_key() {
    let dir = workspace(&MINI.replace("[psd]\nm = 6", "[psd]\nm = 6\nrank = 2"));
    let line = single_error_line(&hamrom(dir.path(), &["simulate"]));
    assert!(line.starts_with("error[config]:") && line.contains("rank"), "{line}");
}

#[test]
fn missing_inputs_name_the_producing_phase() {
    let dir = workspace(MINI);
    let line = single_error_line(&hamrom(dir.path(), &["build-psd"]));
    assert!(line.starts_with("error[missing-input]:") && line.contains("simulate"), "{line}");
}

#[test]
fn corrupted_snapshot_reports_a_format_error() {
    let dir = workspace(MINI);
    ok(dir.path(), &["simulate", "--set", "test"]);
    let file = dir.path().join("out/fom/test_000.vpsn");
    let mut bytes = std::fs::read(&file).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&file, bytes).unwrap();
    let line = single_error_line(&hamrom(dir.path(), &["hist", "--input", "fom/test_000.vpsn"]));
    assert!(line.starts_with("error[format]:") && line.contains("offset"), "{line}");
}

#[test]
fn reference_against_itself_has_zero_error() {
    let dir = workspace(MINI);
    ok(dir.path(), &["simulate", "--set", "test"]);
    let out = dir.path().join("out");
    std::fs::create_dir_all(out.join("rom")).unwrap();
    std::fs::copy(out.join("fom/test_000.vpsn"), out.join("rom/test_000.vpsn")).unwrap();
    ok(dir.path(), &["evaluate", "--set", "test"]);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest_evaluate.json")).unwrap()).unwrap();
    assert_eq!(manifest["summary"]["err_x_mu"][0].as_f64(), Some(0.0));
    assert_eq!(manifest["summary"]["err_v_mu"][0].as_f64(), Some(0.0));
}

#[test]
fn full_miniature_pipeline() {
    let dir = workspace(MINI);
    for args in [
        &["simulate", "--set", "train"][..],
        &["simulate", "--set", "test"],
        &["build-psd"],
        &["project"],
        &["train"],
        &["predict", "--set", "test"],
        &["evaluate", "--set", "test"],
        &["rates", "--set", "test", "--source", "fom"],
        &["hist", "--input", "rom/test_000.vpsn"],
        &["bench"],
    ] {
        ok(dir.path(), args);
    }
    let out = dir.path().join("out");
    for f in [
        "fom/train_003.vpsn",
        "fom/test_000_diag.csv",
        "basis.psdb",
        "reduced.vpsn",
        "weights.aehn",
        "training.csv",
        "checkpoints/stage2_step0000008.aehn",
        "rom/test_000.vpsn",
        "errors_test.csv",
        "rates_fom_test.csv",
        "hist_test_000_40.csv",
        "bench.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }

    let psd: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest_build-psd.json")).unwrap()).unwrap();
    assert!(psd["summary"]["symplectic_residual"].as_f64().unwrap() <= 1e-10);
    assert!(psd["summary"]["inverse_residual"].as_f64().unwrap() <= 1e-10);
    assert!(psd["rate_convention"].as_str().unwrap().contains("half-l2-norm"));

    let train: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest_train.json")).unwrap()).unwrap();
    let outputs = train["outputs"].as_array().unwrap();
    let weights = outputs.iter().find(|r| r["path"] == "weights.aehn").unwrap();
    assert_eq!(weights["sha256"].as_str().unwrap(), hamrom::io::file_digest(&out.join("weights.aehn")).unwrap());
    assert_eq!(train["inputs"].as_array().unwrap().len(), 2);

    let (set, _) = hamrom::io::read_snapshots(&out.join("rom/test_000.vpsn")).unwrap();
    assert_eq!(set.len(), 41);
    assert_eq!(set.n(), 600);
    let (reduced, _) = hamrom::io::read_snapshots(&out.join("reduced.vpsn")).unwrap();
    assert_eq!((reduced.n(), reduced.len()), (6, 4 * 201));
    let report = std::fs::read_to_string(out.join("training.csv")).unwrap();
    assert!(report.starts_with("step,stage,lr,s,ae,pred_reduced,stability,pred,total"));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let runs: Vec<tempfile::TempDir> = (0..2)
        .map(|_| {
            let dir = workspace(MINI);
            for args in [&["simulate"][..], &["build-psd"], &["project"], &["train"]] {
                let mut a = args.to_vec();
                a.push("--deterministic");
                ok(dir.path(), &a);
            }
            dir
        })
        .collect();
    for f in ["fom/train_000.vpsn", "fom/train_003.vpsn", "basis.psdb", "reduced.vpsn", "weights.aehn", "training.csv"] {
        let a = std::fs::read(runs[0].path().join("out").join(f)).unwrap();
        let b = std::fs::read(runs[1].path().join("out").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn seed_flag_changes_weights_and_is_recorded() {
    let dir = workspace(MINI);
    for args in [&["simulate"][..], &["build-psd"], &["project"], &["train", "--seed", "7"]] {
        ok(dir.path(), args);
    }
    let out = dir.path().join("out");
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest_train.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["training"]["seed"].as_u64(), Some(7));
    assert_eq!(m["config"]["network"]["init_seed"].as_u64(), Some(7));
    let first = std::fs::read(out.join("weights.aehn")).unwrap();
    ok(dir.path(), &["train", "--seed", "8"]);
    assert_ne!(first, std::fs::read(out.join("weights.aehn")).unwrap());
}
