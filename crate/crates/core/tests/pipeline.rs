use hamrom::fom::{run_fom, FomOptions};
use hamrom::init::{Case, ScenarioSpec};
use hamrom::io;
use hamrom::neural::{Architecture, NetworkParams};
use hamrom::psd::{SnapshotSet, SvdOptions, SymplecticBasis};
use hamrom::rom::RomPipeline;
use hamrom::training::{train, ReducedDataset, Scaling, TrainingConfig};
use hamrom::ExecMode;

fn spec(alpha: f64, sigma: f64) -> ScenarioSpec {
    ScenarioSpec { n_particles: 1500, t_final: 2.0, dt: 0.05, ..ScenarioSpec::new(Case::LinearLandau, alpha, sigma) }
}

fn options(mode: ExecMode, trajectory: usize) -> FomOptions {
    FomOptions { mode, snapshot_stride: Some(4), trajectory, ..FomOptions::new(16) }
}

#[test]
fn parallel_and_sequential_runs_agree_bitwise() {
    let s = spec(0.05, 0.9);
    let a = run_fom(&s, &options(ExecMode::Sequential, 0), None).unwrap();
    let b = run_fom(&s, &options(ExecMode::Parallel, 0), None).unwrap();
    assert_eq!(a.final_state, b.final_state);
    assert_eq!(a.hamiltonian, b.hamiltonian);
}

#[test]
fn offline_to_online_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut all = SnapshotSet::new(1500, 4);
    let mus = [(0.04, 0.85), (0.05, 0.95)];
    for (i, &(a, s)) in mus.iter().enumerate() {
        all.extend(run_fom(&spec(a, s), &options(ExecMode::Sequential, i), None).unwrap().snapshots.as_ref().unwrap()).unwrap();
    }
    let basis = SymplecticBasis::build(&all, 6, &SvdOptions::default()).unwrap();
    assert!(basis.symplectic_residual() <= 1e-10 && basis.inverse_residual() <= 1e-10);
    io::write_basis(&dir.path().join("b.psdb"), &basis).unwrap();
    let basis = io::read_basis(&dir.path().join("b.psdb")).unwrap();

    let mut reduced = SnapshotSet::new(6, 1);
    for (i, &(a, s)) in mus.iter().enumerate() {
        let run = run_fom(&spec(a, s), &options(ExecMode::Sequential, i), Some(&basis)).unwrap();
        let rows = run.projected.unwrap();
        assert_eq!(rows.len(), 12 * 41);
        let meta = (0..41).map(|step| hamrom::psd::SnapshotMeta { trajectory: i, alpha: a, sigma: s, step }).collect();
        reduced.extend(&SnapshotSet::from_columns(6, 1, rows, meta).unwrap()).unwrap();
    }
    let scaling = Scaling::from_singular_values(basis.singular_values()).unwrap();
    let data = ReducedDataset::from_snapshots(&reduced, scaling.clone()).unwrap();
    assert_eq!(data.trajectories().len(), 2);

    let arch = Architecture { conv_filters: vec![2], ae_widths: vec![4], hnn_widths: vec![4], ..Architecture::for_case(Case::LinearLandau, 6, 1) };
    let cfg = TrainingConfig { dt: 0.05, watch: 2, batch_size: 8, stage1_max_steps: 20, stage2_steps: 20, ..TrainingConfig::default() };
    let outcome = train(&data, NetworkParams::init(arch, 3).unwrap(), &cfg, ExecMode::Sequential, &mut ()).unwrap();
    io::write_weights(&dir.path().join("w.aehn"), &outcome.params).unwrap();
    let params = io::read_weights(&dir.path().join("w.aehn")).unwrap();
    assert_eq!(params.values, outcome.params.values);

    let rom = RomPipeline::new(basis, scaling, params, 0.05).unwrap();
    let u0 = hamrom::init::quiet_start(&spec(0.045, 0.9)).unwrap().stacked();
    let (set, latent) = rom.predict_trajectory(&u0, 40, 10).unwrap();
    assert_eq!((set.n(), set.len()), (1500, 5));
    assert!(set.data().iter().all(|v| v.is_finite()));
    assert_eq!(latent.steps, vec![0, 10, 20, 30, 40]);
}
