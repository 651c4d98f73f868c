use std::fs;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tdba_core::channel::{angle_grid, PathParams};
use tdba_core::estimator::{m_plus_check, BeamSelection};
use tdba_core::harness::{
    csv_body, dump_batch, run_experiment, run_sweep, ExperimentConfig, ExperimentKind, PathSpec, Scenario, Scheme,
    Sweep, SweepVariable,
};
use tdba_core::metrics::rate_bounds;
use tdba_core::{Error, PowerConfig, StreamSeparation, SystemConfig};

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.system.bs_antennas = 8;
    c.system.ue_antennas = 8;
    c.kappa_u = 2;
    c.kappa_v = 2;
    c.beacon_slots = 12;
    c.sequences_per_slot = Some(8);
    c.trials = 12;
    c
}

#[test]
fn noiseless_on_grid_los_is_found() {
    let mut c = small_config();
    c.snr_bbf_db = 80.0;
    c.paths = vec![PathSpec {
        gamma: 1.0,
        eta: None,
        aoa_rad: Some(angle_grid(8)[5]),
        aod_rad: Some(angle_grid(8)[2]),
        delay_s: 0.0,
        rel_speed_mps: 0.0,
        angular_spread_rad: 0.0,
        subpaths: 1,
    }];
    c.beacon_slots = 30;
    let s = Scenario::new(&c).unwrap();
    let out = s.run_trial(0).unwrap();
    assert_eq!(out.truth, (5, 2));
    let d = out.nnls.unwrap();
    assert!(d.success, "{d:?}");
}

#[test]
fn trials_are_reproducible() {
    let mut c = small_config();
    c.scheme = Scheme::Both;
    let s = Scenario::new(&c).unwrap();
    for t in [0, 5, 11] {
        assert_eq!(s.run_trial(t).unwrap(), s.run_trial(t).unwrap());
        let a = s.simulate(t, true).unwrap();
        let b = s.simulate(t, true).unwrap();
        assert_eq!(a.batch.q, b.batch.q);
        assert_eq!(a.omp_y, b.omp_y);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let mut c = small_config();
    c.scheme = Scheme::Both;
    c.sweep = Some(Sweep {
        variable: SweepVariable::SnrBbfDb,
        values: vec![-20.0, -5.0],
    });
    c.workers = 1;
    let one = run_sweep(&c).unwrap().rows;
    c.workers = 3;
    let three = run_sweep(&c).unwrap().rows;
    assert_eq!(one, three);
    assert_eq!(one.len(), 4);
}

#[test]
fn hopeless_snr_falls_to_chance() {
    let mut c = small_config();
    c.snr_bbf_db = -60.0;
    c.beacon_slots = 1;
    c.trials = 500;
    let rows = run_sweep(&c).unwrap().rows;
    let chance = 1.0 / 64.0;
    assert!(rows[0].ci_low <= chance && chance <= rows[0].ci_high, "{:?}", rows[0]);
}

#[test]
fn full_coverage_codebook_satisfies_m_plus() {
    let c = ExperimentConfig::default();
    let s = Scenario::new(&c).unwrap();
    let data = s.simulate(0, false).unwrap();
    assert!(m_plus_check(&data.batch.b).satisfied);
    assert_eq!(data.batch.rows(), 30 * 6);
}

#[test]
fn ideal_separation_runs_end_to_end() {
    let mut c = small_config();
    c.separation = StreamSeparation::Ideal;
    c.snr_bbf_db = 0.0;
    let rows = run_sweep(&c).unwrap().rows;
    assert!(rows[0].p_d > 0.5, "{:?}", rows[0]);
}

#[test]
fn experiment_outputs_carry_hash_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c.out_dir = dir.path().join("run");
    for kind in [ExperimentKind::Detection, ExperimentKind::Rate, ExperimentKind::Pdp] {
        let summary = run_experiment(&c, kind).unwrap();
        let text = fs::read_to_string(&summary.csv_path).unwrap();
        assert!(text.starts_with(&format!("# config_sha256={}\r\n", c.hash())));
        assert!(!csv_body(&text).is_empty());
        let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary.manifest_path).unwrap()).unwrap();
        assert_eq!(manifest["config_sha256"], c.hash());
        assert_eq!(manifest["seed"], c.seed);
        assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
        assert!(manifest.get("git_revision").is_some());
    }
    let header = fs::read_to_string(dir.path().join("run/detection.csv")).unwrap();
    assert!(csv_body(&header).starts_with("variable,value,scheme,trials,successes,p_d,ci_low,ci_high\r\n"));
}

#[test]
fn unwritable_output_fails_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"").unwrap();
    let mut c = small_config();
    c.trials = 100_000;
    c.out_dir = blocker.join("out");
    let err = run_experiment(&c, ExperimentKind::Detection).unwrap_err();
    assert!(matches!(err, Error::Output { .. }), "{err}");
}

#[test]
fn matrix_market_dump_matches_batch() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config();
    let path = dir.path().join("b.mtx");
    dump_batch(&c, 2, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let data = Scenario::new(&c).unwrap().simulate(2, false).unwrap();
    let nnz = data.batch.b.iter().filter(|&&v| v != 0.0).count();
    assert!(text.starts_with("%%MatrixMarket matrix coordinate real general"));
    let size = format!("{} {} {}", data.batch.b.nrows(), data.batch.b.ncols(), nnz);
    assert!(text.lines().any(|l| l == size), "missing size line {size}");
    assert!(text.contains("%%MatrixMarket matrix array real general"));
}

#[test]
fn delays_beyond_the_window_are_reported_with_trial() {
    let mut c = small_config();
    c.correlation_taps = Some(64 + 9);
    c.paths[2].delay_s = 20.0 / 1.76e9;
    // Validation catches it first.
    assert!(Scenario::new(&c).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rate_bounds_are_ordered(
        gammas in proptest::collection::vec(0.01..1.0f64, 3),
        etas in proptest::collection::vec(prop_oneof![Just(f64::INFINITY), 0.0..100.0f64], 3),
        sines in proptest::collection::vec(-1.0..1.0f64, 6),
        snr_db in -40.0..30.0f64,
        cell in (0usize..16, 0usize..16),
        seed in any::<u64>(),
    ) {
        let paths: Vec<PathParams> = (0..3).map(|l| PathParams {
            gamma: gammas[l],
            eta: etas[l],
            aoa: sines[2 * l].asin(),
            aod: sines[2 * l + 1].asin(),
            delay_s: 0.0,
            rel_speed_mps: 0.0,
        }).collect();
        let system = SystemConfig {
            bs_antennas: 16,
            ue_antennas: 16,
            bs_rf_chains: 1,
            ue_rf_chains: 1,
            carrier_hz: 70e9,
            bandwidth_hz: 1e9,
        };
        let power = PowerConfig { total_power_w: 10f64.powf(snr_db / 10.0), noise_psd_w_per_hz: 1e-9 };
        let sel = BeamSelection { ue_index: cell.0, bs_index: cell.1, strength: 1.0 };
        let r = rate_bounds(&paths, &system, &sel, &power, 200, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(r.r_lb >= 0.0 && r.r_lb <= r.r_ub);
    }
}
