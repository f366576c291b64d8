use std::f64::consts::PI;

use proptest::prelude::*;
use qvdp::harness::{run_scenario, Engine, ExperimentConfig, Overrides, Scenario};
use qvdp::lindblad::Regime;

fn scratch() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn toml_round_trip_keeps_hash() {
    let mut cfg = ExperimentConfig::new(Scenario::Arnold, Regime::Quantum, 99);
    cfg.sweep.detunings_hz = Some(vec![0.0, 40.0]);
    cfg.noise.shots = Some(50);
    let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
}

#[test]
fn hash_ignores_output_dir_only() {
    let a = ExperimentConfig::new(Scenario::Sync, Regime::Classical, 1);
    let mut b = a.clone();
    b.output_dir = "elsewhere".into();
    assert_eq!(a.hash(), b.hash());
    b.seed = 2;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn schedule_config_runs_stroboscopic_sync() {
    let sched = qvdp::pulses::table_schedule(Regime::Quantum, 0.0);
    let mut cfg = ExperimentConfig::new(Scenario::Sync, Regime::Quantum, 3);
    cfg.effective = None;
    cfg.schedule = Some(sched);
    cfg.engine = Engine::Stroboscopic;
    cfg.cutoffs.two_mode = [6, 6];
    cfg.sweep.phis = Some(vec![0.0]);
    let text = cfg.to_toml().unwrap();
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let dir = scratch();
    let m = run_scenario(&ExperimentConfig {
        output_dir: dir.path().into(),
        ..cfg
    })
    .unwrap();
    assert_eq!(m.status, "completed");
    assert!(m.check("engine_cross_check").is_some());
}

#[test]
fn unknown_keys_and_double_models_are_config_errors() {
    let bad = "scenario = \"sync\"\nseed = 1\nbogus = 3\n[effective]\npreset = \"classical\"\n";
    assert!(ExperimentConfig::from_toml(bad).unwrap_err().is_config());
    let mut cfg = ExperimentConfig::new(Scenario::Sync, Regime::Classical, 1);
    cfg.schedule = Some(qvdp::pulses::table_schedule(Regime::Classical, 0.0));
    assert!(cfg.validate().unwrap_err().is_config());
}

#[test]
fn stroboscopic_engine_restricted_to_two_mode_scenarios() {
    let mut cfg = ExperimentConfig::new(Scenario::Meanfield, Regime::Classical, 1);
    let o = Overrides {
        engine: Some(Engine::Stroboscopic),
        ..Overrides::default()
    };
    assert!(o.apply(&mut cfg).unwrap_err().is_config());
}

#[test]
fn shots_override_reaches_both_tables() {
    let mut cfg = ExperimentConfig::new(Scenario::Sync, Regime::Classical, 1);
    Overrides {
        shots: Some(7),
        seed: Some(5),
        ..Overrides::default()
    }
    .apply(&mut cfg)
    .unwrap();
    assert_eq!((cfg.shots(), cfg.readout.shots, cfg.seed), (7, 7, 5));
}

#[test]
fn numerical_failure_names_stage_in_manifest() {
    let mut cfg = ExperimentConfig::new(Scenario::Meanfield, Regime::Classical, 1);
    cfg.effective.as_mut().unwrap().kappa_minus_hz = Some(0.0);
    let dir = scratch();
    cfg.output_dir = dir.path().into();
    let err = run_scenario(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let m = err.manifest.unwrap();
    assert_eq!(m.status, "failed");
    assert!(m.failed_stage.unwrap().starts_with("fixed points"));
    let on_disk: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(on_disk["status"], "failed");
}

#[test]
fn csv_headers_carry_axes_and_units() {
    let mut cfg = ExperimentConfig::new(Scenario::TomoCheck, Regime::Classical, 1);
    let dir = scratch();
    cfg.output_dir = dir.path().into();
    let m = run_scenario(&cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("wigner_vacuum.csv")).unwrap();
    let first: Vec<&str> = text.lines().take(3).collect();
    assert!(first[0].starts_with("# axis1: re_alpha min=") && first[0].contains("unit="));
    assert!(first[1].starts_with("# axis2: im_alpha"));
    assert!(m.outputs.iter().all(|o| o.sha256.len() == 64));
    assert!(m.all_checks_pass(), "{:?}", m.checks);
}

#[test]
fn sync_phase_shifts_covariance_sign() {
    let mut cfg = ExperimentConfig::new(Scenario::Sync, Regime::Quantum, 2);
    cfg.cutoffs.two_mode = [8, 8];
    cfg.readout.shots = 0;
    cfg.sweep.phis = Some(vec![0.0, PI]);
    let dir = scratch();
    cfg.output_dir = dir.path().into();
    run_scenario(&cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("sync.csv")).unwrap();
    let header: Vec<&str> = text
        .lines()
        .find(|l| !l.starts_with('#'))
        .unwrap()
        .split(',')
        .collect();
    let col = header.iter().position(|h| *h == "cov_x1x2").unwrap();
    let covs: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect();
    assert!(covs[0] > 0.0 && covs[1] < 0.0, "{covs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stream_seeds_are_distinct(seed in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(qvdp::harness::stream_seed(seed, a), qvdp::harness::stream_seed(seed, b));
    }

    #[test]
    fn configs_round_trip(seed in any::<u64>(), shots in 0u64..10_000, size in 1usize..50) {
        let mut cfg = ExperimentConfig::new(Scenario::Arnold, Regime::Classical, seed);
        cfg.readout.shots = shots;
        cfg.noise.ensemble_size = size;
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
