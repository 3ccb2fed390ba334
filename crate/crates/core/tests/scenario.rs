use css_core::config::{Algorithm, Preset, ScenarioConfig};
use css_core::metrics::{emit_csv, metric_fractions, parse_csv, CsvRow};
use css_core::scenario::{roc_point, run_scenario, Scenario};

fn blind_or(sus: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::preset(Preset::Custom, Algorithm::Or);
    c.topology.sus = sus;
    c.topology.signal_variances = Some(vec![vec![0.0; sus]; c.topology.pus]);
    c
}

#[test]
fn blind_or_matches_analytic_false_alarm() {
    let s = 5;
    let cfg = blind_or(s);
    let log = run_scenario(&cfg).unwrap();
    let last = log.last().unwrap();
    let f = last.fractions(s);
    let predicted = 1.0 - (1.0 - cfg.detector.pfa).powi(s as i32);
    assert!((f.missed - predicted).abs() < 0.01, "missed {} vs {predicted}", f.missed);
    // idle decisions are independent of the truth, so collisions track occupancy
    let busy_share = last.busy_steps as f64 / (last.busy_steps + last.idle_steps) as f64;
    assert!((f.su_collision - busy_share).abs() < 0.02, "{} vs {busy_share}", f.su_collision);
    assert!((f.pu_collision - (1.0 - predicted)).abs() < 0.01);
}

#[test]
fn fixed_budget_dies_after_one_thousand_steps() {
    let mut cfg = ScenarioConfig::preset(Preset::Gsc, Algorithm::HedgeHc);
    cfg.steps = 1200;
    cfg.energy.budget = Some(10_000);
    let log = run_scenario(&cfg).unwrap();
    assert_eq!(log.records[999].alive_frac, 1.0);
    assert_eq!(log.records[1000].alive_frac, 0.0);
    assert!(log.records[1000..].iter().all(|r| r.alive_frac == 0.0));
    // nobody is left to probe once every SU is dead
    assert_eq!(log.records[1199].attempts, log.records[1000].attempts);
}

#[test]
fn deactivation_is_monotone_and_keeps_coverage() {
    let mut cfg = ScenarioConfig::preset(Preset::Msc, Algorithm::HedgeHc);
    cfg.steps = 3000;
    cfg.energy.deactivation = true;
    let mut sim = Scenario::new(cfg).unwrap();
    let mut prev = sim.mask().count();
    let mut prev_sensing = 0;
    for _ in 0..3000 {
        let rec = sim.step().unwrap().clone();
        let count = sim.mask().count();
        assert!(count <= prev);
        for j in 0..sim.mask().channels() {
            assert!(sim.mask().row(j).iter().any(|&a| a));
        }
        assert!(rec.sensing - prev_sensing <= 500);
        prev_sensing = rec.sensing;
        prev = count;
    }
    assert!(prev < 500);
}

#[test]
fn csv_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::preset(Preset::Gsc, Algorithm::HscSw);
    cfg.steps = 500;
    let log = run_scenario(&cfg).unwrap();
    let path = dir.path().join("run.csv");
    emit_csv(&log, &path).unwrap();
    let rows = parse_csv(&path).unwrap();
    assert_eq!(rows.len(), 500);
    for (row, rec) in rows.iter().zip(&log.records) {
        assert_eq!(row, &CsvRow::from_record(rec, log.experts));
        let f = metric_fractions(&log, rec.step).unwrap();
        assert!((row.su_coll_frac - f.su_collision).abs() <= 1e-12);
        for v in [row.pu_coll_frac, row.su_coll_frac, row.missed_frac, row.alive_frac] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn csv_write_error_names_the_path() {
    let log = run_scenario(&{
        let mut c = ScenarioConfig::preset(Preset::Gsc, Algorithm::Or);
        c.steps = 3;
        c
    })
    .unwrap();
    let err = emit_csv(&log, std::path::Path::new("/nonexistent-dir/x.csv")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
}

#[test]
fn config_file_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(
        &path,
        "preset = \"bsc\"\nalgorithm = \"dperc-sc\"\nsteps = 50\nseed = 4\n[mobility]\npus_mobile = true\n",
    )
    .unwrap();
    let cfg = ScenarioConfig::from_file(&path).unwrap();
    assert_eq!(cfg.topology.sus, 10);
    assert_eq!(cfg.learner.discount, 0.99);
    assert!(cfg.mobility.pus_mobile);
    assert_eq!(run_scenario(&cfg).unwrap().records.len(), 50);
}

#[test]
fn roc_extremes() {
    let mut cfg = ScenarioConfig::preset(Preset::Gsc, Algorithm::HedgeSc);
    cfg.steps = 800;
    let hi = roc_point(&cfg, 1.0).unwrap();
    assert!(hi.pfa > 0.99 && hi.pd > 0.99, "{hi:?}");
    let mut blind = cfg.clone();
    blind.topology.signal_variances = Some(vec![vec![0.0; 10]; 10]);
    let lo = roc_point(&blind, 1e-6).unwrap();
    assert!(lo.pd < 0.01 && lo.pfa < 0.01, "{lo:?}");
}

#[test]
fn mobility_changes_the_trajectory() {
    let mut cfg = ScenarioConfig::preset(Preset::Msc, Algorithm::HedgeSc);
    cfg.steps = 5;
    let mut moving = cfg.clone();
    moving.mobility.pus_mobile = true;
    moving.mobility.sus_mobile = true;
    let mut a = Scenario::new(cfg).unwrap();
    let mut b = Scenario::new(moving).unwrap();
    for _ in 0..5 {
        a.step().unwrap();
        b.step().unwrap();
    }
    assert_ne!(a.topology().su_positions, b.topology().su_positions);
    assert_ne!(a.gains()[0][0], b.gains()[0][0]);
}
