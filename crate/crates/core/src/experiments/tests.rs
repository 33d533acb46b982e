use super::*;

fn table(alpha: f64, step: f64) -> BermanTable {
    let samples: Vec<f64> = (1..=2000).map(|i| step * (1 + i % 37) as f64).collect();
    BermanTable::from_samples(alpha, 20.0, step, 3, &[0.0, 0.5, 1.0], samples, false).unwrap()
}

fn config(horizon: HorizonModel, u_grid: Vec<f64>, r: usize) -> ExperimentConfig {
    ExperimentConfig {
        version: CONFIG_VERSION,
        model: ModelSpec::FracOu { alpha: 1.0 },
        horizon,
        u_grid,
        x_grid: vec![0.0, 0.5, 1.0],
        replications: r,
        points_per_unit: 10.0,
        horizon_cap: None,
        seed: 17,
        berman_table: "table.json".into(),
    }
}

#[test]
fn config_round_trip_and_schema_errors() {
    let cfg = config(HorizonModel::canonical(crate::heavy_tail::Scenario::D4).unwrap(), vec![3.0], 100);
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["bogus"] = 1.into();
    assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(Error::Config(_))));
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["points_per_unit"] = 5.0.into();
    assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["version"] = 2.into();
    assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["horizon"]["extra"] = 1.into();
    assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
}

#[test]
fn load_resolves_table_next_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(HorizonModel::exponential(1.0).unwrap(), vec![3.0], 10);
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap().berman_table, dir.path().join("table.json"));
}

#[test]
fn empty_u_grid_gives_empty_report() {
    let cfg = config(HorizonModel::exponential(1.0).unwrap(), vec![], 10);
    let rep = run_comparison(&cfg, &table(1.0, 0.1)).unwrap();
    assert!(rep.rows.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    rep.write_csv(&p).unwrap();
    assert_eq!(
        std::fs::read_to_string(&p).unwrap().trim(),
        "scenario,alpha,family,u,x,empirical,se,predicted,ratio,flags"
    );
}

#[test]
fn comparison_is_deterministic_and_well_formed() {
    let cfg = config(HorizonModel::canonical(crate::heavy_tail::Scenario::D3 { lambda: 0.5 }).unwrap(), vec![2.5, 3.0], 3000);
    let b = table(1.0, 0.1);
    let a = run_comparison(&cfg, &b).unwrap();
    let c = run_comparison(&cfg, &b).unwrap();
    assert_eq!(a, c);
    assert!(a.grid_matched);
    assert_eq!(a.rows.len(), 6);
    for r in &a.rows {
        assert!((0.0..=1.0).contains(&r.empirical));
        assert_eq!(r.ratio.is_none(), r.empirical == 0.0);
        assert!(r.predicted > 0.0);
    }
    for lv in &a.levels {
        assert!(lv.hits.windows(2).all(|w| w[1] <= w[0]));
        assert!(lv.paths.miss_bound < 1e-6);
    }
    let dir = tempfile::tempdir().unwrap();
    a.write_csv(dir.path().join("r.csv")).unwrap();
    a.write_sidecar(dir.path().join("r.json")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn grid_mismatch_is_flagged() {
    let cfg = config(HorizonModel::exponential(1.0).unwrap(), vec![3.0], 200);
    let rep = run_comparison(&cfg, &table(1.0, 0.05)).unwrap();
    assert!(rep.rows.iter().all(|r| r.flags.contains("grid_mismatch")));
}

#[test]
fn alpha_mismatch_is_a_contract_error() {
    let cfg = config(HorizonModel::exponential(1.0).unwrap(), vec![3.0], 10);
    assert!(matches!(run_comparison(&cfg, &table(1.5, 0.1)), Err(Error::Contract(_))));
}

#[test]
fn deterministic_horizon_matches_sup_crossing_mc() {
    // independent streams: scanner paths vs fully generated paths
    let model = CovarianceModel::frac_ou(1.0).unwrap();
    let mut cfg = config(HorizonModel::deterministic(1.0).unwrap(), vec![3.5], 200_000);
    cfg.x_grid = vec![0.0];
    let b = table(1.0, 0.1);
    let est = empirical_sojourn_tail(&cfg, &b, 3.5, 0.0).unwrap();
    let sup = sup_identity_check(&model, 3.5, 1.0, b.b0(), 10.0, 200_000, 99).unwrap();
    assert_eq!(sup.mismatches, 0);
    let se = (est.se.powi(2) + sup.se.powi(2)).sqrt();
    assert!((est.estimate - sup.estimate).abs() < 3.0 * se, "{est:?} vs {sup:?}");
}

#[test]
fn sup_identity_holds_path_by_path() {
    let model = CovarianceModel::frac_ou(1.0).unwrap();
    let rep = sup_identity_check(&model, 2.0, 1.0, 1.0, 10.0, 5000, 4).unwrap();
    assert_eq!(rep.mismatches, 0);
    assert_eq!(rep.sojourn_hits, rep.sup_hits);
    assert!(rep.sojourn_hits > 0);
}

#[test]
fn cp_check_targets_and_preconditions() {
    let model = CovarianceModel::frac_ou(1.0).unwrap();
    let b = table(1.0, 0.1);
    let settings = CheckSettings {
        u_grid: vec![2.5],
        x_grid: vec![0.0, 1.0],
        replications: 400,
        seed: 5,
        points_per_unit: 10.0,
    };
    let rep = compound_poisson_convergence_check(1.0, &b, &model, &[0.5, 1.0, 2.0], (0.5, 2.0), &settings).unwrap();
    assert_eq!(rep.rows.len(), 6);
    for r in rep.rows.iter().filter(|r| r.x == 0.0) {
        assert_eq!(r.target, 1.0 - (-r.l).exp());
    }
    for r in rep.rows.iter().filter(|r| r.x == 1.0) {
        assert!(r.target < 1.0 - (-r.l).exp());
    }
    // nested windows: tails nondecreasing in l
    let e: Vec<f64> = rep.rows.iter().filter(|r| r.x == 0.0).map(|r| r.empirical).collect();
    assert!(e.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(rep.summary.len(), 2);
    assert!(compound_poisson_convergence_check(1.0, &b, &model, &[0.4, 1.0], (0.5, 2.0), &settings).is_err());
    assert!(compound_poisson_convergence_check(1.0, &b, &model, &[1.0], (2.0, 1.0), &settings).is_err());
    assert!(compound_poisson_convergence_check(1.5, &b, &model, &[1.0], (0.5, 2.0), &settings).is_err());
}

#[test]
fn ratio_check_flags_inadmissible_rules() {
    let model = CovarianceModel::frac_ou(1.0).unwrap();
    let b = table(1.0, 0.1);
    let settings = CheckSettings {
        u_grid: vec![2.5, 3.0],
        x_grid: vec![0.0],
        replications: 200,
        seed: 5,
        points_per_unit: 10.0,
    };
    let ok = intermediate_horizon_ratio_check(1.0, &b, &model, HorizonRule::SqrtMOverV, &settings).unwrap();
    assert!(ok.flags.is_empty(), "{:?}", ok.flags);
    assert_eq!(ok.rows.len(), 2);
    let frac = intermediate_horizon_ratio_check(1.0, &b, &model, HorizonRule::FractionOfM { fraction: 0.5 }, &settings)
        .unwrap();
    assert!(frac.flags.iter().any(|f| f == "a_over_m_not_vanishing"));
    let tiny = intermediate_horizon_ratio_check(1.0, &b, &model, HorizonRule::Constant { value: 0.01 }, &settings)
        .unwrap();
    assert!(tiny.flags.iter().any(|f| f == "a_times_v_not_growing"));
    assert_eq!("constant:value=2".parse::<HorizonRule>().unwrap(), HorizonRule::Constant { value: 2.0 });
    assert!("sqrt-m-over-v:x=1".parse::<HorizonRule>().is_err());
}
