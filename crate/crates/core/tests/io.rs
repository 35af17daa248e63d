use amdp_core::{
    analyze, gen_fig1, gen_random, run_sweep, write_csv, Criterion, EbarChoice, InstanceSource, Mdp, NGrid,
    OracleTarget, Policy, RandomParams, SweepConfig,
};

#[test]
fn mdp_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let mdp = gen_random(&RandomParams::general(5, 3, 4, 2)).unwrap();
    mdp.save(&path).unwrap();
    let back = Mdp::load(&path).unwrap();
    assert_eq!(back, mdp);
}

#[test]
fn malformed_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"num_states": 2, "num_actions": 1, "transitions": [[[0.5, 0.4]], [[0, 1]]], "rewards": [[0], [1]]}"#,
    )
    .unwrap();
    let err = Mdp::load(&path).unwrap_err();
    assert!(err.is_validation(), "{err}");
    assert!(err.to_string().contains("(0,0)"), "{err}");
}

#[test]
fn analysis_json_uses_fixed_field_names() {
    let a = analyze(&gen_fig1(3.0, 2).unwrap()).unwrap();
    let v: serde_json::Value = serde_json::to_value(&a).unwrap();
    for key in ["span_H", "transient_B", "diameter_D", "tau_unif", "gain", "bias", "residuals"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["diameter_D"], "inf");
    assert!((v["transient_B"].as_f64().unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn policy_json_forms() {
    let p = Policy::from_json_str("[1, 0, 1]", 2).unwrap();
    assert_eq!(p.actions().unwrap(), vec![1, 0, 1]);
    let q = Policy::from_json_str("[[0.5, 0.5], [1, 0]]", 2).unwrap();
    assert_eq!(q.prob(0, 1), 0.5);
    assert!(Policy::from_json_str("[2]", 2).is_err());
}

#[test]
fn sweep_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mdp_path = dir.path().join("fig1.json");
    gen_fig1(2.0, 2).unwrap().save(&mdp_path).unwrap();
    let cfg = SweepConfig {
        instance: InstanceSource::File { path: mdp_path },
        criterion: Criterion::Average,
        eps_grid: vec![0.25],
        n_grid: NGrid::Explicit(vec![50, 400]),
        trials: 4,
        delta: 0.1,
        seed: 3,
        ebar: Some(EbarChoice::Oracle(OracleTarget::TransientPlusSpan)),
        gamma: None,
        tie_instance_eps: false,
        record_wall_time: true,
        output: None,
    };
    let res = run_sweep(&cfg).unwrap();
    let out = dir.path().join("sweep.csv");
    write_csv(&res, std::fs::File::create(&out).unwrap()).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# sweep written at unix time"));
    assert_eq!(
        lines.next().unwrap(),
        "family,S,A,H,B,criterion,eps,ebar,gamma_bar,n,trials,successes,success_rate,seed,wall_ms"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "file");
    assert_eq!(row[4], "2.0");
    assert_eq!(row[7], "2.0");
    assert_eq!(lines.count(), 1);
}
