use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mpp_lab::envsim::{gen_tabular, TabularGen};
use mpp_lab::io::{write_instance, Instance, TabularDoc};
use mpp_lab::Tabular;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpp-lab"))
        .args(args)
        .env("MPP_LAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_model(dir: &Path) -> std::path::PathBuf {
    let gen = TabularGen {
        horizon: 2,
        states: 2,
        outcomes: 2,
        actions: 2,
        contexts: 1,
        p0: 0.3,
        d: 0.2,
        sender_bias: 0.0,
    };
    let m: Tabular = gen_tabular(1, &gen).unwrap();
    let path = dir.join("instance.json");
    write_instance(&path, &Instance::Tabular(TabularDoc::from_model(&m))).unwrap();
    path
}

#[test]
fn validate_accepts_good_and_flags_bad_instances() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_model(dir.path());
    let out = bin(&["validate", "--instance", good.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    assert_eq!(stdout(&out).trim(), "ok");

    let mut json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&good).unwrap()).unwrap();
    json["mu"][0][0] = serde_json::json!([0.9, 0.3]);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, json.to_string()).unwrap();
    let out = bin(&["validate", "--instance", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    assert!(stdout(&out).contains("mu"));
}

#[test]
fn plan_prints_value_and_policy() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_model(dir.path());
    let ctx = dir.path().join("ctx.json");
    fs::write(&ctx, "[0, 0]").unwrap();
    let out = bin(&["plan", "--instance", inst.to_str().unwrap(), "--contexts", ctx.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let v = doc["v_star"].as_f64().unwrap();
    assert!(v > 0.0 && v <= 2.0);
    fs::write(&ctx, "[0]").unwrap();
    let out = bin(&["plan", "--instance", inst.to_str().unwrap(), "--contexts", ctx.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_then_decompose() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_model(dir.path());
    let cfg = dir.path().join("cfg.json");
    let out_dir = dir.path().join("out");
    let config = serde_json::json!({
        "instance": {"file": {"path": inst}},
        "learner": {"variant": "tabular", "constants": {"c_rho": 0.1}},
        "episodes": 40,
        "seeds": [1],
        "schedule": "round_robin",
    });
    fs::write(&cfg, config.to_string()).unwrap();
    let out = bin(&["run", "--config", cfg.to_str().unwrap(), "--seeds", "3,4", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    assert_eq!(stdout(&out).lines().count(), 3);
    for f in ["seed_3.csv", "seed_4.csv", "regret.csv", "run.json"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let out = bin(&["decompose", "--run", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    assert_eq!(stdout(&out).lines().count(), 3);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"instance":{"tabular":{"generator":{"horizon":1,"states":1,"outcomes":2,"actions":2,"p0":0.3,"d":0.2},"seed":1}},
            "learner":{"variant":"tabular"},"episodes":3,"seeds":[1],"colour":"blue"}"#,
    )
    .unwrap();
    let out = bin(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}
