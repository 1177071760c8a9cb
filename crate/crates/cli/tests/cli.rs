use std::path::Path;
use std::process::{Command, Output};

use quasilin_cli::artifacts::content_hash;

fn quasilin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quasilin"))
        .args(args)
        .arg("--output")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr_record(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not a JSON record ({e}): {text}"))
}

fn manifest(dir: &Path) -> toml::Table {
    std::fs::read_to_string(dir.join("manifest.toml"))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn negative_beta_exits_with_validation_record() {
    let tmp = tempfile::tempdir().unwrap();
    let o = quasilin(&["reconstruct1d", "--beta", "-0.1"], &tmp.path().join("run"));
    assert_eq!(o.status.code(), Some(2));
    let rec = stderr_record(&o);
    assert_eq!(rec["kind"], "validation");
    assert!(rec["message"].as_str().unwrap().contains("beta_reg must be ≥ 0"));
    assert!(
        !tmp.path().join("run").exists(),
        "nothing is written before validation passes"
    );
}

#[test]
fn sweep_above_bound_names_the_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let o = quasilin(&["stability-sweep", "--p", "3", "--S", "1e-3:log:0.6"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let rec = stderr_record(&o);
    assert!(rec["diagnostics"][0]["message"]
        .as_str()
        .unwrap()
        .contains("2^(-(2p-1)/p)"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "command = \"forward1d\"\noptim.stpe = 0.1\n").unwrap();
    let o = quasilin(&["--config", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_record(&o)["kind"], "config");
}

#[test]
fn flags_override_file_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        "command = \"reconstruct1d\"\nseed = 1\noptim.max_iter = 3\noptim.step = 0.01\nproblem1d.lambdas = [0.2, 0.6, 1.0]\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = quasilin(
        &["--config", cfg.to_str().unwrap(), "--seed", "2", "--step", "0.02"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    let c = m["config"].as_table().unwrap();
    assert_eq!(c["seed"].as_integer(), Some(2));
    let optim = c["optim"].as_table().unwrap();
    assert_eq!(optim["max_iter"].as_integer(), Some(3));
    assert_eq!(optim["step"].as_float(), Some(0.02));
    // defaults of the 1D setup are written out in full
    assert_eq!(optim["method"].as_str(), Some("adam"));
    assert_eq!(optim["batch"].as_integer(), Some(3));
    assert_eq!(m["summary"]["iterations"].as_integer(), Some(3));
}

#[test]
fn preset_selects_the_command() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fig2");
    let o = quasilin(
        &["--preset", "paper-fig2", "--max-iter", "2", "--gamma", "smooth"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["command"].as_str(), Some("reconstruct1d"));
    assert_eq!(m["summary"]["truth"].as_str(), Some("exponential"));
    let optim = m["config"]["optim"].as_table().unwrap();
    assert_eq!(optim["beta_reg"].as_float(), Some(0.1));
    assert_eq!(optim["batch"].as_integer(), Some(100));
}

#[test]
fn preset_and_command_must_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let o = quasilin(&["reconstruct1d", "--preset", "paper-fig1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_record(&o)["diagnostics"][0]["field"], "preset");
}

#[test]
fn runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "reconstruct2d",
        "--n-refine",
        "1",
        "--max-iter",
        "5",
        "--eps",
        "0.01",
        "--seed",
        "7",
        "--xi",
        "1.5,2",
    ];
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(quasilin(&args, &a).status.success());
    assert!(quasilin(&args, &b).status.success());
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["inputs_hash"], mb["inputs_hash"]);
    assert_eq!(ma["artifacts"], mb["artifacts"]);
    for (name, hash) in ma["artifacts"].as_table().unwrap() {
        let bytes = std::fs::read(a.join(name)).unwrap();
        assert_eq!(&content_hash(&bytes), hash.as_str().unwrap(), "{name}");
        assert_eq!(bytes, std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    for f in [
        "gamma_hat.csv",
        "history.csv",
        "plot/figure.gp",
        "plot/gamma_true.dat",
        "plot/l2_error.dat",
    ] {
        assert!(a.join(f).exists(), "{f}");
    }
}

#[test]
fn solver_failure_keeps_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    let o = quasilin(
        &["reconstruct2d", "--n-refine", "1", "--step", "1e300", "--max-iter", "5"],
        &out,
    );
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_record(&o)["kind"], "solver");
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(record["exit_code"], 3);
    assert_eq!(manifest(&out)["status"].as_str(), Some("failed"));
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.starts_with("iter,j0,reg,l2_error\n0,"));
}

#[test]
fn history_header_and_gamma_record() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let o = quasilin(&["reconstruct1d", "--max-iter", "4", "--lambda", "0.1:0.1:1"], &out);
    assert!(o.status.success());
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 5);
    let record = std::fs::read_to_string(out.join("gamma_hat.toml")).unwrap();
    let g = quasilin_core::GammaGrid::from_record(&record).unwrap();
    assert_eq!(g.n_nodes(), 101);
    assert!(std::fs::read_to_string(out.join("gamma_hat.csv"))
        .unwrap()
        .starts_with("s,gamma\n"));
}
