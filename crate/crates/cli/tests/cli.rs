use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
schema = "silentlab.experiment/1"
scenario = "cli-test"
master_seed = 11
seeds = [0, 1, 2]
gammas = [1.0, 4.0]
n_train = 300
mc_samples = 2000

[domain]
mu_d = [1.0]
mu_s = [0.5]
sigma_d = 1.0
sigma_s = 1.0
eta = 0.5

[grid]
w_d = [1.0]
w_s = [0.0, 1.0]

[[train]]
lp_iters = 10
ft_iters = 20
eval_interval = 5

[[train]]
lr_ft = 0.05
lp_iters = 10
ft_iters = 20
eval_interval = 5

[swad]
eval_interval = 4
"#;

fn silentlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_silentlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

fn errors(out: &Output) -> Vec<serde_json::Value> {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    let v: serde_json::Value = serde_json::from_str(line).expect("error list is JSON");
    v["errors"].as_array().unwrap().clone()
}

#[test]
fn experiment_is_byte_reproducible() {
    let dir = setup();
    for out in ["a", "b"] {
        let o = silentlab(dir.path(), &["experiment", "-c", "small.toml", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = silentlab(
        dir.path(),
        &["experiment", "-c", "small.toml", "--out", "seq", "--jobs", "1"],
    );
    assert!(o.status.success());
    for file in [
        "rows.csv",
        "aggregate.csv",
        "candidates.csv",
        "selection.csv",
        "meta.json",
    ] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(file)).unwrap(), "{file}");
        assert_eq!(a, fs::read(dir.path().join("seq").join(file)).unwrap(), "{file}");
    }
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("a/meta.json")).unwrap()).unwrap();
    assert_eq!(meta["schema"], "silentlab.experiment-meta/1");
    assert_eq!(meta["counts"]["runs"], 2 * 3 * 2 * 4);
    assert!(meta["runs"][0].get("wall_time_s").is_none());
}

#[test]
fn master_seed_flag_changes_results() {
    let dir = setup();
    silentlab(dir.path(), &["experiment", "-c", "small.toml", "--out", "a"]);
    let o = silentlab(
        dir.path(),
        &["experiment", "-c", "small.toml", "--out", "b", "--seed", "12"],
    );
    assert!(o.status.success());
    let a = fs::read(dir.path().join("a/rows.csv")).unwrap();
    assert_ne!(a, fs::read(dir.path().join("b/rows.csv")).unwrap());
}

#[test]
fn timings_only_when_requested() {
    let dir = setup();
    let o = silentlab(dir.path(), &["experiment", "-c", "small.toml", "--timings"]);
    assert!(o.status.success());
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("out/meta.json")).unwrap()).unwrap();
    assert!(meta["runs"][0]["wall_time_s"].is_number());
}

#[test]
fn grid_select_reads_experiment_candidates() {
    let dir = setup();
    silentlab(dir.path(), &["experiment", "-c", "small.toml", "--out", "exp"]);
    let o = silentlab(
        dir.path(),
        &[
            "grid-select",
            "exp/candidates.csv",
            "--criterion",
            "test_val",
            "--out",
            "sel",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("sel/grid_select.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    assert!(text.lines().skip(1).all(|l| l.contains(",test_val,")));
}

#[test]
fn incomplete_grid_lists_missing_cells() {
    let dir = setup();
    fs::write(
        dir.path().join("cands.csv"),
        "config_id,seed,arm,pretrain,candidate,train_val_risk,test_risk\n\
         0,0,erm,oracle_silent,0,0.2,0.3\n\
         0,1,erm,oracle_silent,0,0.2,0.3\n\
         1,0,erm,oracle_silent,0,0.1,0.2\n",
    )
    .unwrap();
    let o = silentlab(dir.path(), &["grid-select", "cands.csv"]);
    assert!(!o.status.success());
    let errs = errors(&o);
    assert_eq!(errs.len(), 1);
    assert_eq!(errs[0]["kind"], "incomplete_grid");
    assert!(errs[0]["message"].as_str().unwrap().contains("config=1 seed=1"));
}

#[test]
fn bad_config_is_a_machine_readable_error() {
    let dir = setup();
    fs::write(
        dir.path().join("bad.toml"),
        SMALL.replace("seeds = [0, 1, 2]", "seeds = [0, 0]"),
    )
    .unwrap();
    let o = silentlab(dir.path(), &["risk-sweep", "-c", "bad.toml"]);
    assert!(!o.status.success());
    assert_eq!(errors(&o)[0]["kind"], "config");

    let o = silentlab(dir.path(), &["risk-sweep", "-c", "missing.toml"]);
    assert!(!o.status.success());
    assert_eq!(errors(&o)[0]["kind"], "cli");
}

#[test]
fn defaults_round_trip() {
    let dir = setup();
    let o = silentlab(dir.path(), &["defaults"]);
    assert!(o.status.success());
    fs::write(dir.path().join("defaults.toml"), &o.stdout).unwrap();
    let o = silentlab(dir.path(), &["risk-sweep", "-c", "defaults.toml"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 44);
}

#[test]
fn sweep_with_monte_carlo_rows() {
    let dir = setup();
    let o = silentlab(dir.path(), &["risk-sweep", "-c", "small.toml", "--mc-samples", "1000"]);
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains(",monte_carlo,")).count(), 4);
    assert_eq!(text.lines().filter(|l| l.contains(",closed_form,")).count(), 4);
}

#[test]
fn mc_check_writes_both_domains() {
    let dir = setup();
    let o = silentlab(dir.path(), &["mc-check", "-c", "small.toml", "--n", "20000"]);
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("out/mc_check.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/8 points within 4 standard errors"));
}

#[test]
fn generate_writes_train_and_test_domains() {
    let dir = setup();
    let o = silentlab(dir.path(), &["generate", "-c", "small.toml", "--n", "50", "--latents"]);
    assert!(o.status.success());
    let train = fs::read_to_string(dir.path().join("out/train.csv")).unwrap();
    assert_eq!(train.lines().next().unwrap(), "y,x_0,x_1,zd_0,zs_0");
    assert_eq!(train.lines().count(), 51);
    assert!(dir.path().join("out/test_gamma_4.csv").exists());
}

#[test]
fn train_matches_the_experiment_row() {
    let dir = setup();
    silentlab(dir.path(), &["experiment", "-c", "small.toml", "--out", "exp"]);
    let o = silentlab(
        dir.path(),
        &[
            "train",
            "-c",
            "small.toml",
            "--arm",
            "lp_ft",
            "--pretrain",
            "oracle_dominant",
            "--config-id",
            "1",
            "--run",
            "2",
            "--out",
            "one",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("one/train.json")).unwrap()).unwrap();
    let test_risk = meta["risks"][1]["test_risk"].as_f64().unwrap();
    let rows = fs::read_to_string(dir.path().join("exp/rows.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(rows.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let hit = reader
        .records()
        .map(Result::unwrap)
        .find(|r| {
            &r[col("config_id")] == "1"
                && &r[col("seed")] == "2"
                && &r[col("arm")] == "lp_ft"
                && &r[col("pretrain")] == "oracle_dominant"
                && &r[col("gamma")] == "4"
                && &r[col("method")] == "closed_form"
        })
        .expect("matching experiment row");
    // serde_json's default float parser may be one ulp off.
    assert!((hit[col("test_risk")].parse::<f64>().unwrap() - test_risk).abs() <= 1e-15);
    let model = fs::read_to_string(dir.path().join("one/model.txt")).unwrap();
    assert!(model.starts_with("silentlab-model v1"));
}

#[test]
fn demo_emits_points_and_lines() {
    let dir = setup();
    let o = silentlab(dir.path(), &["demo-fig3", "--n", "100"]);
    assert!(o.status.success());
    let points = fs::read_to_string(dir.path().join("out/demo_points.csv")).unwrap();
    assert_eq!(points.lines().count(), 1 + 200);
    let lines = fs::read_to_string(dir.path().join("out/demo_lines.csv")).unwrap();
    assert!(lines.contains("lp_only_oracle_silent"));
}

#[test]
fn zero_jobs_rejected() {
    let dir = setup();
    let o = silentlab(dir.path(), &["defaults", "--jobs", "0"]);
    assert!(!o.status.success());
    assert_eq!(errors(&o)[0]["kind"], "cli");
}
