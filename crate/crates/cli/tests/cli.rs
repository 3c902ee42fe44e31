//! End-to-end runs of the `refrec` binary against small synthetic rating
//! files: artifact layout, exit codes, determinism, and config round-trips.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use refrec::synth::{generate, write_ml_dat, SynthConfig};

fn refrec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_refrec"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixture(dir: &Path) -> PathBuf {
    let cfg = SynthConfig {
        n_users: 60,
        n_items: 40,
        rank: 3,
        density: 0.25,
        noise: 0.3,
        popularity_skew: 0.8,
        preference_sharpness: 3.0,
        seed: 11,
    };
    let path = dir.join("ratings.dat");
    write_ml_dat(&path, &generate(&cfg)).unwrap();
    path
}

/// Small, fast hyperparameters shared by the training tests. The residual
/// is off so validation RMSE moves within a few epochs on tiny data.
fn small_args(cmd: &mut Command, data: &Path, out: &Path, epochs: usize, patience: usize) {
    cmd.arg("--data")
        .arg(data)
        .args(["--dp", "8"])
        .args(["--epochs", &epochs.to_string(), "--patience", &patience.to_string()])
        .args(["--batch", "64", "--alpha", "2", "--lr", "0.05"])
        .args(["--residual", "off", "--deterministic"])
        .arg("--out")
        .arg(out);
}

fn base_args(cmd: &mut Command, data: &Path, out: &Path) {
    small_args(cmd, data, out, 25, 6);
}

#[test]
fn help_exits_zero() {
    let out = run(refrec().arg("--help"));
    assert!(out.status.success());
    assert!(stdout(&out).contains("train"));
}

#[test]
fn unknown_flag_exits_one() {
    let out = run(refrec().args(["train", "--bogus"]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_config_key_exits_one_and_lists_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.config");
    fs::write(&cfg, "alpah = 2\n").unwrap();
    let out = run(refrec().arg("train").arg("--config").arg(&cfg));
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("alpah"), "{err}");
    assert!(err.contains("valid keys"), "{err}");
}

#[test]
fn missing_data_flag_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(refrec().arg("train").arg("--out").arg(dir.path().join("r")));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--data"), "{}", stderr(&out));
}

#[test]
fn unreadable_data_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(refrec()
        .arg("train")
        .arg("--data")
        .arg(dir.path().join("nope.dat"))
        .arg("--out")
        .arg(dir.path().join("r")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_finite_loss_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let mut cmd = refrec();
    cmd.arg("train")
        .arg("--data")
        .arg(&data)
        .args(["--dp", "8", "--epochs", "10", "--batch", "64"])
        .args(["--residual", "off", "--lr", "1e200"])
        .arg("--out")
        .arg(dir.path().join("r"));
    let out = run(&mut cmd);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("non-finite"), "{}", stderr(&out));
}

#[test]
fn train_writes_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let run_dir = dir.path().join("run");
    let mut cmd = refrec();
    cmd.arg("train");
    base_args(&mut cmd, &data, &run_dir);
    let out = run(&mut cmd);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["config.resolved", "epochs.csv", "model.ckpt", "summary.txt"] {
        assert!(run_dir.join(name).exists(), "missing {name}");
    }
    let epochs = fs::read_to_string(run_dir.join("epochs.csv")).unwrap();
    assert!(epochs.starts_with("epoch,recon,l2_V,l2_W,reg,total,val_rmse,seconds"));
    assert!(stdout(&out).contains("best validation rmse"));
}

#[test]
fn evaluate_scores_a_saved_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let train_dir = dir.path().join("t");
    let mut cmd = refrec();
    cmd.arg("train");
    base_args(&mut cmd, &data, &train_dir);
    assert!(run(&mut cmd).status.success());

    let eval_dir = dir.path().join("e");
    let out = run(refrec()
        .arg("evaluate")
        .arg("--data")
        .arg(&data)
        .arg("--checkpoint")
        .arg(train_dir.join("model.ckpt"))
        .arg("--out")
        .arg(&eval_dir));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("rmse:"));
    let json = fs::read_to_string(eval_dir.join("metrics.json")).unwrap();
    assert!(json.contains("\"rmse\""), "{json}");
    assert!(eval_dir.join("metrics.txt").exists());
}

#[test]
fn evaluate_rejects_a_mismatched_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let other = dir.path().join("other.dat");
    write_ml_dat(
        &other,
        &generate(&SynthConfig {
            n_users: 30,
            n_items: 20,
            seed: 5,
            ..SynthConfig::default()
        }),
    )
    .unwrap();

    let train_dir = dir.path().join("t");
    let mut cmd = refrec();
    cmd.arg("train");
    base_args(&mut cmd, &data, &train_dir);
    assert!(run(&mut cmd).status.success());

    let out = run(refrec()
        .arg("evaluate")
        .arg("--data")
        .arg(&other)
        .arg("--checkpoint")
        .arg(train_dir.join("model.ckpt"))
        .arg("--out")
        .arg(dir.path().join("e")));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("vectors"), "{}", stderr(&out));
}

#[test]
fn deterministic_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let mut curves = Vec::new();
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let run_dir = dir.path().join(name);
        let mut cmd = refrec();
        cmd.arg("train");
        base_args(&mut cmd, &data, &run_dir);
        assert!(run(&mut cmd).status.success());
        curves.push(fs::read(run_dir.join("epochs.csv")).unwrap());

        let eval_dir = dir.path().join(format!("{name}-eval"));
        let out = run(refrec()
            .arg("evaluate")
            .arg("--data")
            .arg(&data)
            .arg("--checkpoint")
            .arg(run_dir.join("model.ckpt"))
            .arg("--out")
            .arg(&eval_dir));
        assert!(out.status.success(), "{}", stderr(&out));
        reports.push(fs::read(eval_dir.join("metrics.json")).unwrap());
    }
    assert_eq!(curves[0], curves[1]);
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn the_echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let first = dir.path().join("first");
    let mut cmd = refrec();
    cmd.arg("train");
    base_args(&mut cmd, &data, &first);
    assert!(run(&mut cmd).status.success());

    let second = dir.path().join("second");
    let out = run(refrec()
        .arg("train")
        .arg("--config")
        .arg(first.join("config.resolved"))
        .arg("--out")
        .arg(&second));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        fs::read(first.join("epochs.csv")).unwrap(),
        fs::read(second.join("epochs.csv")).unwrap()
    );
}

#[test]
fn ablate_reports_all_three_arms() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let run_dir = dir.path().join("ab");
    let mut cmd = refrec();
    cmd.arg("ablate");
    base_args(&mut cmd, &data, &run_dir);
    let out = run(&mut cmd);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(run_dir.join("ablate.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4, "{csv}");
    assert!(lines[1].starts_with("reflect,implicit,"));
    assert!(lines[2].starts_with("plain,plain,"));
    assert!(lines[3].starts_with("neighbor,plain,"));
}

#[test]
fn studies_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());

    let decay_dir = dir.path().join("d");
    let mut cmd = refrec();
    cmd.arg("decay-study");
    small_args(&mut cmd, &data, &decay_dir, 12, 4);
    cmd.args(["--alpha-grid", "2,0.5"]);
    let out = run(&mut cmd);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(decay_dir.join("decay.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9, "{csv}");
    assert_eq!(csv.matches(",yes,").count(), 4, "{csv}");

    let orient_dir = dir.path().join("o");
    let mut cmd = refrec();
    cmd.arg("orientation-study");
    small_args(&mut cmd, &data, &orient_dir, 12, 4);
    let out = run(&mut cmd);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(orient_dir.join("orientation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(csv.contains("\nitem,"), "{csv}");
    assert!(csv.contains("\nuser,"), "{csv}");

    let sparse_dir = dir.path().join("s");
    let mut cmd = refrec();
    cmd.arg("sparsity-study");
    small_args(&mut cmd, &data, &sparse_dir, 12, 4);
    let out = run(&mut cmd);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(sparse_dir.join("sparsity.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11, "{csv}");
}

#[test]
fn grid_writes_a_loadable_champion_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let grid_dir = dir.path().join("g");
    let mut cmd = refrec();
    cmd.arg("grid");
    small_args(&mut cmd, &data, &grid_dir, 10, 4);
    cmd.args(["--lambda-grid", "0.05,0.005", "--alpha-grid", "2"]);
    let out = run(&mut cmd);
    assert!(out.status.success(), "{}", stderr(&out));
    // lambda1_2 x lambda_reg x alpha = 2 x 2 x 1 combinations.
    let csv = fs::read_to_string(grid_dir.join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "{csv}");

    let out = run(refrec()
        .arg("train")
        .arg("--config")
        .arg(grid_dir.join("best.config"))
        .args(["--epochs", "2"])
        .arg("--out")
        .arg(dir.path().join("retrain")));
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn verify_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("v");
    let out = run(refrec()
        .arg("verify")
        .args(["--seed", "42"])
        .arg("--out")
        .arg(&run_dir));
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("0 violations"), "{text}");
    assert!(text.contains("(control, failure expected)"), "{text}");
    assert!(run_dir.join("verify.txt").exists());
    let jsonl = fs::read_to_string(run_dir.join("verify.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 12, "{jsonl}");
}

#[test]
fn export_latent_writes_selected_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let train_dir = dir.path().join("t");
    let mut cmd = refrec();
    cmd.arg("train");
    base_args(&mut cmd, &data, &train_dir);
    assert!(run(&mut cmd).status.success());

    let ex_dir = dir.path().join("x");
    let out = run(refrec()
        .arg("export-latent")
        .arg("--data")
        .arg(&data)
        .arg("--checkpoint")
        .arg(train_dir.join("model.ckpt"))
        .args(["--vectors", "0,3,7"])
        .arg("--out")
        .arg(&ex_dir));
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(ex_dir.join("latent.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");
    assert!(csv.starts_with("vector_id,observed,z0"), "{csv}");
}
