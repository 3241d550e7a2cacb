use std::path::Path;
use std::process::{Command, Output};

fn uwac(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uwac"))
        .args(args)
        .current_dir(dir)
        .env_remove("UWAC_SEED")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = uwac(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(dir: &Path, p: &str) -> Vec<u8> {
    std::fs::read(dir.join(p)).unwrap()
}

const SMALL_TRAIN: &[&str] = &["--preset", "desk", "--epochs", "5", "--steps-per-epoch", "20", "--eval-episodes", "2", "--passes", "4"];

fn train(dir: &Path, dataset: &str, out: &str, extra: &[&str]) -> String {
    let mut args = vec!["train", "--dataset", dataset, "--out-dir", out];
    args.extend_from_slice(SMALL_TRAIN);
    args.extend_from_slice(extra);
    ok(dir, &args)
}

#[test]
fn gen_clip_train_pipeline() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(d, &["gen-dataset", "--out", "full.uwds", "--episodes", "20", "--seed", "3"]);
    ok(d, &["clip-dataset", "--in", "full.uwds", "--out", "right.uwds", "--axis", "x", "--threshold", "0.1", "--keep", "above"]);
    let stdout = train(d, "right.uwds", "run", &[]);
    assert!(stdout.trim_end().ends_with("run/manifest.json"), "{stdout}");
    let metrics = String::from_utf8(read(d, "run/metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,eval_return,q_target_mean,weight_mean,critic_loss,actor_loss,mmd_mean,target_var_mean"
    );
    assert_eq!(lines.count(), 5);
    assert!(d.join("run/checkpoint").is_dir());

    ok(d, &["eval", "--checkpoint", "run/checkpoint", "--episodes", "2"]);
    ok(d, &["heatmap", "--checkpoint", "run/checkpoint", "--dataset", "full.uwds", "--bins", "8", "--split-x", "0", "--out-prefix", "hm"]);
    for f in ["hm.csv", "hm.svg", "hm.json", "hm.manifest.json"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    assert!(String::from_utf8(read(d, "hm.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn identical_commands_give_identical_bytes() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(d, &["gen-dataset", "--out", "a.uwds", "--episodes", "10", "--seed", "5"]);
    ok(d, &["gen-dataset", "--out", "b.uwds", "--episodes", "10", "--seed", "5"]);
    assert_eq!(read(d, "a.uwds"), read(d, "b.uwds"));
    ok(d, &["gen-dataset", "--out", "c.uwds", "--episodes", "10", "--seed", "6"]);
    assert_ne!(read(d, "a.uwds"), read(d, "c.uwds"));

    train(d, "a.uwds", "r1", &["--seed", "2"]);
    train(d, "a.uwds", "r2", &["--seed", "2"]);
    assert_eq!(read(d, "r1/metrics.csv"), read(d, "r2/metrics.csv"));

    let first = read(d, "r1/metrics.csv");
    std::fs::remove_file(d.join("r1/metrics.csv")).unwrap();
    ok(d, &["replay", "--manifest", "r1/manifest.json"]);
    assert_eq!(read(d, "r1/metrics.csv"), first);
}

#[test]
fn seed_comes_from_the_environment_when_not_given() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let run = |seed: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_uwac"))
            .args(["gen-dataset", "--out", out, "--episodes", "4"])
            .current_dir(d)
            .env("UWAC_SEED", seed)
            .output()
            .unwrap();
        assert!(o.status.success());
    };
    run("11", "env.uwds");
    ok(d, &["gen-dataset", "--out", "flag.uwds", "--episodes", "4", "--seed", "11"]);
    assert_eq!(read(d, "env.uwds"), read(d, "flag.uwds"));
}

#[test]
fn roc_without_dropout_is_chance() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(d, &["gen-dataset", "--out", "a.uwds", "--episodes", "5", "--seed", "1"]);
    ok(d, &["train", "--dataset", "a.uwds", "--out-dir", "r", "--preset", "desk", "--epochs", "1", "--steps-per-epoch", "5", "--eval-episodes", "1", "--dropout", "0"]);
    ok(d, &["roc", "--checkpoint", "r/checkpoint", "--dataset", "a.uwds", "--max-states", "100", "--out", "roc.json"]);
    let report: serde_json::Value = serde_json::from_slice(&read(d, "roc.json")).unwrap();
    assert_eq!(report["auc"].as_f64().unwrap(), 0.5);
}

#[test]
fn train_help_lists_config_defaults() {
    let t = tempfile::tempdir().unwrap();
    let help = ok(t.path(), &["train", "--help"]);
    for want in ["[config default: 0.8]", "[config default: 10.0]", "[config default: 0.005]", "[config default: 0.1]"] {
        assert!(help.contains(want), "missing {want}");
    }
    let top = ok(t.path(), &["--help"]);
    assert!(top.contains("Exit codes"));
    for sub in ["gen-dataset", "clip-dataset", "train", "eval", "heatmap", "roc", "gradcheck", "bound-check", "compare", "replay"] {
        assert!(top.contains(sub), "{sub}");
    }
}

#[test]
fn exit_codes_follow_error_categories() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let o = uwac(d, &["train", "--no-such-flag"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[usage]"));

    let o = uwac(d, &["clip-dataset", "--in", "missing.uwds", "--out", "x.uwds", "--axis", "x", "--threshold", "0", "--keep", "above"]);
    assert_eq!(code(&o), 3);

    std::fs::write(d.join("junk.uwds"), b"not a dataset at all").unwrap();
    let o = uwac(d, &["clip-dataset", "--in", "junk.uwds", "--out", "x.uwds", "--axis", "x", "--threshold", "0", "--keep", "above"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("at byte"));

    let o = uwac(d, &["gradcheck", "--cases", "2", "--tol", "0", "--out", "g.json"]);
    assert_eq!(code(&o), 5);

    ok(d, &["gen-dataset", "--out", "a.uwds", "--episodes", "2"]);
    let o = uwac(d, &["train", "--dataset", "a.uwds", "--out-dir", "r", "--beta", "-1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn compare_and_bound_check_write_reports() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let header = "epoch,eval_return,q_target_mean,weight_mean,critic_loss,actor_loss,mmd_mean,target_var_mean\n";
    std::fs::write(d.join("a.csv"), format!("{header}0,10,20,1,0,0,0,0\n1,10,900,1,0,0,0,0\n")).unwrap();
    std::fs::write(d.join("b.csv"), format!("{header}0,10,20,1,0,0,0,0\n1,12,30,1,0,0,0,0\n")).unwrap();
    ok(d, &["compare", "--metrics-a", "a.csv", "--metrics-b", "b.csv", "--out", "cmp.csv"]);
    let v: serde_json::Value = serde_json::from_slice(&read(d, "cmp.csv.verdicts.json")).unwrap();
    assert_eq!(v["a"]["exploded_at"], 1);
    assert!(v["b"]["exploded_at"].is_null());

    ok(d, &["bound-check", "--dist", r#"{"kind":"uniform","lo":-1,"hi":1}"#, "--trials", "2000", "--out", "b.json"]);
    let r: serde_json::Value = serde_json::from_slice(&read(d, "b.json")).unwrap();
    assert_eq!(r["holds"], true);
}
