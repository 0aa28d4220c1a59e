use std::path::Path;
use std::process::{Command, Output};

fn nestfield(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nestfield"))
        .args(args)
        .env("NESTFIELD_OUT", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: [&str; 4] = ["--set", "data.height=8", "--set", "data.width=8"];

#[test]
fn fit_image_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["fit-image", "--epochs", "5", "--seeds", "0,1"];
    args.extend(TINY);
    let o = nestfield(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("image nestnet seed=")).count(), 2, "{text}");
    assert!(text.contains("best: seed="), "{text}");

    let runs: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    let results = std::fs::read_to_string(runs[0].join("results.jsonl")).unwrap();
    assert_eq!(results.lines().count(), 2);
    assert!(runs[0].join("seed-0").join("checkpoint.nfck").is_file());
    assert!(runs[0].join("seed-1").join("reconstruction.ppm").is_file());
}

#[test]
fn json_mode_prints_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["denoise", "--epochs", "3", "--seed", "7", "--json", "--model", "siren"];
    args.extend(TINY);
    let o = nestfield(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["model"], "siren");
    assert_eq!(v["epochs"], 3);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "task = \"occupancy\"\nseeds = [2]\n[data]\nresolution = 8\n[train]\nepochs = 2\n").unwrap();
    let o = nestfield(
        &["fit-occupancy", "--config", cfg.to_str().unwrap(), "--set", "model.width=8"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("occupancy nestnet seed=2 iou="), "{}", stdout(&o));
}

#[test]
fn bad_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "task = \"image\"\n[train]\nepochz = 1\n").unwrap();
    let o = nestfield(&["fit-image", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("epochz"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nestfield(&["fit-image", "--epochs", "x"], dir.path()).status.code(), Some(2));
    assert_eq!(nestfield(&["nope"], dir.path()).status.code(), Some(2));
    assert_eq!(nestfield(&["sweep-lr"], dir.path()).status.code(), Some(2));
}

#[test]
fn lr_sweep_prints_one_row_per_rate() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep-lr", "--task", "image", "--lrs", "0.01,0.001", "--epochs", "2", "--seed", "0"];
    args.extend(TINY);
    let o = nestfield(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("lr=")).count(), 2, "{text}");
}

#[test]
fn dump_activations_for_mlp_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["dump-activations", "--model", "mlp_relu", "--epochs", "2", "--seed", "0"];
    args.extend(TINY);
    let o = nestfield(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("no learned activations"));

    let mut args = vec!["dump-activations", "--epochs", "2", "--seed", "0"];
    args.extend(TINY);
    let o = nestfield(&args, dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    let files: Vec<&str> = text.lines().map(str::trim).collect();
    assert_eq!(files.len(), 2, "{text}");
    assert!(files.iter().all(|f| Path::new(f).is_file()));
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = nestfield(&["verify"], dir.path());
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
}
