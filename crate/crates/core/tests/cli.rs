use std::path::Path;
use std::process::{Command, Output};

use cocodiff::config::RunConfig;
use cocodiff::dataset::load_dataset;

fn cocodiff(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cocodiff"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn gen_data_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for (seed, out) in [("3", "a.txt"), ("3", "b.txt"), ("4", "c.txt")] {
        let o = cocodiff(p, &["--seed", seed, "gen-data", "--classes", "2", "--per-class", "3", "--frames", "4", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |f: &str| std::fs::read(p.join(f)).unwrap();
    assert_eq!(read("a.txt"), read("b.txt"));
    assert_ne!(read("a.txt"), read("c.txt"));
    let ds = load_dataset(p.join("a.txt")).unwrap();
    assert_eq!((ds.num_classes(), ds.len(), ds.shape.frames), (2, 6, 4));
}

#[test]
fn missing_required_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["gen-data"][..], &["train"], &["eval", "--data", "x.txt"], &["sweep", "--data", "x.txt"], &[]] {
        let o = cocodiff(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: kind=usage"));
    }
    let o = cocodiff(dir.path(), &["--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = cocodiff(dir.path(), &["train", "--data", "missing.txt"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cocodiff(dir.path(), &["--set", "epochs=many", "--print-config"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn printed_config_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = cocodiff(p, &["--seed", "12", "--set", "lambda=0.01", "--set", "widths=4,8", "--print-config"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = RunConfig::from_text(&text).unwrap();
    assert_eq!(cfg.train.lambda, 0.01);
    assert_eq!(cfg.widths, [4, 8]);
    assert_eq!(cfg.train.noise_seed, 12);

    std::fs::write(p.join("run.cfg"), &text).unwrap();
    let again = cocodiff(p, &["--config", "run.cfg", "--print-config"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}
