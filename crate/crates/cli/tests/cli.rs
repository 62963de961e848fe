use std::process::{Command, Output};

fn mirage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirage"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn dry_run_touches_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    for cmd in ["gen-data", "label-gains", "predict", "all"] {
        let o = mirage(&[
            cmd,
            "--dry-run",
            "--mock-llm",
            "--seed",
            "3",
            "--out",
            out_s,
        ]);
        assert!(
            o.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(text.contains("seed = 3"), "{cmd}: {text}");
        assert!(!out.exists(), "{cmd} created {}", out.display());
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn predict_without_selector_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = mirage(&[
        "predict",
        "--mock-llm",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run train-selector first"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn bad_baseline_flag_is_rejected() {
    let o = mirage(&["evaluate", "--dry-run", "--baseline", "nopath"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("NAME=PATH"));
}

#[test]
fn small_pipeline_runs_stage_by_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, "[generator]\ncompanies = 160\ninvestors = 25\n").unwrap();
    let out = dir.path().join("out");
    let common = [
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--mock-llm",
    ];
    for stage in [
        "gen-data",
        "label-gains",
        "train-selector",
        "eval-selector",
        "run-agents",
        "train-gate",
        "predict",
        "evaluate",
    ] {
        let mut args = vec![stage];
        args.extend(common);
        let o = mirage(&args);
        assert!(
            o.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(String::from_utf8_lossy(&o.stdout).starts_with(&format!("[{stage}]")));
    }
    for f in [
        "predictions.jsonl",
        "metrics.csv",
        "monthly.csv",
        "config.resolved.toml",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(
        metrics.lines().any(|l| l.starts_with("ap_at_5,")),
        "{metrics}"
    );
}
