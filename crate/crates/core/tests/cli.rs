mod common;

use std::process::Command;

use common::{config_path, load};
use confnet::cli::{run_experiment, Mode};

fn confnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_confnet"))
}

#[test]
fn dumbbell_modes_match_expected_rates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load("dumbbell.conf");
    let celerity = run_experiment(&cfg, Mode::Celerity, &dir.path().join("c")).unwrap();
    for l in &celerity.lines {
        let opt = l.optimum_kbps.unwrap();
        assert!((opt - 240.0).abs() < 0.5, "{l:?}");
        assert!(l.converged_kbps / opt >= 0.95, "{l:?}");
    }
    let simulcast = run_experiment(&cfg, Mode::Simulcast, &dir.path().join("s")).unwrap();
    assert!(simulcast.lines.iter().all(|l| (l.converged_kbps - 120.0).abs() < 1.0));
    let oracle = run_experiment(&cfg, Mode::Oracle, &dir.path().join("o")).unwrap();
    assert!(oracle.lines.iter().all(|l| (l.converged_kbps - 240.0).abs() < 0.5));
}

#[test]
fn timeseries_is_well_formed_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let status = confnet()
            .args(["--config", config_path("churn.conf").to_str().unwrap()])
            .args(["--duration", "200", "--quiet", "--out"])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    };
    run("a");
    run("b");
    for f in ["timeseries.csv", "summary.txt"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }

    let mut reader = csv::Reader::from_path(dir.path().join("a/timeseries.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        vec!["t_s", "session", "send_kbps", "delay_ms", "loss", "utility"]
    );
    let mut last: std::collections::BTreeMap<String, f64> = Default::default();
    let mut sessions = std::collections::BTreeSet::new();
    for rec in reader.records() {
        let rec = rec.unwrap();
        let t: f64 = rec[0].parse().unwrap();
        let session = rec[1].to_string();
        if let Some(&prev) = last.get(&session) {
            assert!(t > prev, "{session}: {t} after {prev}");
        }
        last.insert(session.clone(), t);
        sessions.insert(session);
        for field in [&rec[2], &rec[3], &rec[4], &rec[5]] {
            let x: f64 = field.parse().unwrap();
            assert!(x.is_finite() && !field.starts_with('-'), "bad field {field}");
        }
    }
    // D joins at 120 s.
    assert_eq!(sessions.len(), 4);
}

#[test]
fn bad_configs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    std::fs::write(
        &bad,
        "[[node]]\nname = \"A\"\n[[link]]\nfrom = \"A\"\nto = \"Z\"\ndelay = 1\n",
    )
    .unwrap();
    let out = confnet().args(["--config"]).arg(&bad).arg("--quiet").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("link[0].to") && err.contains("link[0].capacity"), "{err}");

    let missing = confnet()
        .args(["--config"])
        .arg(dir.path().join("nope.conf"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn unknown_session_member_is_rejected() {
    let text = std::fs::read_to_string(config_path("dumbbell.conf"))
        .unwrap()
        .replace(r#"participants = ["A", "B", "C", "D"]"#, r#"participants = ["A", "B", "X"]"#);
    match confnet::cli::parse_config_str(&text) {
        Err(confnet::cli::ConfigError::Validation(errs)) => {
            assert!(errs.iter().any(|e| e.contains("conference.participants[2]")), "{errs:?}")
        }
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn bundled_configs_parse() {
    for name in [
        "dumbbell.conf",
        "dumbbell_cross.conf",
        "dumbbell_fail.conf",
        "churn.conf",
        "internet4.conf",
    ] {
        let cfg = load(name);
        assert!(cfg.duration_s > 0.0, "{name}");
    }
    let cfg = load("dumbbell.conf");
    let core = cfg.topology.link_by_name("E-F").unwrap();
    assert_eq!(cfg.topology.links()[core.0].capacity, 480.0);
}
