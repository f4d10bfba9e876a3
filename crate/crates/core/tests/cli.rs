use std::path::Path;
use std::process::{Command, Output};

fn wsilrma(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsilrma")).args(args).current_dir(cwd).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_1_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["separate"][..], &["bogus"], &["separate", "x.wav", "--eta", "-1"], &["simulate", "--t60", "abc"]] {
        let o = wsilrma(args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        let line = stderr(&o);
        assert!(line.lines().any(|l| l.starts_with("error: kind=")), "{line}");
    }
}

#[test]
fn runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = wsilrma(&["separate", "missing.wav"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error: kind="));
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "[separator]\nno_such_field = 3\n").unwrap();
    let o = wsilrma(&["--config", "cfg.toml", "simulate"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("kind=config"));
}

#[test]
fn simulate_separate_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = wsilrma(
        &["simulate", "--t60", "0", "--condition", "2", "--sample-rate", "8000", "--duration", "1", "--seed", "4"],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["mixture.wav", "image_0.wav", "image_1.wav", "room.json"] {
        assert!(d.join("simulated").join(f).exists(), "{f}");
    }

    std::fs::write(d.join("cfg.toml"), "[separator]\nouter_iters = 4\nrank = 2\n[stft]\nframe_len = 256\nhop = 128\n")
        .unwrap();
    let o = wsilrma(
        &[
            "--config",
            "cfg.toml",
            "separate",
            "simulated/mixture.wav",
            "--backend",
            "auxiva",
            "--references",
            "simulated/image_0.wav",
            "simulated/image_1.wav",
            "--filter-len",
            "16",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("separated/report.json")).unwrap()).unwrap();
    assert!(report.get("sir").is_some() || report.to_string().contains("sir"), "{report}");

    let o = wsilrma(&["eval", "simulated/mixture.wav", "simulated/mixture.wav", "--filter-len", "1"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("sdr"));
}
