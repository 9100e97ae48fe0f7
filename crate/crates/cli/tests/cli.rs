use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn motion_bench(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motion-bench"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{"trajectories_per_pattern": 2, "trials_per_pattern_per_model": 1, "epochs": 3, "trial_frames": 80}"#,
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path());
    for (cmd, extra) in [
        ("gen-data", vec![]),
        ("train", vec![]),
        ("run", vec!["--sequential"]),
        ("report", vec![]),
    ] {
        let mut args = vec![cmd, "--config", config.as_str(), "--seed", "5"];
        args.extend(extra);
        let o = motion_bench(&args, &out);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        if cmd == "report" {
            let stdout = String::from_utf8(o.stdout).unwrap();
            assert_eq!(stdout.lines().count(), 5);
            assert!(stdout.lines().any(|l| l.starts_with("none") && l.contains("n/a")));
        }
    }
    assert!(out.join("report").join("safety_efficiency.csv").exists());
    let report = fs::read_to_string(out.join("report").join("prediction_error.csv")).unwrap();
    assert!(report.contains("\"master_seed\":5"));
}

#[test]
fn failures_exit_nonzero_with_a_category() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let o = motion_bench(&["train"], &out);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[io]"));

    let o = motion_bench(&["report"], &out);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error["));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"horizon": 4}"#).unwrap();
    let o = motion_bench(&["gen-data", "--config", bad.to_str().unwrap()], &out);
    assert!(!o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(
        stderr.contains("error[validation]") || stderr.contains("error[configuration]"),
        "{stderr}"
    );

    let o = motion_bench(&["no-such-command"], &out);
    assert!(!o.status.success());
}
