use std::path::Path;
use std::process::{Command, Output};

fn qtl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtl")).args(args).output().expect("spawn qtl")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn regime_run_succeeds_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mode = regime\n");
    let out = dir.path().join("out");
    let o = qtl(&["regime", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = String::from_utf8_lossy(&o.stdout);
    assert!(line.contains("k_min"), "{line}");
    let report = std::fs::read_to_string(out.join("regime.txt")).unwrap();
    assert!(report.contains("localization"));
    assert!(out.join("resolved_config.txt").exists());
}

#[test]
fn quantum_outputs_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mode = quantum\nhbar = 1e-2\nk = 1e3\ngrid.n = 2048\ndt = 1e-3\nt_end = 0.2\nrecord.window = 0.02\n",
    );
    let out = dir.path().join("out");
    let o = qtl(&["quantum", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let traj = std::fs::read_to_string(out.join("trajectory_000.csv")).unwrap();
    let lines: Vec<&str> = traj.lines().collect();
    assert_eq!(lines[0], "# qtl csv schema 1");
    assert!(lines[1].starts_with("# fingerprint "));
    assert_eq!(lines[2], "# seed 9");
    assert!(lines.contains(&"# config seed = 9"));
    let header = lines.iter().position(|l| !l.starts_with('#')).unwrap();
    assert_eq!(lines[header], qtl_core::output::TRAJECTORY_HEADER);
    // 0.2 / (10 * 1e-3) samples plus t = 0
    assert_eq!(lines.len() - header - 1, 21);
    for name in ["record_raw_000.csv", "record_avg_000.csv", "strobe.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn cli_mode_and_seed_fill_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\nt_end = 0.5\n");
    let out = dir.path().join("out");
    let o = qtl(&["classical", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let resolved = std::fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(resolved.contains("mode = classical"));
    assert!(resolved.contains("seed = 3"));
}

#[test]
fn mode_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mode = regime\nseed = 1\n");
    let o = qtl(&["classical", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mode = quantum\nseed = 1\nsystem.mass = 2\n");
    let o = qtl(&["quantum", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "mode = quantum\n");
    let o = qtl(&["quantum", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2), "stochastic mode without seed");

    let cfg = write_config(dir.path(), "mode = regime\neta = 1.5\n");
    let o = qtl(&["regime", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreadable_config_and_bad_mode_exit_2() {
    let o = qtl(&["regime", "--config", "/nonexistent/qtl.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mode = regime\n");
    let o = qtl(&["tunnel", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let o = qtl(&["regime"]);
    assert_eq!(o.status.code(), Some(2), "missing --config");
}

#[test]
fn leak_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // packet with p = 8 hits the edge of a short box
    let cfg = write_config(
        dir.path(),
        "mode = quantum\nseed = 1\nhbar = 0.1\nk = 0\nlambda = 0\ngrid.x_min = -5\ngrid.x_max = 5\n\
         grid.n = 512\ninit.x0 = 0\ninit.sigma = 0.3\ndt = 1e-3\nt_end = 2\n",
    );
    let out = dir.path().join("out");
    let o = qtl(&["quantum", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("leak"), "{}", stderr(&o));
}
