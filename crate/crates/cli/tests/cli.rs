use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use slcrit_core::{GridFunction, LoopFamily};

fn slcrit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slcrit"))
        .args(args)
        .env_remove("SLCRIT_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_reports_sigma() {
    let out = slcrit(&[
        "analyze", "--f", "x^2/2", "--range", "-30", "30", "--mmax", "5",
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["sigma"], serde_json::json!([1, 2, 3, 4, 5]));

    let out = slcrit(&["analyze", "--f", "exp(x)"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["sigma"], serde_json::json!([]));
}

#[test]
fn syntax_errors_exit_2_with_position() {
    let out = slcrit(&["analyze", "--f", "x^^2"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("position 2"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&slcrit(&["nonsense"])), 1);
    assert_eq!(code(&slcrit(&["find", "--f", "x^2/2", "--n", "15"])), 1);
    assert_eq!(
        code(&slcrit(&["analyze", "--f", "x", "--range", "3", "1"])),
        1
    );
}

#[test]
fn free_angle_is_arctan() {
    let dir = tempfile::tempdir().unwrap();
    let u = dir.path().join("zero.csv");
    fs::write(
        &u,
        GridFunction::zeros(slcrit_core::Grid::new(1024).unwrap()).to_csv(),
    )
    .unwrap();
    let out = slcrit(&["omega", "--f", "0", "--m", "2", "--u", path(&u)]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,omega"));
    for line in lines {
        let (t, w) = line.split_once(',').unwrap();
        let (t, w): (f64, f64) = (t.parse().unwrap(), w.parse().unwrap());
        assert!((w - (2.0 * t).atan()).abs() < 1e-8);
    }
}

#[test]
fn found_member_passes_the_omega_check_and_projects_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = slcrit(&[
        "find",
        "--f",
        "x^2/2",
        "--m",
        "2",
        "--out",
        path(d),
        "--plot",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let member = d.join("member.csv");
    assert!(fs::read_to_string(d.join("member.svg"))
        .unwrap()
        .contains("viewBox=\"0 0 800 600\""));

    let out = slcrit(&["omega", "--f", "x^2/2", "--m", "2", "--u", path(&member)]);
    let last = stdout(&out).lines().last().unwrap().to_string();
    let w: f64 = last.split_once(',').unwrap().1.parse().unwrap();
    assert!((w - 2.0 * std::f64::consts::PI).abs() < 1e-8);

    let proj = d.join("p");
    let out = slcrit(&[
        "project",
        "--f",
        "x^2/2",
        "--m",
        "2",
        "--u",
        path(&member),
        "--out",
        path(&proj),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        fs::read(&member).unwrap(),
        fs::read(proj.join("projected.csv")).unwrap()
    );
}

#[test]
fn empty_sigma_exits_5() {
    assert_eq!(code(&slcrit(&["find", "--f", "exp(x)", "--m", "1"])), 5);
}

#[test]
fn malformed_csv_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let good = GridFunction::zeros(slcrit_core::Grid::new(64).unwrap()).to_csv();
    let mut lines: Vec<&str> = good.lines().collect();
    lines.remove(10);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n")).unwrap();
    assert_eq!(code(&slcrit(&["omega", "--f", "0", "--u", path(&bad)])), 4);
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        code(&slcrit(&["omega", "--f", "0", "--u", path(&missing)])),
        4
    );
}

#[test]
fn loops_are_constant_at_zero_amplitude_and_fail_when_huge() {
    let out = slcrit(&[
        "loop",
        "--f",
        "x^2/2",
        "--n",
        "256",
        "--samples",
        "4",
        "--amplitude",
        "0",
    ]);
    assert_eq!(code(&out), 0);
    let fam = LoopFamily::from_json(&stdout(&out)).unwrap();
    assert!(fam.samples.iter().all(|u| u == &fam.samples[0]));

    let out = slcrit(&[
        "loop",
        "--f",
        "x^2/2",
        "--n",
        "256",
        "--samples",
        "4",
        "--amplitude",
        "10",
    ]);
    assert_eq!(code(&out), 6);
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));
}

#[test]
fn corrupted_loop_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("loop.json");
    fs::write(&bad, "{\"m\": 1, \"n\": 16").unwrap();
    let out = slcrit(&[
        "contract",
        "--f",
        "x^2/2",
        "--loop",
        path(&bad),
        "--out",
        path(&dir.path().join("t")),
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn bad_parameters_are_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = slcrit(&[
        "loop",
        "--f",
        "x^2/2",
        "--n",
        "256",
        "--samples",
        "2",
        "--out",
        path(d),
    ]);
    assert_eq!(code(&out), 0);
    let lp = d.join("loop.json");
    let out = slcrit(&[
        "contract",
        "--f",
        "x^2/2",
        "--loop",
        path(&lp),
        "--delta2",
        "0.2",
        "--out",
        path(&d.join("t")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(!d.join("t").exists());
}

/// Largest stage-4 `mu_AT` in a `residuals.csv`.
fn max_mu(dir: &Path) -> f64 {
    fs::read_to_string(dir.join("residuals.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("4,"))
        .map(|l| l.split(',').nth(4).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max)
}

#[test]
fn contract_certifies_and_coarse_walls_leave_more_gap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "loop",
        "--f",
        "x^2/2",
        "--n",
        "512",
        "--samples",
        "4",
        "--amplitude",
        "0.5",
        "--seed",
        "3",
    ];
    let out = slcrit(&[&args[..], &["--out", path(d)]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let lp = d.join("loop.json");
    let mut mus = Vec::new();
    for tol in ["0.5", "0.05"] {
        let t = d.join(format!("tol{tol}"));
        let out = slcrit(&[
            "contract",
            "--f",
            "x^2/2",
            "--loop",
            path(&lp),
            "--tol-wall",
            tol,
            "--out",
            path(&t),
            "--frames",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(v["certification"]["certified"], true);
        for k in 0..=5 {
            assert!(t.join(format!("stage{k}/theta0.csv")).exists());
        }
        assert!(t.join("frames/stage4_s4.svg").exists());
        mus.push(max_mu(&t));
    }
    assert!(mus[0] > mus[1], "{mus:?}");
}

#[test]
fn aborted_contraction_keeps_the_partial_trace() {
    // A stage-2 offset far beyond the solder bound aborts the run.
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = slcrit(&[
        "loop",
        "--f",
        "x^2/2",
        "--n",
        "256",
        "--samples",
        "0",
        "--out",
        path(d),
    ]);
    assert_eq!(code(&out), 0);
    let lp = d.join("loop.json");
    let t = d.join("t");
    let out = slcrit(&[
        "contract",
        "--f",
        "x^2/2",
        "--loop",
        path(&lp),
        "--eta",
        "10",
        "--out",
        path(&t),
    ]);
    assert_eq!(code(&out), 7, "{}", String::from_utf8_lossy(&out.stderr));
    let params: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(t.join("params.json")).unwrap()).unwrap();
    assert_eq!(params["certification"], serde_json::Value::Null);
    assert!(stdout(&out).is_empty());
}
