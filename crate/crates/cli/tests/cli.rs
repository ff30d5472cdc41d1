use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hele_shaw_cli::config::{Experiment, RunConfig, Schedule};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hele-shaw"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn last_row(csv: &str) -> Vec<String> {
    csv.lines().last().unwrap().split(',').map(String::from).collect()
}

#[test]
fn disk_injection_reaches_three() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["evolve", "--t-end", "4", "--out", "run"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(d.path().join("run/trajectory.csv"));
    assert!(csv.starts_with("t,a1_re,a1_im,M0,M1_re,M1_im,"));
    assert!(csv.lines().next().unwrap().ends_with("min_fprime,pg_residual,step_size"));
    let row = last_row(&csv);
    assert_eq!(row[0], "4");
    assert!((row[1].parse::<f64>().unwrap() - 3.0).abs() < 1e-8);
    let summary: serde_json::Value = serde_json::from_str(&read(d.path().join("run/summary.json"))).unwrap();
    assert_eq!(summary["termination"]["kind"], "completed");
    assert!((summary["final_state"][0][0].as_f64().unwrap() - 3.0).abs() < 1e-8);
}

#[test]
fn disk_suction_past_blowup_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["evolve", "--t-end", "0.6", "--sign", "-1", "--out", "run"]);
    assert_eq!(code(&o), 2);
    let summary: serde_json::Value = serde_json::from_str(&read(d.path().join("run/summary.json"))).unwrap();
    assert_eq!(summary["termination"]["kind"], "blowup");
    let t_star = summary["termination"]["t_star"].as_f64().unwrap();
    assert!((t_star - 0.5).abs() < 1e-3);
}

#[test]
fn critical_point_inside_disk_exits_three() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "c.toml", "initial = [[1.0, 0.0], [1.0, 0.0]]\n");
    let o = run(d.path(), &["evolve", "--config", "c.toml"]);
    assert_eq!(code(&o), 3);
    assert!(!d.path().join("out").exists());
}

#[test]
fn locally_univalent_flag_admits_nonunivalent_data() {
    // Truncated (e^{3.5ξ} − 1)/3.5: f' stays away from zero on the disk, but
    // arg f' sweeps more than 2π so the boundary overlaps itself.
    let mut coeffs = Vec::new();
    let mut c = 1.0f64;
    for k in 1..=30 {
        coeffs.push(format!("[{c:e}, 0.0]"));
        c *= 3.5 / (k as f64 + 1.0);
    }
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "c.toml", &format!("initial = [{}]\nt_end = 1e-4\n", coeffs.join(", ")));
    let o = run(d.path(), &["evolve", "--config", "c.toml"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not univalent"));
    let o = run(d.path(), &["evolve", "--config", "c.toml", "--locally-univalent"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_config_names_field() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "c.toml", "sign = 3\n");
    let o = run(d.path(), &["evolve", "--config", "c.toml"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`sign`"));
    assert_eq!(code(&run(d.path(), &["evolve", "--sign", "0"])), 3);
    assert_eq!(code(&run(d.path(), &["evolve", "--config", "nope.toml"])), 3);
}

#[test]
fn config_round_trips() {
    let cfg = RunConfig {
        experiment: Some(Experiment::Decay),
        initial: vec![[1.0, 0.0], [0.4, 0.0], [0.0, 1e-3]],
        sign: -1,
        t_end: 500.0,
        schedule: Schedule::Log { start: 50.0, per_decade: 24 },
        rtol: 1e-10,
        seed: 7,
        ..RunConfig::default()
    };
    let text = cfg.to_toml();
    assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    assert_eq!(RunConfig::parse(&RunConfig::default().to_toml()).unwrap(), RunConfig::default());
}

#[test]
fn outputs_are_byte_deterministic() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "q.toml", "initial = [[1.0, 0.0], [0.4, 0.0]]\nt_end = 2.0\n");
    for out in ["a", "b"] {
        assert_eq!(code(&run(d.path(), &["moments", "--config", "q.toml", "--seed", "3", "--out", out])), 0);
    }
    for f in ["moments.csv", "summary.json"] {
        assert_eq!(read(d.path().join("a").join(f)), read(d.path().join("b").join(f)), "{f}");
    }
}

#[test]
fn moments_table_conserves() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "q.toml", "initial = [[1.0, 0.0], [0.4, 0.0]]\nt_end = 2.0\nmoment_order = 2\n");
    assert_eq!(code(&run(d.path(), &["moments", "--config", "q.toml"])), 0);
    let csv = read(d.path().join("out/moments.csv"));
    assert_eq!(csv.lines().next().unwrap(), "t,M0,M1_re,M1_im,M2_re,M2_im,dM0,dM1,dM2");
    let row = last_row(&csv);
    assert!((row[2].parse::<f64>().unwrap() - 0.4).abs() < 1e-6);
    assert!(row[6..].iter().all(|v| v.parse::<f64>().unwrap() < 1e-6));
    let summary: serde_json::Value = serde_json::from_str(&read(d.path().join("out/summary.json"))).unwrap();
    assert!(summary["quadrature_check"]["max_gap"].as_f64().unwrap() < 1e-8);
}

#[test]
fn report_passes_single_table_through() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["evolve", "--t-end", "1", "--out", "run"])), 0);
    assert_eq!(code(&run(d.path(), &["report", "run/trajectory.csv", "--out", "rep"])), 0);
    assert_eq!(read(d.path().join("rep/report.csv")), read(d.path().join("run/trajectory.csv")));
}

#[test]
fn report_compares_runs_on_common_schedule() {
    let d = tempfile::tempdir().unwrap();
    let sched = "[schedule]\nkind = \"linear\"\nintervals = 4\n";
    write(d.path(), "a.toml", &format!("t_end = 1.0\n{sched}"));
    write(d.path(), "b.toml", &format!("t_end = 1.0\ninitial = [[1.0, 0.0], [0.4, 0.0]]\n{sched}"));
    assert_eq!(code(&run(d.path(), &["evolve", "--config", "a.toml", "--out", "a"])), 0);
    assert_eq!(code(&run(d.path(), &["evolve", "--config", "b.toml", "--out", "b"])), 0);
    let o = run(d.path(), &["report", "a/trajectory.csv", "b/trajectory.csv", "--column", "M0", "--out", "rep"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = read(d.path().join("rep/report.csv"));
    let lines: Vec<&str> = rep.lines().collect();
    assert_eq!(lines[0], "t,M0_1,M0_2");
    assert_eq!(lines.len(), 6);
    let last: Vec<f64> = lines[5].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 1.0);
    assert!((last[1] - 3.0).abs() < 1e-8 && (last[2] - 3.32).abs() < 1e-8);
    let b = read(d.path().join("b/trajectory.csv"));
    let m0 = b.lines().next().unwrap().split(',').position(|h| h == "M0").unwrap();
    assert_eq!(last_row(&b)[m0], lines[5].split(',').nth(2).unwrap());
}

#[test]
fn report_rejects_missing_and_mismatched_inputs() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["report", "missing.csv"])), 3);
    write(d.path(), "x.csv", "t,v\n0,1\n1,2\n");
    write(d.path(), "y.csv", "t,v\n0,1\n2,2\n");
    assert_eq!(code(&run(d.path(), &["report", "x.csv", "y.csv"])), 3);
}

#[test]
fn quadratic_decay_report() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "q.toml",
        "experiment = \"decay\"\ninitial = [[1.0, 0.0], [0.4, 0.0]]\nt_end = 500.0\n[schedule]\nkind = \"log\"\nstart = 50.0\nper_decade = 12\n",
    );
    let o = run(d.path(), &["decay", "--config", "q.toml", "--out", "run"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(d.path().join("run/decay.csv"));
    assert_eq!(csv.lines().next().unwrap(), "t,sup_rbar,sup_d1,sup_d2,max_kappa_dev,area_check");
    let summary: serde_json::Value = serde_json::from_str(&read(d.path().join("run/summary.json"))).unwrap();
    assert!(summary["lambda"].as_f64().unwrap() > 1.2);

    assert_eq!(code(&run(d.path(), &["report", "run/decay.csv", "--out", "rep"])), 0);
    let rep = read(d.path().join("rep/report.csv"));
    assert_eq!(rep.lines().next().unwrap(), "t,sup_c2,t^1.2*sup_c2");
    let scaled: Vec<f64> = rep.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(scaled.windows(2).all(|w| w[1] <= w[0]));

    // The decay config cannot drive another experiment.
    assert_eq!(code(&run(d.path(), &["evolve", "--config", "q.toml"])), 3);
}

#[test]
fn suction_sweep_table() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "s.toml", "[suction]\ndeltas = [0.05, 0.01]\njmax = 1\n");
    let o = run(d.path(), &["suction-sweep", "--config", "s.toml"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(d.path().join("out/sweep.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "delta,t_star,remaining_fraction,sup_dev_n0,sup_dev_n1");
    let t: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!((t[1] - 0.3843).abs() < 1e-3);
    assert!(t[0] < t[1]);
}

#[test]
fn perturb_and_cascade_tables() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "p.toml",
        "initial = [[1.0, 0.0], [0.4, 0.0]]\n[schedule]\nkind = \"linear\"\nintervals = 10\n[perturb]\ntail = [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1e-3, 0.0]]\n",
    );
    let o = run(d.path(), &["perturb", "--config", "p.toml", "--out", "p"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(d.path().join("p/perturb.csv"));
    assert_eq!(csv.lines().next().unwrap(), "t,dev_n0,dev_n1");
    assert_eq!(csv.lines().count(), 12);

    write(
        d.path(),
        "c.toml",
        "initial = [[1.0, 0.0], [0.2, 0.0], [0.01, 0.0], [0.005, 0.0], [0.0025, 0.0]]\n[cascade]\ndegrees = [2, 3, 5]\nintervals = 10\n",
    );
    let o = run(d.path(), &["cascade", "--config", "c.toml", "--out", "c"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(d.path().join("c/cascade.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "degree,next_degree,deviation,ratio,final_gap");
    assert!(lines[1].starts_with("2,3,"));
    assert!(lines[2].starts_with("3,5,"));
}
