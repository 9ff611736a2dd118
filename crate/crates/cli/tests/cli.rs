use std::path::Path;
use std::process::{Command, Output};

fn popxfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popxfer"))
        .args(args)
        .env_remove("QCTRL_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn simulate_protocol1_reaches_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = popxfer(&["simulate", "--T", "40", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&out);
    assert_eq!(
        header,
        ["t", "rho_gg", "rho_ee", "rho_ff", "rho_ss", "delta_p", "delta"]
    );
    let last = rows.last().unwrap();
    assert_eq!(last[0], 40.0);
    assert!((last[3] - 0.9994).abs() <= 0.002, "rho_ff {}", last[3]);
    assert_eq!(last[4], 0.0);
}

#[test]
fn simulate_with_sink_fills_sink_column() {
    let o = popxfer(&["simulate", "--sink", "on", "--protocol", "protocol2_T40"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    let total: f64 = last[1..5].iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(last[4] > 0.0);
}

#[test]
fn vanishing_duration_is_accepted() {
    let o = popxfer(&["simulate", "--T", "1e-9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert!((last[1] - 1.0).abs() < 1e-12);
}

#[test]
fn config_errors_exit_with_one() {
    let o = popxfer(&["simulate", "--protocol", "no_such_protocol"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("protocol1_T40"));

    assert_eq!(popxfer(&["simulate", "--T", "-1"]).status.code(), Some(1));
    assert_eq!(
        popxfer(&["simulate", "--sink", "sometimes"]).status.code(),
        Some(1)
    );
    assert_eq!(popxfer(&["frobnicate"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"system": {"total_time": 40, "colour": "blue"}}"#).unwrap();
    let o = popxfer(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));

    let o = Command::new(env!("CARGO_BIN_EXE_popxfer"))
        .args(["simulate"])
        .env("QCTRL_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let schedule = dir.path().join("huge.json");
    std::fs::write(
        &schedule,
        r#"{"shape": {"kind": "poly_pair", "coeffs_dp": [1e300, 1e300], "coeffs_d": [1e300]}}"#,
    )
    .unwrap();
    let o = popxfer(&["simulate", "--protocol", schedule.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn help_exits_cleanly() {
    let o = popxfer(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("raman-scan"));
}

#[test]
fn training_output_is_reproducible_and_checkpoint_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.json");
    std::fs::write(
        &cfg,
        r#"{
            "train": {
                "n_batch": 6, "n_epochs": 3, "n_steps": 10, "total_time": 20.0,
                "ranges": [14.0, 0.2], "sigma": [0.07, 0.07], "sink_rate": 0.5,
                "architecture": {"lstm_units": 6, "dense_units": 4}
            }
        }"#,
    )
    .unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = popxfer(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(&out).unwrap()
    };
    let a = run("a.csv", "7");
    let b = run("b.csv", "7");
    let c = run("c.csv", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(String::from_utf8_lossy(&a).starts_with("epoch,mean_reward"));

    let ckpt = dir.path().join("a.checkpoint.json");
    let o = popxfer(&["checkpoint-info", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let info: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(info["seed"], 7);
    assert_eq!(info["epoch"], 3);
    assert_eq!(info["version"], 1);

    let schedule = dir.path().join("a.schedule.json");
    let o = popxfer(&[
        "simulate",
        "--T",
        "20",
        "--protocol",
        schedule.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    std::fs::write(&ckpt, "{\"version\": 99}").unwrap();
    assert_eq!(
        popxfer(&["checkpoint-info", ckpt.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn sweep_outputs_have_axis_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ladder.csv");
    let cfg = dir.path().join("sweep.json");
    std::fs::write(
        &cfg,
        r#"{
            "sweep": {
                "scenario": "ladder",
                "axes": [
                    {"name": "gamma_eg", "min": 0.0, "max": 0.05, "n_points": 3},
                    {"name": "gamma_fe", "min": 0.0, "max": 0.05, "n_points": 3}
                ]
            }
        }"#,
    )
    .unwrap();
    let o = popxfer(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&out);
    assert_eq!(
        header,
        ["gamma_eg", "gamma_fe", "final_rho_ff", "max_rho_ee"]
    );
    assert_eq!(rows.len(), 9);

    let o = popxfer(&[
        "scan-time",
        "--t-min",
        "20",
        "--t-max",
        "40",
        "--points",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("T,final_rho_ff,max_rho_ee"));

    let o = popxfer(&["raman-scan", "--points", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout)
        .starts_with("delta_p,final_rho_ff,max_rho_ee,max_rho_ff"));
}

#[test]
fn thread_cap_does_not_change_results() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_popxfer"))
            .args(["sweep", "--scenario", "dephasing-e"])
            .env("QCTRL_THREADS", threads)
            .output()
            .unwrap()
    };
    let a = run("1");
    let b = run("3");
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn optimizer_writes_runs_and_best_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("poly.csv");
    let o = popxfer(&[
        "optimize-poly",
        "--order",
        "1",
        "--runs",
        "2",
        "--T",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&out);
    assert_eq!(&header[..4], ["run", "score", "n_evals", "n_iter"]);
    assert_eq!(header.len(), 8);
    assert_eq!(rows.len(), 2);
    assert!(dir.path().join("poly.schedule.json").is_file());
}
