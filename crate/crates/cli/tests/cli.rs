//! End-to-end checks of the compiled binary: exit codes, output schema,
//! and the synth -> fit -> run composition.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bci() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bci"))
}

fn write(path: &Path, content: &str) {
    fs::write(path, content).unwrap();
}

fn synth_config(n: usize) -> String {
    format!(
        "synth_model = garch\n\
         n = {n}\n\
         seed = 100\n\
         garch_mu = 0.0\n\
         garch_omega = 0.00002\n\
         garch_a = 0.1\n\
         garch_b = 0.85\n"
    )
}

#[test]
fn config_errors_exit_2_and_list_everything() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    write(&config, "bogus_key = 1\nalpha_bar = 7\nc = -2\n");
    let out = bci()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown key `bogus_key`"), "{stderr}");
    assert!(stderr.contains("alpha_bar"), "{stderr}");
    assert!(stderr.contains("c:"), "{stderr}");
}

#[test]
fn data_errors_exit_3_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    write(&csv, "date,value\n1,1.0\n1,2.0\n");
    let config = dir.path().join("run.conf");
    write(
        &config,
        &format!(
            "task = level\nforecaster = ar\ncontroller = naive\ntrain = 20\n\
             window = 10\ninput = {}\n",
            csv.display()
        ),
    );
    let out = bci()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn runtime_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("short.csv");
    let mut body = String::from("date,value\n");
    for i in 0..30 {
        body.push_str(&format!("{},{}\n", i + 1, 100.0 + i as f64));
    }
    write(&csv, &body);
    let config = dir.path().join("run.conf");
    // train exceeds the series length, which only surfaces at run time.
    write(
        &config,
        &format!(
            "task = level\nforecaster = ar\ncontroller = naive\ntrain = 400\n\
             input = {}\n",
            csv.display()
        ),
    );
    let out = bci()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn synth_then_fit_recovers_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let synth_conf = dir.path().join("synth.conf");
    write(&synth_conf, &synth_config(5000));
    let data_dir = dir.path().join("data");
    let status = bci()
        .args(["synth", "--quiet", "--config"])
        .arg(&synth_conf)
        .args(["--out"])
        .arg(&data_dir)
        .status()
        .unwrap();
    assert!(status.success());

    let fit_conf = dir.path().join("fit.conf");
    write(
        &fit_conf,
        &format!(
            "task = volatility\nforecaster = garch\ninput = {}\n",
            data_dir.join("series.csv").display()
        ),
    );
    let fit_dir = dir.path().join("fit");
    let status = bci()
        .args(["fit", "--quiet", "--config"])
        .arg(&fit_conf)
        .args(["--out"])
        .arg(&fit_dir)
        .status()
        .unwrap();
    assert!(status.success());

    let params = fs::read_to_string(fit_dir.join("params.csv")).unwrap();
    let get = |key: &str| -> f64 {
        params
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{key},")))
            .unwrap_or_else(|| panic!("missing {key} in {params}"))
            .parse()
            .unwrap()
    };
    assert!((get("a") - 0.1).abs() <= 0.05, "a = {}", get("a"));
    assert!((get("b") - 0.85).abs() <= 0.05, "b = {}", get("b"));
    let omega = get("omega");
    assert!(
        (omega - 2e-5).abs() <= 1e-5,
        "omega = {omega}, wanted within 50% of 2e-5"
    );
}

#[test]
fn run_outputs_are_self_consistent_on_reread() {
    let dir = tempfile::tempdir().unwrap();
    let synth_conf = dir.path().join("synth.conf");
    write(&synth_conf, &synth_config(700));
    let data_dir = dir.path().join("data");
    assert!(bci()
        .args(["synth", "--quiet", "--config"])
        .arg(&synth_conf)
        .args(["--out"])
        .arg(&data_dir)
        .status()
        .unwrap()
        .success());

    let run_conf = dir.path().join("run.conf");
    write(
        &run_conf,
        &format!(
            "task = volatility\nforecaster = garch\ncontroller = aci\n\
             train = 120\nrefit_every = 0\nwindow = 100\npit_window = 80\n\
             gamma_aci = 0.05\ninput = {}\n",
            data_dir.join("series.csv").display()
        ),
    );
    let out_dir = dir.path().join("out");
    assert!(bci()
        .args(["run", "--quiet", "--config"])
        .arg(&run_conf)
        .args(["--out"])
        .arg(&out_dir)
        .status()
        .unwrap()
        .success());

    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,alpha,beta,err,length,local_miscov,local_length"
    );
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7, "bad row {line}");
        let alpha: f64 = fields[1].parse().unwrap();
        let beta: f64 = fields[2].parse().unwrap();
        let err: u8 = fields[3].parse().unwrap();
        let length: f64 = fields[4].parse().unwrap();
        assert_eq!(err == 1, alpha > beta, "err mismatch in {line}");
        assert!(length >= 0.0);
        rows += 1;
    }
    assert_eq!(rows, 700 - 120);
}

#[test]
fn ecc_output_grid_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let synth_conf = dir.path().join("synth.conf");
    write(&synth_conf, &synth_config(400));
    let data_dir = dir.path().join("data");
    assert!(bci()
        .args(["synth", "--quiet", "--config"])
        .arg(&synth_conf)
        .args(["--out"])
        .arg(&data_dir)
        .status()
        .unwrap()
        .success());

    let ecc_conf = dir.path().join("ecc.conf");
    write(
        &ecc_conf,
        &format!(
            "task = volatility\nforecaster = garch\ntrain = 100\nrefit_every = 0\n\
             ecc_points = 21\ninput = {}\n",
            data_dir.join("series.csv").display()
        ),
    );
    let out_dir = dir.path().join("out");
    assert!(bci()
        .args(["ecc", "--quiet", "--config"])
        .arg(&ecc_conf)
        .args(["--out"])
        .arg(&out_dir)
        .status()
        .unwrap()
        .success());

    let body = fs::read_to_string(out_dir.join("ecc.csv")).unwrap();
    let rows: Vec<&str> = body.lines().skip(1).collect();
    assert_eq!(rows.len(), 21);
    assert!(rows[0].starts_with("0,"));
    assert!(rows[20].starts_with("1,"));
    let mut prev = -1.0;
    for row in rows {
        let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(v >= prev, "ecc not monotone: {body}");
        prev = v;
    }
}
