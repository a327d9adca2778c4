use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn qsd(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qsd"))
        .args(args)
        .env_remove("QSD_THREADS")
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn header(path: &Path) -> (String, String) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    (lines.next().unwrap().to_string(), lines.next().unwrap().to_string())
}

fn short_run(dir: &Path, extra: &[&str]) -> i32 {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run", "--realizations", "12", "--t-max", "10", "--sample-stride", "20", "--out", out];
    args.extend_from_slice(extra);
    qsd(&args).0
}

#[test]
fn run_writes_every_file_with_schema_line() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    assert_eq!(short_run(&dir, &["--rho"]), 0);
    let expect = [
        ("observables.csv", "t,energy,position,momentum,trace,purity,purity_normalized"),
        ("levels.csv", "t,n,level_energy"),
        ("phase.csv", "t,q,p"),
        ("rho.csv", "t,n,m,re,im"),
        ("fits.csv", "segment,model,t_lo,t_hi,exponent,prefactor,sse"),
        ("frequencies.csv", "lambda,omega"),
        ("manifest.csv", "key,value"),
    ];
    for (file, cols) in expect {
        let (meta, head) = header(&dir.join(file));
        assert!(meta.starts_with("# qsd ") && meta.contains("schema=1"), "{file}: {meta}");
        assert_eq!(head, cols, "{file}");
    }
    let manifest = fs::read_to_string(dir.join("manifest.csv")).unwrap();
    for key in ["master_seed,1", "frequency_seed,1", "realizations,12", "omega.9,", "qsd_version,"] {
        assert!(manifest.contains(key), "manifest lacks {key}");
    }
    // 10 bath frequencies, 15 levels, 51 samples
    let freqs = fs::read_to_string(dir.join("frequencies.csv")).unwrap();
    assert_eq!(freqs.lines().count(), 2 + 10);
    let levels = fs::read_to_string(dir.join("levels.csv")).unwrap();
    assert_eq!(levels.lines().count(), 2 + 51 * 15);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(short_run(&a, &["--threads", "1"]), 0);
    assert_eq!(short_run(&b, &["--threads", "3"]), 0);
    for file in ["observables.csv", "levels.csv", "phase.csv", "fits.csv", "manifest.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn config_echo_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    assert_eq!(short_run(&a, &["--coupling", "0.02", "--freq-seed", "9"]), 0);
    let b = tmp.path().join("b");
    let echo = a.join("config.txt");
    let (rc, err) = qsd(&["run", "--config", echo.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(rc, 0, "{err}");
    assert_eq!(
        fs::read(a.join("observables.csv")).unwrap(),
        fs::read(b.join("observables.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");
    let out = out.to_str().unwrap();
    assert_eq!(qsd(&["run", "--spectral-exponent", "2.5", "--out", out]).0, 2);
    assert_eq!(qsd(&["run", "--omega-window", "2,1", "--out", out]).0, 2);
    assert_eq!(qsd(&["run", "--threads", "0", "--out", out]).0, 2);
    assert_eq!(qsd(&["oracle", "--n-bath", "3", "--out", out]).0, 2);
    let cfg = tmp.path().join("bad.ini");
    fs::write(&cfg, "[bath]\nn = 4\nspectral_exponent = 3\n").unwrap();
    let (rc, err) = qsd(&["run", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(rc, 2);
    assert!(err.contains("line 3"), "{err}");
    // unknown flag is a usage error, also 2
    assert_eq!(qsd(&["run", "--no-such-flag"]).0, 2);
}

#[test]
fn numerical_abort_exits_3() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");
    let (rc, err) = qsd(&[
        "run", "--coupling", "30", "--n-bath", "3", "--realizations", "2", "--t-max", "50",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(rc, 3, "{err}");
    assert!(err.contains("overflow"), "{err}");
}

#[test]
fn io_failures_exit_4() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(qsd(&["fit", tmp.path().join("missing.csv").to_str().unwrap()]).0, 4);
    assert_eq!(qsd(&["run", "--config", tmp.path().join("missing.ini").to_str().unwrap()]).0, 4);
    // output path blocked by a regular file
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    assert_eq!(short_run(&out, &[]), 4);
}

fn write_observables(path: &Path, f: impl Fn(f64) -> f64) {
    let mut s = String::from("# qsd observables schema=1 version=0\n");
    s.push_str("t,energy,position,momentum,trace,purity,purity_normalized\n");
    for k in 0..=400 {
        let t = k as f64 * 0.5;
        s.push_str(&format!("{t},{},0,0,1,{},1\n", f(t), 0.5 * f(t)));
    }
    fs::write(path, s).unwrap();
}

fn fit_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn fit_recovers_synthetic_exponents() {
    let tmp = TempDir::new().unwrap();
    let obs = tmp.path().join("observables.csv");
    write_observables(&obs, |t| 3.0 * (-0.02 * t).exp());
    let out = tmp.path().join("exp.csv");
    let args = ["fit", obs.to_str().unwrap(), "--model", "exp", "--out", out.to_str().unwrap()];
    assert_eq!(qsd(&args).0, 0);
    let rows = fit_rows(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], "exp");
    assert!((rows[0][4].parse::<f64>().unwrap() - 0.02).abs() < 1e-10);
    assert!((rows[0][5].parse::<f64>().unwrap() - 3.0).abs() < 1e-9);

    // purity column carries the same law with half the prefactor
    let out = tmp.path().join("pur.csv");
    let args = [
        "fit", obs.to_str().unwrap(), "--column", "purity", "--model", "exp", "--window", "10,150",
        "--out", out.to_str().unwrap(),
    ];
    assert_eq!(qsd(&args).0, 0);
    let rows = fit_rows(&out);
    assert_eq!(rows[0][2], "10");
    assert_eq!(rows[0][3], "150");
    assert!((rows[0][5].parse::<f64>().unwrap() - 1.5).abs() < 1e-9);

    write_observables(&obs, |t| 2.0 * (1.0 + t).powf(-0.7));
    let out = tmp.path().join("pow.csv");
    let args = [
        "fit", obs.to_str().unwrap(), "--model", "pow", "--window", "100,200",
        "--out", out.to_str().unwrap(),
    ];
    assert_eq!(qsd(&args).0, 0);
    let beta = fit_rows(&out)[0][4].parse::<f64>().unwrap();
    assert!((beta - 0.7).abs() < 0.01, "beta {beta}");
}

#[test]
fn fit_auto_finds_the_crossover() {
    let tmp = TempDir::new().unwrap();
    let obs = tmp.path().join("observables.csv");
    let tb: f64 = 100.0;
    let beta = 0.6;
    let at = (-0.03 * tb).exp();
    write_observables(&obs, |t| if t <= tb { (-0.03 * t).exp() } else { at * (t / tb).powf(-beta) });
    let out = tmp.path().join("auto.csv");
    let args = ["fit", obs.to_str().unwrap(), "--max-segments", "2", "--out", out.to_str().unwrap()];
    assert_eq!(qsd(&args).0, 0);
    let rows = fit_rows(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][1].as_str(), rows[1][1].as_str()), ("exp", "pow"));
    let split = rows[1][2].parse::<f64>().unwrap();
    assert!((split - tb).abs() <= 10.0, "split at {split}");
    assert!((rows[0][4].parse::<f64>().unwrap() - 0.03).abs() < 1e-3);
    assert_eq!(qsd(&["fit", obs.to_str().unwrap(), "--max-segments", "4"]).0, 2);
}

#[test]
fn fit_rejects_files_without_the_column() {
    let tmp = TempDir::new().unwrap();
    let obs = tmp.path().join("o.csv");
    fs::write(&obs, "# x\nt,foo\n0,1\n").unwrap();
    assert_eq!(qsd(&["fit", obs.to_str().unwrap()]).0, 2);
}

#[test]
fn oracle_matches_observable_schema_and_qsd_run() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("or");
    let args = [
        "oracle", "--freq-override", "2.09", "--t-max", "5", "--sample-stride", "50",
        "--out", dir.to_str().unwrap(),
    ];
    let (rc, err) = qsd(&args);
    assert_eq!(rc, 0, "{err}");
    let (meta, cols) = header(&dir.join("oracle.csv"));
    assert!(meta.starts_with("# qsd oracle schema=1"));
    assert_eq!(cols, "t,energy,position,momentum,trace,purity,purity_normalized");
    let text = fs::read_to_string(dir.join("oracle.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    // weak coupling: energy stays close to the uncoupled 7.5
    for r in &rows {
        assert!((r[1] - 7.5).abs() < 0.05, "{r:?}");
        assert!((r[4] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn spectrum_writes_energies_and_matrix_elements() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("sp");
    assert_eq!(qsd(&["spectrum", "--n-max", "6", "--out", dir.to_str().unwrap()]).0, 0);
    let text = fs::read_to_string(dir.join("energies.csv")).unwrap();
    let energies: Vec<f64> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(energies, vec![0.5, 1.5, 2.5, 3.5, 4.5, 5.5]);
    let (_, cols) = header(&dir.join("matrix_elements.csv"));
    assert_eq!(cols, "n,m,q_nm,re_p_nm,im_p_nm");
    let rows = fs::read_to_string(dir.join("matrix_elements.csv")).unwrap().lines().count();
    assert_eq!(rows, 2 + 36);
}

#[test]
fn sweep_writes_one_directory_per_point() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path().join("sw");
    let args = [
        "sweep", "--n-values", "1,3", "--s-values", "0.5,1.5", "--realizations", "3", "--t-max", "2",
        "--out", root.to_str().unwrap(),
    ];
    let (rc, err) = qsd(&args);
    assert_eq!(rc, 0, "{err}");
    for name in ["N1_s0.5", "N1_s1.5", "N3_s0.5", "N3_s1.5"] {
        assert!(root.join(name).join("observables.csv").exists(), "{name}");
    }
    let freqs = fs::read_to_string(root.join("N3_s1.5").join("frequencies.csv")).unwrap();
    assert_eq!(freqs.lines().count(), 2 + 3);
    let index = fs::read_to_string(root.join("sweep.csv")).unwrap();
    assert_eq!(index.lines().count(), 2 + 4);
    assert_eq!(qsd(&["sweep", "--out", root.to_str().unwrap()]).0, 2);
}
