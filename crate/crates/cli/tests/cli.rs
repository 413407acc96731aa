use std::path::Path;
use std::process::{Command, Output};

fn bsq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsq"))
        .args(args)
        .current_dir(dir)
        .env_remove("BSQ_OUT_DIR")
        .output()
        .expect("bsq runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let body = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    body.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn harmonic_spectrum_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsq(dir.path(), &["spectrum", "--builtin", "harmonic", "--hbar", "1", "--levels", "0..4"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let path = dir.path().join("harmonic.spectrum.h1.csv");
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "n,A,E0,E2,corr,err_est");
    let e2 = column(&csv_rows(&path), 3);
    assert_eq!(e2.len(), 5);
    for (n, e) in e2.iter().enumerate() {
        assert!((e - (n as f64 + 0.5)).abs() < 1e-10, "{n}: {e}");
    }
}

#[test]
fn pure_quartic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsq(dir.path(), &["spectrum", "--builtin", "pure_quartic", "--hbar", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let t = text(&o);
    assert!(t.contains("non-generic") && t.contains("the Hessian matrix has rank 1"), "{t}");
}

#[test]
fn quartic_comparison_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsq(
        dir.path(),
        &["compare", "--builtin", "perturbed_quartic", "--hbar", "0.5,0.25,0.125,0.0625", "--levels", "0..10"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let slopes = csv_rows(&dir.path().join("perturbed_quartic.slopes.csv"));
    let s0: f64 = slopes[0][2].parse().unwrap();
    let s2: f64 = slopes[1][2].parse().unwrap();
    assert!((1.5..=2.5).contains(&s0) && (3.5..=4.5).contains(&s2), "{s0} {s2}");
    assert!(slopes.iter().all(|r| r[4] == "pass"));
    let rows = csv_rows(&dir.path().join("perturbed_quartic.compare.csv"));
    let (res0, res2) = (column(&rows, 9), column(&rows, 11));
    assert!(res0.iter().zip(&res2).all(|(a, b)| b.abs() < a.abs()));
}

#[test]
fn exact_comparisons() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsq(dir.path(), &["compare", "--builtin", "harmonic", "--hbar", "1,0.5", "--levels", "0..5"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let rows = csv_rows(&dir.path().join("harmonic.compare.csv"));
    assert!(column(&rows, 9).iter().chain(&column(&rows, 11)).all(|r| r.abs() < 1e-8));

    let o = bsq(dir.path(), &["compare", "--builtin", "symbol_i2", "--hbar", "1", "--levels", "0..5"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("fock"));
    let rows = csv_rows(&dir.path().join("symbol_i2.compare.csv"));
    assert!(column(&rows, 11).iter().all(|r| r.abs() < 1e-9));
}

#[test]
fn identity_suite_and_corruption_hook() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsq(dir.path(), &["identities", "--count", "100"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert_eq!(text(&o).matches("PASS").count(), 5);
    assert!(dir.path().join("identities.csv").exists());

    let o = bsq(dir.path(), &["identities", "--count", "0"]);
    assert_eq!(o.status.code(), Some(0));

    let o = bsq(dir.path(), &["identities", "--count", "3", "--corrupt-bracket"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("first offending triple"));
}

#[test]
fn normal_form_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsq(dir.path(), &["normalform", "--symbol", "I + x^4/10"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let rows = csv_rows(&dir.path().join("symbol.normalform.csv"));
    assert_eq!(rows[1][3], "3/20");
    assert_eq!(rows[1][1].parse::<f64>().unwrap(), 0.15);
    assert!(dir.path().join("symbol.normalform_check.csv").exists());

    let o = bsq(dir.path(), &["normalform", "--builtin", "harmonic", "--order", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("harmonic.normalform.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][3], "1");

    let o = bsq(dir.path(), &["normalform", "--symbol", "x p"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("not elliptic"));
}

#[test]
fn json_output_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["spectrum", "--builtin", "perturbed_quartic", "--hbar", "0.25", "--format", "json"];
    assert_eq!(bsq(a.path(), &args).status.code(), Some(0));
    assert_eq!(bsq(b.path(), &args).status.code(), Some(0));
    let name = "perturbed_quartic.spectrum.h0.25.json";
    let (x, y) = (std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    assert_eq!(x, y);
    let doc: serde_json::Value = serde_json::from_slice(&x).unwrap();
    assert_eq!(doc["levels"].as_array().unwrap().len(), 10);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("results");
    let o = Command::new(env!("CARGO_BIN_EXE_bsq"))
        .args(["spectrum", "--builtin", "harmonic", "--hbar", "0.5", "--levels", "0..1"])
        .current_dir(dir.path())
        .env("BSQ_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(target.join("harmonic.spectrum.h0.5.csv").exists());
}

#[test]
fn config_jobs_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("jobs.toml");
    std::fs::write(
        &cfg,
        r#"
[well]
potential = "x^2 + x^4/5"
mass = "1/2"
hbar = [0.2]
levels = "0..3"

[quartic]
builtin = "perturbed_quartic"
params = { epsilon = 0.05 }
hbar = 0.5
levels = "0..2"
out = "quartic_out"
"#,
    )
    .unwrap();
    let o = bsq(dir.path(), &["spectrum", "--config", "jobs.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert_eq!(csv_rows(&dir.path().join("well.spectrum.h0.2.csv")).len(), 4);
    assert_eq!(csv_rows(&dir.path().join("quartic_out/quartic.spectrum.h0.5.csv")).len(), 3);

    // command-line values override the file
    let o =
        bsq(dir.path(), &["spectrum", "--config", "jobs.toml", "--hbar", "0.1", "--levels", "0..1", "--out", "over"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert_eq!(csv_rows(&dir.path().join("over/well.spectrum.h0.1.csv")).len(), 2);

    std::fs::write(&cfg, "[bad]\nbuiltin = \"harmonic\"\nhbar = [1.0, -2.0]\n").unwrap();
    let o = bsq(dir.path(), &["spectrum", "--config", "jobs.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let t = text(&o);
    assert!(t.contains("line 1") && t.contains("field 'hbar'"), "{t}");

    std::fs::write(&cfg, "[bad]\nbuiltin = \"harmonic\"\nsymbol = \"I\"\n").unwrap();
    let o = bsq(dir.path(), &["spectrum", "--config", "jobs.toml", "--hbar", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("mutually exclusive"));
}

#[test]
fn skipped_levels_give_partial_status() {
    let dir = tempfile::tempdir().unwrap();
    // the Morse window ends at 0.9 D = 0.45, i.e. below A ~ 0.68
    let o = bsq(dir.path(), &["spectrum", "--builtin", "morse", "--hbar", "0.1", "--levels", "0..9"]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("skipped"));
    let rows = csv_rows(&dir.path().join("morse.spectrum.h0.1.csv"));
    assert!(!rows.is_empty() && rows.len() < 10);
}

#[test]
fn oracle_divergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tight.toml"),
        "[tight]\nbuiltin = \"perturbed_quartic\"\nhbar = 0.5\nlevels = \"0..2\"\noracle = \"grid\"\ntolerance = 1e-300\n",
    )
    .unwrap();
    let o = bsq(dir.path(), &["compare", "--config", "tight.toml"]);
    assert_eq!(o.status.code(), Some(3), "{}", text(&o));
    assert!(text(&o).contains("oracle did not converge"));
}
