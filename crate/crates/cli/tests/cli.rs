use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn qmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmp"))
        .args(args)
        .env_remove("QMP_THREADS")
        .output()
        .expect("run qmp")
}

fn ok(args: &[&str]) {
    let out = qmp(args);
    assert!(
        out.status.success(),
        "qmp {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    s(&p)
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn cubic_csv(n: usize) -> String {
    // deterministic low-discrepancy sample of Q(u) = 4(u - 0.4)^3 + 0.2u
    let mut body = String::from("y\n");
    for i in 0..n {
        let u = ((i as f64 + 0.5) * 0.618_033_988_749_895).fract();
        body.push_str(&format!("{}\n", 4.0 * (u - 0.4).powi(3) + 0.2 * u));
    }
    body
}

fn regression_csv(n: usize) -> String {
    let mut body = String::from("y,x1,x2\n");
    for i in 0..n {
        let u = ((i as f64 + 0.5) * 0.618_033_988_749_895).fract();
        let x1 = ((i as f64 + 0.5) * 0.754_877_666_246_693).fract() * 2.0;
        let x2 = ((i as f64 + 0.5) * 0.569_840_290_998_053).fract();
        body.push_str(&format!("{},{x1},{x2}\n", u + (1.0 + u) * x1));
    }
    body
}

#[test]
fn missing_header_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "bad.csv", "0.1\n0.2\n");
    let out = qmp(&["fit", "--input", &input, "--out", &s(&dir.path().join("o")), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing header"));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let constant = write(d, "c.csv", "y\n1\n1\n1\n");
    let out = qmp(&["fit", "--input", &constant, "--out", &s(&d.join("c")), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(3));

    let dup = write(d, "dup.csv", "y,a,b\n1,0.1,0.1\n2,0.5,0.5\n0,0.3,0.3\n4,0.9,0.9\n3,0.2,0.2\n");
    let out = qmp(&["reg-fit", "--input", &dup, "--response", "y", "--out", &s(&d.join("r")), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(4));

    let out = qmp(&["sample", "--fit", &s(&d.join("nowhere")), "--out", &s(&d.join("o")), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = qmp(&["check", "--out", &s(&d.join("chk")), "--tolerance", "1e-30"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn two_point_fit_matches_golden_snapshot() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "two.csv", "y\n0\n1\n");
    let out = dir.path().join("fit");
    ok(&["fit", "--input", &input, "--out", &s(&out), "--seed", "1"]);
    let got = fs::read(out.join("quantile.csv")).unwrap();
    let want = fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/two_point_quantile.csv")).unwrap();
    assert!(got == want, "quantile.csv differs from the golden snapshot");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let input = write(d, "y.csv", &cubic_csv(80));
    for tag in ["a", "b"] {
        let fit = d.join(tag).join("fit");
        ok(&["fit", "--input", &input, "--out", &s(&fit), "--seed", "9"]);
        ok(&["sample", "--fit", &s(&fit), "--out", &s(&d.join(tag).join("s")), "--seed", "2",
             "--samples", "16", "--horizon-extra", "200"]);
    }
    for f in ["fit/fit.json", "fit/quantile.csv", "s/summary.csv", "s/functionals.csv", "s/sample.json"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn single_sample_has_zero_spread() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let input = write(d, "y.csv", &cubic_csv(40));
    ok(&["fit", "--input", &input, "--out", &s(&d.join("fit")), "--seed", "1"]);
    ok(&["sample", "--fit", &s(&d.join("fit")), "--out", &s(&d.join("s")), "--seed", "1",
         "--samples", "1", "--approx"]);
    let (header, rows) = read_table(&d.join("s/summary.csv"));
    let sd = header.iter().position(|h| h == "sd").unwrap();
    assert!(rows.iter().all(|r| r[sd] == 0.0));
}

#[test]
fn exact_and_approximate_summaries_share_a_schema() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let input = write(d, "y.csv", &cubic_csv(200));
    ok(&["fit", "--input", &input, "--out", &s(&d.join("fit")), "--seed", "1"]);
    ok(&["sample", "--fit", &s(&d.join("fit")), "--out", &s(&d.join("ex")), "--seed", "3",
         "--samples", "20", "--horizon-extra", "300", "--functionals", "mean,var,q0.9"]);
    ok(&["sample", "--fit", &s(&d.join("fit")), "--out", &s(&d.join("ap")), "--seed", "3",
         "--samples", "200", "--approx", "--functionals", "mean,var,q0.9"]);
    for f in ["summary.csv", "functionals_summary.csv", "functionals.csv"] {
        let (h1, r1) = read_table_labelled(&d.join("ex").join(f));
        let (h2, _) = read_table_labelled(&d.join("ap").join(f));
        assert_eq!(h1, h2, "{f}");
        if f == "summary.csv" {
            // the default 200-point grid gives 200 rows
            assert_eq!(r1, 200);
        }
    }
}

fn read_table_labelled(path: &Path) -> (String, usize) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    (lines.next().unwrap().to_string(), lines.count())
}

#[test]
fn intercept_only_regression_tracks_the_unconditional_fit() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let input = write(d, "y.csv", &cubic_csv(300));
    ok(&["fit", "--input", &input, "--out", &s(&d.join("fit")), "--seed", "1"]);
    ok(&["reg-fit", "--input", &input, "--response", "y", "--out", &s(&d.join("reg")), "--seed", "1"]);
    let (header, coeffs) = read_table(&d.join("reg/coeffs.csv"));
    assert_eq!(header, ["u", "beta_0"]);
    let (_, q) = read_table(&d.join("fit/quantile.csv"));
    // Both estimate the same quantile function; they start from different
    // initial values, so only the central range is compared.
    let mut worst: f64 = 0.0;
    for (c, r) in coeffs.iter().zip(&q) {
        if (0.2..=0.8).contains(&c[0]) {
            worst = worst.max((c[1] - r[1]).abs());
        }
    }
    assert!(worst < 0.05, "max central gap {worst}");
}

#[test]
fn conditional_summary_at_the_mean_is_monotone() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let input = write(d, "r.csv", &regression_csv(150));
    let (_, rows) = read_table(Path::new(&input));
    let mx1 = rows.iter().map(|r| r[1]).sum::<f64>() / rows.len() as f64;
    let mx2 = rows.iter().map(|r| r[2]).sum::<f64>() / rows.len() as f64;
    ok(&["reg-fit", "--input", &input, "--response", "y", "--out", &s(&d.join("fit")), "--seed", "2"]);
    let at = format!("{mx1},{mx2}");
    ok(&["reg-sample", "--fit", &s(&d.join("fit")), "--input", &input, "--out", &s(&d.join("s")),
         "--seed", "3", "--samples", "300", "--approx", "--at", &at]);
    let (header, summary) = read_table(&d.join("s/conditional_summary_0.csv"));
    let mean = header.iter().position(|h| h == "mean").unwrap();
    assert!(summary.windows(2).all(|w| w[0][mean] <= w[1][mean]));
    let (bar_header, _) = read_table(&d.join("s/beta_bar_draws.csv"));
    assert_eq!(bar_header, ["draw", "beta_bar_0", "beta_bar_1", "beta_bar_2"]);
}

#[test]
fn reg_sample_rejects_different_data() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let input = write(d, "r.csv", &regression_csv(60));
    let other = write(d, "r2.csv", &regression_csv(61));
    ok(&["reg-fit", "--input", &input, "--response", "y", "--out", &s(&d.join("fit")), "--seed", "2"]);
    let out = qmp(&["reg-sample", "--fit", &s(&d.join("fit")), "--input", &other, "--out", &s(&d.join("s")),
                    "--seed", "3", "--approx", "--samples", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_reports_the_density_norm_at_one_half() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("chk");
    ok(&["check", "--out", &s(&out)]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("checks.json")).unwrap()).unwrap();
    assert_eq!(v["all_passed"], true);
    let reports = v["reports"].as_array().unwrap();
    let density = reports.iter().find(|r| r["name"] == "density_norm").unwrap();
    let at_half = density["detail"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["inputs"]["rho"] == 0.5)
        .unwrap();
    assert!((at_half["computed"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-6);
    assert!((at_half["expected"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-15);
}
