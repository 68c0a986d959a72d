use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use scoretest_cli::{commands, Report, RunConfig};
use clap::Parser;

fn write(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    std::fs::File::create(&path).unwrap().write_all(content.as_bytes()).unwrap();
    path.to_str().unwrap().to_string()
}

fn scoretest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scoretest")).args(args).output().unwrap()
}

fn json(out: &Output) -> Report {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn multinomial_counts_against_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let counts = write(dir.path(), "counts.csv", "count\n10\n20\n30\n40\n");
    let r = json(&scoretest(&["test", "--model", "multinomial", "--data", &counts, "--null", "uniform", "--stat", "rs,lm,pearson", "--format", "json"]));
    assert_eq!(r.results.len(), 3);
    for t in &r.results {
        assert!((t.statistic - 20.0).abs() < 1e-10, "{t:?}");
        assert_eq!(t.df, Some(3));
    }
    assert_eq!(r.provenance.version, env!("CARGO_PKG_VERSION"));

    let classes = write(dir.path(), "classes.csv", &format!("class\n{}", "0\n1\n1\n2\n2\n2\n".repeat(5)));
    let r = json(&scoretest(&["test", "--model", "multinomial", "--data", &classes, "--null", "uniform", "--stat", "pearson", "--format", "json"]));
    assert!((r.results[0].statistic - 5.0).abs() < 1e-12);
}

#[test]
fn json_report_round_trips_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let y: String = (0..40).map(|i| format!("{}\n", (i as f64 * 0.37).sin() + 0.2)).collect();
    let data = write(dir.path(), "y.csv", &format!("y\n{y}"));
    let config = RunConfig::parse_from(["scoretest", "test", "--model", "normal", "--data", &data, "--restrict", "mu=0", "--stat", "all"]);
    let report = commands::run(&config).unwrap();
    let text = serde_json::to_string(&report).unwrap();
    let back: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    for (a, b) in back.results.iter().zip(&report.results) {
        assert_eq!(a.statistic.to_bits(), b.statistic.to_bits());
        assert_eq!(a.p_value.to_bits(), b.p_value.to_bits());
    }
    assert_eq!(report.results.len(), 6);
}

#[test]
fn missing_data_is_a_usage_error() {
    let out = scoretest(&["test", "--model", "normal"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--data"), "{}", stderr(&out));
    let out = scoretest(&["mc-size", "--dgp", "normal", "--statistic", "no-such-stat", "--n", "10", "--reps", "100"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "y.csv", "y\n1\n2\n");
    let out = scoretest(&["test", "--model", "normal", "--data", &data]);
    assert_eq!(out.status.code(), Some(2), "no null hypothesis given");
}

#[test]
fn malformed_files_exit_3_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let ragged = write(dir.path(), "ragged.csv", "y,x\n1,2\n3,4\n5,6,7\n");
    let out = scoretest(&["fit", "--model", "ols", "--data", &ragged]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("line 4"), "{}", stderr(&out));

    let blank = write(dir.path(), "blank.csv", "y,x\n1,2\n3,\n");
    let out = scoretest(&["fit", "--model", "ols", "--data", &blank]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("line 3, column 'x'"), "{}", stderr(&out));

    let out = scoretest(&["fit", "--model", "normal", "--data", &dir.path().join("absent.csv").to_string_lossy()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn fit_reports_estimates_and_multipliers() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "y.csv", "y\n1\n2\n3\n4\n");
    let r = json(&scoretest(&["fit", "--model", "normal", "--data", &data, "--format", "json"]));
    let Some(scoretest_cli::report::Details::Fit(f)) = r.details else { panic!("fit details") };
    assert!((f.estimates[0].value - 2.5).abs() < 1e-8);
    assert!((f.estimates[1].value - 1.25).abs() < 1e-8);
    assert!(f.lagrange_multipliers.is_none());

    let r = json(&scoretest(&["fit", "--model", "normal", "--data", &data, "--restrict", "mu=2", "--format", "json"]));
    let Some(scoretest_cli::report::Details::Fit(f)) = r.details else { panic!("fit details") };
    assert!(f.estimates[0].fixed && f.estimates[0].value == 2.0);
    assert!((f.estimates[1].value - 1.5).abs() < 1e-8);
    assert_eq!(f.lagrange_multipliers.map(|l| l.len()), Some(1));
}

#[test]
fn regression_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..80)
        .map(|i| {
            let x = i as f64 / 10.0;
            let e = ((i * 7919) % 101) as f64 / 50.0 - 1.0;
            format!("{},{x},{}\n", 1.0 + 0.5 * x + (0.2 + x) * e, x * x)
        })
        .collect();
    let data = write(dir.path(), "reg.csv", &format!("y,x,z\n{rows}"));
    for model in ["bp", "koenker"] {
        let r = json(&scoretest(&["test", "--model", model, "--data", &data, "--x", "x", "--z", "z", "--format", "json"]));
        assert_eq!(r.results[0].df, Some(1));
        assert!(r.results[0].statistic > 0.0);
    }
    let r = json(&scoretest(&["test", "--model", "skew-robust", "--data", &data, "--x", "x", "--format", "json"]));
    assert_eq!(r.results.len(), 2);
    let out = scoretest(&["test", "--model", "bp", "--data", &data, "--x", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

fn spatial_files(dir: &Path) -> (String, String, String) {
    let n = 16;
    let mut y = String::from("y\n");
    let mut x = String::from("x1\n");
    for i in 0..n {
        let xi = ((i * 37) % 11) as f64 / 3.0;
        x += &format!("{xi}\n");
        y += &format!("{}\n", 1.0 + 0.8 * xi + (((i * 53) % 17) as f64 / 8.0 - 1.0));
    }
    let mut w = String::from("i,j,weight\n");
    for r in 0..4 {
        for c in 0..4 {
            let i = r * 4 + c;
            for (dr, dc) in [(0i32, 1i32), (1, 0), (0, -1), (-1, 0)] {
                let (rr, cc) = (r + dr, c + dc);
                if (0..4).contains(&rr) && (0..4).contains(&cc) {
                    w += &format!("{i},{},1\n", rr * 4 + cc);
                }
            }
        }
    }
    (write(dir, "y.csv", &y), write(dir, "x.csv", &x), write(dir, "w.csv", &w))
}

#[test]
fn spatial_all_reports_five_statistics_and_identity() {
    let dir = tempfile::tempdir().unwrap();
    let (y, x, w) = spatial_files(dir.path());
    let r = json(&scoretest(&["spatial-test", "--y", &y, "--x", &x, "--w", &w, "--row-standardize", "--stat", "all", "--format", "json"]));
    assert_eq!(r.results.len(), 5);
    let resid = r.results[4].diagnostics["decomposition_residual"];
    assert!(resid < 1e-10 * r.results[4].statistic.max(1.0));
    let joint = r.results[4].statistic;
    assert!((joint - r.results[0].statistic - r.results[3].statistic).abs() < 1e-10 * joint.max(1.0));

    let out = scoretest(&["spatial-test", "--y", &y, "--x", &x, "--w", &w, "--row-standardize"]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("decomposition_residual") && table.contains("SAR_RS*_psi"), "{table}");
}

#[test]
fn degenerate_spatial_adjustment_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let y = write(dir.path(), "y.csv", "y\n1\n3\n2\n5\n");
    let x = write(dir.path(), "x.csv", "const\n1\n1\n1\n1\n");
    let w = write(dir.path(), "w.csv", "0,1,0,1\n1,0,1,0\n0,1,0,1\n1,0,1,0\n");
    let out = scoretest(&["spatial-test", "--y", &y, "--x", &x, "--w", &w, "--no-intercept", "--row-standardize", "--stat", "joint"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn sequential_calibrates_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "obs.csv", &format!("y\n{}", "2.5\n".repeat(30)));
    let args = ["sequential", "--model", "normal", "--theta0", "0", "--n-max", "30", "--alpha", "0.05", "--calibrate-reps", "5000", "--seed", "3", "--data", &data, "--power-at", "0,1", "--power-reps", "1000", "--format", "json"];
    let r = json(&scoretest(&args));
    let Some(scoretest_cli::report::Details::Sequential(s)) = r.details else { panic!("sequential details") };
    assert!(s.calibration.boundary.level > 0.0);
    let run = s.run.unwrap();
    assert_eq!(run.decision, scoretest::sequential::Decision::Reject);
    assert!(run.stopping_time < 30);
    assert_eq!(s.power.len(), 2);
    assert_eq!(r.provenance.seed, Some(3));
    let again = json(&scoretest(&args));
    let Some(scoretest_cli::report::Details::Sequential(s2)) = again.details else { panic!() };
    assert_eq!(s2.calibration, s.calibration);
}

#[test]
fn monte_carlo_size_and_failure_limit() {
    let r = json(&scoretest(&["mc-size", "--dgp", "normal", "--statistic", "jb", "--n", "50", "--reps", "400", "--seed", "5", "--format", "json"]));
    let Some(scoretest_cli::report::Details::MonteCarlo { reports }) = &r.details else { panic!("mc details") };
    assert_eq!(reports[0].completed, 400);
    assert_eq!(reports[0].quantiles.as_ref().map(Vec::len), Some(3));

    let out = scoretest(&["mc-size", "--dgp", "constant:value=1", "--statistic", "jb", "--n", "20", "--reps", "100"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stdout).contains("over the 1% limit"));

    let r = json(&scoretest(&["mc-power", "--dgp", "normal:mean=0", "--dgp", "normal:mean=0.5", "--statistic", "rs-normal-mean:theta0=0", "--n", "40", "--reps", "400", "--format", "json"]));
    let Some(scoretest_cli::report::Details::MonteCarlo { reports }) = &r.details else { panic!() };
    assert!(reports[1].rate(0.05).unwrap().rate > reports[0].rate(0.05).unwrap().rate);
}

#[test]
fn selftest_passes_and_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = scoretest(&["selftest", "--format", "json", "--output", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r: Report = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let Some(scoretest_cli::report::Details::Selftest { checks }) = r.details else { panic!("selftest details") };
    assert!(checks.len() >= 7);
    assert!(checks.iter().all(|c| c.pass), "{checks:?}");
}
