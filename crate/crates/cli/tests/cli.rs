use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use elssa::synth::ElSynthSpec;
use elssa::{load_image, Image2D, ImageFormat};
use serde_json::Value;
use tempfile::TempDir;

fn elssa(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elssa"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = elssa(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn csv(path: &Path) -> Image2D {
    load_image(path, ImageFormat::Csv).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn decompose_parts_add_up_and_report_is_complete() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["synth", "el", "--seed", "4", "--output", "el.csv"], d);
    ok(&["decompose", "--input", "el.csv", "--out-dir", "out", "--n-cells", "10"], d);
    let x = csv(&d.join("el.csv"));
    let (g, s, r) = (csv(&d.join("out/G.csv")), csv(&d.join("out/S.csv")), csv(&d.join("out/R.csv")));
    let sum = &(&g + &s) + &r;
    assert!(sum.max_abs_diff(&x) <= 1e-12 * x.max_abs());

    let report = json(&d.join("out/report.json"));
    assert!(report["fit_rmse"].as_f64().unwrap() >= 0.0);
    let terms = report["terms"].as_array().unwrap();
    assert!(!terms.is_empty());
    for key in ["s", "rho_row", "rho_col", "omega_row", "omega_col", "phi"] {
        assert!(terms[0][key].is_number(), "missing {key}");
    }
    let energy = report["energy"].as_array().unwrap();
    assert_eq!(energy.len(), report["triples"].as_u64().unwrap() as usize);
    let text = fs::read_to_string(d.join("out/report.txt")).unwrap();
    assert!(text.contains("fit_rmse: "));
    assert!(text.contains("[energy]"));
    let model = fs::read_to_string(d.join("out/model.txt")).unwrap();
    assert!(model.starts_with("# elssa parametric model"));
}

#[test]
fn rank_two_cosine_energy_is_in_two_triples() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["synth", "cosine", "--dims", "40,36", "--freq", "0.11,0.07", "--output", "cos.csv"], d);
    ok(&["decompose", "--input", "cos.csv", "--out-dir", "out", "--n-cells", "2"], d);
    let report = json(&d.join("out/report.json"));
    let energy = report["energy"].as_array().unwrap();
    assert!(energy[1]["cumulative"].as_f64().unwrap() > 0.99999);
}

#[test]
fn synthetic_suite_needs_about_ten_triples() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let mut counts: Vec<u64> = (0..5)
        .map(|seed| {
            let name = format!("el{seed}.csv");
            let out = format!("out{seed}");
            ok(&["synth", "el", "--seed", &seed.to_string(), "--output", &name], d);
            ok(&["decompose", "--input", &name, "--out-dir", &out, "--n-cells", "10"], d);
            json(&d.join(&out).join("report.json"))["triples_for_99_9_percent"].as_u64().unwrap()
        })
        .collect();
    counts.sort();
    assert!((6..=16).contains(&counts[2]), "median {}", counts[2]);
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    for run in ["a", "b"] {
        let img = format!("{run}.csv");
        ok(&["synth", "el", "--seed", "9", "--output", &img], d);
        ok(&["decompose", "--input", &img, "--out-dir", run, "--n-cells", "10", "--seed", "3"], d);
    }
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), fs::read(d.join("b.csv")).unwrap());
    for f in ["G.csv", "S.csv", "R.csv", "model.txt"] {
        assert_eq!(
            fs::read(d.join("a").join(f)).unwrap(),
            fs::read(d.join("b").join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(elssa(&["decompose", "--bogus"], d).status.code(), Some(1));
    assert_eq!(elssa(&[], d).status.code(), Some(1));
    assert_eq!(elssa(&["--help"], d).status.code(), Some(0));
    assert_eq!(elssa(&["decompose", "--input", "missing.csv", "--out-dir", "o"], d).status.code(), Some(1));

    // a linear ramp is a double pole, which the amplitude fit cannot separate
    let ramp = Image2D::from_fn(20, 16, |n, _| 1.0 + 0.1 * n as f64);
    fs::write(d.join("ramp.csv"), elssa::grid::format_csv(&ramp)).unwrap();
    let out = elssa(&["esprit", "--input", "ramp.csv", "--out-dir", "num", "--rank", "2"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("num").exists());
}

#[test]
fn invalid_config_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["synth", "cosine", "--dims", "20,20", "--freq", "0.1,0.1", "--output", "c.csv"], d);
    let out = elssa(&["decompose", "--input", "c.csv", "--out-dir", "out", "--window", "40,3"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("out").exists());
    let out = elssa(&["decompose", "--input", "c.csv", "--out-dir", "out", "--k", "0"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("out").exists());
}

#[test]
fn lines_from_a_decomposition_follow_the_cell_period() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["synth", "el", "--seed", "2", "--output", "el.csv", "--noise", "0"], d);
    ok(&["decompose", "--input", "el.csv", "--out-dir", "out", "--n-cells", "10"], d);
    ok(
        &["detect-lines", "--model", "out/model_s.txt", "--dims", "128,96", "--output", "lines.csv"],
        d,
    );
    let text = fs::read_to_string(d.join("lines.csv")).unwrap();
    let mut at0: Vec<f64> = text
        .lines()
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .filter(|v| v[1] == 0.0)
        .map(|v| v[2])
        .collect();
    at0.sort_by(f64::total_cmp);
    let period = ElSynthSpec::preset(2).cell_period;
    assert!(at0.len() >= 8);
    for w in at0.windows(2) {
        assert!((w[1] - w[0] - period).abs() < 0.1, "spacing {}", w[1] - w[0]);
    }
    // same lines when the cli decomposes the image itself
    ok(&["detect-lines", "--input", "el.csv", "--n-cells", "10", "--output", "direct.csv"], d);
    assert_eq!(text, fs::read_to_string(d.join("direct.csv")).unwrap());
}

#[test]
fn charlen_recovers_lambda_and_converts_temperature() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["synth", "charlen", "--output", "p.csv"], d);
    ok(
        &[
            "charlen", "--input", "p.csv", "--c", "2", "--temperature", "300", "--mode", "multiplicative",
            "--cell-axis", "col", "--n-cells", "1", "--rank", "3", "--out-dir", "out",
        ],
        d,
    );
    let report = json(&d.join("out/report.json"));
    let lambda = report["median_lambda"].as_f64().unwrap();
    assert!((lambda - 0.05).abs() < 5e-4, "lambda {lambda}");
    let c0 = report["c0"].as_f64().unwrap();
    assert!((c0 - 1.602176634e-19 / (1.380649e-23 * 300.0)).abs() < 1e-9);
    assert_eq!(report["intensity_model"], "log");
    let mask = csv(&d.join("out/mask.csv"));
    assert_eq!(mask.dims(), (24, 60));
}

#[test]
fn unstitch_recovers_the_series_shift() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["synth", "s1s2", "--seed", "5", "--output", "s.csv"], d);
    ok(
        &[
            "unstitch", "--input", "s.csv", "--out-dir", "out", "--band", "0.025,0.06", "--rank", "8",
            "--aggregate", "median",
        ],
        d,
    );
    let report = json(&d.join("out/report.json"));
    let shift = report["shifts"][0]["shift"].as_f64().unwrap();
    assert!((shift - 7.0).abs() < 1.0, "shift {shift}");
    let shifts = fs::read_to_string(d.join("out/shifts.csv")).unwrap();
    assert!(shifts.starts_with("pair,shift,cumulative,flagged\n1,"));
    assert_eq!(csv(&d.join("out/corrected.csv")).dims(), (2, 1000));
}

#[test]
fn esprit_finds_the_cosine_pole() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["synth", "cosine", "--dims", "30,30", "--freq", "0.3,0.2", "--output", "c.csv"], d);
    ok(&["esprit", "--input", "c.csv", "--out-dir", "out"], d);
    let report = json(&d.join("out/report.json"));
    assert_eq!(report["rank"], 2);
    let t = &report["terms"][0];
    assert!((t["omega_row"].as_f64().unwrap() - 0.3).abs() < 1e-8);
    assert!((t["omega_col"].as_f64().unwrap() - 0.2).abs() < 1e-8);
    let poles = fs::read_to_string(d.join("out/poles.csv")).unwrap();
    assert_eq!(poles.lines().count(), 3);
}

#[test]
fn png_output_round_trips_through_the_loader() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["synth", "el", "--seed", "1", "--output", "el.png"], d);
    ok(&["decompose", "--input", "el.png", "--out-dir", "out", "--n-cells", "10", "--format", "png16"], d);
    for f in ["G.png", "S.png", "R.png"] {
        assert!(d.join("out").join(f).exists());
    }
}

#[test]
fn bench_smoke_and_monotone_in_k() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let start = std::time::Instant::now();
    ok(&["bench", "--sizes", "16", "--json", "b.json"], d);
    assert!(start.elapsed().as_secs_f64() < 1.0);
    let secs = |k: &str| {
        ok(&["bench", "--sizes", "64", "--k", k, "--reps", "3", "--json", "b.json"], d);
        json(&d.join("b.json"))["timings"][0]["seconds"].as_f64().unwrap()
    };
    assert!(secs("10") < secs("50"));
}
