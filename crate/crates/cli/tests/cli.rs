use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use srmr_cli::commands::{parse_k_range, BenchArgs, EvalArgs, FitArgs, FitOptions, PlotArgs, ReadingArg, SignificanceArgs, SimulateArgs};
use srmr_cli::plot::{line_samples, LINE_SAMPLES};
use srmr_cli::report::{to_json, FitReport, REPORT_SCHEMA};
use srmr_cli::{cmd_bench, cmd_eval, cmd_fit, cmd_plotdata, cmd_simulate, cmd_test_significance, exit};
use srmr_core::inference::region_weight;
use srmr_core::io::{read_dataset, read_truth};
use srmr_core::model::{regression_posterior, row_argmax};
use tempfile::TempDir;

fn srmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srmr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn simulate(dir: &Path, preset: &str, reps: usize, seed: u64) -> Vec<PathBuf> {
    cmd_simulate(&SimulateArgs {
        preset: Some(preset.into()),
        config: None,
        replicates: Some(reps),
        seed,
        beta_reading: ReadingArg::InterceptSlope,
        out: dir.to_path_buf(),
    })
    .unwrap()
}

fn sidecar(data: &Path, ext: &str) -> PathBuf {
    PathBuf::from(data.to_str().unwrap().replace(".csv", ext))
}

fn fit_args(data: &Path, k: usize) -> FitArgs {
    FitArgs {
        data: data.to_path_buf(),
        k: Some(k),
        k_range: None,
        seed: 1,
        options: FitOptions::default(),
        out: None,
    }
}

fn write_report(dir: &Path, report: &FitReport) -> PathBuf {
    let path = dir.join("fit.json");
    fs::write(&path, to_json(report)).unwrap();
    path
}

fn sorted_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_writes_one_dataset_per_replicate() {
    let dir = TempDir::new().unwrap();
    let files = simulate(dir.path(), "noise", 5, 7);
    assert_eq!(files.len(), 15);
    let csvs = sorted_files(dir.path())
        .into_iter()
        .filter(|(n, _)| n.ends_with(".csv") && !n.ends_with(".truth.csv"))
        .count();
    assert_eq!(csvs, 15);
    for f in &files {
        assert!(sidecar(f, ".truth.csv").exists());
        assert!(sidecar(f, ".scenario.toml").exists());
    }
}

#[test]
fn simulate_is_byte_identical_across_runs_and_thread_counts() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    srmr_cli::thread_pool(Some(1)).install(|| simulate(a.path(), "mixing", 3, 11));
    srmr_cli::thread_pool(Some(4)).install(|| simulate(b.path(), "mixing", 3, 11));
    assert_eq!(sorted_files(a.path()), sorted_files(b.path()));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();

    let bad = srmr(&["simulate", "--preset", "bogus", "--out", out]);
    assert_eq!(bad.status.code(), Some(exit::CONFIG));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("noise"));

    let ok = srmr(&["simulate", "--preset", "sample-size", "--replicates", "1", "--seed", "3", "--out", out]);
    assert_eq!(ok.status.code(), Some(exit::OK));
    let data = dir.path().join("sample-size_n-100_r000.csv");
    assert!(data.exists());
    let data = data.to_str().unwrap();

    let infeasible = srmr(&["fit", "--data", data, "--k", "40"]);
    assert_eq!(infeasible.status.code(), Some(exit::INFEASIBLE));

    let broken = dir.path().join("broken.csv");
    fs::write(&broken, "y,x1,sx,sy\n1,2,3,4\n1,oops,3,4\n").unwrap();
    let parse = srmr(&["fit", "--data", broken.to_str().unwrap(), "--k", "1"]);
    assert_ne!(parse.status.code(), Some(exit::OK));
    assert!(String::from_utf8_lossy(&parse.stderr).contains("line 3"));

    let report = dir.path().join("fit.json");
    let fit = srmr(&["fit", "--data", data, "--k", "2", "--starts", "2", "--out", report.to_str().unwrap()]);
    assert_eq!(fit.status.code(), Some(exit::OK));
    let other = dir.path().join("other.truth.csv");
    fs::write(&other, "row,label,outlier_type,beta_component\n0,1,none,1\n1,1,none,1\n").unwrap();
    let mismatch = srmr(&["eval", "--report", report.to_str().unwrap(), "--truth", other.to_str().unwrap()]);
    assert_eq!(mismatch.status.code(), Some(exit::INPUT_MISMATCH));

    let missing = srmr(&["fit", "--data", dir.path().join("nope.csv").to_str().unwrap(), "--k", "2"]);
    assert_eq!(missing.status.code(), Some(exit::IO));
}

#[test]
fn fit_report_has_the_documented_shape_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let data = &simulate(dir.path(), "type1-outliers", 1, 5)[0];
    let report = cmd_fit(&fit_args(data, 2)).unwrap();
    let text = to_json(&report);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema"], REPORT_SCHEMA);
    assert_eq!(v["tool_version"], env!("CARGO_PKG_VERSION"));
    let n = v["n"].as_u64().unwrap() as usize;
    let k = v["k"].as_u64().unwrap() as usize;
    assert_eq!(k, 2);
    for key in ["betas", "sigmas", "sigma2", "pis", "centroids"] {
        assert_eq!(v[key].as_array().unwrap().len(), k, "{key}");
    }
    assert!(v["betas"][0].as_array().unwrap().iter().all(Value::is_f64));
    assert_eq!(v["labels"].as_array().unwrap().len(), n);
    for key in ["type1", "type2", "trace"] {
        assert!(v[key].is_array(), "{key}");
    }
    for key in ["bic", "trimmed_loglik"] {
        assert!(v[key].is_f64(), "{key}");
    }
    assert!(v["iterations"].is_u64() && v["seed"].is_u64() && v["converged"].is_boolean());
    assert!(v["settings"]["lambda"].is_f64());
    assert!(v.get("selected_k").is_none());

    let back: FitReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    let fit = back.to_fit().unwrap();
    assert_eq!(fit.assignment.labels, report.labels);
    assert_eq!(to_json(&FitReport { ..back }), text);

    let mut wrong = report.clone();
    wrong.schema = "srmr-report/0".into();
    assert_eq!(wrong.to_fit().unwrap_err().code, exit::INPUT_MISMATCH);
}

#[test]
fn k_range_fit_reports_the_selection() {
    assert_eq!(parse_k_range("1..4").unwrap(), vec![1, 2, 3, 4]);
    assert_eq!(parse_k_range("2..=3").unwrap(), vec![2, 3]);
    assert_eq!(parse_k_range("1,3").unwrap(), vec![1, 3]);
    assert!(parse_k_range("0..2").is_err() && parse_k_range("x").is_err());

    let dir = TempDir::new().unwrap();
    let data = &simulate(dir.path(), "components", 1, 2)[0];
    let report = cmd_fit(&FitArgs {
        k: None,
        k_range: Some("1..3".into()),
        ..fit_args(data, 1)
    })
    .unwrap();
    assert_eq!(report.selected_k, Some(report.k));
    assert_eq!(report.k, 2);
    let cands = report.candidates.unwrap();
    assert_eq!(cands.iter().map(|c| c.k).collect::<Vec<_>>(), vec![1, 2, 3]);
    let best = cands.iter().filter_map(|c| c.bic).fold(f64::INFINITY, f64::min);
    assert_eq!(best, report.bic);
}

#[test]
fn lambda_zero_labels_follow_the_regression_posterior() {
    let dir = TempDir::new().unwrap();
    let data = &simulate(dir.path(), "type1-outliers", 1, 9)[0];
    let mut args = fit_args(data, 2);
    args.options.lambda = 0.0;
    let fit = cmd_fit(&args).unwrap().to_fit().unwrap();
    let ds = read_dataset(fs::File::open(data).unwrap()).unwrap();
    let p_reg = regression_posterior(&ds, &fit.model).unwrap();
    for (i, &l) in fit.assignment.labels.iter().enumerate() {
        if l != 0 {
            assert_eq!(l, row_argmax(&p_reg, i) + 1, "row {i}");
        }
    }
}

#[test]
fn eval_of_a_perfect_fit() {
    let dir = TempDir::new().unwrap();
    let data = &simulate(dir.path(), "sample-size", 1, 4)[0];
    let truth_path = sidecar(data, ".truth.csv");
    let truth = read_truth(fs::File::open(&truth_path).unwrap()).unwrap();
    let scenario = srmr_cli::commands::load_scenario(&sidecar(data, ".scenario.toml")).unwrap();

    let mut report = cmd_fit(&fit_args(data, 2)).unwrap();
    report.labels = truth.labels.clone();
    report.type1 = truth.type1.clone();
    report.type2 = truth.type2.clone();
    report.betas = scenario.betas.iter().map(|b| b.to_vec()).collect();
    let path = write_report(dir.path(), &report);
    let eval = cmd_eval(&EvalArgs {
        report: path.clone(),
        truth: truth_path.clone(),
        scenario: Some(sidecar(data, ".scenario.toml")),
        out: None,
    })
    .unwrap();
    assert_eq!((eval.ri, eval.ari, eval.acc, eval.pce), (1.0, 1.0, Some(1.0), Some(0.0)));
    assert_eq!(eval.acc_type1, Some(1.0));
    assert_eq!(eval.acc_type2, None);

    let clean = TempDir::new().unwrap();
    let cfg = srmr_core::simgen::ScenarioConfig {
        mixing: vec![0.5, 0.5, 0.0],
        ..Default::default()
    };
    let cfg_path = clean.path().join("clean.toml");
    fs::write(&cfg_path, toml::to_string(&cfg).unwrap()).unwrap();
    let files = cmd_simulate(&SimulateArgs {
        preset: None,
        config: Some(cfg_path),
        replicates: None,
        seed: 0,
        beta_reading: ReadingArg::InterceptSlope,
        out: clean.path().join("out"),
    })
    .unwrap();
    assert_eq!(files.len(), 1);
    let fit = cmd_fit(&fit_args(&files[0], 2)).unwrap();
    let eval = cmd_eval(&EvalArgs {
        report: write_report(clean.path(), &fit),
        truth: sidecar(&files[0], ".truth.csv"),
        scenario: None,
        out: None,
    })
    .unwrap();
    assert_eq!((eval.acc, eval.acc_type1, eval.acc_type2, eval.pce), (None, None, None, None));
    let json: Value = serde_json::from_str(&to_json(&eval)).unwrap();
    assert!(json["acc"].is_null());
}

#[test]
fn single_replicate_bench_equals_eval() {
    let dir = TempDir::new().unwrap();
    let table = cmd_bench(&BenchArgs {
        presets: vec!["sample-size".into()],
        replicates: 1,
        seed: 8,
        beta_reading: ReadingArg::InterceptSlope,
        options: FitOptions::default(),
        out: None,
    })
    .unwrap();
    let files = simulate(dir.path(), "sample-size", 1, 8);
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some(srmr_cli::commands::BENCH_HEADER));
    for (row, data) in lines.zip(&files) {
        let scenario = srmr_cli::commands::load_scenario(&sidecar(data, ".scenario.toml")).unwrap();
        let report = cmd_fit(&FitArgs {
            seed: scenario.seed,
            ..fit_args(data, scenario.k)
        })
        .unwrap();
        let eval = cmd_eval(&EvalArgs {
            report: write_report(dir.path(), &report),
            truth: sidecar(data, ".truth.csv"),
            scenario: Some(sidecar(data, ".scenario.toml")),
            out: None,
        })
        .unwrap();
        let expected = format!(
            "{},1,0,{},{},{},{}",
            scenario.name,
            eval.ri,
            eval.ari,
            eval.acc.unwrap(),
            eval.pce.unwrap()
        );
        assert_eq!(row, expected);
    }
}

#[test]
fn significance_regions_and_weights() {
    let dir = TempDir::new().unwrap();
    let data = &simulate(dir.path(), "type1-outliers", 1, 12)[0];
    let report = cmd_fit(&fit_args(data, 2)).unwrap();
    let path = write_report(dir.path(), &report);
    let args = SignificanceArgs {
        data: data.clone(),
        report: path,
        rounds: 500,
        seed: 3,
        out: None,
    };
    let doc = cmd_test_significance(&args).unwrap();
    assert_eq!(doc.regions.len(), 2);
    assert_eq!(doc, cmd_test_significance(&args).unwrap());

    let ds = read_dataset(fs::File::open(data).unwrap()).unwrap();
    let (lo, hi) = ds.bounding_box();
    let (m, n) = (hi[0] - lo[0], hi[1] - lo[1]);
    for r in &doc.regions {
        let c = report.centroids[r.k - 1];
        let members: Vec<usize> = (0..ds.n()).filter(|&i| report.labels[i] == r.k).collect();
        let ms: f64 = members
            .iter()
            .map(|&i| (ds.coords()[i][0] - c[0]).powi(2) + (ds.coords()[i][1] - c[1]).powi(2))
            .sum::<f64>()
            / members.len() as f64;
        let radius = 2.0 * ms.sqrt();
        let by_hand = 0.28 * m * n / (radius * radius);
        assert!((r.region_weight - by_hand).abs() <= 1e-12 * by_hand);
        assert_eq!(r.region_weight, region_weight(m, n, radius).unwrap());
        assert_eq!(r.p_corrected, (r.region_weight * r.p_raw).min(1.0));
        assert!(!r.vacuous && r.p_corrected < 0.05);
    }
}

#[test]
fn plot_files_match_the_report() {
    let dir = TempDir::new().unwrap();
    let data = &simulate(dir.path(), "type2-outliers", 1, 6)[0];
    let report = cmd_fit(&fit_args(data, 2)).unwrap();
    let out = dir.path().join("plots");
    let written = cmd_plotdata(&PlotArgs {
        report: write_report(dir.path(), &report),
        data: data.clone(),
        out: out.clone(),
        svg: true,
    })
    .unwrap();
    assert_eq!(written.len(), 4);

    for (name, label_col) in [("regression.csv", 2), ("spatial.csv", 2)] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        let labels: Vec<usize> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(label_col).unwrap().parse().unwrap())
            .collect();
        assert_eq!(labels, report.labels, "{name}");
    }

    let lines = fs::read_to_string(out.join("lines.csv")).unwrap();
    let rows: Vec<Vec<f64>> = lines
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), LINE_SAMPLES * report.k);
    for r in &rows {
        let b = &report.betas[r[0] as usize - 1];
        assert_eq!(r[2], b[0] + b[1] * r[1]);
    }
    let ds = read_dataset(fs::File::open(data).unwrap()).unwrap();
    assert_eq!(line_samples(&ds, &report.to_fit().unwrap()).len(), rows.len());

    let svg = fs::read_to_string(out.join("scatter.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let circles = doc.descendants().filter(|n| n.has_tag_name("circle")).count();
    assert_eq!(circles, 2 * ds.n());
}
