//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use srmr_cli::commands::{BenchArgs, FitOptions, ReadingArg};
use srmr_cli::{cmd_bench, thread_pool};
use srmr_core::inference::bootstrap_test;
use srmr_core::metrics::{adjusted_rand_index, outlier_acc, pce, rand_index};
use srmr_core::model::{
    hybrid_posterior, regression_posterior, spatial_posterior, Component, MixtureModel, SpatialDataset,
};
use srmr_core::regression::{lts_exact, lts_h};
use srmr_core::simgen::{
    generate, inject_type2, point_line_distance, preset, reverse, BetaReading, ScenarioConfig,
    TYPE1_MIN_DISTANCE,
};
use srmr_core::{select_k, srmr_fit, SrmrConfig};

const REPLICATES: u64 = 20;

const MIN_RI: f64 = 0.90;
const MIN_ARI: f64 = 0.80;
const MAX_PCE_DEFAULT: f64 = 0.10;
const MAX_RUNTIME: Duration = Duration::from_secs(60);
const RUNTIME_THREADS: usize = 4;

const MIN_ACC: f64 = 0.90;
const MAX_PCE_TYPE1: f64 = 0.15;

const K_CANDIDATES: [usize; 4] = [1, 2, 3, 4];
const MIN_K_HITS: usize = 16;

const LTS_INSTANCES: usize = 100;
const LTS_MAX_N: usize = 12;
const LTS_STARTS: usize = 50;
const LTS_TOL: f64 = 1e-9;
const MIN_LTS_MATCHES: usize = 99;

const METRIC_INSTANCES: usize = 200;
const METRIC_MAX_N: usize = 30;
const METRIC_TOL: f64 = 1e-12;

const POSTERIOR_DRAWS: usize = 1000;
const ROW_SUM_TOL: f64 = 1e-9;
const ENDPOINT_TOL: f64 = 1e-12;

const Z_975: f64 = 1.959964;
const BOOT_ROUNDS: usize = 2000;
const BOOT_N: usize = 100;
const BOOT_TARGET: f64 = 0.05;
const BOOT_TOL: f64 = 0.01;

const GENERATED_DATASETS: u64 = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fitted_betas(fit: &srmr_core::FitResult) -> Vec<Vec<f64>> {
    fit.model.components.iter().map(|c| c.beta.clone()).collect()
}

struct Scores {
    ri: f64,
    ari: f64,
    acc: Option<f64>,
    pce: f64,
}

fn score(cfg: &ScenarioConfig) -> Scores {
    let lds = generate(cfg).unwrap();
    let fit = srmr_fit(&lds.data, &SrmrConfig::new(cfg.k, cfg.seed)).unwrap();
    let a = &fit.assignment;
    Scores {
        ri: rand_index(&lds.true_labels, &a.labels).unwrap(),
        ari: adjusted_rand_index(&lds.true_labels, &a.labels).unwrap(),
        acc: outlier_acc(&a.type1, &a.type2, &lds.true_type1, &lds.true_type2)
            .ok()
            .map(|o| o.overall),
        pce: pce(&lds.true_betas, &fitted_betas(&fit)).unwrap(),
    }
}

fn replicate_scores(base: &ScenarioConfig) -> Vec<Scores> {
    (0..REPLICATES)
        .into_par_iter()
        .map(|seed| score(&ScenarioConfig { seed, ..base.clone() }))
        .collect()
}

fn default_scenario(reading: BetaReading) -> Outcome {
    let started = Instant::now();
    let scores = thread_pool(Some(RUNTIME_THREADS))
        .install(|| replicate_scores(&ScenarioConfig::default_with(reading)));
    let elapsed = started.elapsed();
    let ri = mean(&scores.iter().map(|s| s.ri).collect::<Vec<_>>());
    let ari = mean(&scores.iter().map(|s| s.ari).collect::<Vec<_>>());
    let pce = mean(&scores.iter().map(|s| s.pce).collect::<Vec<_>>());
    outcome(
        ri >= MIN_RI && ari >= MIN_ARI && pce <= MAX_PCE_DEFAULT && elapsed <= MAX_RUNTIME,
        format!(
            "{reading:?} reading: RI {ri:.4} (>= {MIN_RI}), ARI {ari:.4} (>= {MIN_ARI}), PCE {pce:.5} (<= {MAX_PCE_DEFAULT}), {:.1}s on {RUNTIME_THREADS} threads (<= {}s)",
            elapsed.as_secs_f64(),
            MAX_RUNTIME.as_secs()
        ),
    )
}

fn outlier_robustness(preset_name: &str, check_pce: bool) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for cfg in preset(preset_name).unwrap() {
        let scores = replicate_scores(&cfg);
        let acc = mean(&scores.iter().map(|s| s.acc.unwrap()).collect::<Vec<_>>());
        let pce = mean(&scores.iter().map(|s| s.pce).collect::<Vec<_>>());
        pass &= acc >= MIN_ACC && (!check_pce || pce <= MAX_PCE_TYPE1);
        parts.push(if check_pce {
            format!("{}: ACC {acc:.4}, PCE {pce:.5}", cfg.name)
        } else {
            format!("{}: ACC {acc:.4}", cfg.name)
        });
    }
    let bound = if check_pce {
        format!("ACC >= {MIN_ACC}, PCE <= {MAX_PCE_TYPE1}")
    } else {
        format!("ACC >= {MIN_ACC}")
    };
    outcome(pass, format!("{} ({bound})", parts.join("; ")))
}

fn model_order() -> Outcome {
    let hits = |k: usize| {
        (0..REPLICATES)
            .filter(|&seed| {
                let cfg = ScenarioConfig {
                    seed,
                    ..ScenarioConfig::default().with_components(k, BetaReading::default())
                };
                let lds = generate(&cfg).unwrap();
                select_k(&lds.data, &K_CANDIDATES, &SrmrConfig::new(k, seed))
                    .unwrap()
                    .best
                    .k()
                    == k
            })
            .count()
    };
    let (two, one) = (hits(2), hits(1));
    outcome(
        two >= MIN_K_HITS && one >= MIN_K_HITS,
        format!("K=2 chosen {two}/{REPLICATES}, K=1 chosen {one}/{REPLICATES} (>= {MIN_K_HITS} each)"),
    )
}

fn random_line_data(rng: &mut ChaCha8Rng, n: usize) -> SpatialDataset {
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
    let s: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
        .collect();
    SpatialDataset::from_predictors(y, &x, s).unwrap()
}

fn lts_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut matches = 0;
    let mut worst: f64 = 0.0;
    for instance in 0..LTS_INSTANCES {
        let n = rng.random_range(5..=LTS_MAX_N);
        let ds = random_line_data(&mut rng, n);
        let h = n - 2;
        let exact = lts_exact(ds.y(), ds.x(), h).unwrap();
        let heur = lts_h(ds.y(), ds.x(), h, LTS_STARTS, instance as u64).unwrap();
        let gap = (heur.objective - exact.objective).abs();
        worst = worst.max(gap);
        if gap <= LTS_TOL {
            matches += 1;
        }
    }
    outcome(
        matches >= MIN_LTS_MATCHES,
        format!("{matches}/{LTS_INSTANCES} within {LTS_TOL:e} (>= {MIN_LTS_MATCHES}); largest gap {worst:e}"),
    )
}

/// Pair counts by explicit enumeration: (both same, a only, b only, neither).
fn pair_table(a: &[usize], b: &[usize]) -> [f64; 4] {
    let mut t = [0.0; 4];
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let idx = match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            t[idx] += 1.0;
        }
    }
    t
}

fn brute_ri(a: &[usize], b: &[usize]) -> f64 {
    let t = pair_table(a, b);
    (t[0] + t[3]) / t.iter().sum::<f64>()
}

fn brute_ari(a: &[usize], b: &[usize]) -> Option<f64> {
    let [n11, n10, n01, n00] = pair_table(a, b);
    let den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    (den != 0.0).then(|| 2.0 * (n00 * n11 - n01 * n10) / den)
}

fn brute_pce(truth: &[Vec<f64>], fitted: &[Vec<f64>]) -> f64 {
    truth
        .iter()
        .map(|t| {
            fitted
                .iter()
                .map(|f| t.iter().zip(f).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

fn brute_acc(p1: &[usize], p2: &[usize], t1: &[usize], t2: &[usize]) -> f64 {
    let truth: Vec<usize> = t1.iter().chain(t2).copied().collect();
    let hits = truth.iter().filter(|i| p1.contains(i) || p2.contains(i)).count();
    hits as f64 / truth.len() as f64
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..METRIC_INSTANCES {
        let n = rng.random_range(2..=METRIC_MAX_N);
        let ka = rng.random_range(1..=5);
        let kb = rng.random_range(1..=5);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        let mut gaps = vec![(rand_index(&a, &b).unwrap() - brute_ri(&a, &b)).abs()];
        let ari = adjusted_rand_index(&a, &b).unwrap();
        gaps.push(match brute_ari(&a, &b) {
            Some(v) => (ari - v).abs(),
            None => (ari - 1.0).abs(),
        });

        let dim = rng.random_range(1..=3);
        let (nt, nf) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let mut betas = |m: usize| -> Vec<Vec<f64>> {
            (0..m)
                .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect()
        };
        let (truth, fitted) = (betas(nt), betas(nf));
        gaps.push((pce(&truth, &fitted).unwrap() - brute_pce(&truth, &fitted)).abs());

        let kind: Vec<u8> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let of = |v: u8| -> Vec<usize> { (0..n).filter(|&i| kind[i] == v).collect() };
        let (t1, t2) = (of(0), of(1));
        let flagged: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
        let (p1, p2): (Vec<usize>, Vec<usize>) = flagged.iter().partition(|&&i| i % 2 == 0);
        if !t1.is_empty() || !t2.is_empty() {
            let acc = outlier_acc(&p1, &p2, &t1, &t2).unwrap().overall;
            gaps.push((acc - brute_acc(&p1, &p2, &t1, &t2)).abs());
        }

        let g = gaps.iter().copied().fold(0.0, f64::max);
        worst = worst.max(g);
        if g > METRIC_TOL {
            bad += 1;
        }
    }
    outcome(
        bad == 0,
        format!(
            "{}/{METRIC_INSTANCES} instances agree within {METRIC_TOL:e}; largest gap {worst:e}",
            METRIC_INSTANCES - bad
        ),
    )
}

fn random_model(rng: &mut ChaCha8Rng, k: usize) -> MixtureModel {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    let components = w
        .iter()
        .map(|&wi| Component {
            pi: wi / total,
            beta: vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)],
            sigma2: rng.random_range(1e-3..10.0),
            centroid: [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
        })
        .collect();
    MixtureModel::new(components, rng.random_range(0.0..=1.0), rng.random_range(0.01..10.0)).unwrap()
}

fn posterior_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut row_err, mut end_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..POSTERIOR_DRAWS {
        let n = rng.random_range(1..=40);
        let k = rng.random_range(1..=5);
        let ds = random_line_data(&mut rng, n);
        let m = random_model(&mut rng, k);
        let reg = regression_posterior(&ds, &m).unwrap();
        let spa = spatial_posterior(&ds, &m).unwrap();
        let hyb = hybrid_posterior(&reg, &spa, m.lambda);
        for mat in [&reg, &spa, &hyb] {
            for i in 0..n {
                row_err = row_err.max((mat.row(i).sum() - 1.0).abs());
            }
        }
        end_err = end_err.max((hybrid_posterior(&reg, &spa, 0.0) - &reg).abs().max());
        end_err = end_err.max((hybrid_posterior(&reg, &spa, 1.0) - &spa).abs().max());
    }
    outcome(
        row_err <= ROW_SUM_TOL && end_err <= ENDPOINT_TOL,
        format!(
            "{POSTERIOR_DRAWS} draws: max row-sum error {row_err:e} (<= {ROW_SUM_TOL:e}), max endpoint error {end_err:e} (<= {ENDPOINT_TOL:e})"
        ),
    )
}

fn bootstrap_calibration() -> Outcome {
    let sigma = 1.3;
    let mut residuals = vec![0.0; BOOT_N];
    residuals[0] = Z_975 * sigma;
    let r = bootstrap_test(&residuals, &[0], sigma, BOOT_ROUNDS, 2024).unwrap();
    outcome(
        (r.p_raw - BOOT_TARGET).abs() <= BOOT_TOL,
        format!(
            "p_raw {:.5} at B={BOOT_ROUNDS}, n={BOOT_N} (target {BOOT_TARGET} +/- {BOOT_TOL})",
            r.p_raw
        ),
    )
}

fn determinism() -> Outcome {
    let args = BenchArgs {
        presets: vec!["noise".into(), "type2-outliers".into()],
        replicates: 4,
        seed: 99,
        beta_reading: ReadingArg::InterceptSlope,
        options: FitOptions::default(),
        out: None,
    };
    let one = thread_pool(Some(1)).install(|| cmd_bench(&args)).unwrap();
    let four = thread_pool(Some(4)).install(|| cmd_bench(&args)).unwrap();
    outcome(
        one == four,
        format!(
            "bench table with 1 and 4 threads {} ({} bytes)",
            if one == four { "identical" } else { "differ" },
            one.len()
        ),
    )
}

fn generator_invariants() -> Outcome {
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut involution_ok = true;
    for seed in 0..GENERATED_DATASETS {
        let cfg = ScenarioConfig {
            seed,
            type1_rate: 0.1,
            type2_rate: 0.1,
            ..ScenarioConfig::default()
        };
        let lds = generate(&cfg).unwrap();
        for &i in &lds.true_type1 {
            for line in &lds.true_betas {
                checked += 1;
                if point_line_distance(lds.data.x()[(i, 1)], lds.data.y()[i], line) <= TYPE1_MIN_DISTANCE {
                    violations += 1;
                }
            }
        }
        let flipped = inject_type2(&lds, 0.2, seed + 1000).unwrap();
        let moved: BTreeSet<usize> = flipped
            .true_type2
            .iter()
            .copied()
            .filter(|i| !lds.true_type2.contains(i))
            .collect();
        for i in 0..lds.n() {
            let (a, b) = (lds.data.coords()[i], flipped.data.coords()[i]);
            let expected = if moved.contains(&i) { reverse(a) } else { a };
            involution_ok &= b == expected && reverse(reverse(b)) == b;
        }
    }
    outcome(
        violations == 0 && involution_ok,
        format!(
            "{checked} Type-1 row/line pairs over {GENERATED_DATASETS} datasets, {violations} within distance {TYPE1_MIN_DISTANCE}; Type-2 reversal {}",
            if involution_ok { "is an exact involution" } else { "is NOT an involution" }
        ),
    )
}

type Criterion = (&'static str, &'static str, Box<dyn Fn() -> Outcome>);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1", "default scenario", Box::new(|| default_scenario(BetaReading::InterceptSlope))),
        ("1s", "default scenario, slope-only lines", Box::new(|| default_scenario(BetaReading::Slopes))),
        ("2", "Type-2 robustness", Box::new(|| outlier_robustness("type2-outliers", false))),
        ("3", "Type-1 robustness", Box::new(|| outlier_robustness("type1-outliers", true))),
        ("4", "model-order selection", Box::new(model_order)),
        ("5", "LTS oracle equivalence", Box::new(lts_oracle)),
        ("6", "metric oracles (RI, ARI, PCE, ACC)", Box::new(metric_oracles)),
        ("7", "posterior properties", Box::new(posterior_properties)),
        ("8", "bootstrap calibration", Box::new(bootstrap_calibration)),
        ("9", "bench determinism", Box::new(determinism)),
        ("10", "generator invariants", Box::new(generator_invariants)),
    ];
    let mut failed = 0;
    for (id, name, run) in &criteria {
        let started = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "acceptance {id:>2} {} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
