//! Single-component regression engines: ordinary least squares and least trimmed squares.
//!
//! LTS follows the concentration-step scheme: each random elemental start of
//! `p + 2` rows is refined by repeatedly refitting OLS on the `h` rows with the
//! smallest squared residuals until the retained set repeats. The best start by
//! trimmed objective wins; equal objectives resolve to the lexicographically
//! smallest retained set.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SrmrError};
use crate::model::SIGMA2_FLOOR;
use crate::rng::{self, domain};

/// Concentration steps allowed per LTS start.
pub const MAX_C_STEPS: usize = 50;
/// Row limit for [`lts_exact`].
pub const EXACT_LIMIT: usize = 20;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_LTS_STARTS: usize = 50;

const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    /// Residuals for every row supplied to the fit.
    pub residuals: Vec<f64>,
    pub inlier_idx: Vec<usize>,
    pub outlier_idx: Vec<usize>,
    /// Trimmed sum of squares for LTS, residual sum of squares for OLS.
    pub objective: f64,
}

fn check_dims(y: &[f64], x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(SrmrError::DimensionMismatch(format!(
            "y has {} rows, X has {}",
            y.len(),
            x.nrows()
        )));
    }
    if x.ncols() == 0 {
        return Err(SrmrError::DimensionMismatch("X has no columns".into()));
    }
    Ok(())
}

/// Minimum-norm least-squares coefficients on the given rows.
///
/// Solves the normal equations through an SVD of the Gram matrix, discarding
/// singular values below a relative tolerance, which yields the pseudo-inverse
/// solution when the rows are rank deficient.
pub(crate) fn solve_rows(y: &[f64], x: &DMatrix<f64>, rows: &[usize]) -> Vec<f64> {
    let d = x.ncols();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for &i in rows {
        for a in 0..d {
            let xa = x[(i, a)];
            rhs[a] += xa * y[i];
            for b in a..d {
                gram[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let svd = gram.svd(true, true);
    let max_sv = svd.singular_values.max();
    if !(max_sv > 0.0) {
        return vec![0.0; d];
    }
    let eps = max_sv * 1e-12 * d as f64;
    match svd.solve(&rhs, eps) {
        Ok(beta) => beta.iter().copied().collect(),
        Err(_) => vec![0.0; d],
    }
}

fn residuals_of(y: &[f64], x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|i| y[i] - beta.iter().enumerate().map(|(j, b)| x[(i, j)] * b).sum::<f64>())
        .collect()
}

/// OLS restricted to `rows`; residuals are reported for every row of `y`.
pub(crate) fn ols_rows(y: &[f64], x: &DMatrix<f64>, rows: &[usize]) -> Result<RegressionFit> {
    check_dims(y, x)?;
    if rows.is_empty() {
        return Err(SrmrError::EmptyData("OLS needs at least one row".into()));
    }
    let beta = solve_rows(y, x, rows);
    let residuals = residuals_of(y, x, &beta);
    let rss: f64 = rows.iter().map(|&i| residuals[i] * residuals[i]).sum();
    let mut inlier_idx = rows.to_vec();
    inlier_idx.sort_unstable();
    let outlier_idx = complement(y.len(), &inlier_idx);
    Ok(RegressionFit {
        beta,
        sigma2: (rss / rows.len() as f64).max(SIGMA2_FLOOR),
        residuals,
        inlier_idx,
        outlier_idx,
        objective: rss,
    })
}

/// Ordinary least squares with the maximum-likelihood variance `RSS / n`.
pub fn ols(y: &[f64], x: &DMatrix<f64>) -> Result<RegressionFit> {
    let rows: Vec<usize> = (0..y.len()).collect();
    ols_rows(y, x, &rows)
}

fn complement(n: usize, sorted: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n.saturating_sub(sorted.len()));
    let mut it = sorted.iter().peekable();
    for i in 0..n {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            out.push(i);
        }
    }
    out
}

/// Rows kept by trimming: the `h` smallest squared residuals, ties to the lower index.
fn h_smallest(sq: &[f64], h: usize) -> (Vec<usize>, f64) {
    let mut order: Vec<usize> = (0..sq.len()).collect();
    order.sort_unstable_by(|&a, &b| sq[a].total_cmp(&sq[b]).then(a.cmp(&b)));
    order.truncate(h);
    let objective = order.iter().map(|&i| sq[i]).sum();
    order.sort_unstable();
    (order, objective)
}

/// Number of rows retained for trim fraction `alpha`.
pub fn retained_rows(n: usize, alpha: f64) -> usize {
    n - (alpha * n as f64).floor() as usize
}

/// Consistency factor turning the mean of the `h` smallest squared standard-normal
/// residuals into an unbiased variance estimate.
pub fn lts_consistency_factor(h: usize, n: usize) -> f64 {
    if h >= n {
        return 1.0;
    }
    let gamma = h as f64 / n as f64;
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let q = std.inverse_cdf((1.0 + gamma) / 2.0);
    let phi = (-0.5 * q * q).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let truncated = gamma - 2.0 * q * phi;
    if truncated > 0.0 {
        gamma / truncated
    } else {
        1.0
    }
}

struct Candidate {
    beta: Vec<f64>,
    subset: Vec<usize>,
    objective: f64,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    let tol = TIE_TOL * a.objective.abs().max(b.objective.abs()).max(1.0);
    if a.objective < b.objective - tol {
        true
    } else if a.objective <= b.objective + tol {
        a.subset < b.subset
    } else {
        false
    }
}

fn concentrate(y: &[f64], x: &DMatrix<f64>, h: usize, start_rows: &[usize]) -> Candidate {
    let mut beta = solve_rows(y, x, start_rows);
    let mut previous: Option<Vec<usize>> = None;
    for _ in 0..MAX_C_STEPS {
        let sq: Vec<f64> = residuals_of(y, x, &beta).iter().map(|r| r * r).collect();
        let (subset, _) = h_smallest(&sq, h);
        if previous.as_ref() == Some(&subset) {
            break;
        }
        beta = solve_rows(y, x, &subset);
        previous = Some(subset);
    }
    let sq: Vec<f64> = residuals_of(y, x, &beta).iter().map(|r| r * r).collect();
    let (subset, objective) = h_smallest(&sq, h);
    Candidate {
        beta,
        subset,
        objective,
    }
}

fn finish(y: &[f64], x: &DMatrix<f64>, h: usize, best: Candidate) -> RegressionFit {
    let residuals = residuals_of(y, x, &best.beta);
    let n = y.len();
    let outlier_idx = complement(n, &best.subset);
    let sigma2 = (best.objective / h as f64 * lts_consistency_factor(h, n)).max(SIGMA2_FLOOR);
    RegressionFit {
        beta: best.beta,
        sigma2,
        residuals,
        inlier_idx: best.subset,
        outlier_idx,
        objective: best.objective,
    }
}

fn check_lts(y: &[f64], x: &DMatrix<f64>, h: usize) -> Result<()> {
    check_dims(y, x)?;
    let needed = x.ncols() + 1;
    if y.len() < needed {
        return Err(SrmrError::InsufficientData {
            needed,
            got: y.len(),
        });
    }
    if h < needed {
        return Err(SrmrError::TrimTooAggressive { h, needed });
    }
    if h > y.len() {
        return Err(SrmrError::InvalidParameter(format!(
            "h = {h} exceeds the {} available rows",
            y.len()
        )));
    }
    Ok(())
}

/// Least trimmed squares with trim fraction `alpha` in `[0, 0.5)`.
pub fn lts(
    y: &[f64],
    x: &DMatrix<f64>,
    alpha: f64,
    n_starts: usize,
    seed: u64,
) -> Result<RegressionFit> {
    if !(0.0..0.5).contains(&alpha) {
        return Err(SrmrError::InvalidParameter(format!(
            "trim fraction {alpha} outside [0, 0.5)"
        )));
    }
    lts_h(y, x, retained_rows(y.len(), alpha), n_starts, seed)
}

/// Least trimmed squares keeping exactly `h` rows.
pub fn lts_h(
    y: &[f64],
    x: &DMatrix<f64>,
    h: usize,
    n_starts: usize,
    seed: u64,
) -> Result<RegressionFit> {
    check_lts(y, x, h)?;
    let n = y.len();
    if h == n {
        let mut fit = ols(y, x)?;
        fit.sigma2 = (fit.objective / n as f64).max(SIGMA2_FLOOR);
        return Ok(fit);
    }
    let elemental = x.ncols() + 1;
    let candidates: Vec<Candidate> = (0..n_starts.max(1) as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng::stream(seed, domain::LTS_START, s);
            let mut start = sample(&mut rng, n, elemental).into_vec();
            start.sort_unstable();
            concentrate(y, x, h, &start)
        })
        .collect();
    let best = candidates
        .into_iter()
        .reduce(|best, c| if better(&c, &best) { c } else { best })
        .expect("at least one start");
    Ok(finish(y, x, h, best))
}

/// Exhaustive LTS over every size-`h` subset; refuses more than [`EXACT_LIMIT`] rows.
pub fn lts_exact(y: &[f64], x: &DMatrix<f64>, h: usize) -> Result<RegressionFit> {
    if y.len() > EXACT_LIMIT {
        return Err(SrmrError::TooLargeForExhaustive {
            n: y.len(),
            limit: EXACT_LIMIT,
        });
    }
    check_lts(y, x, h)?;
    let n = y.len();
    let mut subset: Vec<usize> = (0..h).collect();
    let mut best: Option<Candidate> = None;
    loop {
        let beta = solve_rows(y, x, &subset);
        let res = residuals_of(y, x, &beta);
        let objective: f64 = subset.iter().map(|&i| res[i] * res[i]).sum();
        let cand = Candidate {
            beta,
            subset: subset.clone(),
            objective,
        };
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
        // next combination in lexicographic order
        let mut i = h;
        loop {
            if i == 0 {
                let best = best.expect("at least one subset");
                return Ok(finish(y, x, h, best));
            }
            i -= 1;
            if subset[i] < n - h + i {
                subset[i] += 1;
                for j in i + 1..h {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}
