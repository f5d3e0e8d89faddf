//! Parametric-bootstrap significance of a region's Type-1 outliers, with a
//! spatial multiple-testing weight for the region's extent.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Result, SrmrError};
use crate::model::{FitResult, SpatialDataset};
use crate::rng::{self, domain};

pub const DEFAULT_ROUNDS: usize = 2000;
/// Coefficient of the region weight `c * m * n / r^2`.
pub const REGION_WEIGHT_COEFFICIENT: f64 = 0.28;

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceReport {
    pub p_raw: f64,
    pub region_weight: f64,
    /// `min(1, region_weight * p_raw)`.
    pub p_corrected: f64,
    pub rounds: usize,
    /// Smallest absolute outlier residual.
    pub epsilon0: f64,
    pub sigma_hat: f64,
    /// Set when the region has no Type-1 outliers; `p_raw` is then 1.
    pub vacuous: bool,
}

/// Multiple-testing weight `0.28 * m * n / r^2` of a region of radius `r` in
/// an `m x n` study area.
pub fn region_weight(m: f64, n: f64, r: f64) -> Result<f64> {
    if !(m > 0.0 && n > 0.0 && r > 0.0) || !(m * n / (r * r)).is_finite() {
        return Err(SrmrError::InvalidParameter(format!(
            "region weight needs positive finite m, n, r; got {m}, {n}, {r}"
        )));
    }
    Ok(REGION_WEIGHT_COEFFICIENT * m * n / (r * r))
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Bootstrap exceedance probabilities for several thresholds from one set of
/// `rounds x n` draws of `N(0, sigma_hat^2)`: for each threshold, the mean over
/// rounds of the fraction of draws whose magnitude exceeds it.
pub fn bootstrap_p_values(
    n: usize,
    sigma_hat: f64,
    thresholds: &[f64],
    rounds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(SrmrError::EmptyData("bootstrap needs at least one residual".into()));
    }
    if rounds == 0 {
        return Err(SrmrError::InvalidParameter("at least one bootstrap round is required".into()));
    }
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return Err(SrmrError::InvalidParameter(format!("sigma_hat = {sigma_hat} must be > 0")));
    }
    let normal = Normal::new(0.0, sigma_hat)
        .map_err(|e| SrmrError::InvalidParameter(e.to_string()))?;
    let per_round: Vec<Vec<f64>> = (0..rounds)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, domain::BOOTSTRAP, b as u64);
            let mut counts = vec![0usize; thresholds.len()];
            for _ in 0..n {
                let e: f64 = normal.sample(&mut rng);
                let a = e.abs();
                for (t, &eps) in thresholds.iter().enumerate() {
                    if a > eps {
                        counts[t] += 1;
                    }
                }
            }
            counts.iter().map(|&c| c as f64 / n as f64).collect()
        })
        .collect();
    Ok((0..thresholds.len())
        .map(|t| compensated_sum(per_round.iter().map(|r| r[t])) / rounds as f64)
        .collect())
}

/// Bootstrap test of whether the smallest outlier residual is extreme under
/// `N(0, sigma_hat^2)` noise. The region weight is left at 1.
pub fn bootstrap_test(
    residuals: &[f64],
    outlier_idx: &[usize],
    sigma_hat: f64,
    rounds: usize,
    seed: u64,
) -> Result<SignificanceReport> {
    if residuals.is_empty() {
        return Err(SrmrError::EmptyData("no residuals".into()));
    }
    if let Some(&bad) = outlier_idx.iter().find(|&&i| i >= residuals.len()) {
        return Err(SrmrError::DimensionMismatch(format!(
            "outlier index {bad} out of range for {} residuals",
            residuals.len()
        )));
    }
    if outlier_idx.is_empty() {
        return Err(SrmrError::NoOutliers);
    }
    let epsilon0 = outlier_idx
        .iter()
        .map(|&i| residuals[i].abs())
        .fold(f64::INFINITY, f64::min);
    let p_raw = bootstrap_p_values(residuals.len(), sigma_hat, &[epsilon0], rounds, seed)?[0];
    Ok(SignificanceReport {
        p_raw,
        region_weight: 1.0,
        p_corrected: p_raw.min(1.0),
        rounds,
        epsilon0,
        sigma_hat,
        vacuous: false,
    })
}

/// Significance of the Type-1 outliers attributed (by nearest centroid) to
/// region `k` (1-based) of a fit. The study area is the bounding box of all
/// coordinates and the region radius twice the RMS distance of the region's
/// members to its centroid.
pub fn region_significance(
    fit: &FitResult,
    ds: &SpatialDataset,
    k: usize,
    rounds: usize,
    seed: u64,
) -> Result<SignificanceReport> {
    let model = &fit.model;
    if k == 0 || k > model.k() {
        return Err(SrmrError::InvalidParameter(format!(
            "region {k} outside 1..={}",
            model.k()
        )));
    }
    if fit.assignment.labels.len() != ds.n() {
        return Err(SrmrError::DimensionMismatch(format!(
            "fit covers {} rows, dataset has {}",
            fit.assignment.labels.len(),
            ds.n()
        )));
    }
    let comp = &model.components[k - 1];
    let members = fit.assignment.members(k);
    let nearest = |s: [f64; 2]| -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, other) in model.components.iter().enumerate() {
            let d = (s[0] - other.centroid[0]).powi(2) + (s[1] - other.centroid[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best + 1
    };
    let attributed: Vec<usize> = fit
        .assignment
        .type1
        .iter()
        .copied()
        .filter(|&i| nearest(ds.coords()[i]) == k)
        .collect();

    if members.is_empty() {
        return Err(SrmrError::EmptyData(format!("region {k} has no members")));
    }
    let mut rows = members.clone();
    rows.extend(&attributed);
    let residuals: Vec<f64> = rows.iter().map(|&i| ds.residual(i, &comp.beta)).collect();
    let outlier_idx: Vec<usize> = (members.len()..rows.len()).collect();
    let mut report = if outlier_idx.is_empty() {
        SignificanceReport {
            p_raw: 1.0,
            region_weight: 1.0,
            p_corrected: 1.0,
            rounds,
            epsilon0: f64::NAN,
            sigma_hat: comp.sigma2.sqrt(),
            vacuous: true,
        }
    } else {
        bootstrap_test(&residuals, &outlier_idx, comp.sigma2.sqrt(), rounds, seed)?
    };

    let (lo, hi) = ds.bounding_box();
    let radius = {
        let ms = members
            .iter()
            .map(|&i| {
                let s = ds.coords()[i];
                (s[0] - comp.centroid[0]).powi(2) + (s[1] - comp.centroid[1]).powi(2)
            })
            .sum::<f64>()
            / members.len() as f64;
        2.0 * ms.sqrt()
    };
    report.region_weight = region_weight(hi[0] - lo[0], hi[1] - lo[1], radius)?;
    report.p_corrected = (report.region_weight * report.p_raw).min(1.0);
    Ok(report)
}
