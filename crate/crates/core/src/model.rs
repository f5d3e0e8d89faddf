//! Shared domain types and the likelihood primitives used by every fitting stage.

use nalgebra::DMatrix;
use rand::seq::index::sample;

use crate::error::{Result, SrmrError};
use crate::rng::{self, domain};

/// Lower clamp for the Gaussian density.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Lower clamp for every estimated noise variance.
pub const SIGMA2_FLOOR: f64 = 1e-8;

const SUM_TOL: f64 = 1e-9;

/// Geocoded observations: response, design matrix with intercept, 2-D coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDataset {
    y: Vec<f64>,
    x: DMatrix<f64>,
    coords: Vec<[f64; 2]>,
    ids: Option<Vec<String>>,
}

impl SpatialDataset {
    /// Builds a dataset from a design matrix whose first column is the intercept.
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, coords: Vec<[f64; 2]>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(SrmrError::InvalidDataset("dataset has no rows".into()));
        }
        if x.nrows() != n || coords.len() != n {
            return Err(SrmrError::DimensionMismatch(format!(
                "y has {n} rows, X has {}, coordinates have {}",
                x.nrows(),
                coords.len()
            )));
        }
        if x.ncols() == 0 {
            return Err(SrmrError::InvalidDataset("design matrix has no columns".into()));
        }
        if let Some(i) = (0..n).find(|&i| x[(i, 0)] != 1.0) {
            return Err(SrmrError::InvalidDataset(format!(
                "intercept column is not 1 at row {i}"
            )));
        }
        let finite = y.iter().all(|v| v.is_finite())
            && x.iter().all(|v| v.is_finite())
            && coords.iter().all(|c| c[0].is_finite() && c[1].is_finite());
        if !finite {
            return Err(SrmrError::InvalidDataset("non-finite value in y, X or S".into()));
        }
        Ok(Self {
            y,
            x,
            coords,
            ids: None,
        })
    }

    /// Builds a dataset from raw predictors (N×p); the intercept column is prepended.
    pub fn from_predictors(
        y: Vec<f64>,
        predictors: &[Vec<f64>],
        coords: Vec<[f64; 2]>,
    ) -> Result<Self> {
        let n = y.len();
        let p = predictors.first().map_or(0, Vec::len);
        if predictors.len() != n {
            return Err(SrmrError::DimensionMismatch(format!(
                "y has {n} rows, predictors have {}",
                predictors.len()
            )));
        }
        if let Some(i) = predictors.iter().position(|r| r.len() != p) {
            return Err(SrmrError::DimensionMismatch(format!(
                "predictor row {i} has {} values, expected {p}",
                predictors[i].len()
            )));
        }
        let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { predictors[i][j - 1] });
        Self::new(y, x, coords)
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n() {
            return Err(SrmrError::DimensionMismatch(format!(
                "{} row identifiers for {} rows",
                ids.len(),
                self.n()
            )));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of predictors, excluding the intercept.
    pub fn p(&self) -> usize {
        self.x.ncols() - 1
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    /// Linear predictor `x_i^T beta`.
    pub fn predict(&self, row: usize, beta: &[f64]) -> f64 {
        beta.iter().enumerate().map(|(j, b)| self.x[(row, j)] * b).sum()
    }

    pub fn residual(&self, row: usize, beta: &[f64]) -> f64 {
        self.y[row] - self.predict(row, beta)
    }

    /// Dataset restricted to `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> SpatialDataset {
        SpatialDataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            x: self.x.select_rows(rows),
            coords: rows.iter().map(|&i| self.coords[i]).collect(),
            ids: self
                .ids
                .as_ref()
                .map(|ids| rows.iter().map(|&i| ids[i].clone()).collect()),
        }
    }

    /// Replaces the coordinates, keeping the response and design.
    pub fn with_coords(&self, coords: Vec<[f64; 2]>) -> Result<SpatialDataset> {
        let mut ds = SpatialDataset::new(self.y.clone(), self.x.clone(), coords)?;
        ds.ids = self.ids.clone();
        Ok(ds)
    }

    /// Axis-aligned bounding box `(min, max)` of the coordinates.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        bounding_box(&self.coords)
    }
}

pub(crate) fn bounding_box(coords: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in coords {
        for a in 0..2 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    (lo, hi)
}

/// One mixture component: weight, coefficients, noise variance, spatial centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub pi: f64,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub centroid: [f64; 2],
}

/// K components plus the hybrid weight and the spatial bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub components: Vec<Component>,
    pub lambda: f64,
    pub tau2: f64,
}

impl MixtureModel {
    pub fn new(components: Vec<Component>, lambda: f64, tau2: f64) -> Result<Self> {
        let model = Self {
            components,
            lambda,
            tau2,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(SrmrError::InvalidParameter("model has no components".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(SrmrError::InvalidParameter(format!(
                "lambda = {} outside [0, 1]",
                self.lambda
            )));
        }
        if !(self.tau2 > 0.0 && self.tau2.is_finite()) {
            return Err(SrmrError::InvalidParameter(format!("tau2 = {} must be > 0", self.tau2)));
        }
        let dim = self.components[0].beta.len();
        for (k, c) in self.components.iter().enumerate() {
            if !(c.sigma2 > 0.0) {
                return Err(SrmrError::InvalidParameter(format!(
                    "component {k}: sigma2 = {} must be > 0",
                    c.sigma2
                )));
            }
            if !(c.pi > 0.0 && c.pi <= 1.0) {
                return Err(SrmrError::InvalidParameter(format!(
                    "component {k}: pi = {} outside (0, 1]",
                    c.pi
                )));
            }
            if c.beta.len() != dim {
                return Err(SrmrError::DimensionMismatch(format!(
                    "component {k} has {} coefficients, expected {dim}",
                    c.beta.len()
                )));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.pi).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(SrmrError::InvalidParameter(format!(
                "mixing weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    fn check_against(&self, ds: &SpatialDataset) -> Result<()> {
        self.validate()?;
        let dim = self.components[0].beta.len();
        if dim != ds.x().ncols() {
            return Err(SrmrError::DimensionMismatch(format!(
                "model has {dim} coefficients, dataset has {} columns",
                ds.x().ncols()
            )));
        }
        Ok(())
    }
}

/// Region labels (0 = outlier) plus the typed outlier index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub labels: Vec<usize>,
    pub type1: Vec<usize>,
    pub type2: Vec<usize>,
}

impl Assignment {
    /// Builds an assignment from per-row region labels `1..=K` and the outlier sets.
    ///
    /// Rows in either outlier set are relabelled 0; the sets are sorted and must be disjoint.
    pub fn new(mut labels: Vec<usize>, mut type1: Vec<usize>, mut type2: Vec<usize>) -> Result<Self> {
        type1.sort_unstable();
        type1.dedup();
        type2.sort_unstable();
        type2.dedup();
        let n = labels.len();
        if type1.iter().chain(&type2).any(|&i| i >= n) {
            return Err(SrmrError::DimensionMismatch("outlier index out of range".into()));
        }
        if type1.iter().any(|i| type2.binary_search(i).is_ok()) {
            return Err(SrmrError::InvalidParameter(
                "type-1 and type-2 outlier sets overlap".into(),
            ));
        }
        for &i in type1.iter().chain(&type2) {
            labels[i] = 0;
        }
        if let Some(i) = labels
            .iter()
            .enumerate()
            .position(|(i, &l)| l == 0 && type1.binary_search(&i).is_err() && type2.binary_search(&i).is_err())
        {
            return Err(SrmrError::InvalidParameter(format!(
                "row {i} labelled 0 but is in neither outlier set"
            )));
        }
        Ok(Self {
            labels,
            type1,
            type2,
        })
    }

    /// Every row assigned to a region, none flagged.
    pub fn all_inliers(labels: Vec<usize>) -> Result<Self> {
        Self::new(labels, Vec::new(), Vec::new())
    }

    pub fn outliers(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.type1.iter().chain(&self.type2).copied().collect();
        all.sort_unstable();
        all
    }

    pub fn n_inliers(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Rows assigned to region `k` (1-based).
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == k).then_some(i))
            .collect()
    }
}

/// One outer SRMR iteration, kept for the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub n_type1: usize,
    pub n_type2: usize,
    pub hmr_iterations: usize,
}

/// Outcome of a spatially-constrained robust mixture regression fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: MixtureModel,
    pub assignment: Assignment,
    pub trimmed_loglik: f64,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    /// Index of the consensus start that produced this result.
    pub start: usize,
    pub trace: Vec<TraceEntry>,
}

impl FitResult {
    pub fn k(&self) -> usize {
        self.model.k()
    }
}

/// Normal density of residual `r` with mean 0 and variance `sigma2`, clamped at [`DENSITY_FLOOR`].
pub fn gaussian_density(r: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(SrmrError::InvalidParameter(format!("sigma2 = {sigma2} must be > 0")));
    }
    if !r.is_finite() {
        return Err(SrmrError::InvalidParameter(format!("residual {r} is not finite")));
    }
    Ok(density_unchecked(r, sigma2))
}

#[inline]
pub(crate) fn density_unchecked(r: f64, sigma2: f64) -> f64 {
    let d = (-r * r / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt();
    d.max(DENSITY_FLOOR)
}

/// Regression membership probabilities `p_reg(z_i = k | x_i, y_i)`, one row per observation.
pub fn regression_posterior(ds: &SpatialDataset, model: &MixtureModel) -> Result<DMatrix<f64>> {
    Ok(regression_posterior_with_diagnostics(ds, model)?.0)
}

/// As [`regression_posterior`], also returning how many rows fell back to uniform
/// because every component density hit the floor.
pub fn regression_posterior_with_diagnostics(
    ds: &SpatialDataset,
    model: &MixtureModel,
) -> Result<(DMatrix<f64>, usize)> {
    model.check_against(ds)?;
    let n = ds.n();
    let k = model.k();
    let mut out = DMatrix::zeros(n, k);
    let mut fallback = 0;
    let mut dens = vec![0.0; k];
    for i in 0..n {
        let mut all_floor = true;
        for (c, comp) in model.components.iter().enumerate() {
            let d = density_unchecked(ds.residual(i, &comp.beta), comp.sigma2);
            all_floor &= d <= DENSITY_FLOOR;
            dens[c] = comp.pi * d;
        }
        let total: f64 = dens.iter().sum();
        if all_floor || !(total > 0.0) || !total.is_finite() {
            fallback += 1;
            for c in 0..k {
                out[(i, c)] = 1.0 / k as f64;
            }
        } else {
            for c in 0..k {
                out[(i, c)] = dens[c] / total;
            }
        }
    }
    Ok((out, fallback))
}

/// Spatial membership probabilities: softmax of `-||s_i - w_k||^2 / (2 tau2)`.
pub fn spatial_posterior(ds: &SpatialDataset, model: &MixtureModel) -> Result<DMatrix<f64>> {
    model.check_against(ds)?;
    let centroids: Vec<[f64; 2]> = model.components.iter().map(|c| c.centroid).collect();
    if centroids.iter().any(|w| !w[0].is_finite() || !w[1].is_finite()) {
        return Err(SrmrError::InvalidParameter("non-finite centroid".into()));
    }
    Ok(spatial_kernel(ds.coords(), &centroids, model.tau2))
}

pub(crate) fn spatial_kernel(coords: &[[f64; 2]], centroids: &[[f64; 2]], tau2: f64) -> DMatrix<f64> {
    let k = centroids.len();
    let mut out = DMatrix::zeros(coords.len(), k);
    let mut logits = vec![0.0; k];
    for (i, s) in coords.iter().enumerate() {
        for (c, w) in centroids.iter().enumerate() {
            let d2 = (s[0] - w[0]).powi(2) + (s[1] - w[1]).powi(2);
            logits[c] = -d2 / (2.0 * tau2);
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        for c in 0..k {
            out[(i, c)] = (logits[c] - max).exp() / total;
        }
    }
    out
}

/// `(1 - lambda) * p_reg + lambda * p_spa`, elementwise.
pub fn hybrid_posterior(p_reg: &DMatrix<f64>, p_spa: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    p_reg.zip_map(p_spa, |r, s| (1.0 - lambda) * r + lambda * s)
}

/// Mixture log-likelihood summed over rows not labelled as outliers.
pub fn trimmed_loglik(
    ds: &SpatialDataset,
    model: &MixtureModel,
    assignment: &Assignment,
) -> Result<f64> {
    model.check_against(ds)?;
    if assignment.labels.len() != ds.n() {
        return Err(SrmrError::DimensionMismatch(format!(
            "assignment has {} labels for {} rows",
            assignment.labels.len(),
            ds.n()
        )));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for (i, &label) in assignment.labels.iter().enumerate() {
        if label == 0 {
            continue;
        }
        used += 1;
        let lik: f64 = model
            .components
            .iter()
            .map(|c| c.pi * density_unchecked(ds.residual(i, &c.beta), c.sigma2))
            .sum();
        total += lik.ln();
    }
    if used == 0 {
        return Err(SrmrError::EmptyLikelihood);
    }
    Ok(total)
}

/// Free parameters counted by [`bic`]: `K(p+1)` coefficients, `K` variances, `K-1` weights.
pub fn bic_parameter_count(k: usize, p: usize) -> usize {
    k * (p + 3) - 1
}

pub fn bic(trimmed_loglik: f64, k: usize, p: usize, n_used: usize) -> f64 {
    -2.0 * trimmed_loglik + bic_parameter_count(k, p) as f64 * (n_used.max(1) as f64).ln()
}

/// Default spatial bandwidth: squared median pairwise distance over a seeded
/// subsample of at most 500 rows. Falls back to 1 when all sampled points coincide.
pub fn default_tau2(coords: &[[f64; 2]], seed: u64) -> f64 {
    let n = coords.len();
    if n < 2 {
        return 1.0;
    }
    let rows: Vec<usize> = if n <= 500 {
        (0..n).collect()
    } else {
        let mut rng = rng::stream(seed, domain::TAU, 0);
        let mut v = sample(&mut rng, n, 500).into_vec();
        v.sort_unstable();
        v
    };
    let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let (s, t) = (coords[i], coords[j]);
            dists.push(((s[0] - t[0]).powi(2) + (s[1] - t[1]).powi(2)).sqrt());
        }
    }
    dists.sort_unstable_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if median > 0.0 {
        median * median
    } else {
        1.0
    }
}

/// Index of the largest entry in a row, ties broken by the lowest index.
pub fn row_argmax(m: &DMatrix<f64>, row: usize) -> usize {
    let mut best = 0;
    for c in 1..m.ncols() {
        if m[(row, c)] > m[(row, best)] {
            best = c;
        }
    }
    best
}
