//! Hybrid mixture regression: a classification EM that blends the regression
//! posterior with a spatial posterior and flags rows whose regression and
//! spatial votes disagree (Type-2 outliers).

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Result, SrmrError};
use crate::model::{
    default_tau2, hybrid_posterior, regression_posterior, row_argmax, spatial_kernel,
    spatial_posterior, Component, MixtureModel, SpatialDataset,
};
use crate::regression::ols_rows;
use crate::rng::{self, domain};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_LAMBDA: f64 = 0.5;
const LLOYD_STEPS: usize = 10;

/// How the first partition (or model) of a fit is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum HmrInit {
    /// Farthest-point seeding on the coordinates, refined by a few k-means steps.
    Seed(u64),
    /// Explicit region labels `1..=K`, one per row.
    Partition(Vec<usize>),
    /// Start from an existing model; the first step is an E-step.
    Model(MixtureModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmrConfig {
    pub k: usize,
    pub lambda: f64,
    pub max_iter: usize,
    /// Spatial bandwidth; `None` uses [`default_tau2`] (or the warm-start model's value).
    pub tau2: Option<f64>,
}

impl HmrConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            lambda: DEFAULT_LAMBDA,
            max_iter: DEFAULT_MAX_ITER,
            tau2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmrState {
    pub model: MixtureModel,
    /// Row indices per component, `partition[k]` holding region `k + 1`.
    pub partition: Vec<Vec<usize>>,
    /// Region label `1..=K` per row.
    pub labels: Vec<usize>,
    /// Rows whose regression and spatial argmax disagree.
    pub type2: Vec<usize>,
    pub hybrid_posterior: DMatrix<f64>,
    pub iteration: usize,
    pub converged: bool,
    /// Number of undersized-cluster recoveries performed.
    pub recoveries: usize,
}

/// Rows whose regression argmax differs from their spatial argmax (ties to the lowest index).
pub fn vote_type2(p_reg: &DMatrix<f64>, p_spa: &DMatrix<f64>) -> Result<Vec<usize>> {
    if p_reg.shape() != p_spa.shape() {
        return Err(SrmrError::DimensionMismatch(format!(
            "posterior shapes {:?} and {:?} differ",
            p_reg.shape(),
            p_spa.shape()
        )));
    }
    Ok((0..p_reg.nrows())
        .filter(|&i| row_argmax(p_reg, i) != row_argmax(p_spa, i))
        .collect())
}

/// Smallest cluster size the M-step can fit.
pub fn min_cluster_size(p: usize) -> usize {
    p + 2
}

pub fn check_feasible(n: usize, p: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(SrmrError::InvalidParameter("K must be at least 1".into()));
    }
    let needed = k * min_cluster_size(p);
    if n < needed {
        return Err(SrmrError::InfeasibleK { k, n, needed });
    }
    Ok(())
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(s: [f64; 2], centers: &[[f64; 2]]) -> usize {
    let mut best = 0;
    for c in 1..centers.len() {
        if sq_dist(s, centers[c]) < sq_dist(s, centers[best]) {
            best = c;
        }
    }
    best
}

fn mean_coords(coords: &[[f64; 2]], rows: &[usize]) -> [f64; 2] {
    let n = rows.len() as f64;
    let (mut a, mut b) = (0.0, 0.0);
    for &i in rows {
        a += coords[i][0];
        b += coords[i][1];
    }
    [a / n, b / n]
}

/// Farthest-point seeding from a random first row, then Lloyd refinement.
/// Returns labels `1..=K`.
pub fn spatial_seed_partition(coords: &[[f64; 2]], k: usize, seed: u64) -> Vec<usize> {
    let n = coords.len();
    let mut rng = rng::stream(seed, domain::HMR_INIT, 0);
    let mut centers = vec![coords[rng.random_range(0..n)]];
    let mut nearest_d: Vec<f64> = coords.iter().map(|&s| sq_dist(s, centers[0])).collect();
    while centers.len() < k {
        let mut far = 0;
        for i in 1..n {
            if nearest_d[i] > nearest_d[far] {
                far = i;
            }
        }
        let c = coords[far];
        centers.push(c);
        for (d, &s) in nearest_d.iter_mut().zip(coords) {
            *d = d.min(sq_dist(s, c));
        }
    }
    let mut labels: Vec<usize> = coords.iter().map(|&s| nearest(s, &centers)).collect();
    for _ in 0..LLOYD_STEPS {
        for (c, center) in centers.iter_mut().enumerate() {
            let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if !rows.is_empty() {
                *center = mean_coords(coords, &rows);
            }
        }
        let next: Vec<usize> = coords.iter().map(|&s| nearest(s, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    labels.into_iter().map(|l| l + 1).collect()
}

/// Moves the worst-explained rows into undersized clusters so every cluster
/// holds at least `min_size` rows. `fit_score[i]` is the largest membership
/// probability of row `i`; the lowest scores are moved first, never from a
/// cluster that would itself drop below `min_size`.
fn recover_undersized(labels: &mut [usize], k: usize, min_size: usize, fit_score: &[f64]) -> usize {
    let mut sizes = vec![0usize; k + 1];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| fit_score[a].total_cmp(&fit_score[b]).then(a.cmp(&b)));
    let mut recoveries = 0;
    for target in 1..=k {
        if sizes[target] >= min_size {
            continue;
        }
        recoveries += 1;
        for &i in &order {
            if sizes[target] >= min_size {
                break;
            }
            let from = labels[i];
            if from == target || sizes[from] <= min_size {
                continue;
            }
            labels[i] = target;
            sizes[from] -= 1;
            sizes[target] += 1;
        }
    }
    recoveries
}

/// M-step on a partition: weights from cluster sizes, OLS per cluster, centroid means.
fn m_step(
    ds: &SpatialDataset,
    labels: &[usize],
    k: usize,
    lambda: f64,
    tau2: f64,
) -> Result<MixtureModel> {
    let n = ds.n();
    let mut components = Vec::with_capacity(k);
    for c in 1..=k {
        let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let fit = ols_rows(ds.y(), ds.x(), &rows)?;
        components.push(Component {
            pi: rows.len() as f64 / n as f64,
            beta: fit.beta,
            sigma2: fit.sigma2,
            centroid: mean_coords(ds.coords(), &rows),
        });
    }
    // normalise away rounding in the size ratios
    let total: f64 = components.iter().map(|c| c.pi).sum();
    for c in &mut components {
        c.pi /= total;
    }
    MixtureModel::new(components, lambda, tau2)
}

fn partition_of(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut parts = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        parts[l - 1].push(i);
    }
    parts
}

/// Initial-partition fit score: largest spatial kernel weight under the partition's centroids.
fn spatial_fit_score(ds: &SpatialDataset, labels: &[usize], k: usize, tau2: f64) -> Vec<f64> {
    let centroids: Vec<[f64; 2]> = (1..=k)
        .filter_map(|c| {
            let rows: Vec<usize> = (0..ds.n()).filter(|&i| labels[i] == c).collect();
            (!rows.is_empty()).then(|| mean_coords(ds.coords(), &rows))
        })
        .collect();
    if centroids.is_empty() {
        return vec![0.0; ds.n()];
    }
    let kernel = spatial_kernel(ds.coords(), &centroids, tau2);
    (0..ds.n()).map(|i| kernel[(i, row_argmax(&kernel, i))]).collect()
}

/// Runs the hybrid EM until the hard partition repeats or `max_iter` passes elapse.
pub fn hmr_fit(ds: &SpatialDataset, cfg: &HmrConfig, init: HmrInit) -> Result<HmrState> {
    let k = cfg.k;
    let p = ds.p();
    check_feasible(ds.n(), p, k)?;
    if !(0.0..=1.0).contains(&cfg.lambda) {
        return Err(SrmrError::InvalidParameter(format!(
            "lambda = {} outside [0, 1]",
            cfg.lambda
        )));
    }
    let min_size = min_cluster_size(p);
    let mut recoveries = 0;

    let (mut model, mut prev_labels) = match init {
        HmrInit::Model(m) => {
            if m.k() != k {
                return Err(SrmrError::DimensionMismatch(format!(
                    "warm-start model has {} components, expected {k}",
                    m.k()
                )));
            }
            let tau2 = cfg.tau2.unwrap_or(m.tau2);
            let model = MixtureModel::new(m.components, cfg.lambda, tau2)?;
            (model, None)
        }
        HmrInit::Seed(_) | HmrInit::Partition(_) => {
            let seed = match &init {
                HmrInit::Seed(s) => *s,
                _ => 0,
            };
            let tau2 = cfg.tau2.unwrap_or_else(|| default_tau2(ds.coords(), seed));
            let mut labels = match init {
                HmrInit::Partition(labels) => {
                    if labels.len() != ds.n() {
                        return Err(SrmrError::DimensionMismatch(format!(
                            "{} initial labels for {} rows",
                            labels.len(),
                            ds.n()
                        )));
                    }
                    if labels.iter().any(|&l| l == 0 || l > k) {
                        return Err(SrmrError::InvalidParameter(format!(
                            "initial labels must lie in 1..={k}"
                        )));
                    }
                    labels
                }
                _ => spatial_seed_partition(ds.coords(), k, seed),
            };
            let score = spatial_fit_score(ds, &labels, k, tau2);
            recoveries += recover_undersized(&mut labels, k, min_size, &score);
            let model = m_step(ds, &labels, k, cfg.lambda, tau2)?;
            (model, Some(labels))
        }
    };

    let mut iteration = 0;
    let mut converged = false;
    let mut hybrid;
    let mut type2;
    let mut labels;
    loop {
        iteration += 1;
        let p_reg = regression_posterior(ds, &model)?;
        let p_spa = spatial_posterior(ds, &model)?;
        hybrid = hybrid_posterior(&p_reg, &p_spa, model.lambda);
        type2 = vote_type2(&p_reg, &p_spa)?;
        labels = (0..ds.n()).map(|i| row_argmax(&hybrid, i) + 1).collect::<Vec<_>>();
        if prev_labels.as_ref() == Some(&labels) {
            converged = true;
            break;
        }
        if iteration >= cfg.max_iter.max(1) {
            // the returned model is refit on the final partition
            let score: Vec<f64> = (0..ds.n()).map(|i| hybrid[(i, row_argmax(&hybrid, i))]).collect();
            recoveries += recover_undersized(&mut labels, k, min_size, &score);
            model = m_step(ds, &labels, k, model.lambda, model.tau2)?;
            break;
        }
        let score: Vec<f64> = (0..ds.n()).map(|i| hybrid[(i, row_argmax(&hybrid, i))]).collect();
        recoveries += recover_undersized(&mut labels, k, min_size, &score);
        model = m_step(ds, &labels, k, model.lambda, model.tau2)?;
        prev_labels = Some(labels);
    }

    Ok(HmrState {
        partition: partition_of(&labels, k),
        model,
        labels,
        type2,
        hybrid_posterior: hybrid,
        iteration,
        converged,
        recoveries,
    })
}
