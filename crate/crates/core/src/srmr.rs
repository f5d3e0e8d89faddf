//! Spatial robust mixture regression: the outer loop alternating per-region
//! trimmed regression (Type-1 outliers) with hybrid mixture regression on the
//! surviving rows (Type-2 outliers), run from several random starts and
//! reduced to the start whose outlier indicator is closest to the consensus.

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{Result, SrmrError};
use crate::hmr::{self, check_feasible, hmr_fit, HmrConfig, HmrInit};
use crate::model::{
    bic, default_tau2, density_unchecked, hybrid_posterior, regression_posterior, row_argmax,
    spatial_posterior, Assignment, FitResult, MixtureModel, SpatialDataset, TraceEntry,
};
use crate::regression::{lts_h, retained_rows, DEFAULT_LTS_STARTS};
use crate::rng::{self, derive_seed, domain};

pub const DEFAULT_STARTS: usize = 10;
pub const DEFAULT_OUTER_ITER: usize = 20;
/// Trim fraction of the per-region robust fits; also caps the Type-1 flags per region.
pub const DEFAULT_TRIM: f64 = 0.45;
/// Residual cutoff, in robust standard deviations, for Type-1 flags.
pub const DEFAULT_CUTOFF: f64 = 3.0;
/// A Type-2 vote stands only when the row misses the line of its spatial
/// region by more than this many standard deviations.
pub const DEFAULT_TYPE2_CUTOFF: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SrmrConfig {
    pub k: usize,
    /// Initial random subset size; `None` uses `max(p + 2, ceil(N / (2K)))`.
    pub n0: Option<usize>,
    /// Outer-loop iteration cap (L0).
    pub max_outer: usize,
    /// Number of random starts (J).
    pub starts: usize,
    pub lambda: f64,
    /// LTS trim fraction, also the cap on Type-1 flags per region.
    pub alpha: f64,
    pub cutoff: f64,
    pub type2_cutoff: f64,
    pub lts_starts: usize,
    pub hmr_max_iter: usize,
    /// Spatial bandwidth; `None` uses [`default_tau2`].
    pub tau2: Option<f64>,
    pub seed: u64,
}

impl SrmrConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            n0: None,
            max_outer: DEFAULT_OUTER_ITER,
            starts: DEFAULT_STARTS,
            lambda: hmr::DEFAULT_LAMBDA,
            alpha: DEFAULT_TRIM,
            cutoff: DEFAULT_CUTOFF,
            type2_cutoff: DEFAULT_TYPE2_CUTOFF,
            lts_starts: DEFAULT_LTS_STARTS,
            hmr_max_iter: hmr::DEFAULT_MAX_ITER,
            tau2: None,
            seed,
        }
    }

    pub fn with_k(&self, k: usize) -> Self {
        Self { k, ..self.clone() }
    }

    fn validate(&self, ds: &SpatialDataset) -> Result<()> {
        check_feasible(ds.n(), ds.p(), self.k)?;
        if self.starts == 0 {
            return Err(SrmrError::InvalidParameter("at least one start is required".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(SrmrError::InvalidParameter(format!(
                "lambda = {} outside [0, 1]",
                self.lambda
            )));
        }
        if !(0.0..0.5).contains(&self.alpha) {
            return Err(SrmrError::InvalidParameter(format!(
                "trim fraction {} outside [0, 0.5)",
                self.alpha
            )));
        }
        if !(self.cutoff > 0.0) {
            return Err(SrmrError::InvalidParameter("cutoff must be positive".into()));
        }
        if !(self.type2_cutoff >= 0.0) {
            return Err(SrmrError::InvalidParameter("Type-2 cutoff must be non-negative".into()));
        }
        if let Some(n0) = self.n0 {
            if n0 < ds.p() + 2 || n0 > ds.n() {
                return Err(SrmrError::InvalidParameter(format!(
                    "n0 = {n0} must lie in {}..={}",
                    ds.p() + 2,
                    ds.n()
                )));
            }
        }
        Ok(())
    }

    pub fn resolved_n0(&self, n: usize, p: usize) -> usize {
        self.n0
            .unwrap_or_else(|| (p + 2).max((0.5 * n as f64 / self.k as f64).ceil() as usize))
            .min(n)
    }
}

/// What one random start converged to.
#[derive(Debug, Clone)]
struct StartOutcome {
    model: MixtureModel,
    type1: Vec<usize>,
    type2: Vec<usize>,
    labels: Vec<usize>,
    partition: Vec<usize>,
    trimmed_loglik: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<TraceEntry>,
}

/// Per-start record exposed for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StartSummary {
    pub start: usize,
    pub error: Option<String>,
    pub n_outliers: usize,
    pub trimmed_loglik: Option<f64>,
    pub converged: bool,
}

/// A fit plus the HMR partition of every non-Type-1 row, for diagnostics and self-checks.
#[derive(Debug, Clone)]
pub struct SrmrFit {
    pub result: FitResult,
    /// HMR region (1..=K) of every row used in the last HMR fit, 0 for the rest.
    pub partition: Vec<usize>,
    pub starts: Vec<StartSummary>,
}

/// Robust fit of one region with the rows it trims beyond the cutoff.
struct RegionScreen {
    beta: Vec<f64>,
    sigma: f64,
    candidates: Vec<usize>,
}

fn screen_region(
    ds: &SpatialDataset,
    rows: &[usize],
    alpha: f64,
    cutoff: f64,
    lts_starts: usize,
    seed: u64,
) -> Result<Option<RegionScreen>> {
    let needed = ds.p() + 2;
    if rows.len() < needed {
        return Ok(None);
    }
    let h = retained_rows(rows.len(), alpha).max(needed);
    let y: Vec<f64> = rows.iter().map(|&i| ds.y()[i]).collect();
    let x = ds.x().select_rows(rows);
    let fit = lts_h(&y, &x, h, lts_starts, seed)?;
    let sigma = fit.sigma2.sqrt();
    let candidates = fit
        .outlier_idx
        .iter()
        .filter(|&&j| fit.residuals[j].abs() > cutoff * sigma)
        .map(|&j| rows[j])
        .collect();
    Ok(Some(RegionScreen {
        beta: fit.beta,
        sigma,
        candidates,
    }))
}

/// Type-1 candidates of one region: LTS on the region's rows, then the
/// trimmed rows whose absolute residual exceeds `cutoff` robust standard
/// deviations.
pub fn region_type1(
    ds: &SpatialDataset,
    rows: &[usize],
    alpha: f64,
    cutoff: f64,
    lts_starts: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    Ok(screen_region(ds, rows, alpha, cutoff, lts_starts, seed)?
        .map(|r| r.candidates)
        .unwrap_or_default())
}

/// Type-1 outliers over all regions: candidates of any region that lie beyond
/// the cutoff of every region's robust line.
fn screen_type1(
    ds: &SpatialDataset,
    regions: &[Vec<usize>],
    cfg: &SrmrConfig,
    seed_of: impl Fn(usize) -> u64,
) -> Result<Vec<usize>> {
    let mut screens = Vec::with_capacity(regions.len());
    for (c, rows) in regions.iter().enumerate() {
        if let Some(s) = screen_region(ds, rows, cfg.alpha, cfg.cutoff, cfg.lts_starts, seed_of(c))? {
            screens.push(s);
        }
    }
    let mut type1: Vec<usize> = screens
        .iter()
        .flat_map(|s| s.candidates.iter().copied())
        .filter(|&i| {
            screens
                .iter()
                .all(|s| ds.residual(i, &s.beta).abs() > cfg.cutoff * s.sigma)
        })
        .collect();
    type1.sort_unstable();
    type1.dedup();
    Ok(type1)
}

fn complement(n: usize, sorted: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in sorted {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

fn members_by_label(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        out[l].push(i);
    }
    out
}

/// Initial regression memberships from LTS fits on random subsets (0-based labels).
fn initial_labels(ds: &SpatialDataset, cfg: &SrmrConfig, start_seed: u64) -> Result<Vec<usize>> {
    let n = ds.n();
    let n0 = cfg.resolved_n0(n, ds.p());
    let mut rng = rng::stream(start_seed, domain::SRMR_START, 0);
    let mut fits = Vec::with_capacity(cfg.k);
    for k in 0..cfg.k {
        let mut rows = sample(&mut rng, n, n0).into_vec();
        rows.sort_unstable();
        let y: Vec<f64> = rows.iter().map(|&i| ds.y()[i]).collect();
        let x = ds.x().select_rows(&rows);
        let h = retained_rows(rows.len(), cfg.alpha).max(ds.p() + 2);
        let fit = lts_h(&y, &x, h, cfg.lts_starts, derive_seed(start_seed, domain::LTS_START, k as u64))?;
        fits.push(fit);
    }
    // row-normalised densities; the argmax is unaffected by the normalisation
    Ok((0..n)
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::NEG_INFINITY;
            for (k, f) in fits.iter().enumerate() {
                let d = density_unchecked(ds.residual(i, &f.beta), f.sigma2);
                if d > best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect())
}

fn run_start(ds: &SpatialDataset, cfg: &SrmrConfig, tau2: f64, j: usize) -> Result<StartOutcome> {
    let n = ds.n();
    let k = cfg.k;
    let start_seed = derive_seed(cfg.seed, domain::SRMR_START, j as u64);
    let mut membership = initial_labels(ds, cfg, start_seed)?;
    let hmr_cfg = HmrConfig {
        k,
        lambda: cfg.lambda,
        max_iter: cfg.hmr_max_iter,
        tau2: Some(tau2),
    };

    let mut model: Option<MixtureModel> = None;
    let mut previous: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut type1 = Vec::new();
    let mut type2 = Vec::new();
    let mut hybrid = None;
    let mut partition = vec![0; n];

    for outer in 0..cfg.max_outer.max(1) {
        type1 = screen_type1(ds, &members_by_label(&membership, k), cfg, |c| {
            derive_seed(start_seed, domain::LTS_START, ((outer + 1) * k + c) as u64)
        })?;
        let kept = complement(n, &type1);
        let sub = ds.subset(&kept);
        let state = hmr_fit(
            &sub,
            &hmr_cfg,
            HmrInit::Seed(derive_seed(start_seed, domain::HMR_INIT, 0)),
        )?;
        // rows that fit a refitted line are not regression outliers
        type1.retain(|&i| {
            state
                .model
                .components
                .iter()
                .all(|c| ds.residual(i, &c.beta).abs() > cfg.cutoff * c.sigma2.sqrt())
        });
        let p_spa_sub = spatial_posterior(&sub, &state.model)?;
        type2 = state
            .type2
            .iter()
            .filter(|&&i| {
                let c = &state.model.components[row_argmax(&p_spa_sub, i)];
                sub.residual(i, &c.beta).abs() > cfg.type2_cutoff * c.sigma2.sqrt()
            })
            .map(|&i| kept[i])
            .collect();
        partition.iter_mut().for_each(|l| *l = 0);
        for (local, &l) in state.labels.iter().enumerate() {
            partition[kept[local]] = l;
        }
        let p_reg = regression_posterior(ds, &state.model)?;
        let p_spa = spatial_posterior(ds, &state.model)?;
        let w = hybrid_posterior(&p_reg, &p_spa, state.model.lambda);
        membership = (0..n).map(|i| row_argmax(&p_spa, i)).collect();
        hybrid = Some(w);
        model = Some(state.model);

        let mut current: Vec<usize> = type1.iter().chain(&type2).copied().collect();
        current.sort_unstable();
        trace.push(TraceEntry {
            iteration: outer + 1,
            n_type1: type1.len(),
            n_type2: type2.len(),
            hmr_iterations: state.iteration,
        });
        if previous.as_ref() == Some(&current) {
            converged = true;
            break;
        }
        previous = Some(current);
    }

    let model = model.expect("at least one outer iteration");
    let hybrid = hybrid.expect("at least one outer iteration");
    let region: Vec<usize> = (0..n).map(|i| row_argmax(&hybrid, i) + 1).collect();
    let assignment = Assignment::new(region, type1.clone(), type2.clone())?;
    let trimmed_loglik = crate::model::trimmed_loglik(ds, &model, &assignment)?;
    Ok(StartOutcome {
        model,
        labels: assignment.labels,
        type1,
        type2,
        partition,
        trimmed_loglik,
        iterations: trace.len(),
        converged,
        trace,
    })
}

/// Index of the start whose outlier indicator is closest (squared Euclidean) to
/// the mean indicator; ties go to the higher trimmed log-likelihood, then the
/// lower start index.
fn consensus(n: usize, outcomes: &[(usize, &StartOutcome)]) -> usize {
    let mut mean = vec![0.0; n];
    for (_, o) in outcomes {
        for &i in o.type1.iter().chain(&o.type2) {
            mean[i] += 1.0;
        }
    }
    let m = outcomes.len() as f64;
    mean.iter_mut().for_each(|v| *v /= m);
    let dist = |o: &StartOutcome| {
        let mut f = vec![0.0; n];
        for &i in o.type1.iter().chain(&o.type2) {
            f[i] = 1.0;
        }
        f.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    };
    let mut best = 0;
    let mut best_d = dist(outcomes[0].1);
    for (pos, (_, o)) in outcomes.iter().enumerate().skip(1) {
        let d = dist(o);
        let tol = 1e-12 * best_d.max(1.0);
        let ll_better = o.trimmed_loglik > outcomes[best].1.trimmed_loglik;
        if d < best_d - tol || (d <= best_d + tol && ll_better) {
            best = pos;
            best_d = d;
        }
    }
    best
}

/// Fits the model with `cfg.k` regions.
pub fn srmr_fit(ds: &SpatialDataset, cfg: &SrmrConfig) -> Result<FitResult> {
    Ok(srmr_fit_detailed(ds, cfg)?.result)
}

/// As [`srmr_fit`], also returning the HMR partition and per-start diagnostics.
pub fn srmr_fit_detailed(ds: &SpatialDataset, cfg: &SrmrConfig) -> Result<SrmrFit> {
    cfg.validate(ds)?;
    let tau2 = cfg.tau2.unwrap_or_else(|| default_tau2(ds.coords(), cfg.seed));
    if !(tau2 > 0.0) {
        return Err(SrmrError::InvalidParameter(format!("tau2 = {tau2} must be > 0")));
    }
    let results: Vec<Result<StartOutcome>> = (0..cfg.starts)
        .into_par_iter()
        .map(|j| run_start(ds, cfg, tau2, j))
        .collect();

    let starts: Vec<StartSummary> = results
        .iter()
        .enumerate()
        .map(|(j, r)| match r {
            Ok(o) => StartSummary {
                start: j,
                error: None,
                n_outliers: o.type1.len() + o.type2.len(),
                trimmed_loglik: Some(o.trimmed_loglik),
                converged: o.converged,
            },
            Err(e) => StartSummary {
                start: j,
                error: Some(e.to_string()),
                n_outliers: 0,
                trimmed_loglik: None,
                converged: false,
            },
        })
        .collect();
    let ok: Vec<(usize, &StartOutcome)> = results
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.as_ref().ok().map(|o| (j, o)))
        .collect();
    if ok.is_empty() {
        let diagnostics = starts
            .iter()
            .map(|s| format!("start {}: {}", s.start, s.error.as_deref().unwrap_or("ok")))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(SrmrError::FitFailed {
            starts: cfg.starts,
            diagnostics,
        });
    }
    let (j0, best) = ok[consensus(ds.n(), &ok)];
    let assignment = Assignment::new(best.labels.clone(), best.type1.clone(), best.type2.clone())?;
    let n_used = assignment.n_inliers();
    let result = FitResult {
        model: best.model.clone(),
        trimmed_loglik: best.trimmed_loglik,
        bic: bic(best.trimmed_loglik, cfg.k, ds.p(), n_used),
        assignment,
        iterations: best.iterations,
        converged: best.converged,
        seed: cfg.seed,
        start: j0,
        trace: best.trace.clone(),
    };
    Ok(SrmrFit {
        result,
        partition: best.partition.clone(),
        starts,
    })
}

/// BIC of one candidate K, or why it could not be fit.
#[derive(Debug, Clone, PartialEq)]
pub struct KCandidate {
    pub k: usize,
    pub bic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ModelSelection {
    pub best: FitResult,
    pub candidates: Vec<KCandidate>,
}

/// Fits every K in `ks` and keeps the smallest BIC; ties go to the smaller K.
pub fn select_k(ds: &SpatialDataset, ks: &[usize], cfg: &SrmrConfig) -> Result<ModelSelection> {
    if ks.is_empty() {
        return Err(SrmrError::InvalidParameter("empty K range".into()));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let fits: Vec<Result<FitResult>> = ks
        .par_iter()
        .map(|&k| srmr_fit(ds, &cfg.with_k(k)))
        .collect();
    let candidates = ks
        .iter()
        .zip(&fits)
        .map(|(&k, f)| KCandidate {
            k,
            bic: f.as_ref().ok().map(|r| r.bic),
            error: f.as_ref().err().map(ToString::to_string),
        })
        .collect();
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for f in fits {
        match f {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.bic < b.bic) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(best) => Ok(ModelSelection { best, candidates }),
        None => Err(last_err.expect("non-empty K range")),
    }
}
