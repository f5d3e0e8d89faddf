//! JSON documents written by the commands.

use serde::{Deserialize, Serialize};
use srmr_core::srmr::KCandidate;
use srmr_core::{Assignment, Component, FitResult, MixtureModel, SrmrConfig};

use crate::error::{CliError, CliResult};

pub const REPORT_SCHEMA: &str = "srmr-report/1";
pub const EVAL_SCHEMA: &str = "srmr-eval/1";
pub const SIGNIFICANCE_SCHEMA: &str = "srmr-significance/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub lambda: f64,
    pub alpha: f64,
    pub cutoff: f64,
    pub type2_cutoff: f64,
    pub starts: usize,
    pub max_outer: usize,
    pub lts_starts: usize,
    pub hmr_max_iter: usize,
    pub n0: Option<usize>,
    pub tau2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub k: usize,
    pub bic: Option<f64>,
    pub error: Option<String>,
}

impl From<&KCandidate> for CandidateReport {
    fn from(c: &KCandidate) -> Self {
        Self {
            k: c.k,
            bic: c.bic,
            error: c.error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub iteration: usize,
    pub n_type1: usize,
    pub n_type2: usize,
    pub hmr_iterations: usize,
}

/// The fit report (`srmr-report/1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema: String,
    pub tool_version: String,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    /// Per component: intercept first, then one coefficient per predictor.
    pub betas: Vec<Vec<f64>>,
    /// Per component noise standard deviation.
    pub sigmas: Vec<f64>,
    /// Per component noise variance (exact; `sigmas` is its square root).
    pub sigma2: Vec<f64>,
    pub pis: Vec<f64>,
    pub centroids: Vec<[f64; 2]>,
    /// Region `1..=K` per row, 0 for outliers.
    pub labels: Vec<usize>,
    pub type1: Vec<usize>,
    pub type2: Vec<usize>,
    pub bic: f64,
    pub trimmed_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub start: usize,
    pub settings: FitSettings,
    pub trace: Vec<TraceReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<CandidateReport>>,
}

impl FitReport {
    pub fn new(fit: &FitResult, n: usize, p: usize, cfg: &SrmrConfig) -> Self {
        let m = &fit.model;
        Self {
            schema: REPORT_SCHEMA.into(),
            tool_version: TOOL_VERSION.into(),
            n,
            p,
            k: m.k(),
            betas: m.components.iter().map(|c| c.beta.clone()).collect(),
            sigmas: m.components.iter().map(|c| c.sigma2.sqrt()).collect(),
            sigma2: m.components.iter().map(|c| c.sigma2).collect(),
            pis: m.components.iter().map(|c| c.pi).collect(),
            centroids: m.components.iter().map(|c| c.centroid).collect(),
            labels: fit.assignment.labels.clone(),
            type1: fit.assignment.type1.clone(),
            type2: fit.assignment.type2.clone(),
            bic: fit.bic,
            trimmed_loglik: fit.trimmed_loglik,
            iterations: fit.iterations,
            converged: fit.converged,
            seed: fit.seed,
            start: fit.start,
            settings: FitSettings {
                lambda: m.lambda,
                alpha: cfg.alpha,
                cutoff: cfg.cutoff,
                type2_cutoff: cfg.type2_cutoff,
                starts: cfg.starts,
                max_outer: cfg.max_outer,
                lts_starts: cfg.lts_starts,
                hmr_max_iter: cfg.hmr_max_iter,
                n0: cfg.n0,
                tau2: m.tau2,
            },
            trace: fit
                .trace
                .iter()
                .map(|t| TraceReport {
                    iteration: t.iteration,
                    n_type1: t.n_type1,
                    n_type2: t.n_type2,
                    hmr_iterations: t.hmr_iterations,
                })
                .collect(),
            selected_k: None,
            candidates: None,
        }
    }

    /// Rebuilds the fitted model and assignment.
    pub fn to_fit(&self) -> CliResult<FitResult> {
        if self.schema != REPORT_SCHEMA {
            return Err(CliError::mismatch(format!(
                "unsupported report schema '{}', expected '{REPORT_SCHEMA}'",
                self.schema
            )));
        }
        let k = self.k;
        if [self.betas.len(), self.sigma2.len(), self.pis.len(), self.centroids.len()]
            .iter()
            .any(|&l| l != k)
        {
            return Err(CliError::mismatch(format!("report arrays disagree with k = {k}")));
        }
        let components = (0..k)
            .map(|c| Component {
                pi: self.pis[c],
                beta: self.betas[c].clone(),
                sigma2: self.sigma2[c],
                centroid: self.centroids[c],
            })
            .collect();
        let model = MixtureModel::new(components, self.settings.lambda, self.settings.tau2)?;
        let assignment = Assignment::new(self.labels.clone(), self.type1.clone(), self.type2.clone())?;
        Ok(FitResult {
            model,
            assignment,
            trimmed_loglik: self.trimmed_loglik,
            bic: self.bic,
            iterations: self.iterations,
            converged: self.converged,
            seed: self.seed,
            start: self.start,
            trace: Vec::new(),
        })
    }
}

/// Evaluation of a fit against ground truth (`srmr-eval/1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub n: usize,
    pub ri: f64,
    pub ari: f64,
    /// Set when the ARI denominator vanished and 1.0 was reported by convention.
    pub ari_degenerate: bool,
    /// `None` when the truth has no outliers.
    pub acc: Option<f64>,
    pub acc_type1: Option<f64>,
    pub acc_type2: Option<f64>,
    /// `None` without true coefficients.
    pub pce: Option<f64>,
    pub pce_bijective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSignificance {
    pub k: usize,
    pub p_raw: f64,
    pub region_weight: f64,
    pub p_corrected: f64,
    pub rounds: usize,
    /// `None` for a vacuous test.
    pub epsilon0: Option<f64>,
    pub sigma_hat: f64,
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceDocument {
    pub schema: String,
    pub seed: u64,
    pub regions: Vec<RegionSignificance>,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
