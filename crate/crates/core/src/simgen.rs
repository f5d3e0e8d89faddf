//! Synthetic benchmark data: ground-truth-labelled mixture regression data in
//! spatial regions, Type-1 (regression) outliers by rejection sampling, Type-2
//! (spatial) outliers by coordinate reversal, and the ten perturbation
//! scenarios.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SrmrError};
use crate::model::{bounding_box, SpatialDataset};
use crate::rng::{self, derive_seed, domain, StreamRng};

/// Minimum point-to-line distance of an accepted Type-1 outlier.
pub const TYPE1_MIN_DISTANCE: f64 = 2.0;
pub const MAX_PROPOSALS: usize = 1_000_000;
pub const X_RANGE: (f64, f64) = (-2.0, 2.0);
pub const Y_PROPOSAL_RANGE: (f64, f64) = (-8.0, 8.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialLayout {
    NormalDiagonal,
    NormalHorizontal,
    Uniform,
}

impl SpatialLayout {
    /// Region centres for `k` components.
    pub fn centers(self, k: usize) -> Vec<[f64; 2]> {
        let table: &[[f64; 2]] = match self {
            SpatialLayout::NormalDiagonal | SpatialLayout::Uniform => {
                &[[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]]
            }
            SpatialLayout::NormalHorizontal => &[[0.5, 0.0], [-0.5, 0.0], [1.5, 0.0], [-1.5, 0.0]],
        };
        (0..k)
            .map(|i| {
                let base = table[i % table.len()];
                // beyond the table, shift outward in rings
                let ring = (i / table.len()) as f64;
                [base[0] * (1.0 + ring), base[1] * (1.0 + ring)]
            })
            .collect()
    }
}

/// How the default coefficient pairs `(1.5, 1.0)` are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BetaReading {
    /// Each pair is one component's `(intercept, slope)`.
    #[default]
    InterceptSlope,
    /// Each pair lists the slopes of two zero-intercept components.
    Slopes,
}

/// One synthetic scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub k: usize,
    pub n: usize,
    /// `(intercept, slope)` per component.
    pub betas: Vec<[f64; 2]>,
    /// Noise standard deviation per component.
    pub sigmas: Vec<f64>,
    /// Component proportions followed by the outlier fraction; sums to 1.
    pub mixing: Vec<f64>,
    pub spatial_layout: SpatialLayout,
    /// Diagonal of the coordinate covariance.
    pub spatial_cov: [f64; 2],
    /// Explicit region centres, overriding the layout's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub type1_rate: f64,
    #[serde(default)]
    pub type2_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::default_with(BetaReading::default())
    }
}

/// The coefficient factor levels.
pub const COEFFICIENT_LEVELS: [[f64; 2]; 3] = [[1.5, 1.0], [1.5, 0.1], [1.5, -1.2]];
const EXTRA_SLOPES: [f64; 2] = [-0.8, 0.5];

/// Component coefficients for `k` components under a reading of the factor levels.
pub fn default_betas(k: usize, reading: BetaReading) -> Vec<[f64; 2]> {
    let (mut betas, intercept) = match reading {
        BetaReading::Slopes => (vec![[0.0, 1.5], [0.0, 1.0]], 0.0),
        BetaReading::InterceptSlope => (vec![COEFFICIENT_LEVELS[0], COEFFICIENT_LEVELS[2]], 1.5),
    };
    let mut extra = EXTRA_SLOPES.iter().cycle();
    while betas.len() < k {
        betas.push([intercept, *extra.next().expect("cycle")]);
    }
    betas.truncate(k.max(1));
    betas
}

impl ScenarioConfig {
    pub fn default_with(reading: BetaReading) -> Self {
        Self {
            name: "default".into(),
            k: 2,
            n: 200,
            betas: default_betas(2, reading),
            sigmas: vec![0.1, 0.1],
            mixing: vec![0.4, 0.4, 0.2],
            spatial_layout: SpatialLayout::NormalDiagonal,
            spatial_cov: [0.1, 0.1],
            centers: None,
            type1_rate: 0.0,
            type2_rate: 0.0,
            seed: 0,
        }
    }

    /// The default scenario resized to `k` components, keeping the 20% outlier slot.
    pub fn with_components(&self, k: usize, reading: BetaReading) -> Self {
        let outlier = *self.mixing.last().unwrap_or(&0.0);
        let mut mixing = vec![(1.0 - outlier) / k as f64; k];
        mixing.push(outlier);
        Self {
            k,
            betas: default_betas(k, reading),
            sigmas: vec![self.sigmas.first().copied().unwrap_or(0.1); k],
            mixing,
            ..self.clone()
        }
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        self.centers
            .clone()
            .unwrap_or_else(|| self.spatial_layout.centers(self.k))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SrmrError::InvalidParameter(m));
        if self.k == 0 || self.n == 0 {
            return bad("K and N must be positive".into());
        }
        if self.betas.len() != self.k || self.sigmas.len() != self.k {
            return bad(format!(
                "K = {} but {} betas and {} sigmas",
                self.k,
                self.betas.len(),
                self.sigmas.len()
            ));
        }
        if self.mixing.len() != self.k + 1 {
            return bad(format!(
                "mixing needs K + 1 = {} entries, got {}",
                self.k + 1,
                self.mixing.len()
            ));
        }
        if self.mixing.iter().any(|&m| !(m >= 0.0)) {
            return bad("mixing proportions must be non-negative".into());
        }
        let total: f64 = self.mixing.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("mixing sums to {total}, expected 1"));
        }
        if self.sigmas.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return bad("noise levels must be finite and non-negative".into());
        }
        if self.betas.iter().flatten().any(|b| !b.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        if self.spatial_cov.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return bad("spatial covariance entries must be positive".into());
        }
        for (label, r) in [("type1_rate", self.type1_rate), ("type2_rate", self.type2_rate)] {
            if !(0.0..0.5).contains(&r) {
                return bad(format!("{label} = {r} outside [0, 0.5)"));
            }
        }
        if let Some(c) = &self.centers {
            if c.len() != self.k {
                return bad(format!("{} centres for K = {}", c.len(), self.k));
            }
        }
        Ok(())
    }
}

/// A generated dataset together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub data: SpatialDataset,
    /// Region label `1..=K`, 0 for outliers of either type.
    pub true_labels: Vec<usize>,
    pub true_type1: Vec<usize>,
    pub true_type2: Vec<usize>,
    /// `(intercept, slope)` per component.
    pub true_betas: Vec<Vec<f64>>,
    /// Generating component `1..=K` per row (kept for Type-2 rows), 0 for Type-1 rows.
    pub beta_component: Vec<usize>,
}

impl LabeledDataset {
    pub fn n(&self) -> usize {
        self.data.n()
    }
}

/// Euclidean distance from `(x, y)` to the line `y = a + b x`.
pub fn point_line_distance(x: f64, y: f64, line: &[f64]) -> f64 {
    (y - line[0] - line[1] * x).abs() / (1.0 + line[1] * line[1]).sqrt()
}

/// Largest-remainder apportionment of `n` over `weights` (ties to the earlier slot).
pub fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw_coord(rng: &mut StreamRng, layout: SpatialLayout, center: [f64; 2], cov: [f64; 2]) -> [f64; 2] {
    match layout {
        SpatialLayout::Uniform => {
            let mut s = [0.0; 2];
            for a in 0..2 {
                let half = (3.0 * cov[a]).sqrt();
                s[a] = center[a] + rng.random_range(-half..=half);
            }
            s
        }
        _ => [
            center[0] + cov[0].sqrt() * normal(rng),
            center[1] + cov[1].sqrt() * normal(rng),
        ],
    }
}

/// Rejection-samples a point at distance > 2 from every line.
fn propose_type1(rng: &mut StreamRng, lines: &[Vec<f64>]) -> Result<(f64, f64)> {
    for _ in 0..MAX_PROPOSALS {
        let x = rng.random_range(X_RANGE.0..X_RANGE.1);
        let y = rng.random_range(Y_PROPOSAL_RANGE.0..Y_PROPOSAL_RANGE.1);
        if lines
            .iter()
            .all(|l| point_line_distance(x, y, l) > TYPE1_MIN_DISTANCE)
        {
            return Ok((x, y));
        }
    }
    Err(SrmrError::GenerationStuck {
        proposals: MAX_PROPOSALS,
    })
}

fn draw_in_box(rng: &mut StreamRng, lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    let mut s = [0.0; 2];
    for a in 0..2 {
        s[a] = if hi[a] > lo[a] {
            rng.random_range(lo[a]..=hi[a])
        } else {
            lo[a]
        };
    }
    s
}

struct Row {
    y: f64,
    x: f64,
    s: [f64; 2],
    label: usize,
    component: usize,
}

fn assemble(rows: Vec<Row>, betas: Vec<Vec<f64>>, type1: Vec<usize>, type2: Vec<usize>) -> Result<LabeledDataset> {
    let preds: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.x]).collect();
    let data = SpatialDataset::from_predictors(
        rows.iter().map(|r| r.y).collect(),
        &preds,
        rows.iter().map(|r| r.s).collect(),
    )?;
    Ok(LabeledDataset {
        data,
        true_labels: rows.iter().map(|r| r.label).collect(),
        true_type1: type1,
        true_type2: type2,
        true_betas: betas,
        beta_component: rows.iter().map(|r| r.component).collect(),
    })
}

fn rows_of(lds: &LabeledDataset) -> Vec<Row> {
    (0..lds.n())
        .map(|i| Row {
            y: lds.data.y()[i],
            x: lds.data.x()[(i, 1)],
            s: lds.data.coords()[i],
            label: lds.true_labels[i],
            component: lds.beta_component[i],
        })
        .collect()
}

/// Generates one labelled dataset; a pure function of the configuration.
pub fn generate(cfg: &ScenarioConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, domain::GENERATE, 0);
    let counts = apportion(cfg.n, &cfg.mixing);
    let centers = cfg.centers();
    let lines: Vec<Vec<f64>> = cfg.betas.iter().map(|b| b.to_vec()).collect();

    let mut rows = Vec::with_capacity(cfg.n);
    for k in 0..cfg.k {
        let [a, b] = cfg.betas[k];
        for _ in 0..counts[k] {
            let x = rng.random_range(X_RANGE.0..X_RANGE.1);
            let noise = if cfg.sigmas[k] > 0.0 {
                cfg.sigmas[k] * normal(&mut rng)
            } else {
                0.0
            };
            let s = draw_coord(&mut rng, cfg.spatial_layout, centers[k], cfg.spatial_cov);
            rows.push(Row {
                y: a + b * x + noise,
                x,
                s,
                label: k + 1,
                component: k + 1,
            });
        }
    }
    let n_out = counts[cfg.k];
    if n_out > 0 {
        let existing: Vec<[f64; 2]> = if rows.is_empty() {
            centers.clone()
        } else {
            rows.iter().map(|r| r.s).collect()
        };
        let (lo, hi) = bounding_box(&existing);
        for _ in 0..n_out {
            let (x, y) = propose_type1(&mut rng, &lines)?;
            rows.push(Row {
                y,
                x,
                s: draw_in_box(&mut rng, lo, hi),
                label: 0,
                component: 0,
            });
        }
    }
    rows.shuffle(&mut rng);
    let type1 = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| (r.label == 0).then_some(i))
        .collect();
    let mut lds = assemble(rows, lines, type1, Vec::new())?;
    if cfg.type1_rate > 0.0 {
        lds = inject_type1(&lds, cfg.type1_rate, derive_seed(cfg.seed, domain::TYPE1, 0))?;
    }
    if cfg.type2_rate > 0.0 {
        lds = inject_type2(&lds, cfg.type2_rate, derive_seed(cfg.seed, domain::TYPE2, 0))?;
    }
    Ok(lds)
}

/// Appends `round(rate * N)` rows lying farther than 2 from every true line,
/// placed uniformly over the bounding box of the existing coordinates.
pub fn inject_type1(lds: &LabeledDataset, rate: f64, seed: u64) -> Result<LabeledDataset> {
    if !(0.0..0.5).contains(&rate) {
        return Err(SrmrError::InvalidParameter(format!("rate {rate} outside [0, 0.5)")));
    }
    let count = (rate * lds.n() as f64).round() as usize;
    if count == 0 {
        return Ok(lds.clone());
    }
    let mut rng = rng::stream(seed, domain::TYPE1, 0);
    let (lo, hi) = lds.data.bounding_box();
    let mut rows = rows_of(lds);
    let mut type1 = lds.true_type1.clone();
    for _ in 0..count {
        let (x, y) = propose_type1(&mut rng, &lds.true_betas)?;
        type1.push(rows.len());
        rows.push(Row {
            y,
            x,
            s: draw_in_box(&mut rng, lo, hi),
            label: 0,
            component: 0,
        });
    }
    assemble(rows, lds.true_betas.clone(), type1, lds.true_type2.clone())
}

/// Negates the coordinates of `round(rate * N)` randomly chosen inlier rows.
pub fn inject_type2(lds: &LabeledDataset, rate: f64, seed: u64) -> Result<LabeledDataset> {
    if !(0.0..0.5).contains(&rate) {
        return Err(SrmrError::InvalidParameter(format!("rate {rate} outside [0, 0.5)")));
    }
    let inliers: Vec<usize> = (0..lds.n()).filter(|&i| lds.true_labels[i] != 0).collect();
    let count = ((rate * lds.n() as f64).round() as usize).min(inliers.len());
    if count == 0 {
        return Ok(lds.clone());
    }
    let mut rng = rng::stream(seed, domain::TYPE2, 0);
    let chosen: Vec<usize> = sample(&mut rng, inliers.len(), count)
        .into_iter()
        .map(|j| inliers[j])
        .collect();
    let mut rows = rows_of(lds);
    let mut type2 = lds.true_type2.clone();
    for &i in &chosen {
        rows[i].s = reverse(rows[i].s);
        rows[i].label = 0;
        type2.push(i);
    }
    type2.sort_unstable();
    assemble(rows, lds.true_betas.clone(), lds.true_type1.clone(), type2)
}

/// Coordinate reversal `(c1, c2) -> (-c1, -c2)`.
pub fn reverse(s: [f64; 2]) -> [f64; 2] {
    [-s[0], -s[1]]
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 10] = [
    "sample-size",
    "components",
    "noise",
    "mixing",
    "coefficients",
    "type1-outliers",
    "type2-outliers",
    "distribution",
    "position",
    "density",
];

/// Parameter grid of one perturbation scenario, every other factor at its default.
pub fn preset(name: &str) -> Result<Vec<ScenarioConfig>> {
    preset_with(name, BetaReading::default())
}

pub fn preset_with(name: &str, reading: BetaReading) -> Result<Vec<ScenarioConfig>> {
    let base = ScenarioConfig::default_with(reading);
    let named = |label: String, cfg: ScenarioConfig| ScenarioConfig {
        name: format!("{name}/{label}"),
        ..cfg
    };
    let clean = ScenarioConfig {
        mixing: vec![0.5, 0.5, 0.0],
        ..base.clone()
    };
    let configs = match name {
        "sample-size" => [100, 200, 400]
            .iter()
            .map(|&n| named(format!("n={n}"), ScenarioConfig { n, ..base.clone() }))
            .collect(),
        "components" => [2, 3, 4]
            .iter()
            .map(|&k| named(format!("k={k}"), base.with_components(k, reading)))
            .collect(),
        "noise" => [0.1, 0.2, 0.5]
            .iter()
            .map(|&s| {
                named(
                    format!("sigma={s}"),
                    ScenarioConfig {
                        sigmas: vec![s; base.k],
                        ..base.clone()
                    },
                )
            })
            .collect(),
        "mixing" => [[0.4, 0.4, 0.2], [0.5, 0.3, 0.2], [0.6, 0.2, 0.2]]
            .iter()
            .map(|m| {
                named(
                    format!("mixing={}/{}/{}", m[0], m[1], m[2]),
                    ScenarioConfig {
                        mixing: m.to_vec(),
                        ..base.clone()
                    },
                )
            })
            .collect(),
        "coefficients" => coefficient_settings(reading)
            .into_iter()
            .map(|betas| {
                let label = betas
                    .iter()
                    .map(|b| format!("({},{})", b[0], b[1]))
                    .collect::<Vec<_>>()
                    .join("/");
                named(format!("beta={label}"), ScenarioConfig { betas, ..base.clone() })
            })
            .collect(),
        "type1-outliers" => [0.1, 0.2]
            .iter()
            .map(|&r| {
                named(
                    format!("rate={r}"),
                    ScenarioConfig {
                        type1_rate: r,
                        ..clean.clone()
                    },
                )
            })
            .collect(),
        "type2-outliers" => [0.1, 0.2]
            .iter()
            .map(|&r| {
                named(
                    format!("rate={r}"),
                    ScenarioConfig {
                        type2_rate: r,
                        ..clean.clone()
                    },
                )
            })
            .collect(),
        "distribution" => [SpatialLayout::NormalDiagonal, SpatialLayout::Uniform]
            .iter()
            .map(|&l| {
                named(
                    format!("layout={}", layout_name(l)),
                    ScenarioConfig {
                        spatial_layout: l,
                        ..base.clone()
                    },
                )
            })
            .collect(),
        "position" => [SpatialLayout::NormalDiagonal, SpatialLayout::NormalHorizontal]
            .iter()
            .map(|&l| {
                named(
                    format!("layout={}", layout_name(l)),
                    ScenarioConfig {
                        spatial_layout: l,
                        ..base.clone()
                    },
                )
            })
            .collect(),
        "density" => [[0.1, 0.1], [0.5, 0.1]]
            .iter()
            .map(|&c| {
                named(
                    format!("cov={}/{}", c[0], c[1]),
                    ScenarioConfig {
                        spatial_cov: c,
                        ..base.clone()
                    },
                )
            })
            .collect(),
        _ => {
            return Err(SrmrError::UnknownScenario {
                name: name.to_string(),
                valid: PRESET_NAMES.join(", "),
            })
        }
    };
    Ok(configs)
}

fn layout_name(l: SpatialLayout) -> &'static str {
    match l {
        SpatialLayout::NormalDiagonal => "normal-diagonal",
        SpatialLayout::NormalHorizontal => "normal-horizontal",
        SpatialLayout::Uniform => "uniform",
    }
}

/// K = 2 coefficient settings for the coefficient scenario.
fn coefficient_settings(reading: BetaReading) -> Vec<Vec<[f64; 2]>> {
    match reading {
        BetaReading::Slopes => COEFFICIENT_LEVELS
            .iter()
            .map(|l| vec![[0.0, l[0]], [0.0, l[1]]])
            .collect(),
        BetaReading::InterceptSlope => vec![
            vec![COEFFICIENT_LEVELS[0], COEFFICIENT_LEVELS[1]],
            vec![COEFFICIENT_LEVELS[0], COEFFICIENT_LEVELS[2]],
            vec![COEFFICIENT_LEVELS[1], COEFFICIENT_LEVELS[2]],
        ],
    }
}
