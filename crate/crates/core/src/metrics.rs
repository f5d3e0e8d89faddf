//! Evaluation metrics: Rand index, adjusted Rand index, outlier detection
//! accuracy and parameter estimation error.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Result, SrmrError};

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(SrmrError::DimensionMismatch(format!(
            "label vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(SrmrError::UndefinedMetric(
            "pair-counting indices need at least two items".into(),
        ));
    }
    Ok(())
}

fn choose2(n: u64) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

/// Pair counts `(sum over cells, sum over rows, sum over columns, total)`.
fn pair_counts(a: &[usize], b: &[usize]) -> (u128, u128, u128, u128) {
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&i, &j) in a.iter().zip(b) {
        *cells.entry((i, j)).or_default() += 1;
        *rows.entry(i).or_default() += 1;
        *cols.entry(j).or_default() += 1;
    }
    let sum = |m: &mut dyn Iterator<Item = u64>| m.map(choose2).sum::<u128>();
    (
        sum(&mut cells.values().copied()),
        sum(&mut rows.values().copied()),
        sum(&mut cols.values().copied()),
        choose2(a.len() as u64),
    )
}

/// Fraction of item pairs on which two labelings agree.
///
/// Labels are arbitrary identifiers; outliers are usually passed as a
/// cluster of their own (label 0).
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    let (cells, rows, cols, total) = pair_counts(a, b);
    let agree = total + 2 * cells - rows - cols;
    Ok(agree as f64 / total as f64)
}

/// Adjusted Rand index together with a flag set when the index is degenerate
/// (both labelings a single cluster, or both all singletons) and 1.0 is
/// returned by convention.
pub fn adjusted_rand_index_flagged(a: &[usize], b: &[usize]) -> Result<(f64, bool)> {
    check_lengths(a, b)?;
    let (cells, rows, cols, total) = pair_counts(a, b);
    let (cells, rows, cols, total) = (cells as f64, rows as f64, cols as f64, total as f64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok((1.0, true));
    }
    Ok(((cells - expected) / (max - expected), false))
}

pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    adjusted_rand_index_flagged(a, b).map(|(v, _)| v)
}

/// Outlier detection accuracy, overall and per true outlier type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierAccuracy {
    pub overall: f64,
    /// Share of true Type-1 outliers flagged (as either type); `None` without any.
    pub type1: Option<f64>,
    pub type2: Option<f64>,
}

/// Share of true outliers among the predicted outliers, regardless of the
/// predicted type.
pub fn outlier_acc(
    predicted_type1: &[usize],
    predicted_type2: &[usize],
    true_type1: &[usize],
    true_type2: &[usize],
) -> Result<OutlierAccuracy> {
    let predicted: BTreeSet<usize> = predicted_type1.iter().chain(predicted_type2).copied().collect();
    let hit_rate = |truth: &[usize]| -> Option<f64> {
        let truth: BTreeSet<usize> = truth.iter().copied().collect();
        (!truth.is_empty())
            .then(|| truth.intersection(&predicted).count() as f64 / truth.len() as f64)
    };
    let all: Vec<usize> = true_type1.iter().chain(true_type2).copied().collect();
    let overall = hit_rate(&all)
        .ok_or_else(|| SrmrError::UndefinedMetric("no true outliers".into()))?;
    Ok(OutlierAccuracy {
        overall,
        type1: hit_rate(true_type1),
        type2: hit_rate(true_type2),
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SrmrError::DimensionMismatch(format!(
            "coefficient vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn check_beta_sets(truth: &[Vec<f64>], fitted: &[Vec<f64>]) -> Result<()> {
    if truth.is_empty() || fitted.is_empty() {
        return Err(SrmrError::UndefinedMetric("empty coefficient set".into()));
    }
    Ok(())
}

/// Sum over true components of the squared distance to the closest fitted
/// coefficient vector. Several true components may match the same fitted one.
pub fn pce(truth: &[Vec<f64>], fitted: &[Vec<f64>]) -> Result<f64> {
    check_beta_sets(truth, fitted)?;
    let mut total = 0.0;
    for t in truth {
        let mut best = f64::INFINITY;
        for f in fitted {
            best = best.min(squared_distance(t, f)?);
        }
        total += best;
    }
    Ok(total)
}

/// Like [`pce`] but under the best one-to-one matching; needs at least as
/// many fitted components as true ones.
pub fn pce_bijective(truth: &[Vec<f64>], fitted: &[Vec<f64>]) -> Result<f64> {
    check_beta_sets(truth, fitted)?;
    if fitted.len() < truth.len() {
        return Err(SrmrError::UndefinedMetric(format!(
            "{} fitted components cannot be matched one-to-one with {} true ones",
            fitted.len(),
            truth.len()
        )));
    }
    let mut cost = vec![vec![0.0; fitted.len()]; truth.len()];
    for (i, t) in truth.iter().enumerate() {
        for (j, f) in fitted.iter().enumerate() {
            cost[i][j] = squared_distance(t, f)?;
        }
    }
    let mut used = vec![false; fitted.len()];
    let best = best_matching(&cost, 0, &mut used);
    Ok(best)
}

fn best_matching(cost: &[Vec<f64>], row: usize, used: &mut [bool]) -> f64 {
    if row == cost.len() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for j in 0..used.len() {
        if !used[j] {
            used[j] = true;
            best = best.min(cost[row][j] + best_matching(cost, row + 1, used));
            used[j] = false;
        }
    }
    best
}
