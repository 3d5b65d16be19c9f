//! Localization metrics and benchmark aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hausdorff distance between estimated and true change points divided by
/// `n`. An empty estimate scores 1.
pub fn hausdorff_scaled(est: &[usize], truth: &[usize], n: usize) -> f64 {
    if est.is_empty() || truth.is_empty() {
        return 1.0;
    }
    let directed = |a: &[usize], b: &[usize]| -> usize {
        a.iter()
            .map(|&x| b.iter().map(|&y| x.abs_diff(y)).min().unwrap_or(0))
            .max()
            .unwrap_or(0)
    };
    let d = directed(est, truth).max(directed(truth, est));
    d as f64 / n.max(1) as f64
}

/// Estimates assigned to each true change point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `groups[k]` holds the estimates credited to the `k`-th true point.
    pub groups: Vec<Vec<usize>>,
    /// Mean of `eta_hat / n` per group; `None` for empty groups.
    pub mean_location: Vec<Option<f64>>,
}

/// Credits each estimate to the first true point if it lies before the
/// midpoint `eta_1 + (eta_2 - eta_1) / 2`, otherwise to the second.
pub fn assign_and_average(est: &[usize], truth: &[usize], n: usize) -> Result<Assignment> {
    let boundary = match truth {
        [_] => None,
        [a, b] if a < b => Some(*a as f64 + 0.5 * (*b - *a) as f64),
        _ => {
            return Err(Error::invalid(format!(
                "assignment needs one or two increasing true points, got {truth:?}"
            )))
        }
    };
    let mut groups = vec![Vec::new(); truth.len()];
    for &eta in est {
        let k = match boundary {
            Some(mid) if (eta as f64) >= mid => 1,
            _ => 0,
        };
        groups[k].push(eta);
    }
    let mean_location = groups
        .iter()
        .map(|g| {
            (!g.is_empty()).then(|| g.iter().map(|&e| e as f64 / n as f64).sum::<f64>() / g.len() as f64)
        })
        .collect();
    Ok(Assignment {
        groups,
        mean_location,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub scenario: String,
    pub seed: u64,
    pub truth: Vec<usize>,
    pub estimate: Vec<usize>,
    pub hausdorff: f64,
    pub mean_location: Vec<Option<f64>>,
    /// Wall-clock milliseconds; excluded from reproducible outputs.
    #[serde(skip)]
    pub runtime_ms: f64,
}

impl BenchRecord {
    pub fn evaluate(scenario: &str, seed: u64, truth: &[usize], estimate: &[usize], n: usize) -> Result<Self> {
        let assignment = assign_and_average(estimate, truth, n)?;
        Ok(Self {
            scenario: scenario.to_string(),
            seed,
            truth: truth.to_vec(),
            estimate: estimate.to_vec(),
            hausdorff: hausdorff_scaled(estimate, truth, n),
            mean_location: assignment.mean_location,
            runtime_ms: 0.0,
        })
    }

    pub fn k_hat(&self) -> usize {
        self.estimate.len()
    }
}

/// Mean and sample standard deviation (denominator `M - 1`; zero for `M = 1`).
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, sd))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub replicates: usize,
    pub mean_hausdorff: f64,
    pub sd_hausdorff: f64,
    /// Per true point: mean over replicates of the per-replicate group mean.
    pub mean_location: Vec<Option<f64>>,
    pub sd_location: Vec<Option<f64>>,
    /// Replicates contributing to each location column.
    pub location_counts: Vec<usize>,
    pub k_hat_histogram: BTreeMap<usize, usize>,
}

pub fn aggregate(records: &[BenchRecord]) -> Result<Summary> {
    let first = records
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate zero records"))?;
    let groups = first.truth.len();
    if records.iter().any(|r| r.mean_location.len() != groups) {
        return Err(Error::ShapeMismatch("records disagree on the number of true points".into()));
    }
    let d: Vec<f64> = records.iter().map(|r| r.hausdorff).collect();
    let (mean_hausdorff, sd_hausdorff) = mean_sd(&d).expect("nonempty");
    let mut mean_location = Vec::with_capacity(groups);
    let mut sd_location = Vec::with_capacity(groups);
    let mut location_counts = Vec::with_capacity(groups);
    for k in 0..groups {
        let locs: Vec<f64> = records.iter().filter_map(|r| r.mean_location[k]).collect();
        let stats = mean_sd(&locs);
        mean_location.push(stats.map(|s| s.0));
        sd_location.push(stats.map(|s| s.1));
        location_counts.push(locs.len());
    }
    let mut k_hat_histogram = BTreeMap::new();
    for r in records {
        *k_hat_histogram.entry(r.k_hat()).or_insert(0) += 1;
    }
    Ok(Summary {
        replicates: records.len(),
        mean_hausdorff,
        sd_hausdorff,
        mean_location,
        sd_location,
        location_counts,
        k_hat_histogram,
    })
}
