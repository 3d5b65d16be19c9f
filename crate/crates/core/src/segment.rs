//! Exact penalized partitioning by dynamic programming over interval losses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::coefficient_jump;
use crate::error::{Error, Result};
use crate::estimate::{interval_loss, IntervalAccumulator, IntervalFit};
use crate::model::{CoefficientSeries, DetectorConfig, Partition};

/// Losses of every admissible interval `[s, e]` with `e - s + 1 >= delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCache {
    n: usize,
    delta: usize,
    /// `rows[s - 1][e - (s + delta - 1)]`.
    rows: Vec<Vec<f64>>,
}

impl LossCache {
    /// Fills the cache in parallel over start points. Each start sweeps its
    /// end point forward, extending the same accumulator in time order.
    pub fn build(series: &CoefficientSeries, config: &DetectorConfig) -> Self {
        let n = series.n();
        let delta = config.delta;
        let starts = (n + 1).saturating_sub(delta);
        let rows = (1..=starts)
            .into_par_iter()
            .map(|s| {
                let first_end = s + delta - 1;
                let mut acc = IntervalAccumulator::new(s, config.p, config.max_ell);
                let mut row = Vec::with_capacity(n + 1 - first_end);
                while acc.end() < n {
                    acc.advance(series);
                    if acc.end() >= first_end {
                        row.push(acc.fit(config).loss);
                    }
                }
                row
            })
            .collect();
        Self { n, delta, rows }
    }

    pub fn get(&self, s: usize, e: usize) -> Option<f64> {
        if s == 0 || e > self.n || e + 1 < s + self.delta {
            return None;
        }
        self.rows
            .get(s - 1)
            .and_then(|row| row.get(e + 1 - s - self.delta))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bellman table of the minimal partitioning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTable {
    /// `best_cost[e]` for `e = 0..=n`; infinite where no admissible partition exists.
    pub best_cost: Vec<f64>,
    /// Start of the last segment of the optimal partition of `1..=e`.
    pub back_pointer: Vec<usize>,
    pub segment_count: Vec<usize>,
    pub loss_cache: LossCache,
    pub gamma: f64,
}

impl DpTable {
    pub fn solve(series: &CoefficientSeries, config: &DetectorConfig) -> Self {
        let loss_cache = LossCache::build(series, config);
        Self::from_cache(loss_cache, config.gamma)
    }

    pub fn from_cache(loss_cache: LossCache, gamma: f64) -> Self {
        let n = loss_cache.n;
        let delta = loss_cache.delta;
        let mut best_cost = vec![f64::INFINITY; n + 1];
        let mut back_pointer = vec![0; n + 1];
        let mut segment_count = vec![0; n + 1];
        best_cost[0] = 0.0;
        for e in delta..=n {
            let mut best = f64::INFINITY;
            let mut best_s = 0;
            let mut best_k = usize::MAX;
            for s in 1..=e + 1 - delta {
                let prev = best_cost[s - 1];
                if !prev.is_finite() {
                    continue;
                }
                let loss = loss_cache.get(s, e).expect("admissible interval");
                let cand = prev + loss + gamma;
                let k = segment_count[s - 1] + 1;
                // Exact ties: fewer segments first, then the later start.
                let better = cand < best || (cand == best && (k < best_k || (k == best_k && s > best_s)));
                if better {
                    best = cand;
                    best_s = s;
                    best_k = k;
                }
            }
            if best.is_finite() {
                best_cost[e] = best;
                back_pointer[e] = best_s;
                segment_count[e] = best_k;
            }
        }
        Self {
            best_cost,
            back_pointer,
            segment_count,
            loss_cache,
            gamma,
        }
    }

    /// Segment starts of the optimal partition of `1..=n`, in order.
    pub fn starts(&self) -> Vec<usize> {
        let mut starts = Vec::new();
        let mut e = self.best_cost.len() - 1;
        while e > 0 {
            let s = self.back_pointer[e];
            starts.push(s);
            e = s - 1;
        }
        starts.reverse();
        starts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub partition: Partition,
    pub segments: Vec<IntervalFit>,
    pub objective: f64,
    /// Set when the series was too short for two admissible segments.
    pub single_segment_fallback: bool,
    /// Weighted jump sizes between consecutive fitted segments.
    pub fitted_jumps: Vec<f64>,
}

impl DetectionResult {
    pub fn num_change_points(&self) -> usize {
        self.partition.num_change_points()
    }
}

fn check_inputs(series: &CoefficientSeries, config: &DetectorConfig) -> Result<()> {
    config.validate()?;
    if config.max_ell > series.max_ell() {
        return Err(Error::ShapeMismatch(format!(
            "config L={} exceeds series L={}",
            config.max_ell,
            series.max_ell()
        )));
    }
    Ok(())
}

fn finish(
    series: &CoefficientSeries,
    config: &DetectorConfig,
    partition: Partition,
    objective: f64,
    single_segment_fallback: bool,
) -> Result<DetectionResult> {
    let segments = partition
        .intervals()
        .into_par_iter()
        .map(|(s, e)| interval_loss(series, s, e, config))
        .collect::<Result<Vec<_>>>()?;
    let fitted_jumps = segments
        .windows(2)
        .map(|w| coefficient_jump(&w[0].coeffs, &w[1].coeffs))
        .collect();
    Ok(DetectionResult {
        partition,
        segments,
        objective,
        single_segment_fallback,
        fitted_jumps,
    })
}

/// Minimises `sum_I L(I) + gamma |P|` over partitions whose segments all
/// have length at least `delta`.
pub fn detect(series: &CoefficientSeries, config: &DetectorConfig) -> Result<DetectionResult> {
    check_inputs(series, config)?;
    let n = series.n();
    if n < 2 * config.delta {
        if n < config.p + 1 {
            return Err(Error::IntervalTooShort {
                s: 1,
                e: n,
                p: config.p,
            });
        }
        let fit = interval_loss(series, 1, n, config)?;
        let objective = fit.loss + config.gamma;
        return finish(series, config, Partition::single(n), objective, true);
    }
    let table = DpTable::solve(series, config);
    let partition = Partition::from_starts(n, &table.starts())?;
    finish(series, config, partition, table.best_cost[n], false)
}

/// Objective of a given partition, computed from scratch.
pub fn objective_of(
    series: &CoefficientSeries,
    partition: &Partition,
    config: &DetectorConfig,
) -> Result<f64> {
    check_inputs(series, config)?;
    if partition.n() != series.n() {
        return Err(Error::ShapeMismatch(format!(
            "partition covers n={}, series has n={}",
            partition.n(),
            series.n()
        )));
    }
    let mut total = 0.0;
    for (s, e) in partition.intervals() {
        if e + 1 - s < config.delta {
            return Err(Error::invalid(format!(
                "segment [{s}, {e}] shorter than delta={}",
                config.delta
            )));
        }
        total += interval_loss(series, s, e, config)?.loss;
    }
    Ok(total + config.gamma * partition.num_segments() as f64)
}
