//! Monte Carlo benchmark harness over the synthetic scenarios.

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{aggregate, BenchRecord, Summary};
use crate::model::{DetectorConfig, Lambda};
use crate::segment::detect;
use crate::simulate::{scenario_epidemic, scenario_table1, simulate, Balance, Junction, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchScenario {
    Table1Balanced,
    Table1Unbalanced,
    Epidemic,
    TuningGrid,
}

impl BenchScenario {
    pub fn id(self) -> &'static str {
        match self {
            Self::Table1Balanced => "table1-balanced",
            Self::Table1Unbalanced => "table1-unbalanced",
            Self::Epidemic => "epidemic",
            Self::TuningGrid => "tuning-grid",
        }
    }

    /// Scenario generator for one replicate.
    pub fn build(self, q: usize, d: f64, seed: u64) -> Result<ScenarioSpec> {
        match self {
            Self::Table1Balanced => scenario_table1(Balance::Balanced, q, d, seed),
            Self::Table1Unbalanced => scenario_table1(Balance::Unbalanced, q, d, seed),
            Self::Epidemic | Self::TuningGrid => scenario_epidemic(q, d, seed),
        }
    }
}

impl FromStr for BenchScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Self::Table1Balanced,
            Self::Table1Unbalanced,
            Self::Epidemic,
            Self::TuningGrid,
        ]
        .into_iter()
        .find(|v| v.id() == s)
        .ok_or_else(|| Error::invalid(format!("unknown scenario '{s}'")))
    }
}

/// Grid used by the tuning study.
pub const TUNING_LAMBDAS: [f64; 2] = [0.0, 1.0];
pub const TUNING_GAMMAS: [f64; 3] = [100.0, 200.0, 300.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenario: BenchScenario,
    pub reps: usize,
    pub base_seed: u64,
    pub q: usize,
    pub d: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub delta: usize,
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Overrides the scenario's junction convention.
    pub junction: Option<Junction>,
}

impl BenchConfig {
    pub fn new(scenario: BenchScenario, reps: usize, base_seed: u64) -> Self {
        Self {
            scenario,
            reps,
            base_seed,
            q: 8,
            d: 2.0,
            lambda: 0.0,
            gamma: 300.0,
            delta: DetectorConfig::DEFAULT_DELTA,
            lambdas: TUNING_LAMBDAS.to_vec(),
            gammas: TUNING_GAMMAS.to_vec(),
            junction: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::invalid("need at least one replicate"));
        }
        if self.scenario == BenchScenario::TuningGrid && (self.lambdas.is_empty() || self.gammas.is_empty()) {
            return Err(Error::invalid("tuning grid needs lambda and gamma values"));
        }
        self.scenario.build(self.q, self.d, self.base_seed)?;
        Ok(())
    }

    pub fn seed(&self, replicate: usize) -> u64 {
        self.base_seed.wrapping_add(replicate as u64)
    }

    fn detector(&self, p: usize, max_ell: usize, lambda: f64, gamma: f64) -> DetectorConfig {
        DetectorConfig::new(p, max_ell, Lambda::Scalar(lambda), gamma).with_delta(self.delta)
    }

    /// `(lambda, gamma)` settings evaluated by this run.
    pub fn settings(&self) -> Vec<(f64, f64)> {
        if self.scenario == BenchScenario::TuningGrid {
            self.lambdas
                .iter()
                .flat_map(|&l| self.gammas.iter().map(move |&g| (l, g)))
                .collect()
        } else {
            vec![(self.lambda, self.gamma)]
        }
    }
}

/// Records of one `(lambda, gamma)` setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingOutcome {
    pub lambda: f64,
    pub gamma: f64,
    pub n: usize,
    pub records: Vec<BenchRecord>,
    pub summary: Summary,
}

/// Runs all replicates. Each replicate is simulated once and detected under
/// every setting, so tuning comparisons use the same data.
pub fn run(config: &BenchConfig) -> Result<Vec<SettingOutcome>> {
    config.validate()?;
    let settings = config.settings();
    let per_rep: Vec<Vec<BenchRecord>> = (0..config.reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<BenchRecord>> {
            let seed = config.seed(r);
            let mut spec = config.scenario.build(config.q, config.d, seed)?;
            if let Some(j) = config.junction {
                spec.junction = j;
            }
            let series = simulate(&spec)?;
            let truth = spec.partition.change_points();
            settings
                .iter()
                .map(|&(lambda, gamma)| {
                    let started = Instant::now();
                    let det = detect(&series, &config.detector(spec.p, spec.max_ell, lambda, gamma))?;
                    let mut rec = BenchRecord::evaluate(
                        config.scenario.id(),
                        seed,
                        truth,
                        det.partition.change_points(),
                        spec.n,
                    )?;
                    rec.runtime_ms = started.elapsed().as_secs_f64() * 1e3;
                    Ok(rec)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let n = config.scenario.build(config.q, config.d, config.base_seed)?.n;
    settings
        .iter()
        .enumerate()
        .map(|(i, &(lambda, gamma))| {
            let records: Vec<BenchRecord> = per_rep.iter().map(|r| r[i].clone()).collect();
            let summary = aggregate(&records)?;
            Ok(SettingOutcome {
                lambda,
                gamma,
                n,
                records,
                summary,
            })
        })
        .collect()
}

/// Fraction of replicates whose estimate has more than `k` change points.
pub fn fraction_above(records: &[BenchRecord], k: usize) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.k_hat() > k).count() as f64 / records.len() as f64
}
