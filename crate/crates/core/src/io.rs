//! File formats: the coefficient CSV, scenario configs and JSON documents.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::TheoryBounds;
use crate::estimate::InterceptFit;
use crate::eval::Assignment;
use crate::model::{slot, ArCoefficients, CoefficientSeries, DetectorConfig, Partition, SegmentSpec};
use crate::segment::DetectionResult;
use crate::simulate::{
    scenario_epidemic, scenario_table1, Balance, Junction, ScenarioSpec, DEFAULT_BURN_IN,
};

pub const COEFFICIENT_HEADER: &str = "t,ell,m,value";

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// Serializes rows sorted by `(t, ell, m)`, values in shortest round-trip form.
pub fn write_coefficients(series: &CoefficientSeries) -> String {
    let mut out = String::with_capacity(series.data().len() * 28);
    out.push_str(COEFFICIENT_HEADER);
    out.push('\n');
    for t in 1..=series.n() {
        let row = series.row(t);
        for ell in 0..series.max_ell() {
            for m in -(ell as i64)..=ell as i64 {
                writeln!(out, "{t},{ell},{m},{}", row[slot(ell, m)]).expect("write to string");
            }
        }
    }
    out
}

fn field<T: std::str::FromStr>(raw: &str, name: &str, line: usize) -> Result<T, ParseError> {
    raw.trim()
        .parse()
        .map_err(|_| ParseError::new(line, format!("invalid {name} '{raw}'")))
}

/// Next `(ell, m)` in row order; `None` once the row of width `max_ell` is full.
fn next_harmonic(ell: usize, m: i64, max_ell: Option<usize>) -> Option<(usize, i64)> {
    if m < ell as i64 {
        Some((ell, m + 1))
    } else if max_ell.is_none_or(|l| ell + 1 < l) {
        Some((ell + 1, -(ell as i64) - 1))
    } else {
        None
    }
}

/// Parses a coefficient file. Rows must be complete and sorted by `(t, ell, m)`;
/// `L` is taken from the first timestamp block.
pub fn parse_coefficients(text: &str) -> Result<CoefficientSeries, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h.trim() == COEFFICIENT_HEADER => {}
        Some((_, h)) => {
            return Err(ParseError::new(
                1,
                format!("expected header '{COEFFICIENT_HEADER}', found '{h}'"),
            ))
        }
        None => return Err(ParseError::new(1, "empty file")),
    }

    let mut data = Vec::new();
    let mut max_ell: Option<usize> = None;
    // Expected coordinates of the next row.
    let (mut t_next, mut ell_next, mut m_next) = (1usize, 0usize, 0i64);
    let mut last_line = 1;
    for (line, raw) in lines {
        last_line = line;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 4 {
            return Err(ParseError::new(
                line,
                format!("expected 4 comma-separated fields, found {}", fields.len()),
            ));
        }
        let t: usize = field(fields[0], "t", line)?;
        let ell: usize = field(fields[1], "ell", line)?;
        let m: i64 = field(fields[2], "m", line)?;
        let value: f64 = field(fields[3], "value", line)?;
        if !value.is_finite() {
            return Err(ParseError::new(line, "non-finite value"));
        }

        if max_ell.is_none() && t == 2 && ell == 0 && m == 0 && t_next == 1 {
            // First block closed after multipole ell_next - 1.
            if m_next != -(ell_next as i64) {
                return Err(ParseError::new(line, "incomplete multipole in first timestamp"));
            }
            max_ell = Some(ell_next);
            (t_next, ell_next, m_next) = (2, 0, 0);
        }
        if (t, ell, m) != (t_next, ell_next, m_next) {
            return Err(ParseError::new(
                line,
                format!(
                    "expected row (t={t_next}, ell={ell_next}, m={m_next}), found (t={t}, ell={ell}, m={m})"
                ),
            ));
        }
        data.push(value);
        match next_harmonic(ell, m, max_ell) {
            Some((l, mm)) => (ell_next, m_next) = (l, mm),
            None => (t_next, ell_next, m_next) = (t + 1, 0, 0),
        }
    }

    let max_ell = match max_ell {
        Some(l) => l,
        None => {
            // Single timestamp: the block must end on a complete multipole.
            if data.is_empty() || m_next != -(ell_next as i64) {
                return Err(ParseError::new(last_line + 1, "truncated coefficient data"));
            }
            ell_next
        }
    };
    if data.len() % (max_ell * max_ell) != 0 {
        return Err(ParseError::new(
            last_line + 1,
            format!("truncated coefficient data at t={t_next}"),
        ));
    }
    let n = data.len() / (max_ell * max_ell);
    CoefficientSeries::new(n, max_ell, data).map_err(|e| ParseError::new(last_line, e.to_string()))
}

/// Scenario recipe as written in a TOML config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// `table1-balanced`, `table1-unbalanced`, `epidemic` or `custom`.
    pub scenario: String,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub d: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Overrides the scenario's junction convention.
    #[serde(default)]
    pub junction: Option<Junction>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default, rename = "L")]
    pub max_ell: Option<usize>,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub change_points: Vec<usize>,
    #[serde(default)]
    pub segments: Vec<SegmentConfig>,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    /// One coefficient vector of length `p` per multipole.
    pub phi: Vec<Vec<f64>>,
    pub noise: Vec<f64>,
    #[serde(default)]
    pub intercept: Option<Vec<f64>>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn resolve(&self) -> crate::Result<ScenarioSpec> {
        use crate::Error;
        let q = self.q.unwrap_or(8);
        let d = self.d.unwrap_or(2.0);
        let mut spec = match self.scenario.as_str() {
            "table1-balanced" => scenario_table1(Balance::Balanced, q, d, self.seed)?,
            "table1-unbalanced" => scenario_table1(Balance::Unbalanced, q, d, self.seed)?,
            "epidemic" => scenario_epidemic(q, d, self.seed)?,
            "custom" => {
                let missing = |k: &str| Error::invalid(format!("custom scenario needs '{k}'"));
                let n = self.n.ok_or_else(|| missing("n"))?;
                let max_ell = self.max_ell.ok_or_else(|| missing("L"))?;
                let p = self.p.ok_or_else(|| missing("p"))?;
                let segments = self
                    .segments
                    .iter()
                    .map(|s| {
                        let seg = SegmentSpec::new(ArCoefficients::new(p, s.phi.clone())?, s.noise.clone())?;
                        match &s.intercept {
                            Some(mu) => seg.with_intercept(mu.clone()),
                            None => Ok(seg),
                        }
                    })
                    .collect::<crate::Result<Vec<_>>>()?;
                ScenarioSpec {
                    n,
                    max_ell,
                    p,
                    partition: Partition::new(n, self.change_points.clone())?,
                    segments,
                    burn_in: self.burn_in,
                    seed: self.seed,
                    junction: Junction::default(),
                }
            }
            other => return Err(Error::invalid(format!("unknown scenario '{other}'"))),
        };
        spec.burn_in = self.burn_in;
        if let Some(j) = self.junction {
            spec.junction = j;
        }
        spec.validate()?;
        Ok(spec)
    }
}

pub const TRUTH_FORMAT: &str = "sphar-cpd/truth/v1";
pub const RESULT_FORMAT: &str = "sphar-cpd/result/v1";
pub const METRICS_FORMAT: &str = "sphar-cpd/metrics/v1";

/// Truth sidecar written next to a simulated coefficient file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDocument {
    pub format: String,
    pub config: ScenarioConfig,
    pub scenario: ScenarioSpec,
}

impl TruthDocument {
    pub fn new(config: ScenarioConfig, scenario: ScenarioSpec) -> Self {
        Self {
            format: TRUTH_FORMAT.into(),
            config,
            scenario,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMean {
    pub fit: InterceptFit,
    pub mean_surface: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub format: String,
    pub input: String,
    pub config: DetectorConfig,
    pub result: DetectionResult,
    /// Per-segment residual variance, a plug-in for the noise spectrum.
    pub residual_variance: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<Vec<SegmentMean>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheoryReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoryReport {
    Bounds(TheoryBounds),
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub format: String,
    pub result: String,
    pub truth: String,
    pub n: usize,
    pub true_change_points: Vec<usize>,
    pub estimated_change_points: Vec<usize>,
    pub hausdorff: f64,
    pub assignment: Option<Assignment>,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable document");
    s.push('\n');
    s
}
