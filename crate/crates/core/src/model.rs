//! Domain types shared across the crate.
//!
//! Time indices are 1-based throughout (`t = 1..=n`), matching the change
//! point convention `1 = eta_0 < eta_1 < ... < eta_K < n < eta_{K+1} = n + 1`.

use serde::{Deserialize, Serialize};

use crate::diagnostics::check_causality;
use crate::error::{Error, Result};

/// Flat slot of the harmonic `(ell, m)` inside one timestamp row.
///
/// Multipole `ell` occupies the `2 ell + 1` slots starting at `ell^2`.
#[inline]
pub fn slot(ell: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= ell);
    ell * ell + (m + ell as i64) as usize
}

/// Number of slots in a row truncated at multipole `max_ell` (exclusive).
#[inline]
pub fn slots(max_ell: usize) -> usize {
    max_ell * max_ell
}

/// Real harmonic coefficients `a_{ell,m}(t)` for `t = 1..=n`, `ell < max_ell`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSeries {
    n: usize,
    max_ell: usize,
    data: Vec<f64>,
}

impl CoefficientSeries {
    /// Wraps row-major data laid out as `(t, slot(ell, m))`.
    pub fn new(n: usize, max_ell: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || max_ell == 0 {
            return Err(Error::invalid("series needs n >= 1 and L >= 1"));
        }
        if data.len() != n * slots(max_ell) {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for n={n}, L={max_ell}, got {}",
                n * slots(max_ell),
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            let row = slots(max_ell);
            return Err(Error::NonFinite(format!(
                "coefficient at t={}, slot {}",
                idx / row + 1,
                idx % row
            )));
        }
        Ok(Self { n, max_ell, data })
    }

    pub fn zeros(n: usize, max_ell: usize) -> Result<Self> {
        Self::new(n, max_ell, vec![0.0; n * slots(max_ell)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_ell(&self) -> usize {
        self.max_ell
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// All slots at time `t` (1-based).
    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        let w = slots(self.max_ell);
        &self.data[(t - 1) * w..t * w]
    }

    #[inline]
    pub fn get(&self, t: usize, ell: usize, m: i64) -> f64 {
        self.row(t)[slot(ell, m)]
    }

    pub fn set(&mut self, t: usize, ell: usize, m: i64, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("a({ell},{m})({t})")));
        }
        let w = slots(self.max_ell);
        self.data[(t - 1) * w + slot(ell, m)] = value;
        Ok(())
    }

    /// Keeps only multipoles `ell < max_ell`.
    pub fn truncate(&self, max_ell: usize) -> Result<Self> {
        if max_ell == 0 || max_ell > self.max_ell {
            return Err(Error::invalid(format!(
                "cannot truncate L={} series to L={max_ell}",
                self.max_ell
            )));
        }
        let w = slots(max_ell);
        let data = (1..=self.n)
            .flat_map(|t| self.row(t)[..w].iter().copied())
            .collect();
        Self::new(self.n, max_ell, data)
    }
}

/// Per-multipole AR coefficient vectors `phi_ell` of common order `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArCoefficients {
    p: usize,
    phi: Vec<Vec<f64>>,
}

impl ArCoefficients {
    pub fn new(p: usize, phi: Vec<Vec<f64>>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("AR order p must be >= 1"));
        }
        if phi.is_empty() {
            return Err(Error::invalid("need coefficients for at least one multipole"));
        }
        for (ell, v) in phi.iter().enumerate() {
            if v.len() != p {
                return Err(Error::ShapeMismatch(format!(
                    "phi_{ell} has length {}, expected {p}",
                    v.len()
                )));
            }
        }
        Ok(Self { p, phi })
    }

    /// Order-1 coefficients from one value per multipole.
    pub fn ar1(values: &[f64]) -> Result<Self> {
        Self::new(1, values.iter().map(|&v| vec![v]).collect())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn max_ell(&self) -> usize {
        self.phi.len()
    }

    pub fn phi(&self, ell: usize) -> &[f64] {
        &self.phi[ell]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.phi.iter().map(Vec::as_slice)
    }

    /// Number of non-zero entries of `phi_ell`.
    pub fn sparsity(&self, ell: usize) -> usize {
        self.phi[ell].iter().filter(|v| **v != 0.0).count()
    }

    /// Negated copy, used by the sign-flip scenarios.
    pub fn negated(&self) -> Self {
        Self {
            p: self.p,
            phi: self
                .phi
                .iter()
                .map(|v| v.iter().map(|x| -x).collect())
                .collect(),
        }
    }
}

/// Model of one stationary segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub coeffs: ArCoefficients,
    pub noise_spectrum: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<Vec<f64>>,
}

impl SegmentSpec {
    pub fn new(coeffs: ArCoefficients, noise_spectrum: Vec<f64>) -> Result<Self> {
        let spec = Self {
            coeffs,
            noise_spectrum,
            intercept: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_intercept(mut self, intercept: Vec<f64>) -> Result<Self> {
        self.intercept = Some(intercept);
        self.validate()?;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.coeffs.p()
    }

    pub fn max_ell(&self) -> usize {
        self.coeffs.max_ell()
    }

    /// Checks positivity of the noise spectrum, causality and shapes.
    pub fn validate(&self) -> Result<()> {
        let l = self.coeffs.max_ell();
        if self.noise_spectrum.len() != l {
            return Err(Error::ShapeMismatch(format!(
                "noise spectrum has {} entries for L={l}",
                self.noise_spectrum.len()
            )));
        }
        if let Some(ell) = self
            .noise_spectrum
            .iter()
            .position(|c| !(c.is_finite() && *c > 0.0))
        {
            return Err(Error::invalid(format!(
                "noise spectrum C_{ell} must be positive and finite"
            )));
        }
        if let Some(mu) = &self.intercept {
            if mu.len() != slots(l) {
                return Err(Error::ShapeMismatch(format!(
                    "intercept has {} entries, expected {}",
                    mu.len(),
                    slots(l)
                )));
            }
        }
        let causal = check_causality(&self.coeffs)?;
        if let Some(ell) = causal.iter().position(|ok| !ok) {
            return Err(Error::NonCausal { ell });
        }
        Ok(())
    }
}

/// Ordered change points of a series of length `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    n: usize,
    change_points: Vec<usize>,
}

impl Partition {
    /// Change points must be strictly increasing and lie in `(1, n]`.
    pub fn new(n: usize, change_points: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("partition of an empty series"));
        }
        let mut prev = 1;
        for &cp in &change_points {
            if cp <= prev || cp > n {
                return Err(Error::invalid(format!(
                    "change points {change_points:?} must be strictly increasing in (1, {n}]"
                )));
            }
            prev = cp;
        }
        Ok(Self { n, change_points })
    }

    pub fn single(n: usize) -> Self {
        Self {
            n,
            change_points: Vec::new(),
        }
    }

    /// Builds a partition from segment start indices, the first being 1.
    pub fn from_starts(n: usize, starts: &[usize]) -> Result<Self> {
        match starts.first() {
            Some(1) => Self::new(n, starts[1..].to_vec()),
            _ => Err(Error::invalid("first segment must start at t=1")),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn change_points(&self) -> &[usize] {
        &self.change_points
    }

    pub fn num_change_points(&self) -> usize {
        self.change_points.len()
    }

    pub fn num_segments(&self) -> usize {
        self.change_points.len() + 1
    }

    /// Boundaries `eta_0 = 1, eta_1, ..., eta_{K+1} = n + 1`.
    pub fn boundaries(&self) -> Vec<usize> {
        let mut b = Vec::with_capacity(self.change_points.len() + 2);
        b.push(1);
        b.extend_from_slice(&self.change_points);
        b.push(self.n + 1);
        b
    }

    /// Inclusive `(s, e)` pairs tiling `1..=n`.
    pub fn intervals(&self) -> Vec<(usize, usize)> {
        self.boundaries().windows(2).map(|w| (w[0], w[1] - 1)).collect()
    }

    /// Minimal spacing between consecutive boundaries.
    pub fn min_spacing(&self) -> usize {
        self.boundaries()
            .windows(2)
            .map(|w| w[1] - w[0])
            .min()
            .unwrap_or(self.n)
    }

    /// Segment index containing time `t`.
    pub fn segment_of(&self, t: usize) -> usize {
        self.change_points.partition_point(|&cp| cp <= t)
    }
}

/// Penalty level of the per-multipole LASSO.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lambda {
    Scalar(f64),
    PerEll(Vec<f64>),
}

impl Lambda {
    pub fn for_ell(&self, ell: usize) -> f64 {
        match self {
            Self::Scalar(v) => *v,
            Self::PerEll(v) => v[ell],
        }
    }

    pub fn to_vec(&self, max_ell: usize) -> Vec<f64> {
        (0..max_ell).map(|ell| self.for_ell(ell)).collect()
    }
}

impl Default for Lambda {
    fn default() -> Self {
        Self::Scalar(0.0)
    }
}

/// Detector tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub p: usize,
    pub max_ell: usize,
    pub lambda: Lambda,
    pub gamma: f64,
    /// Minimum admissible segment length.
    pub delta: usize,
    pub cd_tol: f64,
    pub cd_max_iter: usize,
}

impl DetectorConfig {
    pub const DEFAULT_DELTA: usize = 5;
    pub const DEFAULT_CD_TOL: f64 = 1e-8;
    pub const DEFAULT_CD_MAX_ITER: usize = 10_000;

    pub fn new(p: usize, max_ell: usize, lambda: Lambda, gamma: f64) -> Self {
        Self {
            p,
            max_ell,
            lambda,
            gamma,
            delta: Self::DEFAULT_DELTA.max(p + 1),
            cd_tol: Self::DEFAULT_CD_TOL,
            cd_max_iter: Self::DEFAULT_CD_MAX_ITER,
        }
    }

    pub fn with_delta(mut self, delta: usize) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("p must be >= 1"));
        }
        if self.max_ell == 0 {
            return Err(Error::invalid("L must be >= 1"));
        }
        if self.delta < self.p + 1 {
            return Err(Error::invalid(format!(
                "delta={} must be at least p+1={}",
                self.delta,
                self.p + 1
            )));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid("gamma must be finite and >= 0"));
        }
        match &self.lambda {
            Lambda::Scalar(v) if !(v.is_finite() && *v >= 0.0) => {
                return Err(Error::invalid("lambda must be finite and >= 0"));
            }
            Lambda::PerEll(v) => {
                if v.len() != self.max_ell {
                    return Err(Error::ShapeMismatch(format!(
                        "lambda has {} entries for L={}",
                        v.len(),
                        self.max_ell
                    )));
                }
                if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::invalid("lambda entries must be finite and >= 0"));
                }
            }
            _ => {}
        }
        if !(self.cd_tol.is_finite() && self.cd_tol > 0.0) || self.cd_max_iter == 0 {
            return Err(Error::invalid("coordinate descent tolerances must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_layout_is_dense() {
        let mut seen = Vec::new();
        for ell in 0..4 {
            for m in -(ell as i64)..=(ell as i64) {
                seen.push(slot(ell, m));
            }
        }
        assert_eq!(seen, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn series_rejects_bad_shapes_and_nan() {
        assert!(CoefficientSeries::new(2, 2, vec![0.0; 7]).is_err());
        let mut data = vec![0.0; 8];
        data[5] = f64::NAN;
        assert!(matches!(
            CoefficientSeries::new(2, 2, data),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn truncate_keeps_low_multipoles() {
        let data: Vec<f64> = (0..18).map(f64::from).collect();
        let s = CoefficientSeries::new(2, 3, data).unwrap();
        let t = s.truncate(2).unwrap();
        assert_eq!(t.data(), &[0.0, 1.0, 2.0, 3.0, 9.0, 10.0, 11.0, 12.0]);
        assert_eq!(t.get(2, 1, 1), s.get(2, 1, 1));
    }

    #[test]
    fn partition_tiles_series() {
        let p = Partition::new(10, vec![4, 8]).unwrap();
        assert_eq!(p.intervals(), vec![(1, 3), (4, 7), (8, 10)]);
        assert_eq!(p.min_spacing(), 3);
        assert_eq!(p.segment_of(3), 0);
        assert_eq!(p.segment_of(4), 1);
        assert_eq!(p.segment_of(10), 2);
        assert!(Partition::new(10, vec![1]).is_err());
        assert!(Partition::new(10, vec![5, 5]).is_err());
        assert!(Partition::new(10, vec![11]).is_err());
    }

    #[test]
    fn segment_spec_validation() {
        let c = ArCoefficients::ar1(&[0.5, 0.2]).unwrap();
        assert!(SegmentSpec::new(c.clone(), vec![1.0, 0.5]).is_ok());
        assert!(SegmentSpec::new(c.clone(), vec![1.0, 0.0]).is_err());
        assert!(SegmentSpec::new(c, vec![1.0]).is_err());
        let unit = ArCoefficients::ar1(&[1.0]).unwrap();
        assert_eq!(
            SegmentSpec::new(unit, vec![1.0]),
            Err(Error::NonCausal { ell: 0 })
        );
    }

    #[test]
    fn config_validation() {
        let cfg = DetectorConfig::new(2, 3, Lambda::Scalar(0.0), 10.0);
        assert!(cfg.validate().is_ok());
        assert!(cfg.clone().with_delta(2).validate().is_err());
        let mut bad = cfg.clone();
        bad.lambda = Lambda::PerEll(vec![0.0, 1.0]);
        assert!(bad.validate().is_err());
        bad.lambda = Lambda::PerEll(vec![0.0, 1.0, -1.0]);
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.gamma = -1.0;
        assert!(bad.validate().is_err());
    }
}
