//! Causality, spectral density and stability diagnostics of SPHAR(p) segments.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArCoefficients, SegmentSpec};

/// Roots with modulus in `(1, 1 + CAUSALITY_MARGIN]` count as non-causal.
pub const CAUSALITY_MARGIN: f64 = 1e-9;

/// Default number of frequencies used for grid extrema.
pub const DEFAULT_GRID: usize = 4096;

const MIN_GRID: usize = 64;

/// Largest modulus of the inverse roots of `1 - phi_1 z - ... - phi_p z^p`.
///
/// These are the eigenvalues of the companion matrix of
/// `w^p - phi_1 w^{p-1} - ... - phi_p`.
fn inverse_root_radius(phi: &[f64]) -> f64 {
    let p = phi.len();
    if p == 1 {
        return phi[0].abs();
    }
    let companion = DMatrix::from_fn(p, p, |i, j| {
        if i == 0 {
            phi[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Whether the AR polynomial of a single multipole has all roots outside
/// the closed disc of radius `1 + CAUSALITY_MARGIN`.
pub fn is_causal(phi: &[f64]) -> Result<bool> {
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("AR coefficients {phi:?}")));
    }
    if phi.iter().all(|v| *v == 0.0) {
        return Ok(true);
    }
    // |z| > 1 + eps  <=>  |w| (1 + eps) < 1 for w = 1/z.
    Ok(inverse_root_radius(phi) * (1.0 + CAUSALITY_MARGIN) < 1.0)
}

/// Per-multipole causality.
pub fn check_causality(coeffs: &ArCoefficients) -> Result<Vec<bool>> {
    coeffs.iter().map(is_causal).collect()
}

fn require_causal(phi: &[f64]) -> Result<()> {
    if is_causal(phi)? {
        Ok(())
    } else {
        Err(Error::invalid(format!("AR coefficients {phi:?} are not causal")))
    }
}

/// `|1 - sum_j phi_j e^{-i nu j}|^2`.
pub fn transfer_modulus_sq(phi: &[f64], nu: f64) -> f64 {
    let (mut re, mut im) = (1.0, 0.0);
    for (j, &c) in phi.iter().enumerate() {
        let arg = nu * (j + 1) as f64;
        re -= c * arg.cos();
        im += c * arg.sin();
    }
    re * re + im * im
}

fn density_unchecked(phi: &[f64], c_noise: f64, nu: f64) -> f64 {
    c_noise / (2.0 * PI * transfer_modulus_sq(phi, nu))
}

/// Spectral density of a causal AR process with innovation variance `c_noise`.
pub fn spectral_density(phi: &[f64], c_noise: f64, nu: f64) -> Result<f64> {
    if !(c_noise.is_finite() && c_noise > 0.0) {
        return Err(Error::invalid("noise spectrum must be positive and finite"));
    }
    if !nu.is_finite() {
        return Err(Error::NonFinite("frequency".into()));
    }
    require_causal(phi)?;
    Ok(density_unchecked(phi, c_noise, nu))
}

/// Grid extrema of the spectral density and of the squared AR transfer modulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityMeasures {
    pub max_density: f64,
    pub min_density: f64,
    pub mu_min: f64,
    pub mu_max: f64,
}

/// Uniform periodic grid `nu_i = -pi + 2 pi i / grid`; includes `0` for even
/// `grid` and `-pi` always.
pub fn frequency_grid(grid: usize) -> impl Iterator<Item = f64> {
    (0..grid).map(move |i| -PI + 2.0 * PI * i as f64 / grid as f64)
}

pub fn stability_measures(phi: &[f64], c_noise: f64, grid: usize) -> Result<StabilityMeasures> {
    if grid < MIN_GRID {
        return Err(Error::invalid(format!("grid must have at least {MIN_GRID} points")));
    }
    if !(c_noise.is_finite() && c_noise > 0.0) {
        return Err(Error::invalid("noise spectrum must be positive and finite"));
    }
    require_causal(phi)?;
    let mut out = StabilityMeasures {
        max_density: f64::NEG_INFINITY,
        min_density: f64::INFINITY,
        mu_min: f64::INFINITY,
        mu_max: f64::NEG_INFINITY,
    };
    for nu in frequency_grid(grid) {
        let mu = transfer_modulus_sq(phi, nu);
        let f = c_noise / (2.0 * PI * mu);
        out.mu_min = out.mu_min.min(mu);
        out.mu_max = out.mu_max.max(mu);
        out.min_density = out.min_density.min(f);
        out.max_density = out.max_density.max(f);
    }
    Ok(out)
}

fn check_compatible(a: &SegmentSpec, b: &SegmentSpec) -> Result<()> {
    if a.p() != b.p() || a.max_ell() != b.max_ell() {
        return Err(Error::ShapeMismatch(format!(
            "segments differ in shape: (p={}, L={}) vs (p={}, L={})",
            a.p(),
            a.max_ell(),
            b.p(),
            b.max_ell()
        )));
    }
    Ok(())
}

/// `sum_ell (2 ell + 1) ||phi_ell^a - phi_ell^b||_2^2`.
pub fn jump_size(a: &SegmentSpec, b: &SegmentSpec) -> Result<f64> {
    check_compatible(a, b)?;
    Ok(coefficient_jump(&a.coeffs, &b.coeffs))
}

/// Same weighted distance on bare coefficient sets (shapes assumed equal).
pub fn coefficient_jump(a: &ArCoefficients, b: &ArCoefficients) -> f64 {
    a.iter()
        .zip(b.iter())
        .enumerate()
        .map(|(ell, (x, y))| {
            let d2: f64 = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
            (2 * ell + 1) as f64 * d2
        })
        .sum()
}

/// Quantities entering the theoretical tuning rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryBounds {
    /// `alpha_ell = min_k C_{ell;Z} / (2 max_k mu_max)`.
    pub alpha: Vec<f64>,
    pub c_l: f64,
    /// Minimal jump size across consecutive segments; absent for one segment.
    pub kappa_l: Option<f64>,
    pub c_phi: f64,
    pub mu_min: Vec<f64>,
    pub mu_max: Vec<f64>,
    /// Finite-L report of `max_k C_{ell;Z} / min_k C_{ell;Z}`.
    pub noise_ratio: Vec<f64>,
}

pub fn theory_tuning_bounds(
    segments: &[SegmentSpec],
    lambda: &[f64],
    p: usize,
) -> Result<TheoryBounds> {
    let first = segments
        .first()
        .ok_or_else(|| Error::invalid("need at least one segment"))?;
    for seg in segments {
        check_compatible(first, seg)?;
    }
    if first.p() != p {
        return Err(Error::ShapeMismatch(format!(
            "segments have order {}, expected {p}",
            first.p()
        )));
    }
    let l = first.max_ell();
    if lambda.len() != l {
        return Err(Error::ShapeMismatch(format!(
            "lambda has {} entries for L={l}",
            lambda.len()
        )));
    }
    if lambda.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("lambda entries must be finite and >= 0"));
    }

    let mut alpha = Vec::with_capacity(l);
    let mut mu_min = Vec::with_capacity(l);
    let mut mu_max = Vec::with_capacity(l);
    let mut noise_ratio = Vec::with_capacity(l);
    for ell in 0..l {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut c_lo, mut c_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for seg in segments {
            let c = seg.noise_spectrum[ell];
            let s = stability_measures(seg.coeffs.phi(ell), c, DEFAULT_GRID)?;
            lo = lo.min(s.mu_min);
            hi = hi.max(s.mu_max);
            c_lo = c_lo.min(c);
            c_hi = c_hi.max(c);
        }
        alpha.push(0.5 * c_lo / hi);
        mu_min.push(lo);
        mu_max.push(hi);
        noise_ratio.push(c_hi / c_lo);
    }

    let c_phi = segments
        .iter()
        .flat_map(|seg| seg.coeffs.iter())
        .map(|v| v.iter().map(|x| x * x).sum::<f64>())
        .fold(0.0, f64::max);

    let sparse_sum = segments
        .iter()
        .map(|seg| {
            (0..l)
                .map(|ell| {
                    let q = seg.coeffs.sparsity(ell).max(1) as f64;
                    q * lambda[ell] * lambda[ell] / alpha[ell]
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let c_l = (48.0f64).max(32.0 * p as f64) * c_phi.max(1.0) * sparse_sum;

    let kappa_l = segments
        .windows(2)
        .map(|w| coefficient_jump(&w[0].coeffs, &w[1].coeffs))
        .reduce(f64::min);

    Ok(TheoryBounds {
        alpha,
        c_l,
        kappa_l,
        c_phi,
        mu_min,
        mu_max,
        noise_ratio,
    })
}
