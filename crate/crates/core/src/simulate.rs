//! Simulation of piecewise-stationary SPHAR(p) harmonic coefficients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{slot, slots, ArCoefficients, CoefficientSeries, Partition, SegmentSpec};

pub const DEFAULT_BURN_IN: usize = 500;

/// How a new segment starts at a change point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Junction {
    /// The new dynamics act on the last `p` values of the observed path.
    #[default]
    Continue,
    /// Each segment starts from its own freshly burned-in stationary state.
    Restart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub max_ell: usize,
    pub p: usize,
    pub partition: Partition,
    pub segments: Vec<SegmentSpec>,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default)]
    pub junction: Junction,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.partition.n() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "partition covers n={}, scenario has n={}",
                self.partition.n(),
                self.n
            )));
        }
        if self.segments.len() != self.partition.num_segments() {
            return Err(Error::ShapeMismatch(format!(
                "{} change points need {} segments, got {}",
                self.partition.num_change_points(),
                self.partition.num_segments(),
                self.segments.len()
            )));
        }
        for (k, seg) in self.segments.iter().enumerate() {
            if seg.p() != self.p || seg.max_ell() != self.max_ell {
                return Err(Error::ShapeMismatch(format!(
                    "segment {k} has (p={}, L={}), scenario expects (p={}, L={})",
                    seg.p(),
                    seg.max_ell(),
                    self.p,
                    self.max_ell
                )));
            }
            seg.validate()?;
        }
        let spacing = self.partition.min_spacing();
        if spacing <= self.p {
            return Err(Error::invalid(format!(
                "minimal spacing {spacing} must exceed p={}",
                self.p
            )));
        }
        Ok(())
    }

    /// True change point locations `eta_k / n`.
    pub fn true_locations(&self) -> Vec<f64> {
        self.partition
            .change_points()
            .iter()
            .map(|&cp| cp as f64 / self.n as f64)
            .collect()
    }
}

/// Sparse AR(1) magnitudes `0.9 (ell + 1)^{-1/(8 - d)}` for `ell < q`, zero after.
pub fn build_beta(q: usize, d: f64, max_ell: usize) -> Result<Vec<f64>> {
    if q == 0 || q > max_ell {
        return Err(Error::invalid(format!("q={q} must lie in [1, L={max_ell}]")));
    }
    if !(d.is_finite() && d < 8.0) {
        return Err(Error::invalid(format!("d={d} must be finite and < 8")));
    }
    let exponent = -1.0 / (8.0 - d);
    Ok((0..max_ell)
        .map(|ell| {
            if ell < q {
                0.9 * ((ell + 1) as f64).powf(exponent)
            } else {
                0.0
            }
        })
        .collect())
}

/// Noise spectrum of the first benchmark segment: `C_0 = 1`, `C_ell = 1 / (ell (ell + 1))`.
pub fn benchmark_noise_first(max_ell: usize) -> Vec<f64> {
    (0..max_ell)
        .map(|ell| {
            if ell == 0 {
                1.0
            } else {
                1.0 / (ell * (ell + 1)) as f64
            }
        })
        .collect()
}

/// Noise spectrum of the second benchmark segment: `C_0 = 0.5`, `C_ell = 0.5 / (2 ell (ell + 1))`.
pub fn benchmark_noise_second(max_ell: usize) -> Vec<f64> {
    (0..max_ell)
        .map(|ell| {
            if ell == 0 {
                0.5
            } else {
                0.5 / (2 * ell * (ell + 1)) as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balance {
    Balanced,
    Unbalanced,
}

const BENCH_L: usize = 10;

fn sign_flip_segments(q: usize, d: f64) -> Result<(SegmentSpec, SegmentSpec)> {
    let beta = build_beta(q, d, BENCH_L)?;
    let positive = ArCoefficients::ar1(&beta)?;
    let first = SegmentSpec::new(positive.negated(), benchmark_noise_first(BENCH_L))?;
    let second = SegmentSpec::new(positive, benchmark_noise_second(BENCH_L))?;
    Ok((first, second))
}

/// Single change point scenario: `n = 200`, `L = 10`, `p = 1`, with the
/// change at `t = 100` (balanced) or `t = 50` (unbalanced). Segments are
/// independent stationary draws ([`Junction::Restart`]).
pub fn scenario_table1(variant: Balance, q: usize, d: f64, seed: u64) -> Result<ScenarioSpec> {
    let (first, second) = sign_flip_segments(q, d)?;
    let n = 200;
    let eta = match variant {
        Balance::Balanced => 100,
        Balance::Unbalanced => 50,
    };
    Ok(ScenarioSpec {
        n,
        max_ell: BENCH_L,
        p: 1,
        partition: Partition::new(n, vec![eta])?,
        segments: vec![first, second],
        burn_in: DEFAULT_BURN_IN,
        seed,
        junction: Junction::Restart,
    })
}

/// Epidemic scenario: `n = 225`, changes at 75 and 150, parameters revert.
/// Segments restart like in [`scenario_table1`].
pub fn scenario_epidemic(q: usize, d: f64, seed: u64) -> Result<ScenarioSpec> {
    let (first, second) = sign_flip_segments(q, d)?;
    let n = 225;
    Ok(ScenarioSpec {
        n,
        max_ell: BENCH_L,
        p: 1,
        partition: Partition::new(n, vec![75, 150])?,
        segments: vec![first.clone(), second, first],
        burn_in: DEFAULT_BURN_IN,
        seed,
        junction: Junction::Restart,
    })
}

/// Lag buffer holding the most recent value at index 0.
struct History(Vec<f64>);

impl History {
    fn zeros(p: usize) -> Self {
        Self(vec![0.0; p])
    }

    fn push(&mut self, value: f64) {
        self.0.rotate_right(1);
        self.0[0] = value;
    }
}

struct StreamStep<'a> {
    phi: &'a [f64],
    sd: f64,
    mean: f64,
}

impl StreamStep<'_> {
    fn new(seg: &SegmentSpec, ell: usize, slot_idx: usize) -> StreamStep<'_> {
        StreamStep {
            phi: seg.coeffs.phi(ell),
            sd: seg.noise_spectrum[ell].sqrt(),
            mean: seg.intercept.as_ref().map_or(0.0, |mu| mu[slot_idx]),
        }
    }

    fn draw(&self, hist: &mut History, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let ar: f64 = self.phi.iter().zip(&hist.0).map(|(c, x)| c * x).sum();
        let value = self.mean + ar + self.sd * z;
        hist.push(value);
        value
    }
}

fn burn(step: &StreamStep<'_>, p: usize, steps: usize, rng: &mut ChaCha8Rng) -> History {
    let mut hist = History::zeros(p);
    for _ in 0..steps {
        step.draw(&mut hist, rng);
    }
    hist
}

/// Substream key of harmonic `(ell, m)`; depends only on the slot so that
/// raising `L` leaves lower multipoles untouched.
fn stream_rng(seed: u64, slot_idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot_idx as u64);
    rng
}

fn simulate_stream(spec: &ScenarioSpec, ell: usize, m: i64) -> Vec<f64> {
    let idx = slot(ell, m);
    let mut rng = stream_rng(spec.seed, idx);
    let steps: Vec<StreamStep<'_>> = spec
        .segments
        .iter()
        .map(|seg| StreamStep::new(seg, ell, idx))
        .collect();
    let mut hist = burn(&steps[0], spec.p, spec.burn_in, &mut rng);
    let cps = spec.partition.change_points();
    let mut out = Vec::with_capacity(spec.n);
    let mut k = 0;
    for t in 1..=spec.n {
        if k < cps.len() && t == cps[k] {
            k += 1;
            if spec.junction == Junction::Restart {
                hist = burn(&steps[k], spec.p, spec.burn_in, &mut rng);
            }
        }
        out.push(steps[k].draw(&mut hist, &mut rng));
    }
    out
}

/// Generates the coefficient series of a validated scenario.
///
/// Every `(ell, m)` stream is an independent AR path driven by its own
/// ChaCha substream, so the output does not depend on thread scheduling.
pub fn simulate(spec: &ScenarioSpec) -> Result<CoefficientSeries> {
    spec.validate()?;
    let harmonics: Vec<(usize, i64)> = (0..spec.max_ell)
        .flat_map(|ell| (-(ell as i64)..=ell as i64).map(move |m| (ell, m)))
        .collect();
    let streams: Vec<Vec<f64>> = harmonics
        .par_iter()
        .map(|&(ell, m)| simulate_stream(spec, ell, m))
        .collect();
    let width = slots(spec.max_ell);
    let mut data = vec![0.0; spec.n * width];
    for (idx, stream) in streams.iter().enumerate() {
        for (t, v) in stream.iter().enumerate() {
            data[t * width + idx] = *v;
        }
    }
    CoefficientSeries::new(spec.n, spec.max_ell, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_segment(phi: f64, c: f64, n: usize, max_ell: usize, seed: u64) -> ScenarioSpec {
        let coeffs = ArCoefficients::ar1(&vec![phi; max_ell]).unwrap();
        ScenarioSpec {
            n,
            max_ell,
            p: 1,
            partition: Partition::single(n),
            segments: vec![SegmentSpec::new(coeffs, vec![c; max_ell]).unwrap()],
            burn_in: DEFAULT_BURN_IN,
            seed,
            junction: Junction::Continue,
        }
    }

    #[test]
    fn beta_examples() {
        let b = build_beta(8, 4.0, 10).unwrap();
        assert_eq!(b[0], 0.9);
        assert!((b[1] - 0.9 * 2f64.powf(-0.25)).abs() < 1e-15);
        assert!((b[1] - 0.756807).abs() < 1e-6);
        assert_eq!((b[8], b[9]), (0.0, 0.0));

        let b = build_beta(2, 2.0, 10).unwrap();
        assert!((b[1] - 0.801809).abs() < 1e-6);
        assert!(b[2..].iter().all(|v| *v == 0.0));

        for d in [-3.0, 0.0, 7.5] {
            let b = build_beta(1, d, 4).unwrap();
            assert_eq!(b, vec![0.9, 0.0, 0.0, 0.0]);
        }
        assert!(build_beta(0, 2.0, 10).is_err());
        assert!(build_beta(11, 2.0, 10).is_err());
        assert!(build_beta(2, 8.0, 10).is_err());
    }

    #[test]
    fn table1_layout() {
        let s = scenario_table1(Balance::Balanced, 8, 2.0, 1).unwrap();
        assert_eq!(s.true_locations(), vec![0.5]);
        let u = scenario_table1(Balance::Unbalanced, 8, 2.0, 1).unwrap();
        assert_eq!(u.true_locations(), vec![0.25]);
        for spec in [&s, &u] {
            assert_eq!((spec.n, spec.max_ell, spec.p), (200, 10, 1));
            assert_eq!(spec.segments[0].coeffs, spec.segments[1].coeffs.negated());
            assert_eq!(spec.segments[0].noise_spectrum[0], 1.0);
            assert_eq!(spec.segments[1].noise_spectrum[0], 0.5);
            assert!((spec.segments[0].noise_spectrum[3] - 1.0 / 12.0).abs() < 1e-15);
            assert!((spec.segments[1].noise_spectrum[3] - 0.5 / 24.0).abs() < 1e-15);
            spec.validate().unwrap();
        }
    }

    #[test]
    fn epidemic_layout() {
        let s = scenario_epidemic(8, 2.0, 3).unwrap();
        let loc = s.true_locations();
        assert!((loc[0] - 1.0 / 3.0).abs() < 1e-12 && (loc[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.segments[2], s.segments[0]);
        assert_eq!(s.segments[1].coeffs, s.segments[0].coeffs.negated());
        // Boundaries 1, 75, 150, 226.
        assert_eq!(s.partition.min_spacing(), 74);
    }

    #[test]
    fn validation_catches_bad_specs() {
        let mut s = scenario_table1(Balance::Balanced, 8, 2.0, 1).unwrap();
        s.segments.pop();
        assert!(simulate(&s).is_err());

        let mut s = single_segment(0.5, 1.0, 10, 1, 0);
        s.p = 2;
        assert!(s.validate().is_err());

        let mut s = single_segment(0.5, 1.0, 10, 1, 0);
        s.partition = Partition::new(10, vec![2]).unwrap();
        s.segments.push(s.segments[0].clone());
        assert!(s.validate().is_err(), "spacing 1 must be rejected for p=1");
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let spec = scenario_table1(Balance::Balanced, 8, 2.0, 42).unwrap();
        let a = simulate(&spec).unwrap();
        let b = simulate(&spec).unwrap();
        assert_eq!(a, b);
        let mut other = spec.clone();
        other.seed = 43;
        assert_ne!(a, simulate(&other).unwrap());
        let one_thread = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate(&spec).unwrap());
        assert_eq!(a, one_thread);
    }

    #[test]
    fn raising_l_keeps_existing_streams() {
        let small = simulate(&single_segment(0.3, 1.0, 50, 2, 9)).unwrap();
        let large = simulate(&single_segment(0.3, 1.0, 50, 4, 9)).unwrap();
        assert_eq!(large.truncate(2).unwrap(), small);
    }

    #[test]
    fn white_noise_moments() {
        let series = simulate(&single_segment(0.0, 1.0, 20_000, 1, 5)).unwrap();
        let x = series.data();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 5.0 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n).sqrt(), "var {var}");
        let lag1 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / n;
        assert!(lag1.abs() < 5.0 / n.sqrt(), "lag1 {lag1}");
    }

    #[test]
    fn restart_junction_differs_only_after_change() {
        let mut spec = scenario_table1(Balance::Balanced, 8, 2.0, 11).unwrap();
        assert_eq!(spec.junction, Junction::Restart);
        let restart = simulate(&spec).unwrap();
        spec.junction = Junction::Continue;
        let cont = simulate(&spec).unwrap();
        assert_eq!(cont.row(99), restart.row(99));
        assert_ne!(cont.row(100), restart.row(100));
    }

    #[test]
    fn intercept_shifts_stationary_mean() {
        let coeffs = ArCoefficients::ar1(&[0.5]).unwrap();
        let seg = SegmentSpec::new(coeffs, vec![1.0])
            .unwrap()
            .with_intercept(vec![2.0])
            .unwrap();
        let n = 20_000;
        let spec = ScenarioSpec {
            n,
            max_ell: 1,
            p: 1,
            partition: Partition::single(n),
            segments: vec![seg],
            burn_in: DEFAULT_BURN_IN,
            seed: 1,
            junction: Junction::Continue,
        };
        let x = simulate(&spec).unwrap();
        let mean = x.data().iter().sum::<f64>() / n as f64;
        // Long-run sd of the AR(1) sample mean: sqrt(C) / (1 - phi) / sqrt(n).
        assert!((mean - 4.0).abs() < 5.0 * 2.0 / (n as f64).sqrt(), "mean {mean}");
    }
}
