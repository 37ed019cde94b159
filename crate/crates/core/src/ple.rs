//! Photoluminescence-excitation scans of an emitter whose optical
//! transition jumps after every charge-state repump, and Gaussian line fits.

use std::f64::consts::{LN_2, PI};

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DVector, Dyn, OMatrix, OVector, U4};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

/// Lifetime-limited NV linewidth, MHz.
pub const LIFETIME_LIMITED_FWHM_MHZ: f64 = 13.0;
pub const MIN_FIT_POINTS: usize = 8;
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Error, PartialEq)]
pub enum PleError {
    #[error("invalid emitter: {0}")]
    InvalidEmitter(String),
    #[error("invalid scan configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} detuning points, need at least {MIN_FIT_POINTS}")]
    TooFewPoints(usize),
    #[error("scan span {span:.1} MHz is under twice the apparent width {width:.1} MHz")]
    InsufficientSpan { span: f64, width: f64 },
    #[error("Gaussian fit diverged: {0}")]
    FitDivergence(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum JumpModel {
    /// A fresh centre is drawn after every successful repump.
    #[default]
    Independent,
    /// Mean-reverting walk: each jump keeps a `memory` share of the previous
    /// offset while the stationary spread stays `jump_sigma`.
    RandomWalk { memory: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitterModel {
    pub homogeneous_fwhm_mhz: f64,
    pub center_offset_mhz: f64,
    pub jump_sigma_mhz: f64,
    pub saturation: f64,
    pub ionization_prob: f64,
    pub repump_recovery_prob: f64,
    /// Repump leakage into the counting window, counts/s.
    pub background_rate: f64,
    pub linewidth_floor_mhz: f64,
    pub jump_model: JumpModel,
}

impl Default for EmitterModel {
    fn default() -> Self {
        Self {
            homogeneous_fwhm_mhz: LIFETIME_LIMITED_FWHM_MHZ,
            center_offset_mhz: 0.0,
            jump_sigma_mhz: 0.0,
            saturation: 1.0,
            ionization_prob: 0.0,
            repump_recovery_prob: 1.0,
            background_rate: 0.0,
            linewidth_floor_mhz: LIFETIME_LIMITED_FWHM_MHZ,
            jump_model: JumpModel::Independent,
        }
    }
}

impl EmitterModel {
    pub fn new(homogeneous_fwhm_mhz: f64, jump_sigma_mhz: f64, saturation: f64) -> Self {
        Self {
            homogeneous_fwhm_mhz,
            jump_sigma_mhz,
            saturation,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PleError> {
        let bad = |m: String| Err(PleError::InvalidEmitter(m));
        if !(self.homogeneous_fwhm_mhz >= self.linewidth_floor_mhz
            && self.homogeneous_fwhm_mhz.is_finite())
        {
            return bad(format!(
                "homogeneous width {} MHz below the {} MHz floor",
                self.homogeneous_fwhm_mhz, self.linewidth_floor_mhz
            ));
        }
        if !(self.jump_sigma_mhz >= 0.0 && self.saturation >= 0.0 && self.background_rate >= 0.0) {
            return bad("jump sigma, saturation and background must be non-negative".into());
        }
        for (name, p) in [
            ("ionization_prob", self.ionization_prob),
            ("repump_recovery_prob", self.repump_recovery_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if let JumpModel::RandomWalk { memory } = self.jump_model {
            if !(0.0..1.0).contains(&memory) {
                return bad(format!("random-walk memory {memory} outside [0, 1)"));
            }
        }
        Ok(())
    }

    /// Width of a single probe window's line, MHz.
    pub fn dephasing_linewidth(&self) -> f64 {
        power_broadened_width(self.homogeneous_fwhm_mhz, self.saturation)
    }

    /// Probe-window excitation relative to resonance for a laser detuned
    /// by `delta` MHz from the current line centre.
    fn response(&self, delta: f64) -> f64 {
        let s = self.saturation;
        let x = 2.0 * delta / self.homogeneous_fwhm_mhz;
        (1.0 + s) / (1.0 + s + x * x)
    }
}

/// `Γ_h · sqrt(1 + s)`
pub fn power_broadened_width(homogeneous_fwhm: f64, saturation: f64) -> f64 {
    homogeneous_fwhm * (1.0 + saturation).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetuningGrid {
    Explicit(Vec<f64>),
    Linear {
        start_mhz: f64,
        stop_mhz: f64,
        points: usize,
    },
}

impl DetuningGrid {
    pub fn centered(half_span_mhz: f64, points: usize) -> Self {
        DetuningGrid::Linear {
            start_mhz: -half_span_mhz,
            stop_mhz: half_span_mhz,
            points,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        match self {
            DetuningGrid::Explicit(v) => v.clone(),
            DetuningGrid::Linear {
                start_mhz,
                stop_mhz,
                points,
            } => match *points {
                0 => vec![],
                1 => vec![*start_mhz],
                n => (0..n)
                    .map(|i| start_mhz + (stop_mhz - start_mhz) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PleScanConfig {
    pub repump_duration_us: f64,
    pub probe_duration_us: f64,
    pub rep_rate_khz: f64,
    pub dwell_ms: f64,
    pub detuning: DetuningGrid,
    pub n_scans: u32,
    /// Count rate on resonance while bright, counts/s.
    pub collection_rate: f64,
    pub keep_traces: bool,
}

impl Default for PleScanConfig {
    fn default() -> Self {
        Self {
            repump_duration_us: 2.0,
            probe_duration_us: 8.0,
            rep_rate_khz: 100.0,
            dwell_ms: 10.0,
            detuning: DetuningGrid::centered(500.0, 101),
            n_scans: 100,
            collection_rate: 5e4,
            keep_traces: false,
        }
    }
}

impl PleScanConfig {
    pub fn validate(&self) -> Result<Vec<f64>, PleError> {
        let bad = |m: String| Err(PleError::InvalidConfig(m));
        if !(self.repump_duration_us > 0.0
            && self.probe_duration_us > 0.0
            && self.rep_rate_khz > 0.0)
        {
            return bad("pulse durations and repetition rate must be positive".into());
        }
        let period_us = 1e3 / self.rep_rate_khz;
        if self.repump_duration_us + self.probe_duration_us > period_us * (1.0 + 1e-12) {
            return bad(format!(
                "repump + probe = {} µs exceeds the {period_us} µs period",
                self.repump_duration_us + self.probe_duration_us
            ));
        }
        if self.dwell_ms.is_nan()
            || self.dwell_ms <= 0.0
            || self.n_scans == 0
            || self.collection_rate.is_nan()
            || self.collection_rate < 0.0
        {
            return bad("dwell, scan count and collection rate must be positive".into());
        }
        let grid = self.detuning.points();
        if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("detuning grid must be non-empty and strictly increasing".into());
        }
        Ok(grid)
    }

    /// Sequence repetitions per detuning point of one scan.
    pub fn repetitions_per_dwell(&self) -> u64 {
        (self.rep_rate_khz * self.dwell_ms).round().max(1.0) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PleScan {
    pub detuning_mhz: Vec<f64>,
    /// Counts per dwell averaged over scans.
    pub counts: Vec<f64>,
    /// `traces[scan][point]`, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traces: Option<Vec<Vec<f64>>>,
}

impl PleScan {
    pub fn total_counts(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Expected counts for one dwell: the emitter's charge and spectral state
/// evolves over every repetition, then a single Poisson draw is taken.
fn simulate_dwell(
    emitter: &EmitterModel,
    cfg: &PleScanConfig,
    detuning: f64,
    stream: RngStream,
) -> f64 {
    let mut rng = stream.rng();
    let probe_s = cfg.probe_duration_us * 1e-6;
    let signal = cfg.collection_rate * probe_s;
    let background = emitter.background_rate * probe_s;
    let sigma = emitter.jump_sigma_mhz;
    let offset = emitter.center_offset_mhz;

    let z0: f64 = StandardNormal.sample(&mut rng);
    let mut jitter = sigma * z0;
    let mut bright = false;
    let mut mean = 0.0;
    for _ in 0..cfg.repetitions_per_dwell() {
        if rng.random::<f64>() < emitter.repump_recovery_prob {
            bright = true;
            let z: f64 = StandardNormal.sample(&mut rng);
            jitter = match emitter.jump_model {
                JumpModel::Independent => sigma * z,
                JumpModel::RandomWalk { memory } => {
                    memory * jitter + (1.0 - memory * memory).sqrt() * sigma * z
                }
            };
        }
        mean += background;
        if bright {
            let mut lit = 1.0;
            if emitter.ionization_prob > 0.0 && rng.random::<f64>() < emitter.ionization_prob {
                lit = rng.random::<f64>();
                bright = false;
            }
            mean += signal * lit * emitter.response(detuning - offset - jitter);
        }
    }
    if mean > 0.0 {
        Poisson::new(mean)
            .map(|p| p.sample(&mut rng))
            .unwrap_or(mean)
    } else {
        0.0
    }
}

/// Simulates `cfg.n_scans` sweeps of the detuning grid. Each (scan, point)
/// dwell has its own random stream, so the result does not depend on how
/// the work is scheduled.
pub fn simulate_ple_scan(
    emitter: &EmitterModel,
    cfg: &PleScanConfig,
    seed: u64,
) -> Result<PleScan, PleError> {
    emitter.validate()?;
    let grid = cfg.validate()?;
    let n_points = grid.len() as u64;
    let traces: Vec<Vec<f64>> = (0..cfg.n_scans as u64)
        .into_par_iter()
        .map(|scan| {
            grid.iter()
                .enumerate()
                .map(|(i, &d)| {
                    simulate_dwell(
                        emitter,
                        cfg,
                        d,
                        RngStream::new(seed, scan * n_points + i as u64),
                    )
                })
                .collect()
        })
        .collect();
    let n = cfg.n_scans as f64;
    let counts = (0..grid.len())
        .map(|i| traces.iter().map(|t| t[i]).sum::<f64>() / n)
        .collect();
    Ok(PleScan {
        detuning_mhz: grid,
        counts,
        traces: cfg.keep_traces.then_some(traces),
    })
}

/// Noise-free counts of a single probe window repeated for the whole dwell
/// with the line parked at its offset and no charge dynamics.
pub fn single_window_scan(
    emitter: &EmitterModel,
    cfg: &PleScanConfig,
) -> Result<PleScan, PleError> {
    emitter.validate()?;
    let grid = cfg.validate()?;
    let reps = cfg.repetitions_per_dwell() as f64;
    let probe_s = cfg.probe_duration_us * 1e-6;
    let counts = grid
        .iter()
        .map(|&d| {
            reps * probe_s
                * (cfg.collection_rate * emitter.response(d - emitter.center_offset_mhz)
                    + emitter.background_rate)
        })
        .collect();
    Ok(PleScan {
        detuning_mhz: grid,
        counts,
        traces: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub fwhm_mhz: f64,
    pub center_mhz: f64,
    pub amplitude: f64,
    pub baseline: f64,
    /// Fitted width is below the detuning step.
    pub unresolved: bool,
}

struct GaussianProblem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    /// amplitude, centre, sigma, baseline
    p: OVector<f64, U4>,
}

impl LeastSquaresProblem<f64, Dyn, U4> for GaussianProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, p: &OVector<f64, U4>) {
        self.p.copy_from(p);
    }

    fn params(&self) -> OVector<f64, U4> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let (a, c, s, b) = (self.p[0], self.p[1], self.p[2], self.p[3]);
        Some(DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).map(|(&x, &y)| {
                let u = (x - c) / s;
                a * (-0.5 * u * u).exp() + b - y
            }),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U4>> {
        let (a, c, s) = (self.p[0], self.p[1], self.p[2]);
        let mut j = OMatrix::<f64, Dyn, U4>::zeros(self.x.len());
        for (r, &x) in self.x.iter().enumerate() {
            let u = (x - c) / s;
            let e = (-0.5 * u * u).exp();
            j[(r, 0)] = e;
            j[(r, 1)] = a * e * u / s;
            j[(r, 2)] = a * e * u * u / s;
            j[(r, 3)] = 1.0;
        }
        Some(j)
    }
}

/// Width between the outermost half-maximum crossings above the minimum.
fn apparent_width(x: &[f64], y: &[f64]) -> f64 {
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let half = 0.5 * (lo + hi);
    let above: Vec<usize> = (0..y.len()).filter(|&i| y[i] >= half).collect();
    match (above.first(), above.last()) {
        (Some(&a), Some(&b)) => {
            let cross = |i: usize, j: usize| {
                if y[i] == y[j] {
                    x[i]
                } else {
                    x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i])
                }
            };
            let left = if a > 0 { cross(a - 1, a) } else { x[a] };
            let right = if b + 1 < y.len() {
                cross(b, b + 1)
            } else {
                x[b]
            };
            (right - left).max(0.0)
        }
        _ => 0.0,
    }
}

/// Least-squares Gaussian plus constant baseline.
pub fn fit_line_gaussian(scan: &PleScan) -> Result<GaussianFit, PleError> {
    let x = &scan.detuning_mhz;
    let y = &scan.counts;
    if x.len() < MIN_FIT_POINTS || y.len() != x.len() {
        return Err(PleError::TooFewPoints(x.len().min(y.len())));
    }
    let span = x[x.len() - 1] - x[0];
    let width = apparent_width(x, y);
    if span < 2.0 * width {
        return Err(PleError::InsufficientSpan { span, width });
    }
    let step = span / (x.len() - 1) as f64;
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let (imax, hi) = y
        .iter()
        .cloned()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    let sigma0 = (width / FWHM_PER_SIGMA).max(0.5 * step);
    let problem = GaussianProblem {
        x,
        y,
        p: OVector::<f64, U4>::new(hi - lo, x[imax], sigma0, lo),
    };
    let (fitted, report) = LevenbergMarquardt::new().minimize(problem);
    let p = fitted.p;
    if !report.termination.was_successful() || p.iter().any(|v| !v.is_finite()) {
        return Err(PleError::FitDivergence(format!("{:?}", report.termination)));
    }
    let fwhm = FWHM_PER_SIGMA * p[2].abs();
    Ok(GaussianFit {
        fwhm_mhz: fwhm,
        center_mhz: p[1],
        amplitude: p[0],
        baseline: p[3],
        unresolved: fwhm < step,
    })
}

fn lorentzian(x: f64, fwhm: f64) -> f64 {
    let g = 0.5 * fwhm;
    g / (PI * (x * x + g * g))
}

fn gaussian(x: f64, fwhm: f64) -> f64 {
    let s = fwhm / FWHM_PER_SIGMA;
    (-0.5 * (x / s).powi(2)).exp() / (s * (2.0 * PI).sqrt())
}

/// FWHM of the numerical convolution of a Lorentzian and a Gaussian, found
/// by bisection on the half-maximum to 0.01 MHz.
pub fn voigt_fwhm_oracle(lorentz_fwhm: f64, gauss_fwhm: f64) -> f64 {
    if gauss_fwhm <= 0.0 {
        return lorentz_fwhm.max(0.0);
    }
    if lorentz_fwhm <= 0.0 {
        return gauss_fwhm;
    }
    let sigma = gauss_fwhm / FWHM_PER_SIGMA;
    let gamma = 0.5 * lorentz_fwhm;
    let n = 4000;
    let simpson = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| {
        let h = (hi - lo) / n as f64;
        (0..=n)
            .map(|k| {
                let w = if k == 0 || k == n {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * f(lo + k as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    };
    // Integrate over whichever kernel is wider; a narrow Lorentzian is
    // handled by mapping it onto a uniform angle.
    let profile = |x: f64| {
        if lorentz_fwhm < gauss_fwhm {
            let half_pi = 0.5 * PI;
            simpson(
                &|th: f64| gaussian(x - gamma * th.tan(), gauss_fwhm),
                -half_pi,
                half_pi,
            ) / PI
        } else {
            simpson(
                &|t: f64| gaussian(t, gauss_fwhm) * lorentzian(x - t, lorentz_fwhm),
                -8.0 * sigma,
                8.0 * sigma,
            )
        }
    };
    let half = 0.5 * profile(0.0);
    let (mut a, mut b) = (0.0, lorentz_fwhm + gauss_fwhm);
    while b - a > 0.005 {
        let m = 0.5 * (a + b);
        if profile(m) > half {
            a = m;
        } else {
            b = m;
        }
    }
    a + b
}

/// Olivero-Longbothum approximation to the Voigt FWHM.
pub fn voigt_fwhm_approx(lorentz_fwhm: f64, gauss_fwhm: f64) -> f64 {
    0.5346 * lorentz_fwhm + (0.2166 * lorentz_fwhm.powi(2) + gauss_fwhm.powi(2)).sqrt()
}

/// Gaussian FWHM equivalent to a jump spread `sigma` (MHz).
pub fn jump_fwhm(sigma: f64) -> f64 {
    2.0 * (2.0 * LN_2).sqrt() * sigma
}
