//! Thin-slab interference on the phonon sideband and thickness extraction
//! from the resulting fringes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

/// Default phonon-sideband window, nm.
pub const PSB_WINDOW_NM: (f64, f64) = (630.0, 800.0);
pub const DEFAULT_SAMPLES: usize = 1024;
pub const MIN_SAMPLES: usize = 64;
pub const DIAMOND_INDEX: f64 = 2.41;
/// Allowed thickness search range, µm.
pub const THICKNESS_LIMITS_UM: (f64, f64) = (0.5, 60.0);
/// Minimum ratio of fringe power to background power.
pub const SIGNIFICANCE_THRESHOLD: f64 = 3.0;

const PSB_PEAK_NM: f64 = 680.0;
const PSB_LOG_WIDTH: f64 = 0.08;
const TREND_ORDER: usize = 3;
const GRID_STEPS_PER_WIDTH: f64 = 20.0;

#[derive(Debug, Error, PartialEq)]
pub enum EtalonError {
    #[error("thickness must be positive, got {0} µm")]
    InvalidThickness(f64),
    #[error("refractive index must exceed 1, got {0}")]
    InvalidIndex(f64),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("thickness range [{min}, {max}] µm must be ordered and inside [0.5, 60] µm")]
    InvalidRange { min: f64, max: f64 },
    #[error("indeterminate thickness: {0}")]
    Indeterminate(String),
}

/// Refractive index of the slab over the sideband.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefractiveIndex {
    Constant(f64),
    /// Two-term Cauchy law `a + b / λ²` with `λ` in µm.
    Cauchy {
        a: f64,
        b_um2: f64,
    },
}

impl RefractiveIndex {
    pub fn at(&self, wavelength_nm: f64) -> f64 {
        match *self {
            RefractiveIndex::Constant(n) => n,
            RefractiveIndex::Cauchy { a, b_um2 } => {
                let l = wavelength_nm * 1e-3;
                a + b_um2 / (l * l)
            }
        }
    }

    fn validate(&self, window: (f64, f64)) -> Result<(), EtalonError> {
        for n in [self.at(window.0), self.at(window.1)] {
            if !(n > 1.0 && n.is_finite()) {
                return Err(EtalonError::InvalidIndex(n));
            }
        }
        Ok(())
    }
}

impl Default for RefractiveIndex {
    fn default() -> Self {
        RefractiveIndex::Constant(DIAMOND_INDEX)
    }
}

impl From<f64> for RefractiveIndex {
    fn from(n: f64) -> Self {
        RefractiveIndex::Constant(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeOrder {
    pub order: u32,
    pub wavelength_nm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtalonModel {
    pub thickness_um: f64,
    pub index: RefractiveIndex,
}

impl EtalonModel {
    pub fn new(thickness_um: f64, index: RefractiveIndex) -> Result<Self, EtalonError> {
        if !(thickness_um > 0.0 && thickness_um.is_finite()) {
            return Err(EtalonError::InvalidThickness(thickness_um));
        }
        index.validate(PSB_WINDOW_NM)?;
        Ok(Self {
            thickness_um,
            index,
        })
    }

    pub fn modulation(&self, wavelength_nm: f64) -> f64 {
        slab_modulation(
            self.thickness_um,
            self.index.at(wavelength_nm),
            wavelength_nm,
        )
    }

    /// Constructive orders `2 n(λ) d = m λ` inside `[lo, hi]` nm, sorted by
    /// wavelength.
    pub fn fringe_orders(&self, lo: f64, hi: f64) -> Vec<FringeOrder> {
        let opt = |l: f64| 2.0 * self.index.at(l) * self.thickness_um * 1e3 / l;
        let (m_lo, m_hi) = (opt(hi).ceil() as u32, opt(lo).floor() as u32);
        let mut out: Vec<FringeOrder> = (m_lo.max(1)..=m_hi)
            .filter_map(|m| {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..100 {
                    let mid = 0.5 * (a + b);
                    if opt(mid) > m as f64 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                let l = 0.5 * (a + b);
                (l >= lo && l <= hi).then_some(FringeOrder {
                    order: m,
                    wavelength_nm: l,
                })
            })
            .collect();
        out.sort_by(|x, y| x.wavelength_nm.total_cmp(&y.wavelength_nm));
        out
    }
}

/// Fringe contrast of a lossless slab with two identical interfaces,
/// `2R / (1 + R²)` with normal-incidence Fresnel reflectivity `R`.
pub fn fringe_visibility(n: f64) -> f64 {
    let r = ((n - 1.0) / (n + 1.0)).powi(2);
    2.0 * r / (1.0 + r * r)
}

/// Low-finesse transmission envelope `1 + V cos(4π n d / λ)`; `d` in µm,
/// `λ` in nm.
pub fn slab_modulation(d_um: f64, n: f64, wavelength_nm: f64) -> f64 {
    1.0 + fringe_visibility(n) * (4.0 * PI * n * d_um * 1e3 / wavelength_nm).cos()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    wavelength_nm: Vec<f64>,
    intensity: Vec<f64>,
}

impl Spectrum {
    pub fn new(wavelength_nm: Vec<f64>, intensity: Vec<f64>) -> Result<Self, EtalonError> {
        if wavelength_nm.len() != intensity.len() {
            return Err(EtalonError::InvalidSpectrum(format!(
                "{} wavelengths but {} intensities",
                wavelength_nm.len(),
                intensity.len()
            )));
        }
        if wavelength_nm.len() < MIN_SAMPLES {
            return Err(EtalonError::InvalidSpectrum(format!(
                "{} samples, need at least {MIN_SAMPLES}",
                wavelength_nm.len()
            )));
        }
        if wavelength_nm.iter().any(|w| !(w.is_finite() && *w > 0.0))
            || wavelength_nm.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(EtalonError::InvalidSpectrum(
                "wavelengths must be positive and strictly increasing".into(),
            ));
        }
        if intensity.iter().any(|i| !(i.is_finite() && *i >= 0.0)) {
            return Err(EtalonError::InvalidSpectrum(
                "intensities must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            wavelength_nm,
            intensity,
        })
    }

    pub fn wavelength_nm(&self) -> &[f64] {
        &self.wavelength_nm
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn len(&self) -> usize {
        self.wavelength_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelength_nm.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            wavelength_nm: self.wavelength_nm.clone(),
            intensity: self.intensity.iter().map(|i| i * factor).collect(),
        }
    }

    fn window(&self) -> (f64, f64) {
        (self.wavelength_nm[0], self.wavelength_nm[self.len() - 1])
    }
}

fn psb_envelope(wavelength_nm: f64) -> f64 {
    let x = (wavelength_nm / PSB_PEAK_NM).ln() / PSB_LOG_WIDTH;
    (-0.5 * x * x).exp()
}

/// Synthetic sideband seen through a slab of thickness `d_um`, sampled on
/// the default window. `noise_level` is the relative standard deviation of
/// multiplicative Gaussian noise.
pub fn synthesize_psb_spectrum(
    d_um: f64,
    index: RefractiveIndex,
    noise_level: f64,
    seed: u64,
) -> Result<Spectrum, EtalonError> {
    let (lo, hi) = PSB_WINDOW_NM;
    let step = (hi - lo) / (DEFAULT_SAMPLES - 1) as f64;
    let grid: Vec<f64> = (0..DEFAULT_SAMPLES).map(|i| lo + step * i as f64).collect();
    synthesize_on_grid(&grid, d_um, index, noise_level, seed)
}

pub fn synthesize_on_grid(
    wavelength_nm: &[f64],
    d_um: f64,
    index: RefractiveIndex,
    noise_level: f64,
    seed: u64,
) -> Result<Spectrum, EtalonError> {
    let model = EtalonModel::new(d_um, index)?;
    let mut rng = RngStream::new(seed, 0).rng();
    let intensity = wavelength_nm
        .iter()
        .map(|&l| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (psb_envelope(l) * model.modulation(l) * (1.0 + noise_level * z)).max(0.0)
        })
        .collect();
    Spectrum::new(wavelength_nm.to_vec(), intensity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessFit {
    pub thickness_um: f64,
    pub uncertainty_um: f64,
    /// Fringe power over the strongest competing periodogram peak.
    pub power_ratio: f64,
    /// Amplitude of the fitted log-intensity oscillation.
    pub log_amplitude: f64,
}

/// Least-squares periodogram of `ln I` against a sinusoid in optical phase,
/// with a cubic polynomial in `ln λ` absorbing the sideband envelope.
struct Periodogram {
    wavelength_nm: Vec<f64>,
    index: Vec<f64>,
    /// Orthonormal basis of the trend space.
    trend: DMatrix<f64>,
    /// Log intensity with its trend projection removed.
    residual: DVector<f64>,
}

impl Periodogram {
    fn new(spec: &Spectrum, index: RefractiveIndex) -> Self {
        let n = spec.len();
        let peak = spec.intensity.iter().cloned().fold(0.0, f64::max);
        let floor = (peak * 1e-9).max(f64::MIN_POSITIVE);
        let y = DVector::from_iterator(n, spec.intensity.iter().map(|&i| i.max(floor).ln()));
        let mid = (spec.wavelength_nm[0] * spec.wavelength_nm[n - 1]).sqrt();
        let basis = DMatrix::from_fn(n, TREND_ORDER + 1, |r, c| {
            (spec.wavelength_nm[r] / mid).ln().powi(c as i32) * 10f64.powi(c as i32)
        });
        let trend = basis.qr().q();
        let residual = &y - &trend * (trend.transpose() * &y);
        Self {
            wavelength_nm: spec.wavelength_nm.clone(),
            index: spec.wavelength_nm.iter().map(|&l| index.at(l)).collect(),
            trend,
            residual,
        }
    }

    fn detrend(&self, v: DVector<f64>) -> DVector<f64> {
        let proj = &self.trend * (self.trend.transpose() * &v);
        v - proj
    }

    /// Residual-sum-of-squares reduction from adding the fringe term at
    /// thickness `d_um`, and the fitted amplitude.
    fn power(&self, d_um: f64) -> (f64, f64) {
        let phase = |i: usize| 4.0 * PI * self.index[i] * d_um * 1e3 / self.wavelength_nm[i];
        let n = self.wavelength_nm.len();
        let c = self.detrend(DVector::from_fn(n, |i, _| phase(i).cos()));
        let s = self.detrend(DVector::from_fn(n, |i, _| phase(i).sin()));
        let (cc, ss, cs) = (c.dot(&c), s.dot(&s), c.dot(&s));
        let (cr, sr) = (c.dot(&self.residual), s.dot(&self.residual));
        let det = cc * ss - cs * cs;
        if det <= 1e-12 * cc * ss || det <= 0.0 {
            return (0.0, 0.0);
        }
        let a = (ss * cr - cs * sr) / det;
        let b = (cc * sr - cs * cr) / det;
        (a * cr + b * sr, a.hypot(b))
    }

    fn baseline_rss(&self) -> f64 {
        self.residual.norm_squared()
    }
}

/// Width in µm of the periodogram main lobe for this window and index.
fn lobe_width_um(window: (f64, f64), n: f64) -> f64 {
    1e-3 / (2.0 * n * (1.0 / window.0 - 1.0 / window.1))
}

/// Fits the slab thickness in `d_range` (µm) from the fringes on `spec`.
pub fn fit_thickness(
    spec: &Spectrum,
    index: RefractiveIndex,
    d_range: (f64, f64),
) -> Result<ThicknessFit, EtalonError> {
    let (dmin, dmax) = d_range;
    let (lim_lo, lim_hi) = THICKNESS_LIMITS_UM;
    if !(dmin >= lim_lo && dmax <= lim_hi && dmin < dmax) {
        return Err(EtalonError::InvalidRange {
            min: dmin,
            max: dmax,
        });
    }
    let window = spec.window();
    index.validate(window)?;

    let max_spacing = spec
        .wavelength_nm
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    let n_blue = index.at(window.0);
    let finest_fringe = window.0 * window.0 / (2.0 * n_blue * dmax * 1e3);
    if finest_fringe <= 3.0 * max_spacing {
        return Err(EtalonError::Indeterminate(format!(
            "fringe spacing {finest_fringe:.3} nm at {dmax} µm is under three sample spacings \
             ({max_spacing:.3} nm)"
        )));
    }

    let pg = Periodogram::new(spec, index);
    let n_mid = index.at((window.0 * window.1).sqrt());
    let width = lobe_width_um(window, n_mid);
    let step = width / GRID_STEPS_PER_WIDTH;
    let n_grid = ((dmax - dmin) / step).ceil() as usize + 1;
    let grid: Vec<f64> = (0..n_grid)
        .map(|i| (dmin + step * i as f64).min(dmax))
        .collect();
    let powers: Vec<f64> = grid.iter().map(|&d| pg.power(d).0).collect();
    let (best, &peak_power) = powers
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid has at least two points");

    // Strongest competing peak outside the main lobe and its first sidelobes.
    let guard = 2.0 * width;
    let background: Vec<f64> = grid
        .iter()
        .zip(&powers)
        .filter(|(d, _)| (**d - grid[best]).abs() > guard)
        .map(|(_, p)| *p)
        .collect();
    if background.len() < 10 {
        return Err(EtalonError::Indeterminate(format!(
            "range [{dmin}, {dmax}] µm is too narrow to estimate the background"
        )));
    }
    let rival = background.iter().cloned().fold(0.0, f64::max);
    let power_ratio = if rival > 0.0 {
        peak_power / rival
    } else {
        f64::INFINITY
    };
    if power_ratio.is_nan() || power_ratio < SIGNIFICANCE_THRESHOLD {
        return Err(EtalonError::Indeterminate(format!(
            "no significant fringe peak (power ratio {power_ratio:.2} < {SIGNIFICANCE_THRESHOLD})"
        )));
    }

    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let d = golden_max(|d| pg.power(d).0, lo, hi, 1e-7 * grid[best]);

    let rss = |d: f64| pg.baseline_rss() - pg.power(d).0;
    let h = width / 50.0;
    let curvature = (rss(d + h) - 2.0 * rss(d) + rss(d - h)) / (h * h);
    let dof = spec.len().saturating_sub(TREND_ORDER + 4).max(1) as f64;
    let s2 = rss(d).max(0.0) / dof;
    let uncertainty = if curvature > 0.0 {
        (2.0 * s2 / curvature).sqrt()
    } else {
        width
    };
    Ok(ThicknessFit {
        thickness_um: d,
        uncertainty_um: uncertainty,
        power_ratio,
        log_amplitude: pg.power(d).1,
    })
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const N: RefractiveIndex = RefractiveIndex::Constant(DIAMOND_INDEX);

    #[test]
    fn constructive_condition_is_local_max() {
        let (d, n) = (5.4, 2.41);
        let m = 38.0;
        let l = 2.0 * n * d * 1e3 / m;
        let at = slab_modulation(d, n, l);
        assert!(at > slab_modulation(d, n, l - 0.5));
        assert!(at > slab_modulation(d, n, l + 0.5));
        assert!((at - 1.0 - fringe_visibility(n)).abs() < 1e-12);
    }

    #[test]
    fn fringe_spacing_near_700nm() {
        let model = EtalonModel::new(5.4, N).unwrap();
        let orders = model.fringe_orders(680.0, 720.0);
        let pair = orders
            .windows(2)
            .find(|w| w[0].wavelength_nm <= 700.0 && w[1].wavelength_nm >= 700.0)
            .unwrap();
        let spacing = pair[1].wavelength_nm - pair[0].wavelength_nm;
        // λ²/(2nd) = 700² / (2 · 2.41 · 5400) = 18.83 nm
        assert!((spacing - 18.8).abs() < 0.5, "{spacing}");
        for o in &orders {
            let lhs = 2.0 * 2.41 * 5400.0;
            assert!((lhs - o.order as f64 * o.wavelength_nm).abs() < 1e-6);
        }
    }

    #[test]
    fn visibility_vanishes_without_contrast() {
        assert_eq!(fringe_visibility(1.0), 0.0);
        assert!(fringe_visibility(1.001) < 1e-6);
        // R = 0.171 for diamond
        assert!((fringe_visibility(2.41) - 0.332).abs() < 1e-3);
    }

    #[test]
    fn doubling_thickness_halves_spacing_in_inverse_wavelength() {
        let a = EtalonModel::new(2.0, N)
            .unwrap()
            .fringe_orders(630.0, 800.0);
        let b = EtalonModel::new(4.0, N)
            .unwrap()
            .fringe_orders(630.0, 800.0);
        let inv_spacing = |v: &[FringeOrder]| 1.0 / v[0].wavelength_nm - 1.0 / v[1].wavelength_nm;
        assert!((inv_spacing(&a) / inv_spacing(&b) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn synthesis_guards() {
        assert_eq!(
            synthesize_psb_spectrum(0.0, N, 0.0, 1),
            Err(EtalonError::InvalidThickness(0.0))
        );
        assert!(synthesize_psb_spectrum(1.0, RefractiveIndex::Constant(0.9), 0.0, 1).is_err());
        assert!(Spectrum::new(vec![1.0; 10], vec![1.0; 10]).is_err());
        let w: Vec<f64> = (0..64).map(|i| 600.0 + i as f64).collect();
        assert!(Spectrum::new(w.clone(), vec![-1.0; 64]).is_err());
        assert!(Spectrum::new(w, vec![1.0; 64]).is_ok());
    }

    #[test]
    fn noiseless_round_trip() {
        for d in [1.9, 2.5, 3.8, 5.4, 9.0] {
            let spec = synthesize_psb_spectrum(d, N, 0.0, 0).unwrap();
            let fit = fit_thickness(&spec, N, (1.0, 10.0)).unwrap();
            assert!((fit.thickness_um - d).abs() / d < 0.005, "{d}: {fit:?}");
        }
    }

    #[test]
    fn dispersive_round_trip() {
        let idx = RefractiveIndex::Cauchy {
            a: 2.38,
            b_um2: 0.012,
        };
        let spec = synthesize_psb_spectrum(4.2, idx, 0.02, 5).unwrap();
        let fit = fit_thickness(&spec, idx, (1.0, 10.0)).unwrap();
        assert!((fit.thickness_um - 4.2).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn noisy_showcase() {
        let spec = synthesize_psb_spectrum(5.4, N, 0.05, 11).unwrap();
        let fit = fit_thickness(&spec, N, (1.0, 10.0)).unwrap();
        assert!((fit.thickness_um - 5.4).abs() < 0.1, "{fit:?}");
        assert!(fit.uncertainty_um > 0.0 && fit.uncertainty_um < 0.1);
    }

    #[test]
    fn white_noise_is_indeterminate() {
        use rand::Rng;
        let mut rng = RngStream::new(3, 0).rng();
        let w: Vec<f64> = (0..1024)
            .map(|i| 630.0 + i as f64 * 170.0 / 1023.0)
            .collect();
        let i: Vec<f64> = w.iter().map(|_| 1.0 + rng.random::<f64>()).collect();
        let spec = Spectrum::new(w, i).unwrap();
        let err = fit_thickness(&spec, N, (1.0, 10.0)).unwrap_err();
        assert!(matches!(err, EtalonError::Indeterminate(_)), "{err:?}");
    }

    #[test]
    fn coarse_sampling_trips_alias_guard() {
        let w: Vec<f64> = (0..64).map(|i| 630.0 + i as f64 * 170.0 / 63.0).collect();
        let spec = synthesize_on_grid(&w, 3.0, N, 0.0, 0).unwrap();
        let err = fit_thickness(&spec, N, (1.0, 40.0)).unwrap_err();
        assert!(err.to_string().contains("sample spacings"), "{err}");
        assert!(fit_thickness(&spec, N, (0.1, 10.0)).is_err());
        assert!(fit_thickness(&spec, N, (5.0, 4.0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn fit_invariant_under_rescaling(k in 1e-3f64..1e3, seed in 0u64..1000) {
            let spec = synthesize_psb_spectrum(3.1, N, 0.03, seed).unwrap();
            let a = fit_thickness(&spec, N, (1.0, 10.0)).unwrap();
            let b = fit_thickness(&spec.scaled(k), N, (1.0, 10.0)).unwrap();
            prop_assert!((a.thickness_um - b.thickness_um).abs() < 1e-6);
        }
    }
}
