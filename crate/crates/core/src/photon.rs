//! Two-photon interference of dephased emitters under temporal filtering,
//! and the entanglement-rate gain from a brighter zero-phonon line.

use std::f64::consts::PI;

use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

/// NV excited-state lifetime, ns.
pub const NV_LIFETIME_NS: f64 = 12.0;
/// Typical silicon SPAD timing resolution, ps.
pub const SPAD_WINDOW_PS: f64 = 300.0;
/// Upper end of the linewidth search, MHz.
pub const MAX_SEARCH_FWHM_MHZ: f64 = 10_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum PhotonError {
    #[error("lifetime must be positive, got {0} ns")]
    InvalidLifetime(f64),
    #[error("linewidth {fwhm} MHz is below the lifetime limit {limit:.3} MHz")]
    BelowLifetimeLimit { fwhm: f64, limit: f64 },
    #[error("coincidence window must be positive, got {0} ps")]
    InvalidWindow(f64),
    #[error("target visibility must lie in (0, 1), got {0}")]
    InvalidTarget(f64),
    #[error("visibility {target} cannot be reached between the lifetime limit and {MAX_SEARCH_FWHM_MHZ} MHz")]
    Unreachable { target: f64 },
    #[error("ZPL fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
}

/// Fourier-limited FWHM `1 / (2π T1)` in MHz for `T1` in ns.
pub fn lifetime_limit_mhz(lifetime_ns: f64) -> f64 {
    1e3 / (2.0 * PI * lifetime_ns)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonSource {
    lifetime_ns: f64,
    measured_fwhm_mhz: f64,
}

impl PhotonSource {
    pub fn new(lifetime_ns: f64, measured_fwhm_mhz: f64) -> Result<Self, PhotonError> {
        if !(lifetime_ns > 0.0 && lifetime_ns.is_finite()) {
            return Err(PhotonError::InvalidLifetime(lifetime_ns));
        }
        let limit = lifetime_limit_mhz(lifetime_ns);
        // allow rounding at the limit itself
        if measured_fwhm_mhz.is_nan() || measured_fwhm_mhz < limit * (1.0 - 1e-12) {
            return Err(PhotonError::BelowLifetimeLimit {
                fwhm: measured_fwhm_mhz,
                limit,
            });
        }
        Ok(Self {
            lifetime_ns,
            measured_fwhm_mhz,
        })
    }

    /// Source at the lifetime limit.
    pub fn transform_limited(lifetime_ns: f64) -> Result<Self, PhotonError> {
        Self::new(lifetime_ns, lifetime_limit_mhz(lifetime_ns))
    }

    pub fn lifetime_ns(&self) -> f64 {
        self.lifetime_ns
    }

    pub fn measured_fwhm_mhz(&self) -> f64 {
        self.measured_fwhm_mhz
    }

    pub fn lifetime_limit_mhz(&self) -> f64 {
        lifetime_limit_mhz(self.lifetime_ns)
    }

    /// Pure-dephasing rate in 1/ns when all excess width is dephasing.
    pub fn dephasing_rate(&self) -> f64 {
        PI * (self.measured_fwhm_mhz - self.lifetime_limit_mhz()).max(0.0) * 1e-3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterWindow {
    window_ps: f64,
}

impl FilterWindow {
    pub fn new(window_ps: f64) -> Result<Self, PhotonError> {
        if !(window_ps > 0.0 && window_ps.is_finite()) {
            return Err(PhotonError::InvalidWindow(window_ps));
        }
        Ok(Self { window_ps })
    }

    pub fn window_ps(&self) -> f64 {
        self.window_ps
    }

    fn window_ns(&self) -> f64 {
        self.window_ps * 1e-3
    }
}

/// `∫₀^a e^(-r t) dt`, stable as `r a → 0`.
fn truncated_exp_integral(rate: f64, a: f64) -> f64 {
    let x = rate * a;
    if x < 1e-8 {
        a * (1.0 - 0.5 * x)
    } else {
        -(-x).exp_m1() / rate
    }
}

/// Coincidence-window visibility
/// `∫₀^Δt e^(-t/T1) e^(-2γ* t) dt / ∫₀^Δt e^(-t/T1) dt`.
pub fn hom_visibility(source: &PhotonSource, window: &FilterWindow) -> f64 {
    let a = 1.0 / source.lifetime_ns;
    let b = a + 2.0 * source.dephasing_rate();
    let dt = window.window_ns();
    truncated_exp_integral(b, dt) / truncated_exp_integral(a, dt)
}

/// Monte Carlo estimate of [`hom_visibility`] from `n_pairs` photon pairs
/// detected within the window. Emission delays are drawn from the
/// radiative decay and each photon carries an independent Wiener phase.
pub fn hom_visibility_monte_carlo(
    source: &PhotonSource,
    window: &FilterWindow,
    n_pairs: u64,
    seed: u64,
) -> f64 {
    const CHUNK: u64 = 1 << 16;
    let decay = Exp::new(1.0 / source.lifetime_ns).expect("positive lifetime");
    let gamma = source.dephasing_rate();
    let dt = window.window_ns();
    let n_chunks = n_pairs.div_ceil(CHUNK);
    let sum: f64 = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = RngStream::new(seed, chunk).rng();
            let wanted = CHUNK.min(n_pairs - chunk * CHUNK);
            let mut acc = 0.0;
            let mut kept = 0;
            while kept < wanted {
                let t1: f64 = decay.sample(&mut rng);
                let t2: f64 = decay.sample(&mut rng);
                let tau = (t1 - t2).abs();
                if tau >= dt {
                    continue;
                }
                let spread = (2.0 * gamma * tau).sqrt();
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                acc += (spread * (z1 - z2)).cos();
                kept += 1;
            }
            acc
        })
        .sum();
    sum / n_pairs as f64
}

/// Largest measured linewidth that keeps [`hom_visibility`] at or above
/// `target`, by bisection to 1e-3 MHz.
pub fn max_linewidth_for_visibility(
    lifetime_ns: f64,
    window: &FilterWindow,
    target: f64,
) -> Result<f64, PhotonError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(PhotonError::InvalidTarget(target));
    }
    let vis = |fwhm: f64| PhotonSource::new(lifetime_ns, fwhm).map(|s| hom_visibility(&s, window));
    let mut lo = lifetime_limit_mhz(lifetime_ns);
    let mut hi = MAX_SEARCH_FWHM_MHZ;
    if vis(lo)? < target {
        return Err(PhotonError::Unreachable { target });
    }
    if vis(hi)? >= target {
        return Err(PhotonError::Unreachable { target });
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if vis(mid)? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Heralding-rate gain of a two-photon protocol, quadratic in the ZPL
/// photon fraction.
pub fn barrett_kok_gain(
    zpl_fraction_bare: f64,
    zpl_fraction_enhanced: f64,
) -> Result<f64, PhotonError> {
    for f in [zpl_fraction_bare, zpl_fraction_enhanced] {
        if !(f > 0.0 && f <= 1.0) {
            return Err(PhotonError::InvalidFraction(f));
        }
    }
    Ok((zpl_fraction_enhanced / zpl_fraction_bare).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spad() -> FilterWindow {
        FilterWindow::new(SPAD_WINDOW_PS).unwrap()
    }

    #[test]
    fn lifetime_limit_of_nv() {
        assert!((lifetime_limit_mhz(12.0) - 13.263).abs() < 1e-3);
        assert!(PhotonSource::new(12.0, 10.0).is_err());
        assert!(PhotonSource::new(0.0, 100.0).is_err());
        assert!(FilterWindow::new(0.0).is_err());
    }

    #[test]
    fn transform_limited_is_perfect() {
        let s = PhotonSource::transform_limited(12.0).unwrap();
        for w in [1.0, 300.0, 1e4, 1e6] {
            assert!((hom_visibility(&s, &FilterWindow::new(w).unwrap()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn short_window_limit() {
        let s = PhotonSource::new(12.0, 500.0).unwrap();
        let v = hom_visibility(&s, &FilterWindow::new(1e-6).unwrap());
        assert!((v - 1.0).abs() < 1e-6);
    }

    #[test]
    fn spad_window_at_150_mhz() {
        let s = PhotonSource::new(12.0, 150.0).unwrap();
        let v = hom_visibility(&s, &spad());
        // a = 1/12, b = a + 2π(150 - 13.26)e-3, Δt = 0.3 ns
        let (a, b) = (
            1.0 / 12.0,
            1.0 / 12.0 + 2.0 * PI * (150.0 - lifetime_limit_mhz(12.0)) * 1e-3,
        );
        let hand = ((1.0 - (-b * 0.3f64).exp()) / b) / ((1.0 - (-a * 0.3f64).exp()) / a);
        assert!((v - hand).abs() < 1e-12);
        assert!((v - 0.9).abs() < 0.03, "{v}");
        let mc = hom_visibility_monte_carlo(&s, &spad(), 1_000_000, 3);
        assert!((v - mc).abs() < 0.01, "{v} vs {mc}");
    }

    #[test]
    fn inversion_round_trip() {
        let fwhm = max_linewidth_for_visibility(12.0, &spad(), 0.9).unwrap();
        assert!(fwhm > 120.0 && fwhm < 180.0, "{fwhm}");
        let v = hom_visibility(&PhotonSource::new(12.0, fwhm).unwrap(), &spad());
        assert!((v - 0.9).abs() < 1e-4);
        let tighter =
            max_linewidth_for_visibility(12.0, &FilterWindow::new(100.0).unwrap(), 0.9).unwrap();
        assert!(tighter > fwhm);
        let near_one = max_linewidth_for_visibility(12.0, &spad(), 0.999_999).unwrap();
        assert!((near_one - lifetime_limit_mhz(12.0)).abs() < 1.0);
        assert!(max_linewidth_for_visibility(12.0, &spad(), 1.0).is_err());
        assert_eq!(
            max_linewidth_for_visibility(12.0, &FilterWindow::new(1e-3).unwrap(), 0.5),
            Err(PhotonError::Unreachable { target: 0.5 })
        );
    }

    #[test]
    fn entanglement_gain() {
        assert!((barrett_kok_gain(0.03, 0.3).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(barrett_kok_gain(0.2, 0.2).unwrap(), 1.0);
        assert!((barrett_kok_gain(0.1, 0.3).unwrap() - 9.0).abs() < 1e-9);
        assert!(barrett_kok_gain(0.0, 0.3).is_err());
        assert!(barrett_kok_gain(0.1, 1.3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn visibility_decreases_with_window_and_width(
            fwhm in 14.0f64..2000.0,
            dfwhm in 1.0f64..500.0,
            w in 10.0f64..5000.0,
            dw in 1.0f64..1000.0,
        ) {
            let s = PhotonSource::new(12.0, fwhm).unwrap();
            let broader = PhotonSource::new(12.0, fwhm + dfwhm).unwrap();
            let win = FilterWindow::new(w).unwrap();
            let wider = FilterWindow::new(w + dw).unwrap();
            let v = hom_visibility(&s, &win);
            prop_assert!(v > 0.0 && v <= 1.0);
            prop_assert!(hom_visibility(&s, &wider) < v);
            prop_assert!(hom_visibility(&broader, &win) < v);
        }

        #[test]
        fn inverse_round_trip(target in 0.3f64..0.99, w in 50.0f64..2000.0) {
            let win = FilterWindow::new(w).unwrap();
            if let Ok(f) = max_linewidth_for_visibility(12.0, &win, target) {
                let v = hom_visibility(&PhotonSource::new(12.0, f).unwrap(), &win);
                prop_assert!((v - target).abs() < 1e-3);
            }
        }
    }
}
