//! Population statistics of optical linewidths: lognormal fits, empirical
//! CDFs with confidence bands, threshold fractions and per-region medians.

use std::collections::BTreeMap;

use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::rng::RngStream;

pub const MIN_FIT_SAMPLES: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("{0} samples, need at least {1}")]
    TooFewSamples(usize, usize),
    #[error("linewidths must be positive and finite, got {0}")]
    NonPositive(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("mean {mean} must exceed median {median} for a lognormal")]
    InvalidSummary { median: f64, mean: f64 },
    #[error("reference fixture: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinewidthSample {
    pub fwhm_mhz: f64,
    pub thickness_um: f64,
    pub sample: String,
    pub region: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalFit {
    pub mu: f64,
    pub sigma: f64,
    pub median: f64,
    pub geometric_std: f64,
    pub n: usize,
}

impl LognormalFit {
    pub fn from_log_moments(mu: f64, sigma: f64, n: usize) -> Self {
        Self {
            mu,
            sigma,
            median: mu.exp(),
            geometric_std: sigma.exp(),
            n,
        }
    }

    /// Lognormal with the given median and mean, `σ² = 2 ln(mean/median)`.
    pub fn from_median_mean(median: f64, mean: f64) -> Result<Self, StatsError> {
        if !(median > 0.0 && mean > median) {
            return Err(StatsError::InvalidSummary { median, mean });
        }
        Ok(Self::from_log_moments(
            median.ln(),
            (2.0 * (mean / median).ln()).sqrt(),
            0,
        ))
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if self.sigma == 0.0 {
            return if x >= self.median { 1.0 } else { 0.0 };
        }
        std_normal().cdf((x.ln() - self.mu) / self.sigma)
    }

    /// `[median / gsd, median * gsd]`
    pub fn geometric_interval(&self) -> (f64, f64) {
        (
            self.median / self.geometric_std,
            self.median * self.geometric_std,
        )
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let dist = LogNormal::new(self.mu, self.sigma).expect("sigma is finite and non-negative");
        let mut rng = RngStream::new(seed, 0).rng();
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn check_positive(samples: &[f64]) -> Result<(), StatsError> {
    match samples.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        Some(&bad) => Err(StatsError::NonPositive(bad)),
        None => Ok(()),
    }
}

/// Maximum-likelihood lognormal fit; `sigma` is the population standard
/// deviation of `ln x`.
pub fn lognormal_mle(samples: &[f64]) -> Result<LognormalFit, StatsError> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(StatsError::TooFewSamples(samples.len(), MIN_FIT_SAMPLES));
    }
    check_positive(samples)?;
    let n = samples.len() as f64;
    let mu = samples.iter().map(|x| x.ln()).sum::<f64>() / n;
    let var = samples.iter().map(|x| (x.ln() - mu).powi(2)).sum::<f64>() / n;
    Ok(LognormalFit::from_log_moments(
        mu,
        var.sqrt(),
        samples.len(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BandMethod {
    /// Uniform Dvoretzky-Kiefer-Wolfowitz band.
    #[default]
    Dkw,
    /// Pointwise Wilson score interval on each step.
    Wilson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    /// Sorted sample values; the ECDF steps up at each.
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: f64,
    pub method: BandMethod,
    /// DKW half-width, when that band is used.
    pub epsilon: Option<f64>,
}

impl Ecdf {
    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.x.partition_point(|&v| v <= x);
        k as f64 / self.x.len() as f64
    }
}

pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

pub fn ecdf_with_band(samples: &[f64], alpha: f64, method: BandMethod) -> Result<Ecdf, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::TooFewSamples(0, 1));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let nf = n as f64;
    // At ties the step sits at the last copy.
    let f: Vec<f64> = (0..n)
        .map(|i| x.partition_point(|&v| v <= x[i]) as f64 / nf)
        .collect();
    let (lower, upper, epsilon) = match method {
        BandMethod::Dkw => {
            let eps = dkw_epsilon(n, alpha);
            (
                f.iter().map(|p| (p - eps).max(0.0)).collect(),
                f.iter().map(|p| (p + eps).min(1.0)).collect(),
                Some(eps),
            )
        }
        BandMethod::Wilson => {
            let z = std_normal().inverse_cdf(1.0 - 0.5 * alpha);
            let (lo, hi) = f
                .iter()
                .map(|&p| {
                    let denom = 1.0 + z * z / nf;
                    let centre = (p + z * z / (2.0 * nf)) / denom;
                    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
                    ((centre - half).max(0.0), (centre + half).min(1.0))
                })
                .unzip();
            (lo, hi, None)
        }
    };
    Ok(Ecdf {
        x,
        f,
        lower,
        upper,
        alpha,
        method,
        epsilon,
    })
}

/// Share of samples with `fwhm <= threshold`.
pub fn fraction_below(samples: &[f64], threshold: f64) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::TooFewSamples(0, 1));
    }
    Ok(samples.iter().filter(|&&x| x <= threshold).count() as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessRow {
    pub region: String,
    pub thickness_um: f64,
    pub median: f64,
    pub geometric_std: f64,
    pub n: usize,
    pub fit: LognormalFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessTable {
    pub rows: Vec<ThicknessRow>,
    /// Regions left out for having fewer than three samples.
    pub excluded: Vec<(String, usize)>,
}

/// Per-region lognormal summaries ordered by mean region thickness.
pub fn median_by_thickness(samples: &[LinewidthSample]) -> Result<ThicknessTable, StatsError> {
    let mut groups: BTreeMap<&str, Vec<&LinewidthSample>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.region.as_str()).or_default().push(s);
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (region, members) in groups {
        if members.len() < MIN_FIT_SAMPLES {
            log::warn!("region {region} has {} samples; excluded", members.len());
            excluded.push((region.to_string(), members.len()));
            continue;
        }
        let widths: Vec<f64> = members.iter().map(|s| s.fwhm_mhz).collect();
        let fit = lognormal_mle(&widths)?;
        let thickness = members.iter().map(|s| s.thickness_um).sum::<f64>() / members.len() as f64;
        rows.push(ThicknessRow {
            region: region.to_string(),
            thickness_um: thickness,
            median: fit.median,
            geometric_std: fit.geometric_std,
            n: fit.n,
            fit,
        });
    }
    rows.sort_by(|a, b| {
        a.thickness_um
            .total_cmp(&b.thickness_um)
            .then(a.region.cmp(&b.region))
    });
    Ok(ThicknessTable { rows, excluded })
}

/// True when every pair of rows has overlapping `median ×/÷ gsd` intervals.
pub fn intervals_overlap(rows: &[ThicknessRow]) -> bool {
    let lo = rows
        .iter()
        .map(|r| r.median / r.geometric_std)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = rows
        .iter()
        .map(|r| r.median * r.geometric_std)
        .fold(f64::INFINITY, f64::min);
    rows.is_empty() || lo <= hi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePopulation {
    pub sample: String,
    pub implant_energy_kev: f64,
    pub median_mhz: f64,
    pub mean_mhz: f64,
    pub thickness_um: [f64; 2],
}

impl ReferencePopulation {
    pub fn lognormal(&self) -> Result<LognormalFit, StatsError> {
        LognormalFit::from_median_mean(self.median_mhz, self.mean_mhz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFixture {
    pub population: Vec<ReferencePopulation>,
    pub fractions_below_150_mhz: BTreeMap<String, f64>,
}

impl ReferenceFixture {
    pub fn population(&self, sample: &str) -> Option<&ReferencePopulation> {
        self.population.iter().find(|p| p.sample == sample)
    }
}

const REFERENCE_TOML: &str = include_str!("../fixtures/reference_linewidths.toml");

/// Measured per-sample medians and means bundled with the crate.
pub fn reference_fixture() -> Result<ReferenceFixture, StatsError> {
    toml::from_str(REFERENCE_TOML).map_err(|e| StatsError::Fixture(e.to_string()))
}

/// Draws `n_per_population` linewidths from each named reference sample
/// and pools them.
pub fn synthetic_reference_pool(
    fixture: &ReferenceFixture,
    samples: &[&str],
    n_per_population: usize,
    seed: u64,
) -> Result<Vec<f64>, StatsError> {
    let mut pool = Vec::with_capacity(samples.len() * n_per_population);
    for (k, name) in samples.iter().enumerate() {
        let p = fixture
            .population(name)
            .ok_or_else(|| StatsError::Fixture(format!("no sample {name}")))?;
        pool.extend(p.lognormal()?.sample(
            n_per_population,
            RngStream::new(seed, 0).derive(k as u64).seed,
        ));
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_and_two_point_fits() {
        let f = lognormal_mle(&[143.0; 5]).unwrap();
        assert!((f.median - 143.0).abs() < 1e-9);
        assert_eq!(f.geometric_std, 1.0);
        let g = lognormal_mle(&[100.0, 400.0, 200.0]).unwrap();
        assert!((g.median - 200.0).abs() < 1e-9);
        assert_eq!(
            lognormal_mle(&[100.0, 400.0]),
            Err(StatsError::TooFewSamples(2, 3))
        );
        assert_eq!(
            lognormal_mle(&[1.0, 0.0, 2.0]),
            Err(StatsError::NonPositive(0.0))
        );
    }

    #[test]
    fn recovers_generator_median() {
        let truth = LognormalFit::from_log_moments(143f64.ln(), 0.5, 0);
        let fit = lognormal_mle(&truth.sample(10_000, 17)).unwrap();
        assert!((fit.median / 143.0 - 1.0).abs() < 0.03, "{fit:?}");
        assert!((fit.sigma - 0.5).abs() < 0.02);
    }

    #[test]
    fn dkw_half_width() {
        // sqrt(ln 40 / 100)
        assert!((dkw_epsilon(50, 0.05) - 0.1921).abs() < 1e-4);
    }

    #[test]
    fn ecdf_edges() {
        let e = ecdf_with_band(&[7.0], 0.05, BandMethod::Dkw).unwrap();
        assert_eq!(e.eval(6.999), 0.0);
        assert_eq!(e.eval(7.0), 1.0);
        let e = ecdf_with_band(&[3.0, 1.0, 2.0, 2.0], 0.05, BandMethod::Wilson).unwrap();
        assert_eq!(e.eval(3.0), 1.0);
        assert_eq!(e.f, vec![0.25, 0.75, 0.75, 1.0]);
        assert!(e.lower.iter().zip(&e.f).all(|(l, f)| l <= f));
        assert!(e.upper.iter().all(|&u| u <= 1.0));
        assert!(ecdf_with_band(&[], 0.05, BandMethod::Dkw).is_err());
        assert!(ecdf_with_band(&[1.0], 1.5, BandMethod::Dkw).is_err());
    }

    #[test]
    fn dkw_band_covers_true_cdf() {
        let truth = LognormalFit::from_log_moments(5.0, 0.7, 0);
        let trials = 1000;
        let covered = (0..trials)
            .filter(|&t| {
                let e = ecdf_with_band(&truth.sample(50, t), 0.05, BandMethod::Dkw).unwrap();
                let eps = e.epsilon.unwrap();
                e.x.iter().enumerate().all(|(i, &x)| {
                    let f = truth.cdf(x);
                    let before = i as f64 / 50.0;
                    (f - e.f[i]).abs() <= eps && (f - before).abs() <= eps
                })
            })
            .count();
        assert!(covered as f64 / trials as f64 >= 0.94, "{covered}");
    }

    #[test]
    fn threshold_fraction() {
        let s = [100.0, 120.0, 140.0];
        assert_eq!(fraction_below(&s, 200.0).unwrap(), 1.0);
        assert_eq!(fraction_below(&s, 50.0).unwrap(), 0.0);
        assert!((fraction_below(&s, 120.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn reference_fixture_parses() {
        let fx = reference_fixture().unwrap();
        assert_eq!(fx.population.len(), 3);
        let a = fx.population("A").unwrap().lognormal().unwrap();
        assert!((a.median - 143.0).abs() < 1e-9);
        assert!((a.mean() - 227.0).abs() < 1e-9);
        assert_eq!(fx.fractions_below_150_mhz["A_and_B"], 0.54);
    }

    #[test]
    fn a_plus_b_pool_matches_reported_fraction() {
        let fx = reference_fixture().unwrap();
        let pool = synthetic_reference_pool(&fx, &["A", "B"], 5000, 1).unwrap();
        let frac = fraction_below(&pool, 150.0).unwrap();
        assert!((frac - 0.54).abs() < 0.05, "{frac}");
        // analytic mixture: (0.520 + 0.545) / 2
        let analytic: f64 = ["A", "B"]
            .iter()
            .map(|s| fx.population(s).unwrap().lognormal().unwrap().cdf(150.0))
            .sum::<f64>()
            / 2.0;
        assert!((frac - analytic).abs() < 0.015, "{frac} vs {analytic}");
    }

    fn region(name: &str, t: f64, widths: &[f64]) -> Vec<LinewidthSample> {
        widths
            .iter()
            .map(|&w| LinewidthSample {
                fwhm_mhz: w,
                thickness_um: t,
                sample: "A".into(),
                region: name.into(),
            })
            .collect()
    }

    #[test]
    fn thickness_table() {
        let w = [100.0, 150.0, 200.0, 130.0];
        let mut all = region("r2", 3.0, &w);
        all.extend(region("r1", 2.0, &w));
        all.extend(region("tiny", 1.0, &[80.0, 90.0]));
        let t = median_by_thickness(&all).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0].region, "r1");
        assert_eq!(t.rows[0].median, t.rows[1].median);
        assert_eq!(t.rows[0].geometric_std, t.rows[1].geometric_std);
        assert_eq!(t.excluded, vec![("tiny".to_string(), 2)]);
        assert!(intervals_overlap(&t.rows));
        let single = median_by_thickness(&region("only", 4.0, &w)).unwrap();
        assert_eq!(single.rows.len(), 1);
    }

    #[test]
    fn no_trend_across_thickness() {
        let truth = LognormalFit::from_median_mean(140.0, 200.0).unwrap();
        let mut all = Vec::new();
        for (i, t) in [1.9, 2.5, 3.2, 3.8, 4.3, 4.9].iter().enumerate() {
            all.extend(region(
                &format!("t{i}"),
                *t,
                &truth.sample(40, 100 + i as u64),
            ));
        }
        let table = median_by_thickness(&all).unwrap();
        assert_eq!(table.rows.len(), 6);
        assert!(intervals_overlap(&table.rows));
    }

    proptest! {
        #[test]
        fn rescaling_moves_median_only(
            xs in proptest::collection::vec(1.0f64..1e4, 3..60),
            k in 1e-3f64..1e3,
        ) {
            let a = lognormal_mle(&xs).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| x * k).collect();
            let b = lognormal_mle(&scaled).unwrap();
            prop_assert!((b.median / (k * a.median) - 1.0).abs() < 1e-9);
            prop_assert!((b.geometric_std / a.geometric_std - 1.0).abs() < 1e-9);
        }

        #[test]
        fn mle_equals_normal_moments_of_logs(xs in proptest::collection::vec(1e-3f64..1e6, 3..60)) {
            let fit = lognormal_mle(&xs).unwrap();
            let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
            let n = logs.len() as f64;
            let m = logs.iter().sum::<f64>() / n;
            let v = logs.iter().map(|l| (l - m) * (l - m)).sum::<f64>() / n;
            prop_assert!((fit.mu - m).abs() < 1e-9);
            prop_assert!((fit.sigma - v.sqrt()).abs() < 1e-9);
        }

        #[test]
        fn fraction_below_is_monotone(
            xs in proptest::collection::vec(1.0f64..1e3, 1..40),
            a in 0.0f64..1.2e3,
            b in 0.0f64..1.2e3,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let fl = fraction_below(&xs, lo).unwrap();
            let fh = fraction_below(&xs, hi).unwrap();
            prop_assert!(fl <= fh && (0.0..=1.0).contains(&fl) && fh <= 1.0);
        }
    }
}
