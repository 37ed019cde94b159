//! Depth distributions of implanted ions and vacancies, and the summary
//! metrics derived from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bca::CascadeRecord;
use crate::target::{atomic_density, Element, TargetMaterial};

#[derive(Debug, Error, PartialEq)]
pub enum DamageError {
    #[error("no cascade records supplied")]
    NoRecords,
    #[error("bin width must be positive, got {0} nm")]
    InvalidBinWidth(f64),
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("summaries are not comparable: {0}")]
    Mismatch(String),
    #[error("capture fraction must lie in [0, 1], got {0}")]
    InvalidCaptureFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistogramKind {
    ImplantedIon,
    Vacancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthHistogram {
    /// nm, strictly increasing, `counts.len() + 1` entries
    pub bin_edges: Vec<f64>,
    pub counts: Vec<f64>,
    /// Number of ions simulated.
    pub normalization: u64,
    pub kind: HistogramKind,
    /// Set when nothing could be binned, e.g. every ion left the slab.
    pub empty_warning: bool,
}

impl DepthHistogram {
    fn from_samples(
        samples: impl Iterator<Item = (f64, f64)>,
        edges: &[f64],
        bin_width: f64,
        normalization: u64,
        kind: HistogramKind,
    ) -> Self {
        let mut counts = vec![0.0; edges.len() - 1];
        for (depth, weight) in samples {
            let idx = ((depth / bin_width).floor() as usize).min(counts.len() - 1);
            counts[idx] += weight;
        }
        let empty_warning = counts.iter().all(|&c| c == 0.0);
        Self {
            bin_edges: edges.to_vec(),
            counts,
            normalization,
            kind,
            empty_warning,
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    /// Merges each run of `factor` adjacent bins.
    pub fn rebin(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let counts: Vec<f64> = self.counts.chunks(factor).map(|c| c.iter().sum()).collect();
        let mut bin_edges: Vec<f64> = self.bin_edges.iter().step_by(factor).copied().collect();
        if bin_edges.len() < counts.len() + 1 {
            let w = self.bin_width() * factor as f64;
            bin_edges.push(bin_edges[bin_edges.len() - 1] + w);
        }
        Self {
            bin_edges,
            counts,
            normalization: self.normalization,
            kind: self.kind,
            empty_warning: self.empty_warning,
        }
    }
}

/// Bins stopped-ion depths and vacancy events on a common grid starting at
/// the surface. Ions that left the slab are excluded from the ion
/// histogram but still count in its normalization.
pub fn build_depth_histograms(
    records: &[CascadeRecord],
    bin_width: f64,
) -> Result<(DepthHistogram, DepthHistogram), DamageError> {
    if records.is_empty() {
        return Err(DamageError::NoRecords);
    }
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(DamageError::InvalidBinWidth(bin_width));
    }
    let deepest = records
        .iter()
        .flat_map(|r| {
            r.final_position
                .depth()
                .into_iter()
                .chain(r.vacancies.iter().map(|v| v.depth))
        })
        .fold(0.0_f64, f64::max);
    let n_bins = ((deepest / bin_width).floor() as usize + 1).max(1);
    let edges: Vec<f64> = (0..=n_bins).map(|i| i as f64 * bin_width).collect();
    let n = records.len() as u64;
    let ions = DepthHistogram::from_samples(
        records
            .iter()
            .filter_map(|r| r.final_position.depth())
            .map(|d| (d, 1.0)),
        &edges,
        bin_width,
        n,
        HistogramKind::ImplantedIon,
    );
    if ions.empty_warning {
        log::warn!("all {n} ions left the slab; implanted-ion histogram is empty");
    }
    let vacancies = DepthHistogram::from_samples(
        records
            .iter()
            .flat_map(|r| r.vacancies.iter().map(|v| (v.depth, v.weight))),
        &edges,
        bin_width,
        n,
        HistogramKind::Vacancy,
    );
    Ok((ions, vacancies))
}

/// Centre of the highest bin after a centred 3-bin moving average (zero
/// padded at the ends). Ties resolve to the shallower bin.
pub fn peak_depth(hist: &DepthHistogram) -> Result<f64, DamageError> {
    let c = &hist.counts;
    if c.is_empty() || c.iter().all(|&v| v == 0.0) {
        return Err(DamageError::EmptyHistogram);
    }
    let at = |i: isize| {
        if i < 0 || i as usize >= c.len() {
            0.0
        } else {
            c[i as usize]
        }
    };
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for i in 0..c.len() {
        let k = i as isize;
        let smoothed = (at(k - 1) + at(k) + at(k + 1)) / 3.0;
        if smoothed > best_value {
            best_value = smoothed;
            best = i;
        }
    }
    Ok(0.5 * (hist.bin_edges[best] + hist.bin_edges[best + 1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    /// nm
    pub peak_depth: f64,
    pub vacancies_per_ion: f64,
    pub species: Element,
    /// keV
    pub energy: f64,
    pub kind: HistogramKind,
}

impl DepthSummary {
    pub fn from_histogram(
        hist: &DepthHistogram,
        vacancies_per_ion: f64,
        species: Element,
        energy: f64,
    ) -> Result<Self, DamageError> {
        Ok(Self {
            peak_depth: peak_depth(hist)?,
            vacancies_per_ion,
            species,
            energy,
            kind: hist.kind,
        })
    }
}

/// Absolute and relative peak separation between a nitrogen run and a
/// carbon run. The relative difference is normalised by the nitrogen peak.
pub fn depth_delta(
    summary_n: &DepthSummary,
    summary_c: &DepthSummary,
) -> Result<(f64, f64), DamageError> {
    if summary_n.kind != summary_c.kind {
        return Err(DamageError::Mismatch(format!(
            "{:?} vs {:?}",
            summary_n.kind, summary_c.kind
        )));
    }
    if (summary_n.energy - summary_c.energy).abs() > 1e-9 * summary_n.energy.abs().max(1.0) {
        return Err(DamageError::Mismatch(format!(
            "{} keV vs {} keV",
            summary_n.energy, summary_c.energy
        )));
    }
    let delta = (summary_n.peak_depth - summary_c.peak_depth).abs();
    let relative = if summary_n.peak_depth > 0.0 {
        delta / summary_n.peak_depth
    } else {
        0.0
    };
    Ok((delta, relative))
}

/// Mean vacancies per simulated ion; exited ions stay in the denominator.
pub fn vacancy_yield(records: &[CascadeRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.vacancy_count()).sum::<f64>() / records.len() as f64
}

/// Phenomenological NV areal density per depth bin, NV/cm^2.
///
/// Each bin holds `capture_fraction * native_n_ppb * V` centres, where `V`
/// is the areal vacancy density of the bin at the given fluence, so
/// `capture_fraction` is the vacancy-to-NV conversion per ppb of native
/// nitrogen. The result never exceeds the native nitrogen atoms in the bin.
pub fn nv_density_profile(
    vac_hist: &DepthHistogram,
    target: &TargetMaterial,
    native_n_ppb: f64,
    capture_fraction: f64,
    fluence: f64,
) -> Result<Vec<f64>, DamageError> {
    if !(0.0..=1.0).contains(&capture_fraction) {
        return Err(DamageError::InvalidCaptureFraction(capture_fraction));
    }
    let ions = vac_hist.normalization.max(1) as f64;
    let density = atomic_density(target);
    Ok(vac_hist
        .counts
        .iter()
        .zip(vac_hist.bin_edges.windows(2))
        .map(|(&count, w)| {
            let vacancies_per_cm2 = count / ions * fluence;
            let native_per_cm2 = density * native_n_ppb * 1e-9 * (w[1] - w[0]) * 1e-7;
            (capture_fraction * native_n_ppb * vacancies_per_cm2).min(native_per_cm2)
        })
        .collect())
}
