use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nvforge::stats::{
    ecdf_with_band, fraction_below, intervals_overlap, lognormal_mle, median_by_thickness,
    BandMethod, Ecdf, LinewidthSample, LognormalFit, ThicknessTable, MIN_FIT_SAMPLES,
};
use serde::Serialize;

use crate::output::{config_hash, read_to_string, write_json, ManifestBuilder, RunManifest, Sink};
use crate::CliError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Band {
    Dkw,
    Wilson,
}

impl From<Band> for BandMethod {
    fn from(b: Band) -> Self {
        match b {
            Band::Dkw => BandMethod::Dkw,
            Band::Wilson => BandMethod::Wilson,
        }
    }
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// CSV with header fwhm_mhz,thickness_um,sample,region.
    #[arg(long = "in")]
    input: PathBuf,
    /// Linewidth threshold for the reported fractions, MHz.
    #[arg(long, default_value_t = 150.0)]
    threshold: f64,
    /// Confidence band significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = Band::Dkw)]
    band: Band,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupStats {
    pub label: String,
    pub n: usize,
    /// Absent for groups too small to fit.
    pub fit: Option<LognormalFit>,
    pub fraction_below: f64,
    pub ecdf: Ecdf,
}

#[derive(Debug, Clone, Serialize)]
pub struct PopulationReport {
    pub threshold_mhz: f64,
    pub pooled: GroupStats,
    pub samples: Vec<GroupStats>,
    pub thickness_table: ThicknessTable,
    pub intervals_overlap: bool,
}

fn group_stats(
    label: &str,
    widths: &[f64],
    threshold: f64,
    alpha: f64,
    method: BandMethod,
) -> Result<GroupStats, CliError> {
    let fit = if widths.len() >= MIN_FIT_SAMPLES {
        Some(lognormal_mle(widths).map_err(CliError::failed)?)
    } else {
        None
    };
    Ok(GroupStats {
        label: label.to_string(),
        n: widths.len(),
        fit,
        fraction_below: fraction_below(widths, threshold).map_err(CliError::failed)?,
        ecdf: ecdf_with_band(widths, alpha, method).map_err(CliError::failed)?,
    })
}

pub fn population_report(
    samples: &[LinewidthSample],
    threshold: f64,
    alpha: f64,
    method: BandMethod,
) -> Result<PopulationReport, CliError> {
    let all: Vec<f64> = samples.iter().map(|s| s.fwhm_mhz).collect();
    let mut by_sample: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in samples {
        by_sample.entry(&s.sample).or_default().push(s.fwhm_mhz);
    }
    let per_sample = by_sample
        .iter()
        .map(|(name, w)| group_stats(name, w, threshold, alpha, method))
        .collect::<Result<Vec<_>, _>>()?;
    let thickness_table = median_by_thickness(samples).map_err(CliError::failed)?;
    Ok(PopulationReport {
        threshold_mhz: threshold,
        pooled: group_stats("all", &all, threshold, alpha, method)?,
        samples: per_sample,
        intervals_overlap: intervals_overlap(&thickness_table.rows),
        thickness_table,
    })
}

pub fn read_linewidths(path: &Path) -> Result<(String, Vec<LinewidthSample>), CliError> {
    let text = read_to_string(path)?;
    let samples = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<LinewidthSample>, _>>()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((text, samples))
}

pub fn linewidth_rows(samples: &[LinewidthSample]) -> Vec<Vec<String>> {
    samples
        .iter()
        .map(|s| {
            vec![
                s.fwhm_mhz.to_string(),
                s.thickness_um.to_string(),
                s.sample.clone(),
                s.region.clone(),
            ]
        })
        .collect()
}

pub const LINEWIDTH_HEADER: [&str; 4] = ["fwhm_mhz", "thickness_um", "sample", "region"];

#[derive(Debug, Serialize)]
struct StatsOutput {
    meta: RunManifest,
    #[serde(flatten)]
    report: PopulationReport,
}

pub fn stats(args: StatsArgs) -> Result<(), CliError> {
    let (text, samples) = read_linewidths(&args.input)?;
    let method = BandMethod::from(args.band);
    let manifest = ManifestBuilder::new(
        "stats",
        &(config_hash(&text), args.threshold, args.alpha, method),
        None,
    );
    let report = population_report(&samples, args.threshold, args.alpha, method)?;
    write_json(
        &Sink::parse(&args.out),
        &StatsOutput {
            meta: manifest.finish(),
            report,
        },
    )
}
