use std::path::PathBuf;

use clap::Args;
use nvforge::etalon::{fit_thickness, RefractiveIndex, Spectrum, ThicknessFit, DIAMOND_INDEX};
use nvforge::ple::{
    fit_line_gaussian, simulate_ple_scan, EmitterModel, GaussianFit, PleScan, PleScanConfig,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::output::{
    config_hash, read_numeric_csv, read_to_string, write_csv, write_json, ManifestBuilder,
    RunManifest, Sink,
};
use crate::CliError;

#[derive(Debug, Args)]
pub struct EtalonArgs {
    /// Two-column CSV: wavelength_nm, intensity.
    #[arg(long = "in")]
    input: PathBuf,
    /// Refractive index, or the constant term with --cauchy-b.
    #[arg(long, default_value_t = DIAMOND_INDEX)]
    n: f64,
    /// Cauchy dispersion coefficient in µm².
    #[arg(long)]
    cauchy_b: Option<f64>,
    /// Lower bound of the thickness search, µm.
    #[arg(long, default_value_t = 1.0)]
    dmin: f64,
    /// Upper bound of the thickness search, µm.
    #[arg(long, default_value_t = 10.0)]
    dmax: f64,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Serialize)]
pub struct EtalonOutput {
    pub meta: RunManifest,
    pub index: RefractiveIndex,
    pub search_range_um: (f64, f64),
    #[serde(flatten)]
    pub fit: ThicknessFit,
}

pub fn spectrum_from_rows(rows: Vec<Vec<f64>>) -> Result<Spectrum, CliError> {
    let (wl, intensity): (Vec<f64>, Vec<f64>) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
    Spectrum::new(wl, intensity).map_err(|e| CliError::Input(e.to_string()))
}

pub fn etalon(args: EtalonArgs) -> Result<(), CliError> {
    let text = read_to_string(&args.input)?;
    let index = match args.cauchy_b {
        Some(b_um2) => RefractiveIndex::Cauchy { a: args.n, b_um2 },
        None => RefractiveIndex::Constant(args.n),
    };
    let manifest = ManifestBuilder::new(
        "etalon",
        &(config_hash(&text), &index, args.dmin, args.dmax),
        None,
    );
    let spectrum = spectrum_from_rows(read_numeric_csv(&args.input, 2)?)?;
    let fit = fit_thickness(&spectrum, index, (args.dmin, args.dmax)).map_err(CliError::failed)?;
    write_json(
        &Sink::parse(&args.out),
        &EtalonOutput {
            meta: manifest.finish(),
            index,
            search_range_um: (args.dmin, args.dmax),
            fit,
        },
    )
}

#[derive(Debug, Args)]
pub struct PleArgs {
    /// TOML emitter description; omitted fields take defaults.
    #[arg(long)]
    emitter: Option<PathBuf>,
    /// TOML scan description; omitted fields take defaults.
    #[arg(long)]
    scan: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    homogeneous_fwhm_mhz: Option<f64>,
    #[arg(long)]
    jump_sigma_mhz: Option<f64>,
    #[arg(long)]
    saturation: Option<f64>,
    #[arg(long)]
    n_scans: Option<u32>,
    #[arg(long, default_value = "-")]
    out: String,
}

fn load_toml<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T, CliError> {
    match path {
        Some(p) => toml::from_str(&read_to_string(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
        None => Ok(T::default()),
    }
}

pub fn scan_rows(scan: &PleScan) -> Vec<Vec<String>> {
    scan.detuning_mhz
        .iter()
        .zip(&scan.counts)
        .map(|(d, c)| vec![d.to_string(), c.to_string()])
        .collect()
}

pub const SCAN_HEADER: [&str; 2] = ["detuning_MHz", "counts"];

pub fn ple(args: PleArgs) -> Result<(), CliError> {
    let mut emitter: EmitterModel = load_toml(args.emitter.as_ref())?;
    let mut cfg: PleScanConfig = load_toml(args.scan.as_ref())?;
    if let Some(v) = args.homogeneous_fwhm_mhz {
        emitter.homogeneous_fwhm_mhz = v;
    }
    if let Some(v) = args.jump_sigma_mhz {
        emitter.jump_sigma_mhz = v;
    }
    if let Some(v) = args.saturation {
        emitter.saturation = v;
    }
    if let Some(v) = args.n_scans {
        cfg.n_scans = v;
    }
    let manifest = ManifestBuilder::new("ple", &(&emitter, &cfg), Some(args.seed));
    let scan = simulate_ple_scan(&emitter, &cfg, args.seed).map_err(CliError::failed)?;
    write_csv(
        &Sink::parse(&args.out),
        &SCAN_HEADER,
        scan_rows(&scan),
        &manifest.finish(),
    )
}

#[derive(Debug, Args)]
pub struct PleFitArgs {
    /// CSV with columns detuning_MHz, counts.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Serialize)]
pub struct PleFitOutput {
    pub meta: RunManifest,
    #[serde(flatten)]
    pub fit: GaussianFit,
}

pub fn ple_fit(args: PleFitArgs) -> Result<(), CliError> {
    let text = read_to_string(&args.input)?;
    let manifest = ManifestBuilder::new("ple-fit", &config_hash(&text), None);
    let (detuning_mhz, counts) = read_numeric_csv(&args.input, 2)?
        .into_iter()
        .map(|r| (r[0], r[1]))
        .unzip();
    let scan = PleScan {
        detuning_mhz,
        counts,
        traces: None,
    };
    let fit = fit_line_gaussian(&scan).map_err(CliError::failed)?;
    write_json(
        &Sink::parse(&args.out),
        &PleFitOutput {
            meta: manifest.finish(),
            fit,
        },
    )
}
