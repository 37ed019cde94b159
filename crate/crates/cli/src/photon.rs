use clap::Args;
use nvforge::photon::{
    barrett_kok_gain, hom_visibility, hom_visibility_monte_carlo, max_linewidth_for_visibility,
    FilterWindow, PhotonSource, NV_LIFETIME_NS, SPAD_WINDOW_PS,
};
use serde::Serialize;

use crate::output::{write_json, ManifestBuilder, RunManifest, Sink};
use crate::CliError;

#[derive(Debug, Args)]
pub struct HomArgs {
    /// Measured optical linewidth, MHz.
    #[arg(long, required_unless_present = "invert")]
    fwhm_mhz: Option<f64>,
    /// Excited-state lifetime, ns.
    #[arg(long, default_value_t = NV_LIFETIME_NS)]
    t1_ns: f64,
    /// Coincidence window, ps.
    #[arg(long, default_value_t = SPAD_WINDOW_PS)]
    window_ps: f64,
    /// Report the largest linewidth that reaches --target-v instead.
    #[arg(long, requires = "target_v")]
    invert: bool,
    #[arg(long)]
    target_v: Option<f64>,
    /// Also estimate the visibility from this many simulated photon pairs.
    #[arg(long)]
    mc_pairs: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum HomResult {
    Visibility {
        visibility: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        visibility_monte_carlo: Option<f64>,
    },
    Bound {
        max_fwhm_mhz: f64,
    },
}

#[derive(Debug, Serialize)]
struct HomOutput {
    meta: RunManifest,
    #[serde(flatten)]
    result: HomResult,
}

#[derive(Debug, Serialize)]
struct HomInputs {
    fwhm_mhz: Option<f64>,
    t1_ns: f64,
    window_ps: f64,
    target_v: Option<f64>,
    mc_pairs: Option<u64>,
}

pub fn hom(args: HomArgs) -> Result<(), CliError> {
    let inputs = HomInputs {
        fwhm_mhz: args.fwhm_mhz,
        t1_ns: args.t1_ns,
        window_ps: args.window_ps,
        target_v: args.target_v.filter(|_| args.invert),
        mc_pairs: args.mc_pairs,
    };
    let seed = args.mc_pairs.map(|_| args.seed);
    let manifest = ManifestBuilder::new("hom", &inputs, seed);
    let window = FilterWindow::new(args.window_ps).map_err(CliError::failed)?;
    let result = match (args.invert, args.target_v, args.fwhm_mhz) {
        (true, Some(v), _) => HomResult::Bound {
            max_fwhm_mhz: max_linewidth_for_visibility(args.t1_ns, &window, v)
                .map_err(CliError::failed)?,
        },
        (false, _, Some(fwhm)) => {
            let source = PhotonSource::new(args.t1_ns, fwhm).map_err(CliError::failed)?;
            HomResult::Visibility {
                visibility: hom_visibility(&source, &window),
                visibility_monte_carlo: args
                    .mc_pairs
                    .map(|n| hom_visibility_monte_carlo(&source, &window, n, args.seed)),
            }
        }
        _ => {
            return Err(CliError::Usage(
                "give --fwhm-mhz, or --invert with --target-v".into(),
            ))
        }
    };
    write_json(
        &Sink::parse(&args.out),
        &HomOutput {
            meta: manifest.finish(),
            result,
        },
    )
}

#[derive(Debug, Args)]
pub struct BkGainArgs {
    /// ZPL photon fraction without enhancement.
    #[arg(long)]
    bare: f64,
    /// ZPL photon fraction with enhancement.
    #[arg(long)]
    enhanced: f64,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Serialize)]
struct BkGainOutput {
    meta: RunManifest,
    gain: f64,
}

pub fn bk_gain(args: BkGainArgs) -> Result<(), CliError> {
    let manifest = ManifestBuilder::new("bk-gain", &(args.bare, args.enhanced), None);
    let gain = barrett_kok_gain(args.bare, args.enhanced).map_err(CliError::failed)?;
    write_json(
        &Sink::parse(&args.out),
        &BkGainOutput {
            meta: manifest.finish(),
            gain,
        },
    )
}
