use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use nvforge::etalon::{fit_thickness, synthesize_psb_spectrum, RefractiveIndex};
use nvforge::photon::{
    barrett_kok_gain, hom_visibility, hom_visibility_monte_carlo, max_linewidth_for_visibility,
    FilterWindow, PhotonSource, NV_LIFETIME_NS, SPAD_WINDOW_PS,
};
use nvforge::ple::{
    fit_line_gaussian, jump_fwhm, simulate_ple_scan, voigt_fwhm_oracle, DetuningGrid, EmitterModel,
    PleScanConfig,
};
use nvforge::stats::{
    reference_fixture, synthetic_reference_pool, BandMethod, LinewidthSample, ReferenceFixture,
};
use serde::Serialize;

use crate::implant::{compare, run_plan, summarize, ImplantPlan};
use crate::optics::{scan_rows, SCAN_HEADER};
use crate::output::{write_csv, write_json, ManifestBuilder, RunManifest, Sink};
use crate::population::{linewidth_rows, population_report, LINEWIDTH_HEADER};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    Fig1b,
    Fig3a,
    Fig3b,
    Fig4,
    Fig5,
    Threshold,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    figure: Figure,
    /// Directory for the data files and report.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Ions per implantation run (fig1b).
    #[arg(long, default_value_t = 10_000)]
    ions: u64,
}

/// Tolerance of one reported quantity against its reference value.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Tolerance {
    Relative(f64),
    Absolute(f64),
    Below(f64),
    Within([f64; 2]),
    /// Reported for context only.
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub quantity: String,
    pub value: f64,
    pub target: Option<f64>,
    pub tolerance: Tolerance,
    pub pass: Option<bool>,
}

impl Check {
    fn new(
        quantity: impl Into<String>,
        value: f64,
        target: Option<f64>,
        tolerance: Tolerance,
    ) -> Self {
        let pass = match (tolerance, target) {
            (Tolerance::Relative(r), Some(t)) => Some(((value - t) / t).abs() <= r),
            (Tolerance::Absolute(a), Some(t)) => Some((value - t).abs() <= a),
            (Tolerance::Below(b), _) => Some(value < b),
            (Tolerance::Within([lo, hi]), _) => Some((lo..=hi).contains(&value)),
            _ => None,
        };
        Self {
            quantity: quantity.into(),
            value,
            target,
            tolerance,
            pass,
        }
    }

    fn info(quantity: impl Into<String>, value: f64, target: Option<f64>) -> Self {
        Self::new(quantity, value, target, Tolerance::None)
    }
}

#[derive(Debug, Serialize)]
struct Report {
    meta: RunManifest,
    figure: Figure,
    checks: Vec<Check>,
    artifacts: Vec<String>,
}

struct Recipe<'a> {
    dir: &'a Path,
    seed: u64,
    checks: Vec<Check>,
    artifacts: Vec<String>,
}

impl Recipe<'_> {
    fn sink(&mut self, name: &str) -> Sink {
        self.artifacts.push(name.to_string());
        Sink::File(self.dir.join(name))
    }

    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }
}

#[derive(Debug, Serialize)]
struct RecipeInputs {
    figure: Figure,
    seed: u64,
    ions: Option<u64>,
}

pub fn reproduce(args: ReproduceArgs, threads: usize) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))
        .map_err(CliError::Io)?;
    let inputs = RecipeInputs {
        figure: args.figure,
        seed: args.seed,
        ions: (args.figure == Figure::Fig1b).then_some(args.ions),
    };
    let manifest = ManifestBuilder::new("reproduce", &inputs, Some(args.seed));
    let mut recipe = Recipe {
        dir: &args.out_dir,
        seed: args.seed,
        checks: vec![],
        artifacts: vec![],
    };
    match args.figure {
        Figure::Fig1b => fig1b(&mut recipe, args.ions, threads)?,
        Figure::Fig3a => fig3a(&mut recipe)?,
        Figure::Fig3b => fig3b(&mut recipe)?,
        Figure::Fig4 => fig4(&mut recipe)?,
        Figure::Fig5 => fig5(&mut recipe)?,
        Figure::Threshold => threshold(&mut recipe)?,
    }
    let Recipe {
        checks,
        mut artifacts,
        ..
    } = recipe;
    artifacts.push("report.json".into());
    let report = Report {
        meta: manifest.finish(),
        figure: args.figure,
        checks,
        artifacts,
    };
    for c in &report.checks {
        let status = match c.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "info",
        };
        eprintln!("[{status}] {} = {:.4}", c.quantity, c.value);
    }
    write_json(&Sink::File(args.out_dir.join("report.json")), &report)
}

struct DepthAnchor {
    energy: f64,
    /// Carbon vacancy and ion peak depths, nm.
    peaks: (f64, f64),
    /// Carbon and nitrogen vacancies per ion.
    yields: (f64, f64),
}

const DEPTH_ANCHORS: [DepthAnchor; 2] = [
    DepthAnchor {
        energy: 12.0,
        peaks: (15.3, 20.4),
        yields: (68.0, 74.0),
    },
    DepthAnchor {
        energy: 50.0,
        peaks: (64.6, 79.9),
        yields: (151.0, 175.0),
    },
];

fn fig1b(r: &mut Recipe, ions: u64, threads: usize) -> Result<(), CliError> {
    for DepthAnchor {
        energy,
        peaks: (vac_peak, ion_peak),
        yields: (yield_c, yield_n),
    } in DEPTH_ANCHORS
    {
        let mut analyzed = Vec::new();
        for ion in ["12C", "15N"] {
            let plan = ImplantPlan::preset(ion, energy, ions, r.seed);
            let out = run_plan(&plan, threads, "reproduce")?;
            write_json(&r.sink(&format!("implant_{ion}_{energy}keV.json")), &out)?;
            analyzed.push(summarize(&out, ion)?);
        }
        let (c, n) = (&analyzed[0].summary, &analyzed[1].summary);
        let tag = |q: &str| format!("{q} at {energy} keV");
        r.check(Check::new(
            tag("12C vacancy peak nm"),
            c.vacancy_peak_nm,
            Some(vac_peak),
            Tolerance::Relative(0.3),
        ));
        r.check(Check::new(
            tag("12C ion peak nm"),
            c.ion_peak_nm,
            Some(ion_peak),
            Tolerance::Relative(0.3),
        ));
        r.check(Check::info(
            tag("15N vacancy peak nm"),
            n.vacancy_peak_nm,
            None,
        ));
        r.check(Check::info(tag("15N ion peak nm"), n.ion_peak_nm, None));
        r.check(Check::new(
            tag("12C vacancies per ion"),
            c.vacancies_per_ion,
            Some(yield_c),
            Tolerance::Relative(0.3),
        ));
        r.check(Check::new(
            tag("15N vacancies per ion"),
            n.vacancies_per_ion,
            Some(yield_n),
            Tolerance::Relative(0.3),
        ));
        let cmp = compare(&analyzed[0], &analyzed[1])?;
        r.check(Check::new(
            tag("C:N yield ratio"),
            cmp.yield_ratio,
            Some(yield_c / yield_n),
            Tolerance::Relative(0.1),
        ));
        r.check(Check::new(
            tag("relative ion depth difference"),
            cmp.ion_relative,
            None,
            Tolerance::Below(0.20),
        ));
        r.check(Check::new(
            tag("relative vacancy depth difference"),
            cmp.vacancy_relative,
            None,
            Tolerance::Below(0.15),
        ));
        write_json(
            &r.sink(&format!("species_difference_{energy}keV.json")),
            &cmp,
        )?;
    }
    Ok(())
}

const SHOWCASE_THICKNESS_UM: f64 = 5.4;
const SHOWCASE_NOISE: f64 = 0.05;

fn fig3a(r: &mut Recipe) -> Result<(), CliError> {
    let index = RefractiveIndex::default();
    let spectrum = synthesize_psb_spectrum(SHOWCASE_THICKNESS_UM, index, SHOWCASE_NOISE, r.seed)
        .map_err(CliError::failed)?;
    let rows = spectrum
        .wavelength_nm()
        .iter()
        .zip(spectrum.intensity())
        .map(|(l, i)| vec![l.to_string(), i.to_string()]);
    let meta = ManifestBuilder::new("reproduce", &("fig3a", r.seed), Some(r.seed)).finish();
    write_csv(
        &r.sink("spectrum.csv"),
        &["wavelength_nm", "intensity"],
        rows,
        &meta,
    )?;
    r.artifacts.push("spectrum.csv.manifest.json".into());
    let fit = fit_thickness(&spectrum, index, (1.0, 10.0)).map_err(CliError::failed)?;
    write_json(&r.sink("fit.json"), &fit)?;
    r.check(Check::new(
        "fitted thickness um",
        fit.thickness_um,
        Some(SHOWCASE_THICKNESS_UM),
        Tolerance::Relative(0.02),
    ));
    r.check(Check::info(
        "thickness uncertainty um",
        fit.uncertainty_um,
        None,
    ));
    Ok(())
}

/// Homogeneous width, jump spread and saturation of a sample-A-class emitter.
const FIG3B_EMITTER: (f64, f64, f64) = (13.0, 55.0, 1.0);

fn fig3b(r: &mut Recipe) -> Result<(), CliError> {
    let (gh, sigma, s) = FIG3B_EMITTER;
    let emitter = EmitterModel::new(gh, sigma, s);
    let oracle = voigt_fwhm_oracle(emitter.dephasing_linewidth(), jump_fwhm(sigma));
    let cfg = PleScanConfig {
        detuning: DetuningGrid::centered(2.0 * oracle, 61),
        ..PleScanConfig::default()
    };
    let scan = simulate_ple_scan(&emitter, &cfg, r.seed).map_err(CliError::failed)?;
    let meta = ManifestBuilder::new("reproduce", &(&emitter, &cfg, r.seed), Some(r.seed)).finish();
    write_csv(&r.sink("scan.csv"), &SCAN_HEADER, scan_rows(&scan), &meta)?;
    r.artifacts.push("scan.csv.manifest.json".into());
    let fit = fit_line_gaussian(&scan).map_err(CliError::failed)?;
    write_json(&r.sink("fit.json"), &fit)?;
    r.check(Check::new(
        "extrinsic FWHM MHz",
        fit.fwhm_mhz,
        Some(oracle),
        Tolerance::Relative(0.05),
    ));
    r.check(Check::info(
        "dephasing FWHM MHz",
        emitter.dephasing_linewidth(),
        None,
    ));
    let fixture = reference_fixture().map_err(CliError::failed)?;
    if let Some(a) = fixture.population("A") {
        r.check(Check::info(
            "sample A median FWHM MHz",
            fit.fwhm_mhz,
            Some(a.median_mhz),
        ));
    }
    Ok(())
}

const FIG4_PER_SAMPLE: usize = 500;

fn fixture_samples(
    fixture: &ReferenceFixture,
    seed: u64,
) -> Result<Vec<LinewidthSample>, CliError> {
    let mut out = Vec::new();
    for (k, p) in fixture.population.iter().enumerate() {
        let fit = p.lognormal().map_err(CliError::failed)?;
        let thickness = 0.5 * (p.thickness_um[0] + p.thickness_um[1]);
        out.extend(
            fit.sample(FIG4_PER_SAMPLE, seed.wrapping_add(k as u64))
                .into_iter()
                .map(|w| LinewidthSample {
                    fwhm_mhz: w,
                    thickness_um: thickness,
                    sample: p.sample.clone(),
                    region: p.sample.clone(),
                }),
        );
    }
    Ok(out)
}

fn write_linewidths(
    r: &mut Recipe,
    samples: &[LinewidthSample],
    meta: &RunManifest,
) -> Result<(), CliError> {
    write_csv(
        &r.sink("linewidths.csv"),
        &LINEWIDTH_HEADER,
        linewidth_rows(samples),
        meta,
    )?;
    r.artifacts.push("linewidths.csv.manifest.json".into());
    Ok(())
}

fn fig4(r: &mut Recipe) -> Result<(), CliError> {
    let fixture = reference_fixture().map_err(CliError::failed)?;
    let samples = fixture_samples(&fixture, r.seed)?;
    let meta =
        ManifestBuilder::new("reproduce", &("fig4", &fixture, r.seed), Some(r.seed)).finish();
    write_linewidths(r, &samples, &meta)?;
    let report = population_report(&samples, 150.0, 0.05, BandMethod::Dkw)?;
    for g in &report.samples {
        if let (Some(fit), Some(p)) = (g.fit, fixture.population(&g.label)) {
            r.check(Check::new(
                format!("sample {} median MHz", g.label),
                fit.median,
                Some(p.median_mhz),
                Tolerance::Relative(0.15),
            ));
        }
        if let Some(&f) = fixture.fractions_below_150_mhz.get(&g.label) {
            r.check(Check::new(
                format!("sample {} fraction below 150 MHz", g.label),
                g.fraction_below,
                Some(f),
                Tolerance::Absolute(0.05),
            ));
        }
    }
    let ab: Vec<f64> = samples
        .iter()
        .filter(|s| s.sample == "A" || s.sample == "B")
        .map(|s| s.fwhm_mhz)
        .collect();
    let ab_fraction = ab.iter().filter(|&&w| w <= 150.0).count() as f64 / ab.len() as f64;
    let target = |k: &str| fixture.fractions_below_150_mhz.get(k).copied();
    r.check(Check::new(
        "A+B fraction below 150 MHz",
        ab_fraction,
        target("A_and_B"),
        Tolerance::Absolute(0.05),
    ));
    r.check(Check::info(
        "all samples fraction below 150 MHz",
        report.pooled.fraction_below,
        target("all"),
    ));
    write_json(&r.sink("stats.json"), &report)
}

const FIG5_REGIONS: usize = 7;
const FIG5_PER_REGION: usize = 20;

fn fig5(r: &mut Recipe) -> Result<(), CliError> {
    let fixture = reference_fixture().map_err(CliError::failed)?;
    let (lo, hi) = (1.9, 4.9);
    let mut samples = Vec::new();
    for k in 0..FIG5_REGIONS {
        let thickness = lo + (hi - lo) * k as f64 / (FIG5_REGIONS - 1) as f64;
        let pool = synthetic_reference_pool(
            &fixture,
            &["A", "B"],
            FIG5_PER_REGION,
            r.seed.wrapping_add(k as u64),
        )
        .map_err(CliError::failed)?;
        samples.extend(pool.into_iter().enumerate().map(|(i, w)| LinewidthSample {
            fwhm_mhz: w,
            thickness_um: thickness,
            sample: if i < FIG5_PER_REGION { "A" } else { "B" }.to_string(),
            region: format!("R{k}"),
        }));
    }
    let meta =
        ManifestBuilder::new("reproduce", &("fig5", &fixture, r.seed), Some(r.seed)).finish();
    write_linewidths(r, &samples, &meta)?;
    let report = population_report(&samples, 150.0, 0.05, BandMethod::Dkw)?;
    r.check(Check::new(
        "geometric-std intervals overlap",
        f64::from(u8::from(report.intervals_overlap)),
        None,
        Tolerance::Within([1.0, 1.0]),
    ));
    r.check(Check::new(
        "microstructure fraction below 150 MHz",
        report.pooled.fraction_below,
        fixture
            .fractions_below_150_mhz
            .get("microstructures")
            .copied(),
        Tolerance::Absolute(0.05),
    ));
    write_json(&r.sink("thickness_table.json"), &report.thickness_table)
}

const THRESHOLD_VISIBILITY: f64 = 0.9;
const CANDIDATE_FWHM_MHZ: f64 = 150.0;
const MC_PAIRS: u64 = 1_000_000;

#[derive(Debug, Serialize)]
struct ThresholdData {
    lifetime_ns: f64,
    window_ps: f64,
    target_visibility: f64,
    max_fwhm_mhz: f64,
    visibility_at_150_mhz: f64,
    visibility_at_150_mhz_monte_carlo: f64,
    bk_gain_tenfold: f64,
}

fn threshold(r: &mut Recipe) -> Result<(), CliError> {
    let window = FilterWindow::new(SPAD_WINDOW_PS).map_err(CliError::failed)?;
    let bound = max_linewidth_for_visibility(NV_LIFETIME_NS, &window, THRESHOLD_VISIBILITY)
        .map_err(CliError::failed)?;
    let source = PhotonSource::new(NV_LIFETIME_NS, CANDIDATE_FWHM_MHZ).map_err(CliError::failed)?;
    let closed = hom_visibility(&source, &window);
    let mc = hom_visibility_monte_carlo(&source, &window, MC_PAIRS, r.seed);
    let gain = barrett_kok_gain(0.03, 0.3).map_err(CliError::failed)?;
    r.check(Check::new(
        "max FWHM for V = 0.9, MHz",
        bound,
        None,
        Tolerance::Within([120.0, 180.0]),
    ));
    r.check(Check::new(
        "Monte Carlo visibility at 150 MHz",
        mc,
        Some(closed),
        Tolerance::Absolute(0.02),
    ));
    r.check(Check::new(
        "tenfold ZPL gain",
        gain,
        Some(100.0),
        Tolerance::Relative(1e-9),
    ));
    write_json(
        &r.sink("threshold.json"),
        &ThresholdData {
            lifetime_ns: NV_LIFETIME_NS,
            window_ps: SPAD_WINDOW_PS,
            target_visibility: THRESHOLD_VISIBILITY,
            max_fwhm_mhz: bound,
            visibility_at_150_mhz: closed,
            visibility_at_150_mhz_monte_carlo: mc,
            bk_gain_tenfold: gain,
        },
    )
}
