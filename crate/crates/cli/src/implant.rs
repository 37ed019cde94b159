use std::path::{Path, PathBuf};

use clap::Args;
use nvforge::bca::{run_implantation, DamageMode, FinalPosition, TransportOptions};
use nvforge::damage::{
    build_depth_histograms, depth_delta, nv_density_profile, vacancy_yield, DepthHistogram,
    DepthSummary, HistogramKind,
};
use nvforge::target::{BeamSection, Element, TargetSection};
use serde::{Deserialize, Serialize};

use crate::output::{config_hash, read_to_string, write_json, ManifestBuilder, RunManifest, Sink};
use crate::CliError;

const DEFAULT_SLAB_NM: f64 = 1000.0;
const DEFAULT_IONS: u64 = 10_000;

#[derive(Debug, Args)]
pub struct ImplantArgs {
    /// TOML file with [beam], [target] and optional [run] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ion species label, e.g. 12C or 15N.
    #[arg(long)]
    ion: Option<String>,
    #[arg(long)]
    energy_kev: Option<f64>,
    #[arg(long)]
    ions: Option<u64>,
    /// cascade or kp
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Histogram bin width in nm (default 0.5 below 30 keV, else 2).
    #[arg(long)]
    bin_width: Option<f64>,
    /// Slab thickness in nm.
    #[arg(long)]
    slab: Option<f64>,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImplantFile {
    beam: Option<BeamSection>,
    #[serde(default)]
    target: TargetSection,
    #[serde(default)]
    run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    ions: Option<u64>,
    mode: Option<String>,
    seed: Option<u64>,
    bin_width_nm: Option<f64>,
    slab_nm: Option<f64>,
}

/// Fully resolved implantation run; its hash identifies the artifact.
#[derive(Debug, Clone, Serialize)]
pub struct ImplantPlan {
    pub beam: BeamSection,
    pub target: TargetSection,
    pub ions: u64,
    pub mode: DamageMode,
    pub seed: u64,
    pub bin_width_nm: f64,
    pub slab_nm: f64,
}

pub fn default_bin_width(energy_kev: f64) -> f64 {
    if energy_kev < 30.0 {
        0.5
    } else {
        2.0
    }
}

impl ImplantPlan {
    pub fn preset(ion: &str, energy_kev: f64, ions: u64, seed: u64) -> Self {
        Self {
            beam: BeamSection {
                ion: ion.to_string(),
                energy_kev,
                fluence_per_cm2: None,
                tilt_deg: None,
            },
            target: TargetSection::default(),
            ions,
            mode: DamageMode::FullCascade,
            seed,
            bin_width_nm: default_bin_width(energy_kev),
            slab_nm: DEFAULT_SLAB_NM,
        }
    }

    fn resolve(args: &ImplantArgs) -> Result<Self, CliError> {
        let file: ImplantFile = match &args.config {
            Some(p) => toml::from_str(&read_to_string(p)?)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
            None => ImplantFile::default(),
        };
        let mut beam = match (file.beam, &args.ion, args.energy_kev) {
            (Some(b), _, _) => b,
            (None, Some(ion), Some(e)) => BeamSection {
                ion: ion.clone(),
                energy_kev: e,
                fluence_per_cm2: None,
                tilt_deg: None,
            },
            (None, _, _) => {
                return Err(CliError::Usage(
                    "missing config: give --config with a [beam] section or both --ion and --energy-kev"
                        .into(),
                ))
            }
        };
        if let Some(ion) = &args.ion {
            beam.ion = ion.clone();
        }
        if let Some(e) = args.energy_kev {
            beam.energy_kev = e;
        }
        let mode_label = args
            .mode
            .clone()
            .or(file.run.mode)
            .unwrap_or_else(|| "cascade".into());
        let mode = mode_label
            .parse::<DamageMode>()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Self {
            bin_width_nm: args
                .bin_width
                .or(file.run.bin_width_nm)
                .unwrap_or_else(|| default_bin_width(beam.energy_kev)),
            beam,
            target: file.target,
            ions: args.ions.or(file.run.ions).unwrap_or(DEFAULT_IONS),
            mode,
            seed: args.seed.or(file.run.seed).unwrap_or(0),
            slab_nm: args.slab.or(file.run.slab_nm).unwrap_or(DEFAULT_SLAB_NM),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges_nm: Vec<f64>,
    pub counts: Vec<f64>,
}

impl Histogram {
    fn to_depth(
        &self,
        normalization: u64,
        kind: HistogramKind,
    ) -> Result<DepthHistogram, CliError> {
        if self.bin_edges_nm.len() != self.counts.len() + 1 || self.counts.is_empty() {
            return Err(CliError::Input(
                "histogram edges and counts do not match".into(),
            ));
        }
        Ok(DepthHistogram {
            bin_edges: self.bin_edges_nm.clone(),
            counts: self.counts.clone(),
            normalization,
            kind,
            empty_warning: self.counts.iter().all(|&c| c == 0.0),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImplantMeta {
    #[serde(flatten)]
    pub manifest: RunManifest,
    pub ion: String,
    pub energy_kev: f64,
    pub n_ions: u64,
    pub mode: DamageMode,
    pub fluence_per_cm2: f64,
    pub slab_nm: f64,
    pub target: TargetSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImplantOutput {
    pub meta: ImplantMeta,
    pub ions: Histogram,
    pub vacancies: Histogram,
    pub backscattered: u64,
    pub transmitted: u64,
    pub vacancies_per_ion: f64,
}

impl ImplantOutput {
    fn histograms(&self) -> Result<(DepthHistogram, DepthHistogram), CliError> {
        Ok((
            self.ions
                .to_depth(self.meta.n_ions, HistogramKind::ImplantedIon)?,
            self.vacancies
                .to_depth(self.meta.n_ions, HistogramKind::Vacancy)?,
        ))
    }

    fn species(&self) -> Result<Element, CliError> {
        Element::from_label(&self.meta.ion).map_err(|e| CliError::Input(e.to_string()))
    }
}

pub fn run_plan(
    plan: &ImplantPlan,
    threads: usize,
    subcommand: &str,
) -> Result<ImplantOutput, CliError> {
    let manifest = ManifestBuilder::new(subcommand, plan, Some(plan.seed));
    let beam = plan.beam.to_beam().map_err(CliError::failed)?;
    let target = plan.target.to_material().map_err(CliError::failed)?;
    let records = run_implantation(
        &beam,
        &target,
        plan.slab_nm,
        plan.ions,
        TransportOptions::new(plan.mode),
        plan.seed,
        threads,
    )
    .map_err(CliError::failed)?;
    let (ions, vacancies) =
        build_depth_histograms(&records, plan.bin_width_nm).map_err(CliError::failed)?;
    let count = |pred: fn(&FinalPosition) -> bool| {
        records.iter().filter(|r| pred(&r.final_position)).count() as u64
    };
    Ok(ImplantOutput {
        meta: ImplantMeta {
            manifest: manifest.finish(),
            ion: beam.ion.label(),
            energy_kev: beam.energy,
            n_ions: plan.ions,
            mode: plan.mode,
            fluence_per_cm2: beam.fluence,
            slab_nm: plan.slab_nm,
            target: plan.target.clone(),
        },
        ions: Histogram {
            bin_edges_nm: ions.bin_edges,
            counts: ions.counts,
        },
        vacancies: Histogram {
            bin_edges_nm: vacancies.bin_edges,
            counts: vacancies.counts,
        },
        backscattered: count(|p| matches!(p, FinalPosition::Backscattered)),
        transmitted: count(|p| matches!(p, FinalPosition::Transmitted)),
        vacancies_per_ion: vacancy_yield(&records),
    })
}

pub fn implant(args: ImplantArgs, threads: usize) -> Result<(), CliError> {
    let plan = ImplantPlan::resolve(&args)?;
    let out = run_plan(&plan, threads, "implant")?;
    write_json(&Sink::parse(&args.out), &out)
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Implant results (the reference run, usually carbon).
    #[arg(long = "in")]
    input: PathBuf,
    /// Second run at the same energy, taken as the nitrogen run.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Native nitrogen in ppb; with --capture-fraction adds an NV profile.
    #[arg(long, requires = "capture_fraction")]
    native_n_ppb: Option<f64>,
    #[arg(long, requires = "native_n_ppb")]
    capture_fraction: Option<f64>,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub source: String,
    pub ion: String,
    pub energy_kev: f64,
    pub ion_peak_nm: f64,
    pub vacancy_peak_nm: f64,
    pub vacancies_per_ion: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeciesComparison {
    pub ion_delta_nm: f64,
    pub ion_relative: f64,
    pub vacancy_delta_nm: f64,
    pub vacancy_relative: f64,
    /// Reference-run yield over compared-run yield.
    pub yield_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NvProfile {
    pub bin_edges_nm: Vec<f64>,
    pub nv_per_cm2: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct AnalyzeOutput {
    meta: RunManifest,
    runs: Vec<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<SpeciesComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nv_profile: Option<NvProfile>,
}

pub struct Analyzed {
    pub summary: RunSummary,
    ion: DepthSummary,
    vacancy: DepthSummary,
}

pub fn summarize(run: &ImplantOutput, source: &str) -> Result<Analyzed, CliError> {
    let species = run.species()?;
    let (ions, vacancies) = run.histograms()?;
    let vpi = run.vacancies_per_ion;
    let e = run.meta.energy_kev;
    let ion = DepthSummary::from_histogram(&ions, vpi, species, e).map_err(CliError::failed)?;
    let vacancy =
        DepthSummary::from_histogram(&vacancies, vpi, species, e).map_err(CliError::failed)?;
    Ok(Analyzed {
        summary: RunSummary {
            source: source.to_string(),
            ion: run.meta.ion.clone(),
            energy_kev: e,
            ion_peak_nm: ion.peak_depth,
            vacancy_peak_nm: vacancy.peak_depth,
            vacancies_per_ion: vpi,
        },
        ion,
        vacancy,
    })
}

pub fn compare(reference: &Analyzed, nitrogen: &Analyzed) -> Result<SpeciesComparison, CliError> {
    let (ion_delta_nm, ion_relative) =
        depth_delta(&nitrogen.ion, &reference.ion).map_err(CliError::failed)?;
    let (vacancy_delta_nm, vacancy_relative) =
        depth_delta(&nitrogen.vacancy, &reference.vacancy).map_err(CliError::failed)?;
    Ok(SpeciesComparison {
        ion_delta_nm,
        ion_relative,
        vacancy_delta_nm,
        vacancy_relative,
        yield_ratio: reference.summary.vacancies_per_ion / nitrogen.summary.vacancies_per_ion,
    })
}

fn load(path: &Path) -> Result<(String, ImplantOutput), CliError> {
    let text = read_to_string(path)?;
    let run = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((text, run))
}

pub fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let (text, run) = load(&args.input)?;
    let other = args.compare.as_deref().map(load).transpose()?;
    let hash_input = (
        config_hash(&text),
        other.as_ref().map(|(t, _)| config_hash(t)),
        args.native_n_ppb,
        args.capture_fraction,
    );
    let manifest = ManifestBuilder::new("analyze", &hash_input, None);

    let reference = summarize(&run, &args.input.display().to_string())?;
    let mut runs = vec![reference.summary.clone()];
    let comparison = match (&other, &args.compare) {
        (Some((_, n_run)), Some(path)) => {
            let nitrogen = summarize(n_run, &path.display().to_string())?;
            runs.push(nitrogen.summary.clone());
            Some(compare(&reference, &nitrogen)?)
        }
        _ => None,
    };
    let nv_profile = match (args.native_n_ppb, args.capture_fraction) {
        (Some(ppb), Some(frac)) => {
            let (_, vac) = run.histograms()?;
            let target = run.meta.target.to_material().map_err(CliError::failed)?;
            let nv = nv_density_profile(&vac, &target, ppb, frac, run.meta.fluence_per_cm2)
                .map_err(CliError::failed)?;
            Some(NvProfile {
                bin_edges_nm: vac.bin_edges,
                nv_per_cm2: nv,
            })
        }
        _ => None,
    };
    write_json(
        &Sink::parse(&args.out),
        &AnalyzeOutput {
            meta: manifest.finish(),
            runs,
            comparison,
            nv_profile,
        },
    )
}
