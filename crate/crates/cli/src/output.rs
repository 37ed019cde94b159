use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance block attached to every artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// SHA-256 of the canonical JSON form of the resolved inputs.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_time_s: f64,
}

/// Captures the resolved run inputs up front and stamps wall time when the
/// artifact is written.
pub struct ManifestBuilder {
    subcommand: String,
    config_hash: String,
    seed: Option<u64>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, config: &impl Serialize, seed: Option<u64>) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config_hash: config_hash(config),
            seed,
            started: Instant::now(),
        }
    }

    pub fn finish(&self) -> RunManifest {
        RunManifest {
            subcommand: self.subcommand.clone(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            version: VERSION.to_string(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        }
    }
}

pub fn config_hash(config: &impl Serialize) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Destination given by `--out`; `-` is standard output.
#[derive(Debug, Clone)]
pub enum Sink {
    Stdout,
    File(PathBuf),
}

impl Sink {
    pub fn parse(arg: &str) -> Self {
        if arg == "-" {
            Self::Stdout
        } else {
            Self::File(PathBuf::from(arg))
        }
    }

    fn open(&self) -> Result<Box<dyn Write>, CliError> {
        match self {
            Self::Stdout => Ok(Box::new(io::stdout().lock())),
            Self::File(p) => {
                let f = File::create(p)
                    .with_context(|| format!("cannot create {}", p.display()))
                    .map_err(CliError::Io)?;
                Ok(Box::new(BufWriter::new(f)))
            }
        }
    }
}

pub fn write_json(sink: &Sink, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = sink.open()?;
    serde_json::to_writer_pretty(&mut w, value)
        .context("serializing output")
        .map_err(CliError::Io)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .context("writing output")
        .map_err(CliError::Io)
}

/// Writes a CSV table. The manifest goes to `<path>.manifest.json` next to
/// a file, or to standard error when streaming.
pub fn write_csv(
    sink: &Sink,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
    manifest: &RunManifest,
) -> Result<(), CliError> {
    let io_err = |e: csv::Error| CliError::Io(e.into());
    {
        let mut w = csv::Writer::from_writer(sink.open()?);
        w.write_record(header).map_err(io_err)?;
        for row in rows {
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().context("writing csv").map_err(CliError::Io)?;
    }
    let manifest_json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    match sink {
        Sink::Stdout => eprintln!("{manifest_json}"),
        Sink::File(p) => {
            let side = sidecar_path(p);
            std::fs::write(&side, manifest_json + "\n")
                .with_context(|| format!("cannot write {}", side.display()))
                .map_err(CliError::Io)?;
        }
    }
    Ok(())
}

pub fn sidecar_path(p: &Path) -> PathBuf {
    let mut name = p.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

/// Reads a headed or headless numeric CSV into rows of `width` columns.
pub fn read_numeric_csv(path: &Path, width: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().take(width).map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.len() == width => rows.push(v),
            _ if i == 0 => continue,
            _ => {
                return Err(CliError::Input(format!(
                    "{}: row {} is not {width} numeric columns",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(rows)
}
