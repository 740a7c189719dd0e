//! The optional TOML configuration file.

use std::path::{Path, PathBuf};

use plgen_core::evolve::EvolutionConfig;
use plgen_core::{GrammarConfig, SimulationConfig};
use plgen_stream::{EmissionFormat, StreamConfig};
use serde::Deserialize;

use crate::error::{usage, CliResult};

pub const SEED_VAR: &str = "PLGEN_SEED";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub grammar: GrammarConfig,
    pub simulation: SimulationConfig,
    pub evolution: EvolutionConfig,
    pub generate: GenerateSection,
    pub stream: StreamSection,
    pub pipeline: PipelineSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub count: usize,
    pub out: PathBuf,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection {
            count: 1,
            out: PathBuf::from("."),
        }
    }
}

/// Stream settings; the simulation settings come from `[simulation]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSection {
    pub host: String,
    pub port: u16,
    pub control_port: u16,
    pub parallel_instances: usize,
    pub time_multiplier: f64,
    pub emission_format: EmissionFormat,
    pub trace_gap_seconds: f64,
    pub max_rate: bool,
    pub client_queue: usize,
    pub status_every: u64,
}

impl Default for StreamSection {
    fn default() -> Self {
        let d = StreamConfig::default();
        StreamSection {
            host: "127.0.0.1".into(),
            port: 9000,
            control_port: 9001,
            parallel_instances: d.parallel_instances,
            time_multiplier: d.time_multiplier,
            emission_format: d.emission_format,
            trace_gap_seconds: d.trace_gap_seconds,
            max_rate: d.max_rate,
            client_queue: d.client_queue,
            status_every: 1_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Artifact {
    Pnml,
    Dot,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    /// Models to generate.
    pub count: usize,
    /// Evolutions applied to each model before simulation.
    pub evolutions: u32,
    pub out: PathBuf,
    /// Write a compressed log.
    pub gzip: bool,
    pub export: Vec<Artifact>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            count: 1,
            evolutions: 0,
            out: PathBuf::from("pipeline"),
            gzip: false,
            export: vec![Artifact::Pnml],
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// The seed from the flag, else the file, else the environment.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> CliResult<Option<u64>> {
    if let Some(s) = flag.or(file) {
        return Ok(Some(s));
    }
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{SEED_VAR} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}
