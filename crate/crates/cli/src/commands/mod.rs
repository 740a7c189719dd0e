mod generate;
mod model;
mod pipeline;
mod simulate;
mod stream;

use std::io::Write;
use std::path::Path;

use plgen_core::io::{load_model, LoadError};
use plgen_core::ProcessModel;

use crate::args::{Cli, Command};
use crate::config::{resolve_seed, FileConfig};
use crate::error::{runtime, usage, CliError, CliResult};

/// Settings shared by every subcommand.
pub struct Context {
    pub file: FileConfig,
    pub seed: Option<u64>,
    pub jobs: usize,
}

pub fn dispatch(cli: Cli) -> CliResult {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = resolve_seed(cli.seed, file.seed)?;
    let jobs = cli.jobs.or(file.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let ctx = Context { file, seed, jobs };
    match cli.command {
        Command::Generate(a) => generate::run(&ctx, a),
        Command::Simulate(a) => simulate::run(&ctx, a),
        Command::Evolve(a) => model::evolve(&ctx, a),
        Command::Stream(a) => stream::run(&ctx, a),
        Command::Export(a) => model::export(a),
        Command::Validate(a) => model::validate(a),
        Command::Pipeline(a) => pipeline::run(&ctx, a),
    }
}

/// Loads a model file and checks it.
pub fn load_valid(path: &Path) -> CliResult<ProcessModel> {
    let model = load_model(path).map_err(|e| match e {
        LoadError::Io { .. } => runtime(e),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    })?;
    let report = model.validate();
    if !report.is_valid() {
        return Err(CliError::Validation(format!("{}: {report}", path.display())));
    }
    Ok(model)
}

/// Writes `text` to `path`, or to standard output.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
            }
            std::fs::write(p, text).map_err(|e| runtime(format!("{}: {e}", p.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(runtime)
        }
    }
}

pub fn thread_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(runtime)
}
