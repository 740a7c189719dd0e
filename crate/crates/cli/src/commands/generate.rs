use std::path::{Path, PathBuf};

use plgen_core::grammar::ProductionWeights;
use plgen_core::io::native;
use plgen_core::{generate_model, GrammarConfig, ProcessModel};
use rayon::prelude::*;
use serde::Serialize;

use super::{thread_pool, Context};
use crate::args::{GenerateArgs, GrammarArgs};
use crate::error::{runtime, usage, CliResult};

pub const MANIFEST: &str = "manifest.csv";

#[derive(Debug, Serialize)]
pub struct ManifestRow {
    pub file: String,
    pub seed: u64,
    pub activities: usize,
    pub gateways: usize,
    pub data_objects: usize,
}

pub fn grammar_config(ctx: &Context, a: &GrammarArgs) -> CliResult<GrammarConfig> {
    let mut c = ctx.file.grammar.clone();
    if let Some(seed) = ctx.seed {
        c.seed = seed;
    }
    if let Some(d) = a.max_depth {
        c.max_depth = d;
    }
    if let Some(w) = &a.weights {
        if w.len() != 5 {
            return Err(usage(format!("--weights takes 5 comma-separated values, got {}", w.len())));
        }
        c.weights = ProductionWeights::new(w[0], w[1], w[2], w[3], w[4]);
    }
    if let Some(p) = a.p_loop {
        c.p_loop = p;
    }
    if let Some(p) = a.p_data_object {
        c.p_data_object = p;
    }
    if let Some(n) = a.max_and_branches {
        c.max_and_branches = n;
    }
    if let Some(n) = a.max_xor_branches {
        c.max_xor_branches = n;
    }
    c.validate().map_err(usage)?;
    Ok(c)
}

/// Generates `count` models; model `i` uses seed `base + i`.
pub fn generate_many(
    config: &GrammarConfig,
    count: usize,
    jobs: usize,
) -> CliResult<Vec<(u64, ProcessModel)>> {
    let pool = thread_pool(jobs)?;
    pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let seed = config.seed.wrapping_add(i as u64);
                let c = GrammarConfig {
                    seed,
                    ..config.clone()
                };
                generate_model(&c).map(|m| (seed, m)).map_err(usage)
            })
            .collect()
    })
}

pub fn model_file_name(index: usize, count: usize) -> String {
    let width = count.to_string().len().max(4);
    format!("model_{index:0width$}.{}", native::EXTENSION)
}

/// Writes the models and their manifest into `dir`.
pub fn write_repository(dir: &Path, models: &[(u64, ProcessModel)]) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let manifest = dir.join(MANIFEST);
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| runtime(format!("{}: {e}", manifest.display())))?;
    let mut paths = Vec::with_capacity(models.len());
    for (i, (seed, model)) in models.iter().enumerate() {
        let name = model_file_name(i, models.len());
        let path = dir.join(&name);
        native::write(model, &path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        w.serialize(ManifestRow {
            file: name,
            seed: *seed,
            activities: model.activities().len(),
            gateways: model.gateways().len(),
            data_objects: model.data_objects().len(),
        })
        .map_err(runtime)?;
        paths.push(path);
    }
    w.flush().map_err(runtime)?;
    Ok(paths)
}

pub fn run(ctx: &Context, a: GenerateArgs) -> CliResult {
    let config = grammar_config(ctx, &a.grammar)?;
    let count = a.count.unwrap_or(ctx.file.generate.count);
    if count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let dir = a.out.unwrap_or_else(|| ctx.file.generate.out.clone());
    let models = generate_many(&config, count, ctx.jobs)?;
    write_repository(&dir, &models)?;
    eprintln!("wrote {count} model(s) and {MANIFEST} to {}", dir.display());
    Ok(())
}
