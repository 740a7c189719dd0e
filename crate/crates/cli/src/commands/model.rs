use plgen_core::evolve::{evolve as evolve_model, EvolutionConfig};
use plgen_core::io::{dot, load_model, native, pnml};
use plgen_core::ProcessModel;

use super::{emit, load_valid, Context};
use crate::args::{EvolveArgs, ExportArgs, ExportFormat, ValidateArgs};
use crate::error::{runtime, usage, CliError, CliResult};

pub fn evolution_config(ctx: &Context, p_replace: Option<f64>, max_depth: Option<u32>) -> CliResult<EvolutionConfig> {
    let mut c = ctx.file.evolution.clone();
    if let Some(seed) = ctx.seed {
        c.seed = seed;
    }
    if let Some(p) = p_replace {
        c.p_replace = p;
    }
    if let Some(d) = max_depth {
        c.subprocess_grammar.max_depth = d;
    }
    c.validate().map_err(usage)?;
    Ok(c)
}

/// Applies `times` evolutions; step `k` uses seed `seed + k`.
pub fn evolve_chain(model: ProcessModel, config: &EvolutionConfig, times: u32) -> CliResult<ProcessModel> {
    (0..times).try_fold(model, |m, k| {
        let step = EvolutionConfig {
            seed: config.seed.wrapping_add(k as u64),
            ..config.clone()
        };
        evolve_model(&m, &step).map_err(runtime)
    })
}

pub fn evolve(ctx: &Context, a: EvolveArgs) -> CliResult {
    let config = evolution_config(ctx, a.p_replace, a.max_depth)?;
    let model = load_valid(&a.model)?;
    let out = evolve_chain(model, &config, a.times)?;
    emit(a.out.as_deref(), &native::to_string(&out))
}

pub fn export_text(model: &ProcessModel, format: ExportFormat) -> CliResult<String> {
    match format {
        ExportFormat::Pnml => pnml::export(model).map_err(|e| CliError::Validation(e.to_string())),
        ExportFormat::Dot => Ok(dot::export(model)),
    }
}

pub fn export(a: ExportArgs) -> CliResult {
    let model = load_valid(&a.model)?;
    emit(a.out.as_deref(), &export_text(&model, a.format)?)
}

pub fn validate(a: ValidateArgs) -> CliResult {
    let mut invalid = 0;
    for path in &a.models {
        match load_model(path) {
            Ok(m) => {
                let report = m.validate();
                if report.is_valid() {
                    println!("{}: valid", path.display());
                } else {
                    invalid += 1;
                    println!("{}: {} violation(s)", path.display(), report.violations.len());
                    for v in &report.violations {
                        println!("  {:?}: {}", v.code, v.message);
                    }
                }
            }
            Err(e) => {
                invalid += 1;
                println!("{}: {e}", path.display());
            }
        }
    }
    if invalid > 0 {
        return Err(CliError::Validation(format!("{invalid} of {} model(s) invalid", a.models.len())));
    }
    Ok(())
}
