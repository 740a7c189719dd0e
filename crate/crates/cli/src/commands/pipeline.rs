use plgen_core::io::native;

use super::generate::{generate_many, grammar_config, model_file_name, write_repository};
use super::model::{evolution_config, evolve_chain, export_text};
use super::simulate::{simulate, simulation_config, write_log};
use super::Context;
use crate::args::{ExportFormat, GrammarArgs, PipelineArgs};
use crate::config::Artifact;
use crate::error::{runtime, usage, CliResult};

/// Generates `pipeline.count` models into `<out>/models`, then for each one
/// writes its evolved variant, log and exports into `<out>/<model stem>/`.
pub fn run(ctx: &Context, a: PipelineArgs) -> CliResult {
    let p = &ctx.file.pipeline;
    if p.count == 0 {
        return Err(usage("pipeline.count must be at least 1"));
    }
    let out = a.out.unwrap_or_else(|| p.out.clone());
    let grammar = grammar_config(
        ctx,
        &GrammarArgs {
            max_depth: None,
            weights: None,
            p_loop: None,
            p_data_object: None,
            max_and_branches: None,
            max_xor_branches: None,
        },
    )?;
    let evolution = evolution_config(ctx, None, None)?;
    let simulation = simulation_config(ctx, None, None)?;

    let models = generate_many(&grammar, p.count, ctx.jobs)?;
    write_repository(&out.join("models"), &models)?;
    for (i, (_, model)) in models.into_iter().enumerate() {
        let name = model_file_name(i, p.count);
        let stem = name.trim_end_matches(&format!(".{}", native::EXTENSION));
        let dir = out.join(stem);
        std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
        let model = if p.evolutions > 0 {
            let evolved = evolve_chain(model, &evolution, p.evolutions)?;
            let path = dir.join(format!("evolved.{}", native::EXTENSION));
            native::write(&evolved, &path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            evolved
        } else {
            model
        };
        let log = simulate(&model, &simulation, ctx.jobs)?;
        let log_name = if p.gzip { "log.xes.gz" } else { "log.xes" };
        write_log(&log, Some(&dir.join(log_name)))?;
        for artifact in &p.export {
            let (format, ext) = match artifact {
                Artifact::Pnml => (ExportFormat::Pnml, "pnml"),
                Artifact::Dot => (ExportFormat::Dot, "dot"),
            };
            let path = dir.join(format!("model.{ext}"));
            std::fs::write(&path, export_text(&model, format)?)
                .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        }
    }
    eprintln!("pipeline output written to {}", out.display());
    Ok(())
}
