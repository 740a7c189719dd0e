use std::path::Path;
use std::sync::Arc;

use plgen_core::io::xes;
use plgen_core::noise::profile;
use plgen_core::sim::Simulator;
use plgen_core::{EventLog, ProcessModel, SimulationConfig, Trace};
use rayon::prelude::*;

use super::{emit, load_valid, thread_pool, Context};
use crate::args::SimulateArgs;
use crate::error::{runtime, usage, CliError, CliResult};

pub fn simulation_config(
    ctx: &Context,
    traces: Option<usize>,
    noise: Option<&str>,
) -> CliResult<SimulationConfig> {
    let mut c = ctx.file.simulation.clone();
    if let Some(n) = traces {
        c.trace_count = n;
    }
    if let Some(name) = noise {
        c.noise = profile(name).map_err(usage)?;
    }
    if let Some(seed) = ctx.seed {
        c.seed = seed;
        c.noise.seed = seed;
    }
    c.validate().map_err(usage)?;
    Ok(c)
}

/// Simulates every trace of `config`; the result does not depend on `jobs`.
pub fn simulate(model: &ProcessModel, config: &SimulationConfig, jobs: usize) -> CliResult<EventLog> {
    let model = Arc::new(model.clone());
    let n = config.trace_count as u64;
    let chunk = n.div_ceil(jobs as u64).max(1);
    let pool = thread_pool(jobs)?;
    let chunks: Vec<Vec<Trace>> = pool.install(|| {
        (0..n.div_ceil(chunk))
            .into_par_iter()
            .map(|k| {
                let mut sim = Simulator::shared(model.clone(), config.clone())
                    .map_err(|e| CliError::Validation(e.to_string()))?;
                (k * chunk..((k + 1) * chunk).min(n))
                    .map(|i| sim.simulate_trace(i).map_err(runtime))
                    .collect::<CliResult<Vec<_>>>()
            })
            .collect::<CliResult<_>>()
    })?;
    Ok(EventLog {
        traces: chunks.into_iter().flatten().collect(),
    })
}

pub fn write_log(log: &EventLog, out: Option<&Path>) -> CliResult {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
            }
            xes::write_file(log, p).map_err(|e| runtime(format!("{}: {e}", p.display())))
        }
        None => emit(None, &xes::to_string(log)),
    }
}

pub fn run(ctx: &Context, a: SimulateArgs) -> CliResult {
    let mut config = simulation_config(ctx, a.traces, a.noise.as_deref())?;
    if let Some(p) = a.loop_probability {
        config.loop_probability = p;
        config.validate().map_err(usage)?;
    }
    config.allow_script_io |= a.allow_script_io;
    let model = load_valid(&a.model)?;
    let log = simulate(&model, &config, ctx.jobs)?;
    write_log(&log, a.out.as_deref())?;
    if let Some(p) = &a.out {
        eprintln!("wrote {} traces, {} events to {}", log.traces.len(), log.event_count(), p.display());
    }
    Ok(())
}
