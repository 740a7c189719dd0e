use std::io::Write;

use plgen_stream::control::{self, ControlState};
use plgen_stream::{EmissionFormat, StreamConfig, StreamSession};
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;

use super::simulate::simulation_config;
use super::{load_valid, Context};
use crate::args::{Format, StreamArgs};
use crate::error::{runtime, usage, CliError, CliResult};

pub fn run(ctx: &Context, a: StreamArgs) -> CliResult {
    let s = &ctx.file.stream;
    let host = a.host.clone().unwrap_or_else(|| s.host.clone());
    let config = StreamConfig {
        parallel_instances: a.parallel.unwrap_or(s.parallel_instances),
        time_multiplier: a.multiplier.unwrap_or(s.time_multiplier),
        listen_address: format!("{host}:{}", a.port.unwrap_or(s.port)),
        simulation: simulation_config(ctx, None, a.noise.as_deref())?,
        emission_format: match a.format {
            Some(Format::Ndjson) => EmissionFormat::Ndjson,
            Some(Format::XesFragment) => EmissionFormat::XesFragment,
            None => s.emission_format,
        },
        trace_gap_seconds: s.trace_gap_seconds,
        max_rate: a.max_rate || s.max_rate,
        client_queue: s.client_queue,
    };
    config.validate().map_err(usage)?;
    let control_address = format!("{host}:{}", a.control_port.unwrap_or(s.control_port));
    let status_every = a.status_every.unwrap_or(s.status_every);
    let model = load_valid(&a.model)?;

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    runtime.block_on(serve(model, config, control_address, status_every))
}

async fn serve(
    model: plgen_core::ProcessModel,
    config: StreamConfig,
    control_address: String,
    status_every: u64,
) -> CliResult {
    let control_listener = TcpListener::bind(&control_address)
        .await
        .map_err(|e| runtime(format!("cannot listen on {control_address}: {e}")))?;
    let session = StreamSession::start(model, config).await.map_err(|e| match e {
        plgen_stream::StreamError::InvalidConfig { .. } => usage(e),
        plgen_stream::StreamError::InvalidModel(_) => CliError::Validation(e.to_string()),
        other => runtime(other),
    })?;
    let handle = session.handle();
    let control_addr = control_listener.local_addr().map_err(runtime)?;
    {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "events: {}", session.event_addr());
        let _ = writeln!(out, "control: http://{control_addr}/v1/status");
        let _ = out.flush();
    }

    let (stop_control, control_stopped) = tokio::sync::oneshot::channel::<()>();
    let control_task = tokio::spawn(control::serve(
        control_listener,
        ControlState::new(handle.clone()),
        async {
            let _ = control_stopped.await;
        },
    ));

    if status_every > 0 {
        let h = handle.clone();
        let mut rx = h.subscribe();
        tokio::spawn(async move {
            loop {
                match rx.recv().await {
                    Ok(e) if e.sequence().is_some_and(|n| n % status_every == 0) => {
                        let s = h.status();
                        eprintln!(
                            "emitted {} events from {} traces; buffer {}; clients {}; model `{}`; multiplier {}",
                            s.events_emitted,
                            s.traces_generated,
                            s.buffer_size,
                            s.connected_clients,
                            s.current_model_name,
                            s.time_multiplier
                        );
                    }
                    Ok(_) | Err(RecvError::Lagged(_)) => {}
                    Err(RecvError::Closed) => break,
                }
            }
        });
    }

    tokio::select! {
        r = tokio::signal::ctrl_c() => {
            r.map_err(runtime)?;
            eprintln!("interrupted, shutting down");
        }
        _ = handle.stopped() => {}
    }
    handle.stop();
    session.join().await;
    let _ = stop_control.send(());
    control_task.await.map_err(runtime)?.map_err(runtime)?;
    let s = handle.status();
    eprintln!("stopped after {} events", s.events_emitted);
    Ok(())
}
