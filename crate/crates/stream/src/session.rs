//! A running stream session: refiller, emitter and TCP fan-out.

use std::collections::{BTreeMap, VecDeque};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use plgen_core::model::ValidationReport;
use plgen_core::sim::{AttributeValue, SimError, Simulator};
use plgen_core::{ProcessModel, SimulationConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, watch, Notify};
use tokio::task::JoinHandle;

use crate::buffer::EventBuffer;
use crate::wire::{EmissionFormat, WireEvent, SCHEDULED_TIME, SEQUENCE, SIMULATED_TIME};

const RECENT_EVENTS: usize = 100;
/// Consecutive failed or empty simulations after which the session stops.
const MAX_BARREN_TRACES: u32 = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    /// Number of queues, i.e. the bound on concurrently open cases.
    pub parallel_instances: usize,
    /// Wall-clock seconds per simulated second.
    pub time_multiplier: f64,
    pub listen_address: String,
    pub simulation: SimulationConfig,
    pub emission_format: EmissionFormat,
    /// Simulated gap between the last event of a trace and the first event
    /// of the next trace in the same queue.
    pub trace_gap_seconds: f64,
    /// Emit as fast as possible, ignoring scheduled times.
    pub max_rate: bool,
    /// Events a slow client may fall behind before the oldest are dropped.
    pub client_queue: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            parallel_instances: 4,
            time_multiplier: 1.0,
            listen_address: "127.0.0.1:9000".into(),
            simulation: SimulationConfig::default(),
            emission_format: EmissionFormat::Ndjson,
            trace_gap_seconds: 1.0,
            max_rate: false,
            client_queue: 1_024,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<(), StreamError> {
        let bad = |field, reason: String| Err(StreamError::InvalidConfig { field, reason });
        if self.parallel_instances < 1 {
            return bad("parallel_instances", "must be at least 1".into());
        }
        if let Err(reason) = check_multiplier(self.time_multiplier) {
            return bad("time_multiplier", reason);
        }
        if !(self.trace_gap_seconds.is_finite() && self.trace_gap_seconds >= 0.0) {
            return bad("trace_gap_seconds", format!("must be finite and non-negative, got {}", self.trace_gap_seconds));
        }
        if self.client_queue < 1 {
            return bad("client_queue", "must be at least 1".into());
        }
        self.simulation.validate().map_err(StreamError::Simulation)
    }
}

fn check_multiplier(m: f64) -> Result<(), String> {
    if m.is_finite() && m > 0.0 {
        Ok(())
    } else {
        Err(format!("must be a finite positive number, got {m}"))
    }
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("invalid stream configuration: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("model rejected: {0}")]
    InvalidModel(ValidationReport),
    #[error(transparent)]
    Simulation(SimError),
    #[error("cannot listen on {address}: {source}")]
    Bind {
        address: String,
        #[source]
        source: std::io::Error,
    },
    #[error("the session is not running")]
    NotRunning,
}

/// Snapshot served by the control API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub running: bool,
    pub events_emitted: u64,
    pub traces_generated: u64,
    pub buffer_size: usize,
    pub current_model_name: String,
    pub time_multiplier: f64,
    pub connected_clients: usize,
    pub feed_subscribers: usize,
    pub dropped_events: u64,
    pub emission_format: EmissionFormat,
    pub parallel_instances: usize,
    pub recent_events: Vec<WireEvent>,
}

/// Buffer occupancy figures gathered over the session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BufferStats {
    /// Largest buffer size seen right after a refill.
    pub max_buffered: usize,
    /// Smallest buffer size seen right after an emission, once the first
    /// `2p` events have been emitted.
    pub min_buffered_after_warmup: Option<usize>,
    /// Longest trace inserted so far.
    pub max_trace_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwapAck {
    pub model: String,
    /// Old-model events still waiting to be emitted.
    pub buffered_events: usize,
    /// Events emitted before the swap took effect.
    pub events_emitted: u64,
}

struct Source {
    simulator: Simulator,
    next_index: u64,
    barren: u32,
}

struct Buffered {
    buffer: EventBuffer,
    multiplier: f64,
    barrier_us: i64,
    last_due_us: i64,
    model_name: String,
    recent: VecDeque<WireEvent>,
    stats: BufferStats,
}

struct Shared {
    // Lock order: `source` before `buffered`.
    source: Mutex<Source>,
    buffered: Mutex<Buffered>,
    refill: Notify,
    wake: Notify,
    shutdown: watch::Sender<bool>,
    running: AtomicBool,
    events_emitted: AtomicU64,
    traces_generated: AtomicU64,
    clients: AtomicUsize,
    feed_subscribers: AtomicUsize,
    dropped: AtomicU64,
    tx: broadcast::Sender<Arc<WireEvent>>,
    config: StreamConfig,
    epoch: Instant,
    epoch_wall_ms: i64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Shared {
    fn threshold(&self) -> usize {
        2 * self.config.parallel_instances
    }

    fn now_us(&self) -> i64 {
        self.epoch.elapsed().as_micros() as i64
    }

    fn wall_ms(&self) -> i64 {
        self.epoch_wall_ms + self.epoch.elapsed().as_millis() as i64
    }

    fn gap_us(&self, multiplier: f64) -> i64 {
        (self.config.trace_gap_seconds * 1e6 * multiplier).round() as i64
    }

    /// Tops the buffer up to `2p` events. Returns false once the model has
    /// failed to produce events too many times in a row.
    fn refill(&self) -> bool {
        let mut source = lock(&self.source);
        loop {
            if lock(&self.buffered).buffer.len() >= self.threshold() {
                return true;
            }
            let index = source.next_index;
            source.next_index += 1;
            let case_id = source.simulator.config().case_id(index);
            let origin = source.simulator.config().base_time_ms;
            let trace = match source.simulator.simulate_case(index, case_id, origin) {
                Ok(t) => t,
                Err(e) => {
                    log::warn!("simulation failed: {e}");
                    source.barren += 1;
                    if source.barren >= MAX_BARREN_TRACES {
                        log::error!("stopping: {MAX_BARREN_TRACES} consecutive traces failed or were empty");
                        return false;
                    }
                    continue;
                }
            };
            self.traces_generated.fetch_add(1, Ordering::Relaxed);
            if trace.events.is_empty() {
                source.barren += 1;
                if source.barren >= MAX_BARREN_TRACES {
                    log::error!("stopping: {MAX_BARREN_TRACES} consecutive traces failed or were empty");
                    return false;
                }
                continue;
            }
            source.barren = 0;
            let mut b = lock(&self.buffered);
            let len = trace.events.len();
            let not_before = b.barrier_us.max(b.last_due_us).max(self.now_us());
            let gap = self.gap_us(b.multiplier);
            let m = b.multiplier;
            b.buffer.insert_trace(trace.events, origin, m, gap, not_before);
            let size = b.buffer.len();
            b.stats.max_buffered = b.stats.max_buffered.max(size);
            b.stats.max_trace_len = b.stats.max_trace_len.max(len);
            drop(b);
            self.wake.notify_one();
        }
    }

    fn pop_wire(&self) -> Option<Arc<WireEvent>> {
        let mut b = lock(&self.buffered);
        let item = b.buffer.pop()?;
        b.last_due_us = item.due_us;
        let now = self.wall_ms();
        let emitted = self.events_emitted.fetch_add(1, Ordering::Relaxed) + 1;
        let mut attrs: BTreeMap<String, AttributeValue> = item.event.attributes;
        attrs.insert(SIMULATED_TIME.into(), AttributeValue::Integer(item.event.timestamp));
        attrs.insert(
            SCHEDULED_TIME.into(),
            AttributeValue::Integer(self.epoch_wall_ms + item.due_us.div_euclid(1000)),
        );
        attrs.insert(SEQUENCE.into(), AttributeValue::Integer(emitted as i64));
        let wire = WireEvent {
            case: item.event.case_id,
            activity: item.event.activity,
            timestamp: now,
            lifecycle: item.event.lifecycle,
            attrs,
        };
        let size = b.buffer.len();
        if emitted > self.threshold() as u64 {
            let min = &mut b.stats.min_buffered_after_warmup;
            *min = Some(min.map_or(size, |m| m.min(size)));
        }
        if b.recent.len() == RECENT_EVENTS {
            b.recent.pop_front();
        }
        b.recent.push_back(wire.clone());
        drop(b);
        if size < self.threshold() {
            self.refill.notify_one();
        }
        Some(Arc::new(wire))
    }

    fn peek(&self) -> (usize, Option<i64>) {
        let b = lock(&self.buffered);
        (b.buffer.len(), b.buffer.peek().map(|e| e.due_us))
    }
}

/// Cloneable handle used by the control API, the CLI and tests.
#[derive(Clone)]
pub struct SessionHandle {
    shared: Arc<Shared>,
}

impl SessionHandle {
    pub fn is_running(&self) -> bool {
        self.shared.running.load(Ordering::SeqCst)
    }

    pub fn status(&self) -> SessionStatus {
        let s = &self.shared;
        let b = lock(&s.buffered);
        SessionStatus {
            running: self.is_running(),
            events_emitted: s.events_emitted.load(Ordering::Relaxed),
            traces_generated: s.traces_generated.load(Ordering::Relaxed),
            buffer_size: b.buffer.len(),
            current_model_name: b.model_name.clone(),
            time_multiplier: b.multiplier,
            connected_clients: s.clients.load(Ordering::Relaxed),
            feed_subscribers: s.feed_subscribers.load(Ordering::Relaxed),
            dropped_events: s.dropped.load(Ordering::Relaxed),
            emission_format: s.config.emission_format,
            parallel_instances: s.config.parallel_instances,
            recent_events: b.recent.iter().cloned().collect(),
        }
    }

    pub fn buffer_stats(&self) -> BufferStats {
        lock(&self.shared.buffered).stats
    }

    pub fn config(&self) -> &StreamConfig {
        &self.shared.config
    }

    /// Replaces the source model. Events already buffered drain first; every
    /// trace of the new model is scheduled after the last of them.
    pub fn swap_model(&self, model: ProcessModel) -> Result<SwapAck, StreamError> {
        if !self.is_running() {
            return Err(StreamError::NotRunning);
        }
        let report = model.validate();
        if !report.is_valid() {
            return Err(StreamError::InvalidModel(report));
        }
        let name = model.name().to_owned();
        let simulator = Simulator::shared(Arc::new(model), self.shared.config.simulation.clone())
            .map_err(StreamError::Simulation)?;
        let mut source = lock(&self.shared.source);
        source.simulator = simulator;
        source.barren = 0;
        let mut b = lock(&self.shared.buffered);
        if let Some(tail) = b.buffer.max_tail() {
            let gap = self.shared.gap_us(b.multiplier);
            b.barrier_us = b.barrier_us.max(tail + gap);
        }
        b.model_name = name.clone();
        let buffered_events = b.buffer.len();
        let events_emitted = self.shared.events_emitted.load(Ordering::Relaxed);
        drop(b);
        drop(source);
        log::info!("swapped source model to `{name}` with {buffered_events} events buffered");
        self.shared.refill.notify_one();
        Ok(SwapAck {
            model: name,
            buffered_events,
            events_emitted,
        })
    }

    /// Sets the multiplier for traces simulated from now on.
    pub fn set_multiplier(&self, m: f64) -> Result<f64, StreamError> {
        check_multiplier(m).map_err(|reason| StreamError::InvalidConfig {
            field: "time_multiplier",
            reason,
        })?;
        if !self.is_running() {
            return Err(StreamError::NotRunning);
        }
        let _source = lock(&self.shared.source);
        lock(&self.shared.buffered).multiplier = m;
        Ok(m)
    }

    pub fn stop(&self) {
        if self.shared.running.swap(false, Ordering::SeqCst) {
            log::info!("stopping stream session");
        }
        self.shared.shutdown.send_replace(true);
        self.shared.wake.notify_waiters();
        self.shared.refill.notify_waiters();
    }

    /// Resolves once the session has been stopped.
    pub async fn stopped(&self) {
        let mut rx = self.shared.shutdown.subscribe();
        let _ = rx.wait_for(|&s| s).await;
    }

    /// Receives every emitted event from now on.
    pub fn subscribe(&self) -> broadcast::Receiver<Arc<WireEvent>> {
        self.shared.tx.subscribe()
    }

    pub(crate) fn feed_guard(&self) -> FeedGuard {
        self.shared.feed_subscribers.fetch_add(1, Ordering::Relaxed);
        FeedGuard(self.shared.clone())
    }

    pub(crate) fn record_dropped(&self, n: u64) {
        self.shared.dropped.fetch_add(n, Ordering::Relaxed);
    }
}

pub(crate) struct FeedGuard(Arc<Shared>);

impl Drop for FeedGuard {
    fn drop(&mut self) {
        self.0.feed_subscribers.fetch_sub(1, Ordering::Relaxed);
    }
}

/// A started session and its background tasks.
pub struct StreamSession {
    handle: SessionHandle,
    event_addr: SocketAddr,
    tasks: Vec<JoinHandle<()>>,
}

impl StreamSession {
    /// Validates the inputs, binds the event port and starts emitting.
    pub async fn start(model: ProcessModel, config: StreamConfig) -> Result<Self, StreamError> {
        config.validate()?;
        let report = model.validate();
        if !report.is_valid() {
            return Err(StreamError::InvalidModel(report));
        }
        let listener = TcpListener::bind(&config.listen_address)
            .await
            .map_err(|source| StreamError::Bind {
                address: config.listen_address.clone(),
                source,
            })?;
        let event_addr = listener.local_addr().map_err(|source| StreamError::Bind {
            address: config.listen_address.clone(),
            source,
        })?;
        let name = model.name().to_owned();
        let simulator = Simulator::shared(Arc::new(model), config.simulation.clone())
            .map_err(StreamError::Simulation)?;
        let (tx, _) = broadcast::channel(config.client_queue);
        let (shutdown, _) = watch::channel(false);
        let epoch_wall_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0);
        let shared = Arc::new(Shared {
            source: Mutex::new(Source {
                simulator,
                next_index: 0,
                barren: 0,
            }),
            buffered: Mutex::new(Buffered {
                buffer: EventBuffer::new(config.parallel_instances),
                multiplier: config.time_multiplier,
                barrier_us: 0,
                last_due_us: 0,
                model_name: name,
                recent: VecDeque::with_capacity(RECENT_EVENTS),
                stats: BufferStats::default(),
            }),
            refill: Notify::new(),
            wake: Notify::new(),
            shutdown,
            running: AtomicBool::new(true),
            events_emitted: AtomicU64::new(0),
            traces_generated: AtomicU64::new(0),
            clients: AtomicUsize::new(0),
            feed_subscribers: AtomicUsize::new(0),
            dropped: AtomicU64::new(0),
            tx,
            config,
            epoch: Instant::now(),
            epoch_wall_ms,
        });
        let handle = SessionHandle { shared };
        if !handle.shared.refill() {
            handle.stop();
        }
        log::info!("streaming events on {event_addr}");
        let tasks = vec![
            tokio::spawn(refiller(handle.clone())),
            tokio::spawn(emitter(handle.clone())),
            tokio::spawn(acceptor(handle.clone(), listener)),
        ];
        Ok(StreamSession {
            handle,
            event_addr,
            tasks,
        })
    }

    pub fn handle(&self) -> SessionHandle {
        self.handle.clone()
    }

    /// Address of the event port.
    pub fn event_addr(&self) -> SocketAddr {
        self.event_addr
    }

    /// Waits until the session is stopped and its tasks have finished.
    pub async fn join(self) {
        for task in self.tasks {
            let _ = task.await;
        }
    }
}

async fn refiller(handle: SessionHandle) {
    let shared = &handle.shared;
    let mut shutdown = shared.shutdown.subscribe();
    while !*shutdown.borrow() {
        tokio::select! {
            _ = shared.refill.notified() => {}
            _ = shutdown.wait_for(|&s| s) => break,
        }
        if !shared.refill() {
            handle.stop();
        }
    }
}

async fn emitter(handle: SessionHandle) {
    let shared = &handle.shared;
    let mut shutdown = shared.shutdown.subscribe();
    while !*shutdown.borrow() {
        let (len, next) = shared.peek();
        let Some(due) = next.filter(|_| len >= shared.threshold()) else {
            shared.refill.notify_one();
            tokio::select! {
                _ = shared.wake.notified() => {}
                _ = shutdown.wait_for(|&s| s) => break,
            }
            continue;
        };
        if !shared.config.max_rate {
            let deadline = shared.epoch + Duration::from_micros(due.max(0) as u64);
            if deadline > Instant::now() {
                tokio::select! {
                    _ = tokio::time::sleep_until(deadline.into()) => {}
                    _ = shared.wake.notified() => continue,
                    _ = shutdown.wait_for(|&s| s) => break,
                }
            }
        } else {
            tokio::task::yield_now().await;
        }
        if let Some(wire) = shared.pop_wire() {
            let _ = shared.tx.send(wire);
        }
    }
}

async fn acceptor(handle: SessionHandle, listener: TcpListener) {
    let mut shutdown = handle.shared.shutdown.subscribe();
    loop {
        tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((socket, peer)) => {
                    log::info!("client {peer} connected");
                    tokio::spawn(serve_client(handle.clone(), socket, peer));
                }
                Err(e) => log::warn!("accept failed: {e}"),
            },
            _ = shutdown.wait_for(|&s| s) => break,
        }
    }
}

async fn serve_client(handle: SessionHandle, mut socket: TcpStream, peer: SocketAddr) {
    let shared = &handle.shared;
    let mut rx = shared.tx.subscribe();
    let mut shutdown = shared.shutdown.subscribe();
    let format = shared.config.emission_format;
    shared.clients.fetch_add(1, Ordering::Relaxed);
    let _ = socket.set_nodelay(true);
    loop {
        let wire = tokio::select! {
            r = rx.recv() => r,
            _ = async { let _ = shutdown.wait_for(|&s| s).await; } => {
                while let Ok(event) = rx.try_recv() {
                    if socket.write_all(format.encode(&event).as_bytes()).await.is_err() {
                        break;
                    }
                }
                break;
            }
        };
        match wire {
            Ok(event) => {
                if let Err(e) = socket.write_all(format.encode(&event).as_bytes()).await {
                    log::info!("client {peer} disconnected: {e}");
                    break;
                }
            }
            Err(broadcast::error::RecvError::Lagged(n)) => {
                log::warn!("client {peer} fell behind, dropped {n} events");
                handle.record_dropped(n);
            }
            Err(broadcast::error::RecvError::Closed) => break,
        }
    }
    let _ = socket.shutdown().await;
    shared.clients.fetch_sub(1, Ordering::Relaxed);
}
