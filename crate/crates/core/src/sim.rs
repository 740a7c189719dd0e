//! Token-game simulation of process models into event logs.
//!
//! Each trace starts at one start event and follows sequences: activities
//! emit events and pass control to a successor, exclusive gateways pick one
//! successor, parallel splits fork into every branch and parallel joins wait
//! until every incoming sequence holds a token. The walk is depth-first in
//! sequence order; events are then sorted by timestamp (stable, so ties keep
//! the order in which they were produced).
//!
//! Time flows along the walk: an activity starts `time_after` seconds after
//! the clock it inherits, lasts `time_lasted` seconds, and hands the clock of
//! its last event to its successor. Parallel branches start from the split's
//! clock and a join continues from the latest arrival.
//!
//! Exclusive splits that close a structured loop (detected with dominators,
//! see [`FlowPlan`]) take the loop-back edge with
//! [`SimulationConfig::loop_probability`]; all other exclusive choices are
//! uniform.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use petgraph::algo::dominators;
use petgraph::graph::{DiGraph, NodeIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ComponentId, DataObject, DataObjectKind, Direction, GatewayKind, NodeKind, ProcessModel,
    ValidationReport,
};
use crate::noise::{self, NoiseConfig, NoiseContext};
use crate::scripting::{HookValue, ScriptError, ScriptEvaluator};

/// Upper bound on token-game steps for one trace.
pub const MAX_STEPS_PER_TRACE: usize = 1_000_000;

const NOISE_STREAM_SALT: u64 = 0x6e6f_6973_655f_7267;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lifecycle {
    Start,
    Complete,
}

impl Lifecycle {
    pub fn as_str(self) -> &'static str {
        match self {
            Lifecycle::Start => "start",
            Lifecycle::Complete => "complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeValue {
    Integer(i64),
    Text(String),
}

impl From<HookValue> for AttributeValue {
    fn from(v: HookValue) -> Self {
        match v {
            HookValue::Integer(i) => AttributeValue::Integer(i),
            HookValue::Text(s) => AttributeValue::Text(s),
            HookValue::Seconds(s) => AttributeValue::Integer(s.round() as i64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: i64,
    pub lifecycle: Lifecycle,
    pub attributes: BTreeMap<String, AttributeValue>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn is_sorted(&self) -> bool {
        self.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp)
    }

    pub fn activities(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.activity.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub traces: Vec<Trace>,
}

impl EventLog {
    pub fn event_count(&self) -> usize {
        self.traces.iter().map(|t| t.events.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub trace_count: usize,
    pub seed: u64,
    /// Probability of taking the loop-back edge at a loop's exclusive split.
    pub loop_probability: f64,
    /// Gap before an activity without a `time_after` hook.
    pub default_gap_seconds: u64,
    pub case_id_prefix: String,
    /// Start time of the first trace, in milliseconds since the epoch.
    pub base_time_ms: i64,
    /// Offset between the start times of consecutive traces.
    pub inter_arrival_seconds: u64,
    /// Lifecycle of the single event of an instantaneous activity.
    pub instantaneous_lifecycle: Lifecycle,
    pub allow_script_io: bool,
    pub noise: NoiseConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            trace_count: 100,
            seed: 0,
            loop_probability: 0.5,
            default_gap_seconds: 1,
            case_id_prefix: "case_".into(),
            // 2024-01-01T00:00:00Z
            base_time_ms: 1_704_067_200_000,
            inter_arrival_seconds: 3_600,
            instantaneous_lifecycle: Lifecycle::Complete,
            allow_script_io: false,
            noise: NoiseConfig::none(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.trace_count < 1 {
            return Err(SimError::InvalidConfig {
                field: "trace_count",
                reason: "must be at least 1".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.loop_probability) {
            return Err(SimError::InvalidConfig {
                field: "loop_probability",
                reason: format!("must lie in [0, 1], got {}", self.loop_probability),
            });
        }
        self.noise
            .validate()
            .map_err(|e| SimError::InvalidConfig {
                field: "noise",
                reason: e.to_string(),
            })
    }

    /// Simulated start time of trace number `index`.
    pub fn trace_start(&self, index: u64) -> i64 {
        self.base_time_ms + index as i64 * self.inter_arrival_seconds as i64 * 1000
    }

    /// `prefix` followed by the 1-based trace number, zero-padded to at
    /// least four digits.
    pub fn case_id(&self, index: u64) -> String {
        let width = self.trace_count.to_string().len().max(4);
        format!("{}{:0width$}", self.case_id_prefix, index + 1)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("model is not valid for simulation: {0}")]
    InvalidModel(ValidationReport),
    #[error("invalid simulation configuration: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("deadlock in case `{case_id}`: no progress possible at `{component}`")]
    Deadlock {
        case_id: String,
        component: ComponentId,
    },
    #[error("case `{case_id}` exceeded {MAX_STEPS_PER_TRACE} simulation steps")]
    StepLimit { case_id: String },
    #[error("hook failed in case `{case_id}`: {source}")]
    Script {
        case_id: String,
        #[source]
        source: ScriptError,
    },
}

/// Edges currently allowed to fire, by sequence index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSet {
    marks: Vec<u32>,
    total: usize,
}

impl TokenSet {
    fn with_edges(n: usize) -> Self {
        TokenSet {
            marks: vec![0; n],
            total: 0,
        }
    }

    fn add(&mut self, edge: usize) {
        self.marks[edge] += 1;
        self.total += 1;
    }

    fn remove(&mut self, edge: usize) {
        if self.marks[edge] > 0 {
            self.marks[edge] -= 1;
            self.total -= 1;
        }
    }

    pub fn contains(&self, edge: usize) -> bool {
        self.marks[edge] > 0
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.marks
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0)
            .map(|(i, _)| i)
    }
}

/// Index-based view of a model's control flow, prepared once per run.
#[derive(Debug, Clone)]
pub struct FlowPlan {
    ids: Vec<ComponentId>,
    kinds: Vec<NodeKind>,
    edges: Vec<(usize, usize)>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    activity_of: Vec<Option<usize>>,
    starts: Vec<usize>,
    loop_splits: HashMap<usize, LoopSplit>,
}

/// Outgoing edges of a loop-closing exclusive split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopSplit {
    pub back: Vec<usize>,
    pub exit: Vec<usize>,
}

impl FlowPlan {
    pub fn new(model: &ProcessModel) -> Self {
        let mut ids = Vec::new();
        let mut kinds = Vec::new();
        let mut index: HashMap<ComponentId, usize> = HashMap::new();
        let mut activity_of = Vec::new();
        let mut push = |id: &ComponentId, kind: NodeKind, act: Option<usize>| {
            if !index.contains_key(id) {
                index.insert(id.clone(), ids.len());
                ids.push(id.clone());
                kinds.push(kind);
                activity_of.push(act);
            }
        };
        for s in model.start_events() {
            push(s, NodeKind::StartEvent, None);
        }
        for e in model.end_events() {
            push(e, NodeKind::EndEvent, None);
        }
        for (i, a) in model.activities().iter().enumerate() {
            push(&a.id, NodeKind::Activity, Some(i));
        }
        for g in model.gateways() {
            push(&g.id, NodeKind::Gateway(g.kind), None);
        }
        let n = ids.len();
        let mut edges = Vec::new();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for s in model.sequences() {
            if let (Some(&u), Some(&v)) = (index.get(&s.source), index.get(&s.target)) {
                let e = edges.len();
                edges.push((u, v));
                out_edges[u].push(e);
                in_edges[v].push(e);
            }
        }
        let starts = model.start_events().iter().map(|s| index[s]).collect();
        let mut plan = FlowPlan {
            ids,
            kinds,
            edges,
            out_edges,
            in_edges,
            activity_of,
            starts,
            loop_splits: HashMap::new(),
        };
        plan.loop_splits = plan.find_loop_splits();
        plan
    }

    /// Finds exclusive splits whose outgoing edges leave some natural loop
    /// containing the split. The innermost such loop decides which edges
    /// stay in the loop (`back`) and which leave it (`exit`).
    fn find_loop_splits(&self) -> HashMap<usize, LoopSplit> {
        let n = self.ids.len();
        let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n + 1, self.edges.len());
        for _ in 0..=n {
            g.add_node(());
        }
        let root = NodeIndex::new(n);
        for &s in &self.starts {
            g.add_edge(root, NodeIndex::new(s), ());
        }
        for &(u, v) in &self.edges {
            g.add_edge(NodeIndex::new(u), NodeIndex::new(v), ());
        }
        let doms = dominators::simple_fast(&g, root);
        let dominates = |h: usize, u: usize| {
            doms.dominators(NodeIndex::new(u))
                .map_or(false, |mut it| it.any(|d| d.index() == h))
        };

        // natural loops, merged per header
        let mut loops: HashMap<usize, HashSet<usize>> = HashMap::new();
        for &(u, h) in &self.edges {
            if !dominates(h, u) {
                continue;
            }
            let body = loops.entry(h).or_insert_with(|| HashSet::from([h]));
            let mut stack = vec![u];
            while let Some(x) = stack.pop() {
                if body.insert(x) {
                    for &e in &self.in_edges[x] {
                        stack.push(self.edges[e].0);
                    }
                }
            }
        }
        let mut loops: Vec<HashSet<usize>> = loops.into_values().collect();
        loops.sort_by_key(HashSet::len);

        let mut out = HashMap::new();
        for (node, kind) in self.kinds.iter().enumerate() {
            if *kind != NodeKind::Gateway(GatewayKind::Exclusive) || self.out_edges[node].len() < 2 {
                continue;
            }
            for body in loops.iter().filter(|l| l.contains(&node)) {
                let (back, exit): (Vec<usize>, Vec<usize>) = self.out_edges[node]
                    .iter()
                    .partition(|&&e| body.contains(&self.edges[e].1));
                if !back.is_empty() && !exit.is_empty() {
                    out.insert(node, LoopSplit { back, exit });
                    break;
                }
            }
        }
        out
    }

    pub fn loop_split(&self, id: &ComponentId) -> Option<&LoopSplit> {
        let i = self.ids.iter().position(|x| x == id)?;
        self.loop_splits.get(&i)
    }

    pub fn edge_endpoints(&self, edge: usize) -> (&ComponentId, &ComponentId) {
        let (u, v) = self.edges[edge];
        (&self.ids[u], &self.ids[v])
    }
}

/// Counters collected while simulating.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimStats {
    pub traces: u64,
    pub events: u64,
    /// Required data objects written on their own activity's event because
    /// the trace had no earlier event.
    pub required_without_predecessor: u64,
}

struct Frame {
    node: usize,
    via: Option<usize>,
    clock: i64,
}

/// Simulates traces of one model.
pub struct Simulator {
    model: Arc<ProcessModel>,
    config: SimulationConfig,
    plan: FlowPlan,
    noise: NoiseContext,
    evaluator: ScriptEvaluator,
    stats: SimStats,
}

impl Simulator {
    pub fn new(model: &ProcessModel, config: SimulationConfig) -> Result<Self, SimError> {
        Self::shared(Arc::new(model.clone()), config)
    }

    pub fn shared(model: Arc<ProcessModel>, config: SimulationConfig) -> Result<Self, SimError> {
        config.validate()?;
        let report = model.validate();
        if !report.is_valid() {
            return Err(SimError::InvalidModel(report));
        }
        Ok(Simulator {
            plan: FlowPlan::new(&model),
            noise: NoiseContext::for_model(&model),
            model,
            evaluator: ScriptEvaluator::new(config.allow_script_io),
            config,
            stats: SimStats::default(),
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn model(&self) -> &Arc<ProcessModel> {
        &self.model
    }

    pub fn plan(&self) -> &FlowPlan {
        &self.plan
    }

    pub fn stats(&self) -> SimStats {
        self.stats
    }

    /// Simulates trace number `index` with its configured case id and start
    /// time. Each index owns an independent random stream.
    pub fn simulate_trace(&mut self, index: u64) -> Result<Trace, SimError> {
        let case_id = self.config.case_id(index);
        let start = self.config.trace_start(index);
        self.simulate_case(index, case_id, start)
    }

    /// Simulates one trace with an explicit case id and start time.
    pub fn simulate_case(
        &mut self,
        index: u64,
        case_id: String,
        start_time: i64,
    ) -> Result<Trace, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index);
        let (events, tokens) = self.play(&case_id, start_time, &mut rng)?;
        debug_assert!(tokens.is_empty());
        self.evaluator.forget_case(&case_id);

        let mut trace = Trace { case_id, events };
        trace.events.sort_by_key(|e| e.timestamp);
        if !self.config.noise.is_silent() {
            let mut noise_rng =
                ChaCha8Rng::seed_from_u64(self.config.noise.seed ^ NOISE_STREAM_SALT);
            noise_rng.set_stream(index);
            trace = noise::apply_all(trace, &self.config.noise, &self.noise, &mut noise_rng);
        }
        self.stats.traces += 1;
        self.stats.events += trace.events.len() as u64;
        Ok(trace)
    }

    /// Runs only the token game of trace `index`: the unsorted, noise-free
    /// events and the token set left when no component can fire any more.
    pub fn token_game(&mut self, index: u64) -> Result<(Vec<Event>, TokenSet), SimError> {
        let case_id = self.config.case_id(index);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index);
        let out = self.play(&case_id, self.config.trace_start(index), &mut rng);
        self.evaluator.forget_case(&case_id);
        out
    }

    /// Runs the token game for one case. Returns the unsorted events and the
    /// final token set, which is empty unless an error is returned.
    fn play(
        &mut self,
        case_id: &str,
        start_time: i64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<Event>, TokenSet), SimError> {
        let plan = &self.plan;
        let mut tokens = TokenSet::with_edges(plan.edges.len());
        let mut events = Vec::new();
        let mut join_clock: HashMap<usize, i64> = HashMap::new();
        let start = plan.starts[rng.gen_range(0..plan.starts.len())];
        let mut stack = vec![Frame {
            node: start,
            via: None,
            clock: start_time,
        }];
        let mut steps = 0usize;

        while let Some(Frame { node, via, clock }) = stack.pop() {
            steps += 1;
            if steps > MAX_STEPS_PER_TRACE {
                return Err(SimError::StepLimit {
                    case_id: case_id.to_owned(),
                });
            }
            let outs = &plan.out_edges[node];
            match plan.kinds[node] {
                NodeKind::StartEvent => {
                    if !outs.is_empty() {
                        let e = outs[rng.gen_range(0..outs.len())];
                        follow(&mut tokens, &mut stack, plan, e, clock);
                    }
                }
                NodeKind::EndEvent => {
                    if let Some(v) = via {
                        tokens.remove(v);
                    }
                }
                NodeKind::Activity => {
                    if let Some(v) = via {
                        tokens.remove(v);
                    }
                    let act = plan.activity_of[node].expect("activity index");
                    let clock = simulate_activity(
                        &self.model,
                        &self.config,
                        &mut self.evaluator,
                        &mut self.stats,
                        act,
                        case_id,
                        clock,
                        &mut events,
                        rng,
                    )?;
                    if !outs.is_empty() {
                        let e = outs[rng.gen_range(0..outs.len())];
                        follow(&mut tokens, &mut stack, plan, e, clock);
                    }
                }
                NodeKind::Gateway(GatewayKind::Exclusive) => {
                    if let Some(v) = via {
                        tokens.remove(v);
                    }
                    if !outs.is_empty() {
                        let e = choose_exclusive(plan, node, self.config.loop_probability, rng);
                        follow(&mut tokens, &mut stack, plan, e, clock);
                    }
                }
                NodeKind::Gateway(GatewayKind::Parallel) => {
                    let ins = &plan.in_edges[node];
                    if outs.len() > 1 {
                        if let Some(v) = via {
                            tokens.remove(v);
                        }
                        for &e in outs {
                            tokens.add(e);
                        }
                        for &e in outs.iter().rev() {
                            stack.push(Frame {
                                node: plan.edges[e].1,
                                via: Some(e),
                                clock,
                            });
                        }
                    } else if ins.len() > 1 {
                        let arrived = join_clock.entry(node).or_insert(clock);
                        *arrived = (*arrived).max(clock);
                        if ins.iter().all(|&e| tokens.contains(e)) {
                            let clock = join_clock.remove(&node).unwrap();
                            for &e in ins {
                                tokens.remove(e);
                            }
                            if let Some(&e) = outs.first() {
                                follow(&mut tokens, &mut stack, plan, e, clock);
                            }
                        }
                    } else {
                        if let Some(v) = via {
                            tokens.remove(v);
                        }
                        if let Some(&e) = outs.first() {
                            follow(&mut tokens, &mut stack, plan, e, clock);
                        }
                    }
                }
            }
        }

        if !tokens.is_empty() {
            let stuck = tokens
                .edges()
                .map(|e| plan.edges[e].1)
                .find(|&n| plan.kinds[n] == NodeKind::Gateway(GatewayKind::Parallel))
                .or_else(|| tokens.edges().next().map(|e| plan.edges[e].1))
                .unwrap();
            return Err(SimError::Deadlock {
                case_id: case_id.to_owned(),
                component: plan.ids[stuck].clone(),
            });
        }
        Ok((events, tokens))
    }
}

fn follow(tokens: &mut TokenSet, stack: &mut Vec<Frame>, plan: &FlowPlan, edge: usize, clock: i64) {
    tokens.add(edge);
    stack.push(Frame {
        node: plan.edges[edge].1,
        via: Some(edge),
        clock,
    });
}

fn choose_exclusive<R: Rng + ?Sized>(
    plan: &FlowPlan,
    node: usize,
    loop_probability: f64,
    rng: &mut R,
) -> usize {
    let outs = &plan.out_edges[node];
    match plan.loop_splits.get(&node) {
        Some(split) => {
            let group = if rng.gen_bool(loop_probability) {
                &split.back
            } else {
                &split.exit
            };
            group[rng.gen_range(0..group.len())]
        }
        None => outs[rng.gen_range(0..outs.len())],
    }
}

/// Appends the events of one activity execution and returns the clock its
/// successor inherits.
#[allow(clippy::too_many_arguments)]
fn simulate_activity(
    model: &ProcessModel,
    config: &SimulationConfig,
    evaluator: &mut ScriptEvaluator,
    stats: &mut SimStats,
    activity_index: usize,
    case_id: &str,
    clock: i64,
    events: &mut Vec<Event>,
    rng: &mut ChaCha8Rng,
) -> Result<i64, SimError> {
    let activity = &model.activities()[activity_index];
    let script_err = |source| SimError::Script {
        case_id: case_id.to_owned(),
        source,
    };
    let profile = activity.time_profile.as_ref();
    let gap = match profile.and_then(|p| p.time_after.as_ref()) {
        Some(hook) => evaluator
            .evaluate(hook, case_id, rng)
            .map_err(script_err)?
            .as_millis()
            .unwrap_or(0),
        None => config.default_gap_seconds as i64 * 1000,
    };
    let start = clock + gap;
    let instantaneous = activity.is_instantaneous();
    let mut first = Event {
        case_id: case_id.to_owned(),
        activity: activity.name.clone(),
        timestamp: start,
        lifecycle: if instantaneous {
            config.instantaneous_lifecycle
        } else {
            Lifecycle::Start
        },
        attributes: BTreeMap::new(),
    };

    for assoc in model.associations_of(&activity.id) {
        let Some(object) = model.data_object(&assoc.data_object) else {
            continue;
        };
        let value = data_value(object, evaluator, case_id, rng).map_err(script_err)?;
        match assoc.direction {
            Direction::Generated => {
                first.attributes.insert(object.name.clone(), value);
            }
            Direction::Required => match events.last_mut() {
                Some(previous) => {
                    previous.attributes.insert(object.name.clone(), value);
                }
                None => {
                    stats.required_without_predecessor += 1;
                    first.attributes.insert(object.name.clone(), value);
                }
            },
        }
    }
    events.push(first);

    if instantaneous {
        return Ok(start);
    }
    let hook = profile.and_then(|p| p.time_lasted.as_ref()).unwrap();
    let lasted = evaluator
        .evaluate(hook, case_id, rng)
        .map_err(script_err)?
        .as_millis()
        .unwrap_or(0);
    let end = start + lasted;
    events.push(Event {
        case_id: case_id.to_owned(),
        activity: activity.name.clone(),
        timestamp: end,
        lifecycle: Lifecycle::Complete,
        attributes: BTreeMap::new(),
    });
    Ok(end)
}

fn data_value(
    object: &DataObject,
    evaluator: &mut ScriptEvaluator,
    case_id: &str,
    rng: &mut ChaCha8Rng,
) -> Result<AttributeValue, ScriptError> {
    match (object.kind, &object.generator, &object.plain_value) {
        (DataObjectKind::Plain, _, Some(v)) => Ok(match v.parse::<i64>() {
            Ok(i) => AttributeValue::Integer(i),
            Err(_) => AttributeValue::Text(v.clone()),
        }),
        (_, Some(hook), _) => evaluator.evaluate(hook, case_id, rng).map(Into::into),
        _ => Ok(AttributeValue::Text(String::new())),
    }
}

/// Simulates `config.trace_count` traces of `model`.
pub fn simulate_log(model: &ProcessModel, config: &SimulationConfig) -> Result<EventLog, SimError> {
    let mut sim = Simulator::new(model, config.clone())?;
    let traces = (0..config.trace_count as u64)
        .map(|i| sim.simulate_trace(i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EventLog { traces })
}
