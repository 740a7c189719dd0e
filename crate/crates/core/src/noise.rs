//! Trace-, event- and data-level perturbation of simulated traces.
//!
//! Within a trace the phenomena apply in a fixed order: removals (episode,
//! head, tail), insertions (alien, doubled), event-level (rename, swap),
//! then data-level. Every step leaves the trace sorted by timestamp and
//! never removes its last event.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DataObjectKind, ProcessModel};
use crate::scripting::random_lowercase;
use crate::sim::{AttributeValue, Event, Lifecycle, Trace};

/// Length of random activity names and replacement strings.
pub const RANDOM_NAME_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub p_missing_head: f64,
    pub max_head_size: usize,
    pub p_missing_tail: f64,
    pub max_tail_size: usize,
    pub p_missing_episode: f64,
    pub max_episode_size: usize,
    pub p_alien_event: f64,
    pub p_doubled_event: f64,
    pub p_rename_activity: f64,
    pub p_swap_order: f64,
    pub p_perturb_integer: f64,
    /// Largest shift applied to an integer attribute.
    pub delta_max: i64,
    pub p_perturb_string: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            p_missing_head: 0.0,
            max_head_size: 1,
            p_missing_tail: 0.0,
            max_tail_size: 1,
            p_missing_episode: 0.0,
            max_episode_size: 1,
            p_alien_event: 0.0,
            p_doubled_event: 0.0,
            p_rename_activity: 0.0,
            p_swap_order: 0.0,
            p_perturb_integer: 0.0,
            delta_max: 0,
            p_perturb_string: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("unknown noise profile `{0}` (expected complete, control_flow_only, data_only, names_only or none)")]
    UnknownProfile(String),
    #[error("invalid noise configuration: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

/// Probability used by every phenomenon a preset profile enables.
pub const PROFILE_PROBABILITY: f64 = 0.05;
pub const PROFILE_MAX_SIZE: usize = 3;
pub const PROFILE_DELTA: i64 = 10;

pub const PROFILE_NAMES: [&str; 5] = [
    "complete",
    "control_flow_only",
    "data_only",
    "names_only",
    "none",
];

/// Preset configurations.
///
/// | profile             | enabled phenomena                                  |
/// |---------------------|----------------------------------------------------|
/// | `none`              | nothing                                            |
/// | `complete`          | all                                                |
/// | `control_flow_only` | head, tail, episode, alien, doubled, swap          |
/// | `data_only`         | integer and string perturbation                    |
/// | `names_only`        | activity renaming                                  |
///
/// Enabled phenomena use probability 0.05, size caps 3 and a shift of 10.
pub fn profile(name: &str) -> Result<NoiseConfig, NoiseError> {
    let p = PROFILE_PROBABILITY;
    let mut c = NoiseConfig {
        max_head_size: PROFILE_MAX_SIZE,
        max_tail_size: PROFILE_MAX_SIZE,
        max_episode_size: PROFILE_MAX_SIZE,
        delta_max: PROFILE_DELTA,
        ..NoiseConfig::default()
    };
    let control_flow = |c: &mut NoiseConfig| {
        c.p_missing_head = p;
        c.p_missing_tail = p;
        c.p_missing_episode = p;
        c.p_alien_event = p;
        c.p_doubled_event = p;
        c.p_swap_order = p;
    };
    let data = |c: &mut NoiseConfig| {
        c.p_perturb_integer = p;
        c.p_perturb_string = p;
    };
    match name {
        "none" => {}
        "complete" => {
            control_flow(&mut c);
            data(&mut c);
            c.p_rename_activity = p;
        }
        "control_flow_only" => control_flow(&mut c),
        "data_only" => data(&mut c),
        "names_only" => c.p_rename_activity = p,
        other => return Err(NoiseError::UnknownProfile(other.to_owned())),
    }
    Ok(c)
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig::default()
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let probs = [
            ("p_missing_head", self.p_missing_head),
            ("p_missing_tail", self.p_missing_tail),
            ("p_missing_episode", self.p_missing_episode),
            ("p_alien_event", self.p_alien_event),
            ("p_doubled_event", self.p_doubled_event),
            ("p_rename_activity", self.p_rename_activity),
            ("p_swap_order", self.p_swap_order),
            ("p_perturb_integer", self.p_perturb_integer),
            ("p_perturb_string", self.p_perturb_string),
        ];
        for (field, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(NoiseError::InvalidConfig {
                    field,
                    reason: format!("must lie in [0, 1], got {p}"),
                });
            }
        }
        let sizes = [
            ("max_head_size", self.p_missing_head, self.max_head_size),
            ("max_tail_size", self.p_missing_tail, self.max_tail_size),
            ("max_episode_size", self.p_missing_episode, self.max_episode_size),
        ];
        for (field, p, size) in sizes {
            if p > 0.0 && size < 1 {
                return Err(NoiseError::InvalidConfig {
                    field,
                    reason: "must be at least 1 when its probability is positive".into(),
                });
            }
        }
        if self.delta_max < 0 {
            return Err(NoiseError::InvalidConfig {
                field: "delta_max",
                reason: "must be non-negative".into(),
            });
        }
        Ok(())
    }

    pub fn is_silent(&self) -> bool {
        [
            self.p_missing_head,
            self.p_missing_tail,
            self.p_missing_episode,
            self.p_alien_event,
            self.p_doubled_event,
            self.p_rename_activity,
            self.p_swap_order,
            self.p_perturb_integer,
            self.p_perturb_string,
        ]
        .iter()
        .all(|&p| p == 0.0)
    }
}

/// What noise needs to know about the model a trace came from.
#[derive(Debug, Clone, Default)]
pub struct NoiseContext {
    /// Activity names of the model; alien and renamed activities avoid them.
    pub alphabet: HashSet<String>,
    /// Attribute names written by dynamic data objects, with their kind.
    pub dynamic_attributes: HashMap<String, DataObjectKind>,
}

impl NoiseContext {
    pub fn for_model(model: &ProcessModel) -> Self {
        NoiseContext {
            alphabet: model.alphabet(),
            dynamic_attributes: model
                .data_objects()
                .iter()
                .filter(|d| d.kind.is_dynamic())
                .map(|d| (d.name.clone(), d.kind))
                .collect(),
        }
    }

    fn fresh_name<R: Rng + ?Sized>(&self, rng: &mut R, avoid: &str) -> String {
        loop {
            let name = random_lowercase(rng, RANDOM_NAME_LEN);
            if name != avoid && !self.alphabet.contains(&name) {
                return name;
            }
        }
    }
}

fn fires<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    p > 0.0 && rng.gen_bool(p)
}

fn sort(trace: &mut Trace) {
    trace.events.sort_by_key(|e| e.timestamp);
}

/// Applies all phenomena of `config` in order.
pub fn apply_all<R: Rng + ?Sized>(
    trace: Trace,
    config: &NoiseConfig,
    ctx: &NoiseContext,
    rng: &mut R,
) -> Trace {
    if config.is_silent() {
        return trace;
    }
    let trace = apply_trace_noise(trace, config, ctx, rng);
    let mut trace = apply_event_noise(trace, config, ctx, rng);
    trace.events = trace
        .events
        .into_iter()
        .map(|e| apply_data_noise(e, config, ctx, rng))
        .collect();
    trace
}

/// Removes a head, tail or interior episode and inserts alien or doubled
/// events, each with its own probability.
pub fn apply_trace_noise<R: Rng + ?Sized>(
    mut trace: Trace,
    config: &NoiseConfig,
    ctx: &NoiseContext,
    rng: &mut R,
) -> Trace {
    if trace.events.is_empty() {
        return trace;
    }
    if fires(config.p_missing_episode, rng) && trace.events.len() > 2 {
        // interior events only: keep the first and the last
        let interior = trace.events.len() - 2;
        let k = rng.gen_range(1..=config.max_episode_size.max(1)).min(interior);
        let start = rng.gen_range(1..=interior - k + 1);
        trace.events.drain(start..start + k);
    }
    if fires(config.p_missing_head, rng) && trace.events.len() > 1 {
        let k = rng
            .gen_range(1..=config.max_head_size.max(1))
            .min(trace.events.len() - 1);
        trace.events.drain(..k);
    }
    if fires(config.p_missing_tail, rng) && trace.events.len() > 1 {
        let k = rng
            .gen_range(1..=config.max_tail_size.max(1))
            .min(trace.events.len() - 1);
        let n = trace.events.len();
        trace.events.truncate(n - k);
    }
    if fires(config.p_alien_event, rng) {
        let first = trace.events.first().unwrap().timestamp;
        let last = trace.events.last().unwrap().timestamp;
        let timestamp = rng.gen_range(first..=last);
        let alien = Event {
            case_id: trace.case_id.clone(),
            activity: ctx.fresh_name(rng, ""),
            timestamp,
            lifecycle: Lifecycle::Complete,
            attributes: Default::default(),
        };
        let pos = trace.events.partition_point(|e| e.timestamp <= timestamp);
        trace.events.insert(pos, alien);
    }
    if fires(config.p_doubled_event, rng) {
        let i = rng.gen_range(0..trace.events.len());
        let copy = trace.events[i].clone();
        trace.events.insert(i + 1, copy);
    }
    sort(&mut trace);
    trace
}

/// Renames activities and swaps the timestamps of adjacent events.
pub fn apply_event_noise<R: Rng + ?Sized>(
    mut trace: Trace,
    config: &NoiseConfig,
    ctx: &NoiseContext,
    rng: &mut R,
) -> Trace {
    if config.p_rename_activity > 0.0 {
        for e in &mut trace.events {
            if fires(config.p_rename_activity, rng) {
                e.activity = ctx.fresh_name(rng, &e.activity);
            }
        }
    }
    if config.p_swap_order > 0.0 && trace.events.len() > 1 {
        for i in 0..trace.events.len() - 1 {
            if fires(config.p_swap_order, rng) {
                let t = trace.events[i].timestamp;
                trace.events[i].timestamp = trace.events[i + 1].timestamp;
                trace.events[i + 1].timestamp = t;
            }
        }
        sort(&mut trace);
    }
    trace
}

/// Shifts dynamic integer attributes by a uniform δ in `[-Δ, Δ]` and
/// replaces dynamic string attributes with random strings. Attributes of
/// plain data objects are left alone.
pub fn apply_data_noise<R: Rng + ?Sized>(
    mut event: Event,
    config: &NoiseConfig,
    ctx: &NoiseContext,
    rng: &mut R,
) -> Event {
    if config.p_perturb_integer == 0.0 && config.p_perturb_string == 0.0 {
        return event;
    }
    for (name, value) in event.attributes.iter_mut() {
        match (ctx.dynamic_attributes.get(name), value) {
            (Some(DataObjectKind::DynamicInteger), AttributeValue::Integer(v)) => {
                if fires(config.p_perturb_integer, rng) {
                    let delta = rng.gen_range(-config.delta_max..=config.delta_max);
                    *v += delta;
                }
            }
            (Some(DataObjectKind::DynamicString), AttributeValue::Text(s)) => {
                if fires(config.p_perturb_string, rng) {
                    *s = random_lowercase(rng, RANDOM_NAME_LEN);
                }
            }
            _ => {}
        }
    }
    event
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ev(a: &str, t: i64) -> Event {
        Event {
            case_id: "case_1".into(),
            activity: a.into(),
            timestamp: t,
            lifecycle: Lifecycle::Complete,
            attributes: Default::default(),
        }
    }

    fn trace(n: usize) -> Trace {
        Trace {
            case_id: "case_1".into(),
            events: (0..n)
                .map(|i| ev(&crate::naming::activity_name(i), 1000 * i as i64))
                .collect(),
        }
    }

    fn ctx(n: usize) -> NoiseContext {
        NoiseContext {
            alphabet: (0..n).map(crate::naming::activity_name).collect(),
            dynamic_attributes: [
                ("amount".to_string(), DataObjectKind::DynamicInteger),
                ("note".to_string(), DataObjectKind::DynamicString),
            ]
            .into(),
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_config_is_identity() {
        let t = trace(6);
        let out = apply_all(t.clone(), &NoiseConfig::none(), &ctx(6), &mut rng());
        assert_eq!(out, t);
    }

    #[test]
    fn head_removal_drops_one_or_two() {
        let config = NoiseConfig {
            p_missing_head: 1.0,
            max_head_size: 2,
            ..NoiseConfig::none()
        };
        let mut rng = rng();
        let mut seen = HashSet::new();
        for _ in 0..200 {
            let out = apply_trace_noise(trace(5), &config, &ctx(5), &mut rng);
            assert!(out.events.len() == 3 || out.events.len() == 4);
            assert_eq!(out.events.last().unwrap().activity, "Activity E");
            seen.insert(out.events.len());
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn removals_never_empty_a_trace() {
        let config = NoiseConfig {
            p_missing_head: 1.0,
            max_head_size: 10,
            p_missing_tail: 1.0,
            max_tail_size: 10,
            p_missing_episode: 1.0,
            max_episode_size: 10,
            ..NoiseConfig::none()
        };
        let mut rng = rng();
        for n in 1..6 {
            let out = apply_trace_noise(trace(n), &config, &ctx(n), &mut rng);
            assert_eq!(out.events.len(), 1);
        }
    }

    #[test]
    fn episode_keeps_endpoints() {
        let config = NoiseConfig {
            p_missing_episode: 1.0,
            max_episode_size: 3,
            ..NoiseConfig::none()
        };
        let mut rng = rng();
        for _ in 0..100 {
            let out = apply_trace_noise(trace(8), &config, &ctx(8), &mut rng);
            assert!((5..=7).contains(&out.events.len()));
            assert_eq!(out.events[0].activity, "Activity A");
            assert_eq!(out.events.last().unwrap().activity, "Activity H");
        }
    }

    #[test]
    fn alien_event_is_outside_alphabet() {
        let config = NoiseConfig {
            p_alien_event: 1.0,
            ..NoiseConfig::none()
        };
        let ctx = ctx(4);
        let mut rng = rng();
        for _ in 0..1_000 {
            let out = apply_trace_noise(trace(4), &config, &ctx, &mut rng);
            let aliens: Vec<_> = out
                .events
                .iter()
                .filter(|e| !ctx.alphabet.contains(&e.activity))
                .collect();
            assert_eq!(aliens.len(), 1);
            assert!((0..=3000).contains(&aliens[0].timestamp));
            assert!(out.is_sorted());
        }
    }

    #[test]
    fn doubled_event_repeats_one_event() {
        let config = NoiseConfig {
            p_doubled_event: 1.0,
            ..NoiseConfig::none()
        };
        let out = apply_trace_noise(trace(4), &config, &ctx(4), &mut rng());
        assert_eq!(out.events.len(), 5);
        let dup = out
            .events
            .windows(2)
            .filter(|w| w[0] == w[1])
            .count();
        assert_eq!(dup, 1);
    }

    #[test]
    fn forced_swap_reverses_pair() {
        let config = NoiseConfig {
            p_swap_order: 1.0,
            ..NoiseConfig::none()
        };
        let t = Trace {
            case_id: "case_1".into(),
            events: vec![ev("A", 10), ev("B", 20)],
        };
        let out = apply_event_noise(t, &config, &ctx(0), &mut rng());
        let names: Vec<_> = out.events.iter().map(|e| e.activity.as_str()).collect();
        assert_eq!(names, ["B", "A"]);
        assert_eq!(out.events[0].timestamp, 10);
    }

    #[test]
    fn rename_probability_extremes() {
        let keep = NoiseConfig::none();
        let out = apply_event_noise(trace(5), &keep, &ctx(5), &mut rng());
        assert_eq!(out, trace(5));

        let all = NoiseConfig {
            p_rename_activity: 1.0,
            ..NoiseConfig::none()
        };
        let mut rng = rng();
        let mut changed = 0;
        for _ in 0..200 {
            let original = trace(5);
            let out = apply_event_noise(original.clone(), &all, &ctx(5), &mut rng);
            for (a, b) in original.events.iter().zip(&out.events) {
                assert_ne!(a.activity, b.activity);
                assert_eq!(a.timestamp, b.timestamp);
                changed += 1;
            }
        }
        assert_eq!(changed, 1_000);
    }

    fn with_attrs(amount: i64) -> Event {
        let mut e = ev("A", 0);
        e.attributes.insert("amount".into(), AttributeValue::Integer(amount));
        e.attributes.insert("note".into(), AttributeValue::Text("hello".into()));
        e.attributes.insert("plain".into(), AttributeValue::Integer(5));
        e
    }

    #[test]
    fn integer_shift_bounds() {
        let zero = NoiseConfig {
            p_perturb_integer: 1.0,
            delta_max: 0,
            ..NoiseConfig::none()
        };
        let out = apply_data_noise(with_attrs(100), &zero, &ctx(1), &mut rng());
        assert_eq!(out.attributes["amount"], AttributeValue::Integer(100));

        let ten = NoiseConfig {
            p_perturb_integer: 1.0,
            delta_max: 10,
            ..NoiseConfig::none()
        };
        let mut rng = rng();
        let n = 10_000;
        let mut sum = 0i64;
        for _ in 0..n {
            let out = apply_data_noise(with_attrs(100), &ten, &ctx(1), &mut rng);
            let AttributeValue::Integer(v) = out.attributes["amount"] else { panic!() };
            assert!((90..=110).contains(&v));
            sum += v - 100;
            assert_eq!(out.attributes["plain"], AttributeValue::Integer(5));
            assert_eq!(out.attributes["note"], AttributeValue::Text("hello".into()));
        }
        let mean = sum as f64 / n as f64;
        assert!(mean.abs() <= 0.3, "{mean}");
    }

    #[test]
    fn string_replacement() {
        let config = NoiseConfig {
            p_perturb_string: 1.0,
            ..NoiseConfig::none()
        };
        let out = apply_data_noise(with_attrs(1), &config, &ctx(1), &mut rng());
        let AttributeValue::Text(s) = &out.attributes["note"] else { panic!() };
        assert_eq!(s.len(), RANDOM_NAME_LEN);
        assert_ne!(s, "hello");
        assert_eq!(out.attributes["amount"], AttributeValue::Integer(1));
    }

    #[test]
    fn profiles() {
        assert!(profile("none").unwrap().is_silent());
        let d = profile("data_only").unwrap();
        assert!(d.p_perturb_integer > 0.0 && d.p_perturb_string > 0.0);
        assert_eq!(
            [d.p_missing_head, d.p_missing_tail, d.p_missing_episode, d.p_alien_event,
             d.p_doubled_event, d.p_rename_activity, d.p_swap_order],
            [0.0; 7]
        );
        let n = profile("names_only").unwrap();
        assert!(n.p_rename_activity > 0.0);
        assert!(NoiseConfig { p_rename_activity: 0.0, ..n }.is_silent());
        let c = profile("control_flow_only").unwrap();
        assert_eq!(c.p_perturb_integer, 0.0);
        assert_eq!(c.p_rename_activity, 0.0);
        assert!(c.p_missing_head > 0.0);
        for name in PROFILE_NAMES {
            profile(name).unwrap().validate().unwrap();
        }
        assert!(matches!(profile("loud"), Err(NoiseError::UnknownProfile(_))));
    }

    #[test]
    fn validate_rejects_bad_values() {
        let c = NoiseConfig {
            p_alien_event: 1.5,
            ..NoiseConfig::none()
        };
        assert!(matches!(
            c.validate(),
            Err(NoiseError::InvalidConfig { field: "p_alien_event", .. })
        ));
        let c = NoiseConfig {
            p_missing_tail: 0.2,
            max_tail_size: 0,
            ..NoiseConfig::none()
        };
        assert!(c.validate().is_err());
    }
}
