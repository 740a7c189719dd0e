mod support;

use std::collections::BTreeMap;

use plgen_core::io::{pnml, xes};
use plgen_core::model::{Activity, GatewayKind, ModelDraft};
use plgen_core::sim::{AttributeValue, Event, Lifecycle, Simulator};
use plgen_core::{generate_model, simulate_log, EventLog, GrammarConfig, SimulationConfig, Trace};

fn complete_labels(t: &Trace) -> Vec<&str> {
    t.events
        .iter()
        .filter(|e| e.lifecycle == Lifecycle::Complete)
        .map(|e| e.activity.as_str())
        .collect()
}

#[test]
fn exported_nets_replay_simulated_traces() {
    for seed in 0..200u64 {
        let model = generate_model(&GrammarConfig {
            seed,
            p_loop: 0.2,
            ..Default::default()
        })
        .unwrap();
        let net = support::parse_pnml(&pnml::export(&model).unwrap());
        let config = SimulationConfig {
            trace_count: 20,
            seed,
            ..Default::default()
        };
        for t in simulate_log(&model, &config).unwrap().traces {
            let labels = complete_labels(&t);
            assert!(support::replays(&net, &labels), "seed {seed}: {labels:?}");
        }
    }
}

#[test]
fn replay_oracle_rejects_foreign_sequences() {
    let model = generate_model(&GrammarConfig {
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let net = support::parse_pnml(&pnml::export(&model).unwrap());
    let mut sim = Simulator::new(&model, SimulationConfig::default()).unwrap();
    let t = sim.simulate_trace(0).unwrap();
    let mut labels = complete_labels(&t);
    labels.push("not an activity");
    assert!(!support::replays(&net, &labels));
    assert!(!support::replays(&net, &[]));
}

#[test]
fn parallel_block_net_accepts_both_orders() {
    let mut d = ModelDraft::new("m", "and");
    d.start_event("s").end_event("e");
    for id in ["a", "b", "c", "z"] {
        d.activity(Activity::new(id, id));
    }
    d.gateway("g1", GatewayKind::Parallel)
        .gateway("g2", GatewayKind::Parallel)
        .sequence("s", "a")
        .sequence("a", "g1")
        .sequence("g1", "b")
        .sequence("g1", "c")
        .sequence("b", "g2")
        .sequence("c", "g2")
        .sequence("g2", "z")
        .sequence("z", "e");
    let net = support::parse_pnml(&pnml::export(&d.into_model()).unwrap());
    assert!(support::replays(&net, &["a", "b", "c", "z"]));
    assert!(support::replays(&net, &["a", "c", "b", "z"]));
    assert!(!support::replays(&net, &["a", "b", "z"]));
}

#[test]
fn xes_parse_back_preserves_everything() {
    let model = generate_model(&GrammarConfig {
        seed: 8,
        p_data_object: 0.5,
        ..Default::default()
    })
    .unwrap();
    let log = simulate_log(
        &model,
        &SimulationConfig {
            trace_count: 50,
            ..Default::default()
        },
    )
    .unwrap();
    let parsed = support::parse_xes(&xes::to_string(&log));
    assert_eq!(parsed.len(), log.traces.len());
    for (p, t) in parsed.iter().zip(&log.traces) {
        assert_eq!(p.case_id, t.case_id);
        assert_eq!(p.events.len(), t.events.len());
        for (pe, e) in p.events.iter().zip(&t.events) {
            assert_eq!(pe.activity, e.activity);
            assert_eq!(pe.lifecycle, e.lifecycle.as_str());
            let ts = chrono::DateTime::parse_from_rfc3339(&pe.timestamp).unwrap();
            assert_eq!(ts.timestamp_millis(), e.timestamp);
            let attrs: Vec<(String, String, String)> = e
                .attributes
                .iter()
                .map(|(k, v)| match v {
                    AttributeValue::Integer(i) => ("int".into(), k.clone(), i.to_string()),
                    AttributeValue::Text(s) => ("string".into(), k.clone(), s.clone()),
                })
                .collect();
            assert_eq!(pe.attributes, attrs);
        }
    }
}

#[test]
fn xes_two_event_log_round_trips_to_the_millisecond() {
    let event = |ts: i64, a: &str| Event {
        case_id: "c1".into(),
        activity: a.into(),
        timestamp: ts,
        lifecycle: Lifecycle::Complete,
        attributes: BTreeMap::from([("d".to_string(), AttributeValue::Integer(1))]),
    };
    let log = EventLog {
        traces: vec![Trace {
            case_id: "c1".into(),
            events: vec![event(1_704_067_200_001, "A"), event(1_704_067_200_999, "B")],
        }],
    };
    let parsed = support::parse_xes(&xes::to_string(&log));
    assert_eq!(parsed[0].events.len(), 2);
    assert_eq!(parsed[0].events[0].timestamp, "2024-01-01T00:00:00.001+00:00");
    assert_eq!(parsed[0].events[1].timestamp, "2024-01-01T00:00:00.999+00:00");
    assert_eq!(parsed[0].events[0].attributes, [("int".into(), "d".into(), "1".into())]);
    assert!(support::parse_xes(&xes::to_string(&EventLog::default())).is_empty());
}
