use std::collections::HashSet;

use proptest::prelude::*;

use plgen_core::evolve::{evolve, EvolutionConfig};
use plgen_core::grammar::ProductionWeights;
use plgen_core::io::native;
use plgen_core::noise::profile;
use plgen_core::sim::Simulator;
use plgen_core::{generate_model, simulate_log, GrammarConfig, ProcessModel, SimulationConfig};

fn grammar() -> impl Strategy<Value = GrammarConfig> {
    (
        any::<u64>(),
        0.0..0.4f64,
        proptest::array::uniform5(0.0..1.0f64),
        2u32..5,
        2u32..5,
        0.0..1.0f64,
        1u32..5,
    )
        .prop_filter("some weight", |(_, _, w, ..)| w.iter().sum::<f64>() > 0.01)
        .prop_map(|(seed, p_loop, w, max_and, max_xor, p_data, depth)| GrammarConfig {
            seed,
            p_loop,
            weights: ProductionWeights::new(w[0], w[1], w[2], w[3], w[4]),
            max_and_branches: max_and,
            max_xor_branches: max_xor,
            p_data_object: p_data,
            max_depth: depth,
            ..Default::default()
        })
}

fn model() -> impl Strategy<Value = ProcessModel> {
    grammar().prop_map(|c| generate_model(&c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn generated_models_validate(m in model()) {
        prop_assert!(m.validate().is_valid(), "{}", m.validate());
    }

    #[test]
    fn incoming_and_outgoing_agree(m in model()) {
        let ids: Vec<_> = m.component_ids().cloned().collect();
        for x in &ids {
            let Ok(outs) = m.outgoing(x) else { continue };
            for y in outs {
                prop_assert!(m.incoming(y).unwrap().contains(x));
            }
            for y in m.incoming(x).unwrap() {
                prop_assert!(m.outgoing(y).unwrap().contains(x));
            }
        }
    }

    #[test]
    fn simulation_terminates_sorted(m in model(), seed in any::<u64>()) {
        let config = SimulationConfig { trace_count: 10, seed, loop_probability: 0.3, ..Default::default() };
        let log = simulate_log(&m, &config).unwrap();
        prop_assert_eq!(log.traces.len(), 10);
        let alphabet = m.alphabet();
        for t in &log.traces {
            prop_assert!(t.is_sorted());
            prop_assert!(!t.events.is_empty());
            prop_assert!(t.events.iter().all(|e| alphabet.contains(&e.activity) && e.case_id == t.case_id));
        }
    }

    #[test]
    fn noisy_traces_stay_sorted_and_non_empty(m in model(), seed in any::<u64>()) {
        let mut noise = profile("complete").unwrap();
        noise.p_missing_head = 0.5;
        noise.p_alien_event = 0.5;
        noise.seed = seed;
        let config = SimulationConfig { trace_count: 10, seed, noise, ..Default::default() };
        for t in simulate_log(&m, &config).unwrap().traces {
            prop_assert!(t.is_sorted());
            prop_assert!(!t.events.is_empty());
        }
    }

    #[test]
    fn native_round_trip(m in model()) {
        let text = native::to_string(&m);
        let back = native::from_str(&text, None).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.validate().is_valid(), m.validate().is_valid());
    }

    #[test]
    fn evolution_is_valid_and_pure(m in model(), seed in any::<u64>(), p in 0.0..=1.0f64) {
        let before = m.clone();
        let out = evolve(&m, &EvolutionConfig { p_replace: p, seed, ..Default::default() }).unwrap();
        prop_assert_eq!(&m, &before);
        prop_assert!(out.validate().is_valid(), "{}", out.validate());
        for d in out.data_objects() {
            let n = out.associations().iter().filter(|a| a.data_object == d.id).count();
            prop_assert_eq!(n, 1);
        }
        let names: HashSet<_> = out.activities().iter().map(|a| &a.name).collect();
        prop_assert_eq!(names.len(), out.activities().len());
    }

    #[test]
    fn evolution_without_replacement_keeps_the_language(m in model(), seed in any::<u64>()) {
        let out = evolve(&m, &EvolutionConfig { p_replace: 0.0, seed, ..Default::default() }).unwrap();
        let config = SimulationConfig { trace_count: 20, seed, ..Default::default() };
        let mut a = Simulator::new(&m, config.clone()).unwrap();
        let mut b = Simulator::new(&out, config).unwrap();
        for i in 0..20 {
            prop_assert_eq!(a.simulate_trace(i).unwrap(), b.simulate_trace(i).unwrap());
        }
    }
}

#[test]
fn ten_thousand_models_validate() {
    for seed in 0..10_000 {
        let m = generate_model(&GrammarConfig { seed, ..Default::default() }).unwrap();
        assert!(m.validate().is_valid(), "seed {seed}");
    }
}

#[test]
fn ten_thousand_evolutions_validate() {
    for seed in 0..10_000u64 {
        let m = generate_model(&GrammarConfig { seed: seed % 500, ..Default::default() }).unwrap();
        let out = evolve(&m, &EvolutionConfig { p_replace: 0.3, seed, ..Default::default() }).unwrap();
        assert!(out.validate().is_valid(), "seed {seed}: {}", out.validate());
    }
}

#[test]
fn skip_fragments_never_disconnect_a_chain() {
    let mut d = plgen_core::model::ModelDraft::new("m", "chain");
    d.start_event("s").end_event("e");
    let ids = ["a", "b", "c"];
    for id in ids {
        d.activity(plgen_core::model::Activity::new(id, id));
    }
    d.sequence("s", "a").sequence("a", "b").sequence("b", "c").sequence("c", "e");
    let m = d.into_model();
    let config = EvolutionConfig {
        p_replace: 1.0,
        subprocess_grammar: GrammarConfig {
            p_loop: 0.0,
            weights: ProductionWeights::new(0.0, 0.0, 0.0, 0.0, 1.0),
            max_depth: 2,
            ..Default::default()
        },
        seed: 0,
    };
    let out = evolve(&m, &config).unwrap();
    assert!(out.validate().is_valid());
    assert!(!out.activities().is_empty());
    let log = simulate_log(&out, &SimulationConfig { trace_count: 5, ..Default::default() }).unwrap();
    assert!(log.traces.iter().all(|t| !t.events.is_empty()));
}
