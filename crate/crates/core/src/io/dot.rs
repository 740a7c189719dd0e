//! Graphviz DOT export.

use std::fmt::Write as _;

use crate::model::{Direction, GatewayKind, ProcessModel};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders `model` as a DOT digraph. Output depends only on the model.
pub fn export(model: &ProcessModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(model.id().as_str()));
    let _ = writeln!(out, "  label={};", quote(model.name()));
    out.push_str("  rankdir=LR;\n");
    for s in model.start_events() {
        let _ = writeln!(out, "  {} [shape=circle, label=\"\"];", quote(s.as_str()));
    }
    for e in model.end_events() {
        let _ = writeln!(out, "  {} [shape=circle, penwidth=3, label=\"\"];", quote(e.as_str()));
    }
    for a in model.activities() {
        let _ = writeln!(out, "  {} [shape=box, style=rounded, label={}];", quote(a.id.as_str()), quote(&a.name));
    }
    for g in model.gateways() {
        let label = match g.kind {
            GatewayKind::Exclusive => "×",
            GatewayKind::Parallel => "+",
        };
        let _ = writeln!(out, "  {} [shape=diamond, label=\"{label}\"];", quote(g.id.as_str()));
    }
    for d in model.data_objects() {
        let value = d.plain_value.as_deref().unwrap_or("(dynamic)");
        let label = format!("{}\n{}", d.name, value);
        let _ = writeln!(out, "  {} [shape=note, label={}];", quote(d.id.as_str()), quote(&label));
    }
    for s in model.sequences() {
        let _ = writeln!(out, "  {} -> {};", quote(s.source.as_str()), quote(s.target.as_str()));
    }
    for a in model.associations() {
        let (from, to) = match a.direction {
            Direction::Required => (&a.data_object, &a.activity),
            Direction::Generated => (&a.activity, &a.data_object),
        };
        let _ = writeln!(out, "  {} -> {} [style=dashed];", quote(from.as_str()), quote(to.as_str()));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activity, DataObject, ModelDraft};

    fn minimal() -> ModelDraft {
        let mut d = ModelDraft::new("m", "minimal");
        d.start_event("s")
            .end_event("e")
            .activity(Activity::new("a", "Activity A"))
            .sequence("s", "a")
            .sequence("a", "e");
        d
    }

    #[test]
    fn minimal_model() {
        let dot = export(&minimal().into_model());
        assert_eq!(dot.matches("shape=").count(), 3);
        assert_eq!(dot.matches("->").count(), 2);
        assert!(dot.contains("\"a\" [shape=box"));
    }

    #[test]
    fn deterministic() {
        let m = crate::generate_model(&crate::GrammarConfig { seed: 3, ..Default::default() }).unwrap();
        assert_eq!(export(&m), export(&m.clone()));
    }

    #[test]
    fn data_object_gets_one_dashed_edge() {
        let mut d = minimal();
        d.data_object(DataObject::plain("x", "variable_a", "v\"q"))
            .association("a", "x", Direction::Required);
        let dot = export(&d.into_model());
        assert_eq!(dot.matches("style=dashed").count(), 1);
        assert!(dot.contains("\"x\" -> \"a\" [style=dashed]"));
        assert!(dot.contains("shape=note, label=\"variable_a\\nv\\\"q\""));
    }

    #[test]
    fn gateway_labels() {
        let m = crate::generate_model(&crate::GrammarConfig {
            seed: 1,
            weights: crate::grammar::ProductionWeights::new(0.2, 0.2, 0.3, 0.3, 0.0),
            ..Default::default()
        })
        .unwrap();
        let dot = export(&m);
        for g in m.gateways() {
            let sym = if g.kind == GatewayKind::Parallel { "+" } else { "×" };
            assert!(dot.contains(&format!("\"{}\" [shape=diamond, label=\"{sym}\"]", g.id)));
        }
    }
}
