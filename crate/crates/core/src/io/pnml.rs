//! PNML (place/transition net) export and import.
//!
//! Export maps start events, end events and exclusive gateways to places,
//! activities to labelled transitions and parallel gateways to invisible
//! transitions. A sequence between two transitions gets an intermediate
//! place and a sequence between two places an invisible transition. An
//! activity with several incoming (outgoing) sequences reads from (writes
//! to) a private place, matching the simulator, which treats such an
//! activity as an exclusive merge (choice). Data objects are dropped.
//!
//! Import reverses the mapping for arbitrary nets and then removes
//! pass-through gateways, so an exported model comes back with its original
//! structure.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use quick_xml::escape::escape;
use quick_xml::events::Event as XmlEvent;
use quick_xml::Reader;
use thiserror::Error;

use crate::model::{
    Activity, ComponentId, GatewayKind, ModelDraft, NodeKind, ProcessModel, Sequence,
    ValidationReport,
};

pub const TOOL: &str = "plgen";
pub const TOOL_VERSION: &str = "1.0";
const NET_TYPE: &str = "http://www.pnml.org/version-2009/grammar/ptnet";

#[derive(Debug, Error)]
pub enum PnmlError {
    #[error("model is not valid: {0}")]
    InvalidModel(ValidationReport),
    #[error("malformed PNML at byte {position}: {message}")]
    Xml { position: usize, message: String },
    #[error("PNML document has no net")]
    NoNet,
    #[error("arc `{arc}` references unknown node `{node}`")]
    DanglingArc { arc: String, node: String },
    #[error("arc `{arc}` connects two {kind}s")]
    BadArc { arc: String, kind: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Place {
    pub id: String,
    pub name: String,
    pub initial_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub id: String,
    pub label: String,
    pub invisible: bool,
    /// Id of the model activity this transition stands for.
    pub activity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arc {
    pub id: String,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PetriNet {
    pub id: String,
    pub name: String,
    pub places: Vec<Place>,
    pub transitions: Vec<Transition>,
    pub arcs: Vec<Arc>,
    /// Places marked with one token when the process completes.
    pub final_places: Vec<String>,
}

#[derive(Clone)]
enum Endpoint {
    Place(String),
    Transition(String),
}

struct NetBuilder {
    net: PetriNet,
}

impl NetBuilder {
    fn place(&mut self, id: String, name: String, tokens: u32) -> String {
        self.net.places.push(Place {
            id: id.clone(),
            name,
            initial_tokens: tokens,
        });
        id
    }

    fn transition(&mut self, id: String, label: String, activity: Option<String>) -> String {
        self.net.transitions.push(Transition {
            id: id.clone(),
            invisible: activity.is_none(),
            label,
            activity,
        });
        id
    }

    fn arc(&mut self, source: &str, target: &str) {
        let id = format!("arc{}", self.net.arcs.len());
        self.net.arcs.push(Arc {
            id,
            source: source.to_owned(),
            target: target.to_owned(),
        });
    }

    fn connect(&mut self, from: &Endpoint, to: &Endpoint, tag: &str) {
        match (from, to) {
            (Endpoint::Place(p), Endpoint::Transition(t)) => self.arc(p, t),
            (Endpoint::Transition(t), Endpoint::Place(p)) => self.arc(t, p),
            (Endpoint::Transition(a), Endpoint::Transition(b)) => {
                let p = self.place(format!("p_{tag}"), String::new(), 0);
                self.arc(a, &p);
                self.arc(&p, b);
            }
            (Endpoint::Place(a), Endpoint::Place(b)) => {
                let t = self.transition(format!("t_{tag}"), "tau".into(), None);
                self.arc(a, &t);
                self.arc(&t, b);
            }
        }
    }
}

/// Translates a valid model into a net.
pub fn to_net(model: &ProcessModel) -> Result<PetriNet, PnmlError> {
    let report = model.validate();
    if !report.is_valid() {
        return Err(PnmlError::InvalidModel(report));
    }
    let mut b = NetBuilder {
        net: PetriNet {
            id: model.id().to_string(),
            name: model.name().to_owned(),
            ..PetriNet::default()
        },
    };
    let mut inputs: HashMap<&ComponentId, Endpoint> = HashMap::new();
    let mut outputs: HashMap<&ComponentId, Endpoint> = HashMap::new();
    let single_start = model.start_events().len() == 1;

    for s in model.start_events() {
        let p = b.place(format!("p_{s}"), s.to_string(), u32::from(single_start));
        inputs.insert(s, Endpoint::Place(p.clone()));
        outputs.insert(s, Endpoint::Place(p));
    }
    if !single_start {
        let source = b.place("p_source".into(), "source".into(), 1);
        for s in model.start_events() {
            let t = b.transition(format!("t_source_{s}"), "tau".into(), None);
            b.arc(&source, &t);
            b.arc(&t, &format!("p_{s}"));
        }
    }
    for e in model.end_events() {
        let p = b.place(format!("p_{e}"), e.to_string(), 0);
        b.net.final_places.push(p.clone());
        inputs.insert(e, Endpoint::Place(p.clone()));
        outputs.insert(e, Endpoint::Place(p));
    }
    for a in model.activities() {
        let t = b.transition(format!("t_{}", a.id), a.name.clone(), Some(a.id.to_string()));
        let fan_in = model.incoming(&a.id).map_or(0, <[_]>::len);
        let fan_out = model.outgoing(&a.id).map_or(0, <[_]>::len);
        let input = if fan_in > 1 {
            let p = b.place(format!("p_in_{}", a.id), String::new(), 0);
            b.arc(&p, &t);
            Endpoint::Place(p)
        } else {
            Endpoint::Transition(t.clone())
        };
        let output = if fan_out > 1 {
            let p = b.place(format!("p_out_{}", a.id), String::new(), 0);
            b.arc(&t, &p);
            Endpoint::Place(p)
        } else {
            Endpoint::Transition(t)
        };
        inputs.insert(&a.id, input);
        outputs.insert(&a.id, output);
    }
    for g in model.gateways() {
        let end = match g.kind {
            GatewayKind::Exclusive => Endpoint::Place(b.place(format!("p_{}", g.id), g.id.to_string(), 0)),
            GatewayKind::Parallel => {
                Endpoint::Transition(b.transition(format!("t_{}", g.id), "tau".into(), None))
            }
        };
        inputs.insert(&g.id, end.clone());
        outputs.insert(&g.id, end);
    }
    for s in model.sequences() {
        let tag = format!("{}_{}", s.source, s.target);
        b.connect(&outputs[&s.source], &inputs[&s.target], &tag);
    }
    Ok(b.net)
}

/// Renders a net as a PNML document.
pub fn write_net(net: &PetriNet) -> String {
    let mut out = String::new();
    let text = |s: &str| escape(s).into_owned();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<pnml>\n");
    let _ = writeln!(out, "  <net id=\"{}\" type=\"{NET_TYPE}\">", text(&net.id));
    let _ = writeln!(out, "    <name><text>{}</text></name>", text(&net.name));
    out.push_str("    <page id=\"page0\">\n");
    for p in &net.places {
        let _ = write!(out, "      <place id=\"{}\"><name><text>{}</text></name>", text(&p.id), text(&p.name));
        if p.initial_tokens > 0 {
            let _ = write!(out, "<initialMarking><text>{}</text></initialMarking>", p.initial_tokens);
        }
        out.push_str("</place>\n");
    }
    for t in &net.transitions {
        let _ = write!(out, "      <transition id=\"{}\"><name><text>{}</text></name>", text(&t.id), text(&t.label));
        match &t.activity {
            Some(a) => {
                let _ = write!(
                    out,
                    "<toolspecific tool=\"{TOOL}\" version=\"{TOOL_VERSION}\" activity=\"{}\"/>",
                    text(a)
                );
            }
            None => {
                let _ = write!(out, "<toolspecific tool=\"{TOOL}\" version=\"{TOOL_VERSION}\" invisible=\"true\"/>");
            }
        }
        out.push_str("</transition>\n");
    }
    for a in &net.arcs {
        let _ = writeln!(
            out,
            "      <arc id=\"{}\" source=\"{}\" target=\"{}\"/>",
            text(&a.id),
            text(&a.source),
            text(&a.target)
        );
    }
    out.push_str("    </page>\n");
    if !net.final_places.is_empty() {
        out.push_str("    <finalmarkings>\n");
        for p in &net.final_places {
            let _ = writeln!(
                out,
                "      <marking><place idref=\"{}\"><text>1</text></place></marking>",
                text(p)
            );
        }
        out.push_str("    </finalmarkings>\n");
    }
    out.push_str("  </net>\n</pnml>\n");
    out
}

pub fn export(model: &ProcessModel) -> Result<String, PnmlError> {
    to_net(model).map(|n| write_net(&n))
}

/// Parses the first net of a PNML document. Pages are flattened.
pub fn read_net(text: &str) -> Result<PetriNet, PnmlError> {
    let mut reader = Reader::from_str(text);
    let xml_err = |reader: &Reader<&[u8]>, e: &dyn std::fmt::Display| PnmlError::Xml {
        position: reader.buffer_position(),
        message: e.to_string(),
    };
    let mut net: Option<PetriNet> = None;
    let mut path: Vec<String> = Vec::new();
    let mut current: Option<String> = None;
    let mut marking_place: Option<String> = None;
    let mut buf_text = String::new();

    loop {
        let event = reader.read_event().map_err(|e| xml_err(&reader, &e))?;
        let (start, empty) = match &event {
            XmlEvent::Start(e) => (Some(e.clone()), false),
            XmlEvent::Empty(e) => (Some(e.clone()), true),
            _ => (None, false),
        };
        if let Some(e) = start {
            let tag = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
            let mut attrs: BTreeMap<String, String> = BTreeMap::new();
            for a in e.attributes() {
                let a = a.map_err(|err| xml_err(&reader, &err))?;
                let v = a.unescape_value().map_err(|err| xml_err(&reader, &err))?;
                attrs.insert(String::from_utf8_lossy(a.key.local_name().as_ref()).into_owned(), v.into_owned());
            }
            let id = attrs.get("id").cloned().unwrap_or_default();
            let in_net = net.is_some() && path.iter().any(|p| p == "net");
            match tag.as_str() {
                "net" if net.is_none() => {
                    net = Some(PetriNet {
                        id,
                        ..PetriNet::default()
                    })
                }
                "place" if in_net && !path.iter().any(|p| p == "finalmarkings") => {
                    net.as_mut().unwrap().places.push(Place {
                        id: id.clone(),
                        name: String::new(),
                        initial_tokens: 0,
                    });
                    current = Some("place".into());
                }
                "place" if in_net => {
                    marking_place = attrs.get("idref").cloned();
                }
                "transition" if in_net => {
                    net.as_mut().unwrap().transitions.push(Transition {
                        id,
                        label: String::new(),
                        invisible: false,
                        activity: None,
                    });
                    current = Some("transition".into());
                }
                "arc" if in_net => {
                    net.as_mut().unwrap().arcs.push(Arc {
                        id,
                        source: attrs.get("source").cloned().unwrap_or_default(),
                        target: attrs.get("target").cloned().unwrap_or_default(),
                    });
                }
                "toolspecific" if current.as_deref() == Some("transition") => {
                    let t = net.as_mut().unwrap().transitions.last_mut().unwrap();
                    if attrs.get("invisible").map(String::as_str) == Some("true")
                        || attrs.get("activity").map(String::as_str) == Some("$invisible$")
                    {
                        t.invisible = true;
                    } else if let Some(a) = attrs.get("activity") {
                        t.activity = Some(a.clone());
                    }
                }
                _ => {}
            }
            if !empty {
                path.push(tag);
                buf_text.clear();
            } else if tag == "place" || tag == "transition" {
                current = None;
            }
            continue;
        }
        match event {
            XmlEvent::Text(t) => {
                buf_text = t.unescape().map_err(|e| xml_err(&reader, &e))?.trim().to_owned();
            }
            XmlEvent::CData(t) => {
                buf_text = String::from_utf8_lossy(&t.into_inner()).trim().to_owned();
            }
            XmlEvent::End(_) => {
                let tag = path.pop().unwrap_or_default();
                if tag == "text" {
                    let parent = path.last().map(String::as_str);
                    let grand = path.len().checked_sub(2).map(|i| path[i].as_str());
                    if let Some(n) = net.as_mut() {
                        match (grand, parent, current.as_deref()) {
                            (Some("net"), Some("name"), _) => n.name = buf_text.clone(),
                            (Some("place"), Some("name"), Some("place")) => {
                                n.places.last_mut().unwrap().name = buf_text.clone()
                            }
                            (Some("place"), Some("initialMarking"), Some("place")) => {
                                n.places.last_mut().unwrap().initial_tokens =
                                    buf_text.parse().unwrap_or(0)
                            }
                            (Some("transition"), Some("name"), Some("transition")) => {
                                n.transitions.last_mut().unwrap().label = buf_text.clone()
                            }
                            (Some("marking"), Some("place"), _) => {
                                if let (Some(p), Ok(k)) = (&marking_place, buf_text.parse::<u32>()) {
                                    if k > 0 {
                                        n.final_places.push(p.clone());
                                    }
                                }
                            }
                            _ => {}
                        }
                    }
                } else if tag == "place" || tag == "transition" {
                    current = None;
                } else if tag == "net" && net.is_some() {
                    break;
                }
            }
            XmlEvent::Eof => break,
            _ => {}
        }
    }
    let mut net = net.ok_or(PnmlError::NoNet)?;
    for t in &mut net.transitions {
        if t.activity.is_none() && !t.invisible && t.label.is_empty() {
            t.invisible = true;
        }
    }
    Ok(net)
}

/// Converts a net into a process model. Places with no input become start
/// events, places with no output end events, other places exclusive
/// gateways; visible transitions become activities and invisible ones
/// parallel gateways. Gateways with one input and one output are removed
/// where the resulting sequence is allowed. The model is not validated.
pub fn net_to_model(net: &PetriNet) -> Result<ProcessModel, PnmlError> {
    let mut is_place: HashMap<&str, bool> = HashMap::new();
    for p in &net.places {
        is_place.insert(&p.id, true);
    }
    for t in &net.transitions {
        is_place.insert(&t.id, false);
    }
    let mut fan_in: HashMap<&str, usize> = HashMap::new();
    let mut fan_out: HashMap<&str, usize> = HashMap::new();
    for a in &net.arcs {
        let (Some(&s), Some(&t)) = (is_place.get(a.source.as_str()), is_place.get(a.target.as_str())) else {
            let node = if is_place.contains_key(a.source.as_str()) { &a.target } else { &a.source };
            return Err(PnmlError::DanglingArc {
                arc: a.id.clone(),
                node: node.clone(),
            });
        };
        if s == t {
            return Err(PnmlError::BadArc {
                arc: a.id.clone(),
                kind: if s { "place" } else { "transition" },
            });
        }
        *fan_out.entry(&a.source).or_default() += 1;
        *fan_in.entry(&a.target).or_default() += 1;
    }
    let id_name = if net.id.is_empty() { "imported" } else { net.id.as_str() };
    let mut d = ModelDraft::new(id_name, if net.name.is_empty() { id_name } else { net.name.as_str() });
    // node id -> (entry component, exit component)
    let mut ends: HashMap<&str, (ComponentId, ComponentId)> = HashMap::new();
    let split_mixed = |d: &mut ModelDraft, id: &str, kind: GatewayKind| {
        let join = ComponentId::new(format!("{id}__join"));
        let split = ComponentId::new(format!("{id}__split"));
        d.gateway(join.clone(), kind).gateway(split.clone(), kind);
        d.sequence(join.clone(), split.clone());
        (join, split)
    };
    for p in &net.places {
        let i = fan_in.get(p.id.as_str()).copied().unwrap_or(0);
        let o = fan_out.get(p.id.as_str()).copied().unwrap_or(0);
        let id = ComponentId::new(p.id.clone());
        let span = if i == 0 {
            d.start_event(id.clone());
            (id.clone(), id)
        } else if o == 0 {
            d.end_event(id.clone());
            (id.clone(), id)
        } else if i > 1 && o > 1 {
            split_mixed(&mut d, &p.id, GatewayKind::Exclusive)
        } else {
            d.gateway(id.clone(), GatewayKind::Exclusive);
            (id.clone(), id)
        };
        ends.insert(&p.id, span);
    }
    for t in &net.transitions {
        let i = fan_in.get(t.id.as_str()).copied().unwrap_or(0);
        let o = fan_out.get(t.id.as_str()).copied().unwrap_or(0);
        let id = ComponentId::new(t.id.clone());
        let span = if t.invisible {
            if i > 1 && o > 1 {
                split_mixed(&mut d, &t.id, GatewayKind::Parallel)
            } else {
                d.gateway(id.clone(), GatewayKind::Parallel);
                (id.clone(), id)
            }
        } else {
            let name = if t.label.is_empty() { t.id.clone() } else { t.label.clone() };
            let act_id = ComponentId::new(t.activity.clone().unwrap_or_else(|| t.id.clone()));
            d.activity(Activity::new(act_id.clone(), name));
            let entry = if i > 1 {
                let j = ComponentId::new(format!("{}__join", t.id));
                d.gateway(j.clone(), GatewayKind::Parallel).sequence(j.clone(), act_id.clone());
                j
            } else {
                act_id.clone()
            };
            let exit = if o > 1 {
                let s = ComponentId::new(format!("{}__split", t.id));
                d.gateway(s.clone(), GatewayKind::Parallel).sequence(act_id.clone(), s.clone());
                s
            } else {
                act_id
            };
            (entry, exit)
        };
        ends.insert(&t.id, span);
    }
    for a in &net.arcs {
        let from = ends[a.source.as_str()].1.clone();
        let to = ends[a.target.as_str()].0.clone();
        d.sequence(from, to);
    }
    remove_pass_through(&mut d);
    Ok(d.into_model())
}

fn kind_in(d: &ModelDraft, id: &ComponentId) -> Option<NodeKind> {
    if d.start_events.contains(id) {
        Some(NodeKind::StartEvent)
    } else if d.end_events.contains(id) {
        Some(NodeKind::EndEvent)
    } else if d.activities.iter().any(|a| &a.id == id) {
        Some(NodeKind::Activity)
    } else {
        d.gateways.iter().find(|g| &g.id == id).map(|g| NodeKind::Gateway(g.kind))
    }
}

fn allowed(source: NodeKind, target: NodeKind) -> bool {
    use NodeKind::*;
    matches!(
        (source, target),
        (StartEvent, Activity)
            | (Activity, EndEvent)
            | (Activity, Activity)
            | (Activity, Gateway(_))
            | (Gateway(_), Gateway(_))
            | (Gateway(_), Activity)
    )
}

fn remove_pass_through(d: &mut ModelDraft) {
    loop {
        let candidate = d.gateways.iter().map(|g| g.id.clone()).find(|g| {
            let ins: Vec<&Sequence> = d.sequences.iter().filter(|s| &s.target == g).collect();
            let outs: Vec<&Sequence> = d.sequences.iter().filter(|s| &s.source == g).collect();
            if ins.len() != 1 || outs.len() != 1 {
                return false;
            }
            let (p, s) = (&ins[0].source, &outs[0].target);
            p != s
                && !d.sequences.iter().any(|x| &x.source == p && &x.target == s)
                && matches!((kind_in(d, p), kind_in(d, s)), (Some(a), Some(b)) if allowed(a, b))
        });
        let Some(g) = candidate else { break };
        let p = d.sequences.iter().find(|s| s.target == g).unwrap().source.clone();
        let s = d.sequences.iter().find(|x| x.source == g).unwrap().target.clone();
        let at = d.sequences.iter().position(|x| x.target == g).unwrap();
        d.sequences.retain(|x| x.source != g && x.target != g);
        d.sequences.insert(at.min(d.sequences.len()), Sequence::new(p, s));
        d.gateways.retain(|x| x.id != g);
    }
}

/// Parses a PNML document into a process model.
pub fn import(text: &str) -> Result<ProcessModel, PnmlError> {
    net_to_model(&read_net(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDraft;

    fn minimal() -> ProcessModel {
        let mut d = ModelDraft::new("m", "minimal");
        d.start_event("s")
            .end_event("e")
            .activity(Activity::new("a", "Activity A"))
            .sequence("s", "a")
            .sequence("a", "e");
        d.into_model()
    }

    fn xor_block() -> ProcessModel {
        let mut d = ModelDraft::new("m", "xor");
        d.start_event("s").end_event("e");
        for (id, name) in [("a", "A"), ("b", "B"), ("c", "C"), ("z", "Z")] {
            d.activity(Activity::new(id, name));
        }
        d.gateway("x1", GatewayKind::Exclusive)
            .gateway("x2", GatewayKind::Exclusive)
            .sequence("s", "a")
            .sequence("a", "x1")
            .sequence("x1", "b")
            .sequence("x1", "c")
            .sequence("b", "x2")
            .sequence("c", "x2")
            .sequence("x2", "z")
            .sequence("z", "e");
        d.into_model()
    }

    #[test]
    fn minimal_translation() {
        let net = to_net(&minimal()).unwrap();
        assert_eq!(net.places.len(), 2);
        assert_eq!(net.transitions.len(), 1);
        assert_eq!(net.transitions[0].label, "Activity A");
        assert_eq!(net.transitions[0].activity.as_deref(), Some("a"));
        let marked: Vec<_> = net.places.iter().filter(|p| p.initial_tokens == 1).collect();
        assert_eq!(marked.len(), 1);
        assert_eq!(marked[0].id, "p_s");
        assert_eq!(net.final_places, ["p_e"]);
    }

    #[test]
    fn xor_split_is_a_place_with_two_outputs() {
        let net = to_net(&xor_block()).unwrap();
        let outs = net.arcs.iter().filter(|a| a.source == "p_x1").count();
        assert_eq!(outs, 2);
        assert!(net.arcs.iter().any(|a| a.source == "p_x1" && a.target == "t_b"));
    }

    #[test]
    fn document_round_trips_through_reader() {
        let net = to_net(&xor_block()).unwrap();
        let text = write_net(&net);
        assert_eq!(read_net(&text).unwrap(), net);
        assert_eq!(export(&xor_block()).unwrap(), text);
    }

    #[test]
    fn import_recovers_exported_model() {
        for m in [minimal(), xor_block()] {
            let back = import(&export(&m).unwrap()).unwrap();
            assert!(back.validate().is_valid(), "{}", back.validate());
            assert_eq!(back.activities().len(), m.activities().len());
            assert_eq!(back.alphabet(), m.alphabet());
            assert_eq!(back.sequences().len(), m.sequences().len());
        }
    }

    #[test]
    fn import_random_models_validates() {
        for seed in 0..100 {
            let m = crate::generate_model(&crate::GrammarConfig { seed, ..Default::default() }).unwrap();
            let back = import(&export(&m).unwrap()).unwrap();
            assert!(back.validate().is_valid(), "seed {seed}: {}", back.validate());
            assert_eq!(back.alphabet(), m.alphabet());
        }
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(read_net("<pnml></pnml>"), Err(PnmlError::NoNet)));
        assert!(matches!(read_net("<pnml><net id=\"x\"><page>"), Ok(_) | Err(PnmlError::Xml { .. })));
        let bad = "<pnml><net id=\"n\"><page id=\"p\"><place id=\"a\"/><arc id=\"x\" source=\"a\" target=\"zz\"/></page></net></pnml>";
        assert!(matches!(import(bad), Err(PnmlError::DanglingArc { .. })));
        let mut d = ModelDraft::new("m", "bad");
        d.start_event("s");
        assert!(matches!(export(&d.into_model()), Err(PnmlError::InvalidModel(_))));
    }
}
