//! Independent oracles shared by integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use quick_xml::events::Event;
use quick_xml::Reader;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper tail probability of Pearson's statistic for `observed` against
/// `expected` probabilities.
pub fn chi_square_p(observed: &[u64], expected: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut df = 0usize;
    for (&o, &p) in observed.iter().zip(expected) {
        if p <= 0.0 {
            assert_eq!(o, 0, "observed an impossible outcome");
            continue;
        }
        let e = p * n as f64;
        stat += (o as f64 - e).powi(2) / e;
        df += 1;
    }
    if df < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((df - 1) as f64).unwrap().cdf(stat)
}

fn attrs(e: &quick_xml::events::BytesStart) -> HashMap<String, String> {
    e.attributes()
        .map(|a| {
            let a = a.unwrap();
            (
                String::from_utf8(a.key.as_ref().to_vec()).unwrap(),
                a.unescape_value().unwrap().into_owned(),
            )
        })
        .collect()
}

/// A parsed PNML net.
#[derive(Debug, Default)]
pub struct Net {
    pub places: Vec<String>,
    pub initial: Vec<String>,
    pub finals: Vec<String>,
    /// transition id -> visible label
    pub labels: HashMap<String, Option<String>>,
    pub pre: HashMap<String, Vec<String>>,
    pub post: HashMap<String, Vec<String>>,
}

pub fn parse_pnml(text: &str) -> Net {
    let mut r = Reader::from_str(text);
    let mut net = Net::default();
    let mut stack: Vec<String> = Vec::new();
    let mut place: Option<String> = None;
    let mut transition: Option<(String, String, bool)> = None;
    let mut arcs = Vec::new();
    let mut marking_ref: Option<String> = None;
    loop {
        match r.read_event().unwrap() {
            Event::Start(e) => {
                let name = String::from_utf8(e.name().as_ref().to_vec()).unwrap();
                let a = attrs(&e);
                match name.as_str() {
                    "place" if stack.iter().any(|s| s == "finalmarkings") => marking_ref = a.get("idref").cloned(),
                    "place" => {
                        net.places.push(a["id"].clone());
                        place = Some(a["id"].clone());
                    }
                    "transition" => transition = Some((a["id"].clone(), String::new(), false)),
                    _ => {}
                }
                stack.push(name);
            }
            Event::Empty(e) => {
                let name = String::from_utf8(e.name().as_ref().to_vec()).unwrap();
                let a = attrs(&e);
                match name.as_str() {
                    "arc" => arcs.push((a["source"].clone(), a["target"].clone())),
                    "toolspecific" => {
                        if let Some(t) = transition.as_mut() {
                            if a.get("invisible").map(String::as_str) == Some("true") {
                                t.2 = true;
                            }
                        }
                    }
                    "place" => {
                        net.places.push(a["id"].clone());
                    }
                    _ => {}
                }
            }
            Event::Text(t) => {
                let text = t.unescape().unwrap().trim().to_owned();
                let n = stack.len();
                if n >= 2 && stack[n - 1] == "text" {
                    match (stack[n - 2].as_str(), stack.get(n.wrapping_sub(3)).map(String::as_str)) {
                        ("initialMarking", _) if text.parse::<u32>().unwrap_or(0) > 0 => {
                            net.initial.push(place.clone().unwrap())
                        }
                        ("name", Some("transition")) => transition.as_mut().unwrap().1 = text,
                        ("place", Some("marking")) if text.parse::<u32>().unwrap_or(0) > 0 => {
                            net.finals.push(marking_ref.clone().unwrap())
                        }
                        _ => {}
                    }
                }
            }
            Event::End(e) => {
                let name = String::from_utf8(e.name().as_ref().to_vec()).unwrap();
                stack.pop();
                match name.as_str() {
                    "transition" => {
                        let (id, label, invisible) = transition.take().unwrap();
                        net.labels.insert(id.clone(), (!invisible).then_some(label));
                        net.pre.entry(id.clone()).or_default();
                        net.post.entry(id).or_default();
                    }
                    "place" => place = None,
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    for (s, t) in arcs {
        if net.labels.contains_key(&t) {
            net.pre.get_mut(&t).unwrap().push(s);
        } else {
            net.post.get_mut(&s).unwrap().push(t);
        }
    }
    net
}

type Marking = BTreeMap<String, u32>;

fn enabled(net: &Net, m: &Marking, t: &str) -> bool {
    let mut need: HashMap<&str, u32> = HashMap::new();
    for p in &net.pre[t] {
        *need.entry(p).or_default() += 1;
    }
    need.iter().all(|(p, k)| m.get(*p).copied().unwrap_or(0) >= *k)
}

fn fire(net: &Net, m: &Marking, t: &str) -> Marking {
    let mut m = m.clone();
    for p in &net.pre[t] {
        let v = m.get_mut(p).unwrap();
        *v -= 1;
        if *v == 0 {
            m.remove(p);
        }
    }
    for p in &net.post[t] {
        *m.entry(p.clone()).or_default() += 1;
    }
    m
}

const MAX_MARKINGS: usize = 20_000;

fn silent_closure(net: &Net, from: HashSet<Marking>) -> HashSet<Marking> {
    let mut seen = from.clone();
    let mut queue: VecDeque<Marking> = from.into_iter().collect();
    while let Some(m) = queue.pop_front() {
        for (t, label) in &net.labels {
            if label.is_none() && enabled(net, &m, t) {
                let next = fire(net, &m, t);
                if seen.len() < MAX_MARKINGS && seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
    }
    seen
}

/// True when `labels` is a complete firing sequence of `net` from its
/// initial marking to one of its final markings, allowing silent moves.
pub fn replays(net: &Net, labels: &[&str]) -> bool {
    let initial: Marking = net.initial.iter().map(|p| (p.clone(), 1)).collect();
    let mut current = silent_closure(net, HashSet::from([initial]));
    for label in labels {
        let mut next = HashSet::new();
        for m in &current {
            for (t, l) in &net.labels {
                if l.as_deref() == Some(label) && enabled(net, m, t) {
                    next.insert(fire(net, m, t));
                }
            }
        }
        if next.is_empty() {
            return false;
        }
        current = silent_closure(net, next);
    }
    current.iter().any(|m| {
        net.finals
            .iter()
            .any(|f| m.len() == 1 && m.get(f) == Some(&1))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct XesEvent {
    pub activity: String,
    pub timestamp: String,
    pub lifecycle: String,
    /// (type, key, value) of the remaining attributes
    pub attributes: Vec<(String, String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XesTrace {
    pub case_id: String,
    pub events: Vec<XesEvent>,
}

/// Parses the traces of a XES document.
pub fn parse_xes(text: &str) -> Vec<XesTrace> {
    let mut r = Reader::from_str(text);
    let mut traces = Vec::new();
    let mut trace: Option<XesTrace> = None;
    let mut event: Option<XesEvent> = None;
    loop {
        match r.read_event().unwrap() {
            Event::Start(e) if e.name().as_ref() == b"trace" => {
                trace = Some(XesTrace {
                    case_id: String::new(),
                    events: Vec::new(),
                })
            }
            Event::Start(e) if e.name().as_ref() == b"event" => {
                event = Some(XesEvent {
                    activity: String::new(),
                    timestamp: String::new(),
                    lifecycle: String::new(),
                    attributes: Vec::new(),
                })
            }
            Event::Empty(e) => {
                let kind = String::from_utf8(e.name().as_ref().to_vec()).unwrap();
                let a = attrs(&e);
                let (Some(key), Some(value)) = (a.get("key"), a.get("value")) else { continue };
                if let Some(ev) = event.as_mut() {
                    match key.as_str() {
                        "concept:name" => ev.activity = value.clone(),
                        "time:timestamp" => ev.timestamp = value.clone(),
                        "lifecycle:transition" => ev.lifecycle = value.clone(),
                        _ => ev.attributes.push((kind, key.clone(), value.clone())),
                    }
                } else if let Some(t) = trace.as_mut() {
                    if key == "concept:name" {
                        t.case_id = value.clone();
                    }
                }
            }
            Event::End(e) if e.name().as_ref() == b"event" => {
                trace.as_mut().unwrap().events.push(event.take().unwrap())
            }
            Event::End(e) if e.name().as_ref() == b"trace" => traces.push(trace.take().unwrap()),
            Event::Eof => break,
            _ => {}
        }
    }
    traces
}
