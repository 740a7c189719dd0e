//! Process-model graph: typed flow objects, data objects and the structural
//! rules a model must satisfy before it can be simulated.
//!
//! A [`ProcessModel`] is immutable. Edits go through a [`ModelDraft`], which is
//! a plain bag of components that can be rearranged freely and then frozen
//! again with [`ModelDraft::into_model`]. Freezing never fails: structural
//! problems are reported by [`ProcessModel::validate`] as data.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::GrammarConfig;
use crate::scripting::{ScriptHook, ScriptHookPair};

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(String);

impl ComponentId {
    pub fn new(value: impl Into<String>) -> Self {
        ComponentId(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ComponentId {
    fn from(value: &str) -> Self {
        ComponentId(value.to_owned())
    }
}

impl From<String> for ComponentId {
    fn from(value: String) -> Self {
        ComponentId(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayKind {
    Exclusive,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gateway {
    pub id: ComponentId,
    pub kind: GatewayKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activity {
    pub id: ComponentId,
    pub name: String,
    pub time_profile: Option<ScriptHookPair>,
}

impl Activity {
    pub fn new(id: impl Into<ComponentId>, name: impl Into<String>) -> Self {
        Activity {
            id: id.into(),
            name: name.into(),
            time_profile: None,
        }
    }

    pub fn with_time_profile(mut self, profile: ScriptHookPair) -> Self {
        self.time_profile = Some(profile);
        self
    }

    /// An activity without a duration hook produces a single event.
    pub fn is_instantaneous(&self) -> bool {
        self.time_profile
            .as_ref()
            .map_or(true, |p| p.time_lasted.is_none())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataObjectKind {
    Plain,
    DynamicInteger,
    DynamicString,
}

impl DataObjectKind {
    pub fn is_dynamic(self) -> bool {
        !matches!(self, DataObjectKind::Plain)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataObject {
    pub id: ComponentId,
    pub name: String,
    pub kind: DataObjectKind,
    pub plain_value: Option<String>,
    pub generator: Option<ScriptHook>,
}

impl DataObject {
    pub fn plain(
        id: impl Into<ComponentId>,
        name: impl Into<String>,
        value: impl Into<String>,
    ) -> Self {
        DataObject {
            id: id.into(),
            name: name.into(),
            kind: DataObjectKind::Plain,
            plain_value: Some(value.into()),
            generator: None,
        }
    }

    pub fn dynamic(
        id: impl Into<ComponentId>,
        name: impl Into<String>,
        kind: DataObjectKind,
        generator: ScriptHook,
    ) -> Self {
        DataObject {
            id: id.into(),
            name: name.into(),
            kind,
            plain_value: None,
            generator: Some(generator),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// The value must be observed before the activity runs.
    Required,
    /// The activity writes the value.
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    pub activity: ComponentId,
    pub data_object: ComponentId,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sequence {
    pub source: ComponentId,
    pub target: ComponentId,
}

impl Sequence {
    pub fn new(source: impl Into<ComponentId>, target: impl Into<ComponentId>) -> Self {
        Sequence {
            source: source.into(),
            target: target.into(),
        }
    }
}

/// Kind of a flow object, i.e. anything a sequence may connect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    StartEvent,
    EndEvent,
    Activity,
    Gateway(GatewayKind),
}

impl NodeKind {
    fn class(self) -> NodeClass {
        match self {
            NodeKind::StartEvent => NodeClass::Start,
            NodeKind::EndEvent => NodeClass::End,
            NodeKind::Activity => NodeClass::Activity,
            NodeKind::Gateway(_) => NodeClass::Gateway,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeClass {
    Start,
    End,
    Activity,
    Gateway,
}

/// The pairs a sequence is allowed to connect.
fn sequence_allowed(source: NodeKind, target: NodeKind) -> bool {
    use NodeClass::*;
    matches!(
        (source.class(), target.class()),
        (Start, Activity)
            | (Activity, End)
            | (Activity, Activity)
            | (Activity, Gateway)
            | (Gateway, Gateway)
            | (Gateway, Activity)
    )
}

/// Where a model came from, kept so exported artifacts can be reproduced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grammar: Option<GrammarConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution_p_replace: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown component `{0}`")]
    UnknownComponent(ComponentId),
}

/// Mutable, unchecked collection of model components.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelDraft {
    pub id: ComponentId,
    pub name: String,
    pub start_events: Vec<ComponentId>,
    pub end_events: Vec<ComponentId>,
    pub activities: Vec<Activity>,
    pub gateways: Vec<Gateway>,
    pub data_objects: Vec<DataObject>,
    pub sequences: Vec<Sequence>,
    pub associations: Vec<Association>,
    pub provenance: Option<Provenance>,
}

impl ModelDraft {
    pub fn new(id: impl Into<ComponentId>, name: impl Into<String>) -> Self {
        ModelDraft {
            id: id.into(),
            name: name.into(),
            ..ModelDraft::default()
        }
    }

    pub fn start_event(&mut self, id: impl Into<ComponentId>) -> &mut Self {
        self.start_events.push(id.into());
        self
    }

    pub fn end_event(&mut self, id: impl Into<ComponentId>) -> &mut Self {
        self.end_events.push(id.into());
        self
    }

    pub fn activity(&mut self, activity: Activity) -> &mut Self {
        self.activities.push(activity);
        self
    }

    pub fn gateway(&mut self, id: impl Into<ComponentId>, kind: GatewayKind) -> &mut Self {
        self.gateways.push(Gateway {
            id: id.into(),
            kind,
        });
        self
    }

    pub fn data_object(&mut self, object: DataObject) -> &mut Self {
        self.data_objects.push(object);
        self
    }

    pub fn sequence(
        &mut self,
        source: impl Into<ComponentId>,
        target: impl Into<ComponentId>,
    ) -> &mut Self {
        self.sequences.push(Sequence::new(source, target));
        self
    }

    pub fn association(
        &mut self,
        activity: impl Into<ComponentId>,
        data_object: impl Into<ComponentId>,
        direction: Direction,
    ) -> &mut Self {
        self.associations.push(Association {
            activity: activity.into(),
            data_object: data_object.into(),
            direction,
        });
        self
    }

    /// Removes an activity with its incident sequences, its associations and
    /// the data objects those associations referenced.
    pub fn remove_activity(&mut self, id: &ComponentId) {
        self.activities.retain(|a| &a.id != id);
        self.sequences
            .retain(|s| &s.source != id && &s.target != id);
        let orphaned: HashSet<ComponentId> = self
            .associations
            .iter()
            .filter(|a| &a.activity == id)
            .map(|a| a.data_object.clone())
            .collect();
        self.associations.retain(|a| &a.activity != id);
        self.data_objects.retain(|d| !orphaned.contains(&d.id));
    }

    pub fn into_model(self) -> ProcessModel {
        ProcessModel::from_draft(self)
    }
}

#[derive(Debug, Clone, Default)]
struct ModelIndex {
    kinds: HashMap<ComponentId, NodeKind>,
    outgoing: HashMap<ComponentId, Vec<ComponentId>>,
    incoming: HashMap<ComponentId, Vec<ComponentId>>,
    activities: HashMap<ComponentId, usize>,
    data_objects: HashMap<ComponentId, usize>,
    associations_by_activity: HashMap<ComponentId, Vec<usize>>,
}

/// A process model: flow objects connected by sequences, plus data objects
/// attached to activities through associations.
#[derive(Debug, Clone)]
pub struct ProcessModel {
    draft: ModelDraft,
    index: ModelIndex,
}

impl PartialEq for ProcessModel {
    fn eq(&self, other: &Self) -> bool {
        self.draft == other.draft
    }
}

impl ProcessModel {
    fn from_draft(draft: ModelDraft) -> Self {
        let mut index = ModelIndex::default();
        for id in &draft.start_events {
            index.kinds.entry(id.clone()).or_insert(NodeKind::StartEvent);
        }
        for id in &draft.end_events {
            index.kinds.entry(id.clone()).or_insert(NodeKind::EndEvent);
        }
        for (i, a) in draft.activities.iter().enumerate() {
            index.kinds.entry(a.id.clone()).or_insert(NodeKind::Activity);
            index.activities.entry(a.id.clone()).or_insert(i);
        }
        for g in &draft.gateways {
            index
                .kinds
                .entry(g.id.clone())
                .or_insert(NodeKind::Gateway(g.kind));
        }
        for (i, d) in draft.data_objects.iter().enumerate() {
            index.data_objects.entry(d.id.clone()).or_insert(i);
        }
        for s in &draft.sequences {
            index
                .outgoing
                .entry(s.source.clone())
                .or_default()
                .push(s.target.clone());
            index
                .incoming
                .entry(s.target.clone())
                .or_default()
                .push(s.source.clone());
        }
        for (i, a) in draft.associations.iter().enumerate() {
            index
                .associations_by_activity
                .entry(a.activity.clone())
                .or_default()
                .push(i);
        }
        ProcessModel { draft, index }
    }

    pub fn to_draft(&self) -> ModelDraft {
        self.draft.clone()
    }

    pub fn id(&self) -> &ComponentId {
        &self.draft.id
    }

    pub fn name(&self) -> &str {
        &self.draft.name
    }

    pub fn start_events(&self) -> &[ComponentId] {
        &self.draft.start_events
    }

    pub fn end_events(&self) -> &[ComponentId] {
        &self.draft.end_events
    }

    pub fn activities(&self) -> &[Activity] {
        &self.draft.activities
    }

    pub fn gateways(&self) -> &[Gateway] {
        &self.draft.gateways
    }

    pub fn data_objects(&self) -> &[DataObject] {
        &self.draft.data_objects
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.draft.sequences
    }

    pub fn associations(&self) -> &[Association] {
        &self.draft.associations
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.draft.provenance.as_ref()
    }

    pub fn kind_of(&self, id: &ComponentId) -> Option<NodeKind> {
        self.index.kinds.get(id).copied()
    }

    pub fn activity(&self, id: &ComponentId) -> Option<&Activity> {
        self.index
            .activities
            .get(id)
            .map(|&i| &self.draft.activities[i])
    }

    pub fn data_object(&self, id: &ComponentId) -> Option<&DataObject> {
        self.index
            .data_objects
            .get(id)
            .map(|&i| &self.draft.data_objects[i])
    }

    /// Associations whose activity end is `activity`.
    pub fn associations_of<'a>(
        &'a self,
        activity: &ComponentId,
    ) -> impl Iterator<Item = &'a Association> + 'a {
        self.index
            .associations_by_activity
            .get(activity)
            .into_iter()
            .flatten()
            .map(move |&i| &self.draft.associations[i])
    }

    /// Sequence predecessors of `c`, in sequence insertion order.
    pub fn incoming(&self, c: &ComponentId) -> Result<&[ComponentId], ModelError> {
        self.neighbours(c, &self.index.incoming)
    }

    /// Sequence successors of `c`, in sequence insertion order.
    pub fn outgoing(&self, c: &ComponentId) -> Result<&[ComponentId], ModelError> {
        self.neighbours(c, &self.index.outgoing)
    }

    fn neighbours<'a>(
        &'a self,
        c: &ComponentId,
        map: &'a HashMap<ComponentId, Vec<ComponentId>>,
    ) -> Result<&'a [ComponentId], ModelError> {
        if !self.index.kinds.contains_key(c) {
            return Err(ModelError::UnknownComponent(c.clone()));
        }
        Ok(map.get(c).map(Vec::as_slice).unwrap_or(&[]))
    }

    /// Distinct activity names, the model's alphabet.
    pub fn alphabet(&self) -> HashSet<String> {
        self.draft.activities.iter().map(|a| a.name.clone()).collect()
    }

    /// Every id in the model (flow objects and data objects).
    pub fn component_ids(&self) -> impl Iterator<Item = &ComponentId> {
        self.draft
            .start_events
            .iter()
            .chain(&self.draft.end_events)
            .chain(self.draft.activities.iter().map(|a| &a.id))
            .chain(self.draft.gateways.iter().map(|g| &g.id))
            .chain(self.draft.data_objects.iter().map(|d| &d.id))
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    DuplicateId,
    EmptyActivityName,
    /// A sequence connects a pair of kinds outside the permitted set.
    ForbiddenSequence,
    DanglingSequence,
    SelfLoop,
    DuplicateSequence,
    /// A data object takes part in more than one association.
    DataObjectCardinality,
    DanglingAssociation,
    DataObjectKind,
    MissingStartEvent,
    MissingEndEvent,
    Unreachable,
    CannotReachEnd,
    /// A gateway that is both a split and a join.
    MixedGateway,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub components: Vec<ComponentId>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, code: ViolationCode) -> usize {
        self.violations.iter().filter(|v| v.code == code).count()
    }

    fn push(&mut self, code: ViolationCode, components: Vec<ComponentId>, message: String) {
        self.violations.push(Violation {
            code,
            components,
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{:?}: {}", v.code, v.message)?;
        }
        Ok(())
    }
}

fn validate(model: &ProcessModel) -> ValidationReport {
    use ViolationCode::*;
    let d = &model.draft;
    let mut report = ValidationReport::default();

    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    for id in model.component_ids() {
        if !seen.insert(id) && reported.insert(id) {
            report.push(
                DuplicateId,
                vec![id.clone()],
                format!("id `{id}` is used by more than one component"),
            );
        }
    }

    for a in &d.activities {
        if a.name.trim().is_empty() {
            report.push(
                EmptyActivityName,
                vec![a.id.clone()],
                format!("activity `{}` has an empty name", a.id),
            );
        }
    }

    let mut edges = HashSet::new();
    for s in &d.sequences {
        let ids = vec![s.source.clone(), s.target.clone()];
        if s.source == s.target {
            report.push(SelfLoop, ids, format!("sequence `{}` -> itself", s.source));
            continue;
        }
        match (model.kind_of(&s.source), model.kind_of(&s.target)) {
            (Some(src), Some(tgt)) => {
                if !sequence_allowed(src, tgt) {
                    report.push(
                        ForbiddenSequence,
                        ids,
                        format!(
                            "sequence `{}` ({src:?}) -> `{}` ({tgt:?}) is not a permitted connection",
                            s.source, s.target
                        ),
                    );
                    continue;
                }
            }
            _ => {
                report.push(
                    DanglingSequence,
                    ids,
                    format!(
                        "sequence `{}` -> `{}` references an unknown flow object",
                        s.source, s.target
                    ),
                );
                continue;
            }
        }
        if !edges.insert((&s.source, &s.target)) {
            report.push(
                DuplicateSequence,
                ids,
                format!("sequence `{}` -> `{}` appears twice", s.source, s.target),
            );
        }
    }

    let mut per_object: HashMap<&ComponentId, usize> = HashMap::new();
    for a in &d.associations {
        let known_activity = model.kind_of(&a.activity) == Some(NodeKind::Activity);
        let known_object = model.data_object(&a.data_object).is_some();
        if !known_activity || !known_object {
            report.push(
                DanglingAssociation,
                vec![a.activity.clone(), a.data_object.clone()],
                format!(
                    "association `{}` <-> `{}` references an unknown component",
                    a.activity, a.data_object
                ),
            );
        }
        *per_object.entry(&a.data_object).or_default() += 1;
    }
    for obj in &d.data_objects {
        if per_object.get(&obj.id).copied().unwrap_or(0) > 1 {
            report.push(
                DataObjectCardinality,
                vec![obj.id.clone()],
                format!("data object `{}` takes part in more than one association", obj.id),
            );
        }
        let consistent = match obj.kind {
            crate::model::DataObjectKind::Plain => obj.plain_value.is_some() && obj.generator.is_none(),
            _ => obj.plain_value.is_none() && obj.generator.is_some(),
        };
        if !consistent {
            report.push(
                DataObjectKind,
                vec![obj.id.clone()],
                format!(
                    "data object `{}` of kind {:?} must carry {}",
                    obj.id,
                    obj.kind,
                    if obj.kind.is_dynamic() {
                        "a generator and no plain value"
                    } else {
                        "a plain value and no generator"
                    }
                ),
            );
        }
    }

    if d.start_events.is_empty() {
        report.push(MissingStartEvent, vec![], "model has no start event".into());
    }
    if d.end_events.is_empty() {
        report.push(MissingEndEvent, vec![], "model has no end event".into());
    }

    for g in &d.gateways {
        let ins = model.index.incoming.get(&g.id).map_or(0, Vec::len);
        let outs = model.index.outgoing.get(&g.id).map_or(0, Vec::len);
        if ins > 1 && outs > 1 {
            report.push(
                MixedGateway,
                vec![g.id.clone()],
                format!(
                    "gateway `{}` is both a split and a join ({ins} in, {outs} out)",
                    g.id
                ),
            );
        }
    }

    let forward = reach(&d.start_events, &model.index.outgoing);
    let backward = reach(&d.end_events, &model.index.incoming);
    let flow_objects = d
        .activities
        .iter()
        .map(|a| &a.id)
        .chain(d.gateways.iter().map(|g| &g.id));
    for id in flow_objects {
        if !forward.contains(id) {
            report.push(
                Unreachable,
                vec![id.clone()],
                format!("`{id}` is not reachable from any start event"),
            );
        }
        if !backward.contains(id) {
            report.push(
                CannotReachEnd,
                vec![id.clone()],
                format!("`{id}` cannot reach any end event"),
            );
        }
    }

    report
}

fn reach<'a>(
    roots: &'a [ComponentId],
    adjacency: &'a HashMap<ComponentId, Vec<ComponentId>>,
) -> HashSet<&'a ComponentId> {
    let mut seen: HashSet<&ComponentId> = roots.iter().collect();
    let mut queue: VecDeque<&ComponentId> = roots.iter().collect();
    while let Some(n) = queue.pop_front() {
        for m in adjacency.get(n).into_iter().flatten() {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen
}
