//! Random generation of block-structured process models.
//!
//! Models are strings of a stochastic context-free grammar:
//!
//! ```text
//! P      -> e_start ; G ; e_end
//! G      -> G' | G_loop
//! G'     -> A | (G ; G) | (A ; G_and ; A) | (A ; G_xor ; A) | ε
//! G_and  -> G ∧ G | G ∧ G_and
//! G_xor  -> G × G | G × G_xor
//! G_loop -> (G' ↺ G)
//! A      -> A_act | A_do
//! A_do   -> A_act <- D | A_act -> D
//! ```
//!
//! Sampling a derivation tree is separate from turning it into a graph
//! ([`Materializer`]) so that hand-written trees and evolution fragments go
//! through the same construction.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Activity, ComponentId, DataObject, Direction, GatewayKind, ModelDraft, NodeKind,
    ProcessModel, Provenance,
};
use crate::naming;
use crate::scripting::random_lowercase;

/// Attempts at deriving a top-level graph that starts and ends with an
/// activity before falling back to a single activity.
pub const MAX_ROOT_ATTEMPTS: usize = 1_000;

/// Length of generated plain data-object values.
pub const PLAIN_VALUE_LEN: usize = 8;

/// Relative weights of the five `G'` productions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductionWeights {
    pub activity: f64,
    pub sequence: f64,
    pub parallel: f64,
    pub exclusive: f64,
    pub skip: f64,
}

impl ProductionWeights {
    pub fn new(activity: f64, sequence: f64, parallel: f64, exclusive: f64, skip: f64) -> Self {
        ProductionWeights {
            activity,
            sequence,
            parallel,
            exclusive,
            skip,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.activity,
            self.sequence,
            self.parallel,
            self.exclusive,
            self.skip,
        ]
    }

    /// Probabilities of `A`, `(G;G)`, AND block, XOR block, `ε`.
    pub fn normalized(&self) -> [f64; 5] {
        let w = self.as_array();
        let total: f64 = w.iter().sum();
        w.map(|x| x / total)
    }
}

impl Default for ProductionWeights {
    fn default() -> Self {
        ProductionWeights::new(0.35, 0.3, 0.15, 0.15, 0.05)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrammarConfig {
    /// Probability of `G -> G_loop`.
    pub p_loop: f64,
    pub weights: ProductionWeights,
    pub max_and_branches: u32,
    pub max_xor_branches: u32,
    /// Probability of `A -> A_do`.
    pub p_data_object: f64,
    /// Probability of `A_do` choosing a required (rather than generated) object.
    pub p_required: f64,
    pub max_depth: u32,
    pub seed: u64,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            p_loop: 0.1,
            weights: ProductionWeights::default(),
            max_and_branches: 3,
            max_xor_branches: 3,
            p_data_object: 0.1,
            p_required: 0.5,
            max_depth: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("invalid grammar configuration: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> GrammarError {
    GrammarError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

fn unit(field: &'static str, value: f64) -> Result<(), GrammarError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(invalid(field, format!("must lie in [0, 1], got {value}")))
    }
}

impl GrammarConfig {
    pub fn validate(&self) -> Result<(), GrammarError> {
        unit("p_loop", self.p_loop)?;
        if self.p_loop >= 1.0 {
            return Err(invalid("p_loop", "must be below 1, otherwise derivations never end"));
        }
        let names = ["activity", "sequence", "parallel", "exclusive", "skip"];
        for (name, w) in names.iter().zip(self.weights.as_array()) {
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid("weights", format!("`{name}` must be a non-negative number")));
            }
        }
        if self.weights.as_array().iter().sum::<f64>() <= 0.0 {
            return Err(invalid("weights", "at least one weight must be positive"));
        }
        if self.max_and_branches < 2 {
            return Err(invalid("max_and_branches", "must be at least 2"));
        }
        if self.max_xor_branches < 2 {
            return Err(invalid("max_xor_branches", "must be at least 2"));
        }
        unit("p_data_object", self.p_data_object)?;
        unit("p_required", self.p_required)?;
        if self.max_depth < 1 {
            return Err(invalid("max_depth", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NonTerminal {
    /// `P`
    Process,
    /// `G`
    Graph,
    /// `G'`
    SimpleGraph,
    /// `G_loop`
    LoopGraph,
    /// `G_and`
    ParallelBranches,
    /// `G_xor`
    ExclusiveBranches,
    /// `A`
    Activity,
    /// `A_do`
    DataActivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terminal {
    StartEvent,
    EndEvent,
    Activity,
    Empty,
    RequiredData,
    GeneratedData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symbol {
    NonTerminal(NonTerminal),
    Terminal(Terminal),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Production {
    /// `G -> G'`
    Simple,
    /// `G -> G_loop`
    Loop,
    /// `G' -> A`
    Activity,
    /// `G' -> (G ; G)`
    Sequence,
    /// `G' -> (A ; G_and ; A)`
    Parallel,
    /// `G' -> (A ; G_xor ; A)`
    Exclusive,
    /// `G' -> ε`
    Skip,
    /// `G_and -> G ∧ G_and`
    ParallelExtend,
    /// `G_and -> G ∧ G`
    ParallelClose,
    /// `G_xor -> G × G_xor`
    ExclusiveExtend,
    /// `G_xor -> G × G`
    ExclusiveClose,
    /// `A -> A_act`
    PlainActivity,
    /// `A -> A_do`
    DataActivity,
    /// `A_do -> A_act <- D`
    RequiredData,
    /// `A_do -> A_act -> D`
    GeneratedData,
}

/// Context for one production choice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DerivationState {
    /// Number of `G` expansions above the node being expanded.
    pub depth: u32,
    /// Branches already committed by extend productions of the enclosing
    /// AND/XOR block. A block closing now would have `branches + 2` branches.
    pub branches: u32,
}

/// Draws the production for `symbol`.
///
/// Two adjustments override the configured distribution. Once a block holds
/// as many branches as its cap allows, the close production is forced. At
/// `depth >= max_depth` only `G' -> A` and `G' -> ε` remain (0.5 each) and
/// branch blocks always close.
pub fn sample_production<R: Rng + ?Sized>(
    symbol: NonTerminal,
    state: DerivationState,
    config: &GrammarConfig,
    rng: &mut R,
) -> Production {
    let deep = state.depth >= config.max_depth;
    match symbol {
        NonTerminal::Graph => {
            if rng.gen_bool(config.p_loop) {
                Production::Loop
            } else {
                Production::Simple
            }
        }
        NonTerminal::SimpleGraph => {
            let probs = if deep {
                [0.5, 0.0, 0.0, 0.0, 0.5]
            } else {
                config.weights.normalized()
            };
            const CHOICES: [Production; 5] = [
                Production::Activity,
                Production::Sequence,
                Production::Parallel,
                Production::Exclusive,
                Production::Skip,
            ];
            CHOICES[weighted_index(&probs, rng)]
        }
        NonTerminal::ParallelBranches => {
            let capped = deep || state.branches + 2 >= config.max_and_branches;
            if !capped && rng.gen_bool(0.5) {
                Production::ParallelExtend
            } else {
                Production::ParallelClose
            }
        }
        NonTerminal::ExclusiveBranches => {
            let capped = deep || state.branches + 2 >= config.max_xor_branches;
            if !capped && rng.gen_bool(0.5) {
                Production::ExclusiveExtend
            } else {
                Production::ExclusiveClose
            }
        }
        NonTerminal::Activity => {
            if rng.gen_bool(config.p_data_object) {
                Production::DataActivity
            } else {
                Production::PlainActivity
            }
        }
        NonTerminal::DataActivity => {
            if rng.gen_bool(config.p_required) {
                Production::RequiredData
            } else {
                Production::GeneratedData
            }
        }
        NonTerminal::Process | NonTerminal::LoopGraph => {
            unreachable!("{symbol:?} has a single production")
        }
    }
}

fn weighted_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationNode {
    pub symbol: Symbol,
    pub production: Option<Production>,
    pub children: Vec<DerivationNode>,
    pub depth: u32,
}

impl DerivationNode {
    fn leaf(t: Terminal, depth: u32) -> Self {
        DerivationNode {
            symbol: Symbol::Terminal(t),
            production: None,
            children: Vec::new(),
            depth,
        }
    }

    fn inner(nt: NonTerminal, production: Option<Production>, depth: u32, children: Vec<Self>) -> Self {
        DerivationNode {
            symbol: Symbol::NonTerminal(nt),
            production,
            children,
            depth,
        }
    }

    /// Visits the tree in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a DerivationNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    pub fn count_terminals(&self, t: Terminal) -> usize {
        let mut n = 0;
        self.walk(&mut |node| {
            if node.symbol == Symbol::Terminal(t) {
                n += 1;
            }
        });
        n
    }

    /// Hand-building helpers, mostly for fixtures and evolution fragments.
    pub fn activity() -> Self {
        Self::graph_of(Self::simple(Production::Activity, vec![Self::plain_activity()]))
    }

    pub fn activity_with(direction: Direction) -> Self {
        let (p, t) = match direction {
            Direction::Required => (Production::RequiredData, Terminal::RequiredData),
            Direction::Generated => (Production::GeneratedData, Terminal::GeneratedData),
        };
        let data = Self::inner(
            NonTerminal::DataActivity,
            Some(p),
            0,
            vec![Self::leaf(Terminal::Activity, 0), Self::leaf(t, 0)],
        );
        let a = Self::inner(NonTerminal::Activity, Some(Production::DataActivity), 0, vec![data]);
        Self::graph_of(Self::simple(Production::Activity, vec![a]))
    }

    pub fn skip() -> Self {
        Self::graph_of(Self::simple(
            Production::Skip,
            vec![Self::leaf(Terminal::Empty, 0)],
        ))
    }

    pub fn sequence(first: Self, second: Self) -> Self {
        Self::graph_of(Self::simple(Production::Sequence, vec![first, second]))
    }

    /// `(head ; branches[0] ∧ branches[1] ∧ ... ; tail)`; `head` and `tail`
    /// must come from [`DerivationNode::activity`] or `activity_with`.
    pub fn parallel(head: Self, branches: Vec<Self>, tail: Self) -> Self {
        Self::block(Production::Parallel, head, branches, tail)
    }

    pub fn exclusive(head: Self, branches: Vec<Self>, tail: Self) -> Self {
        Self::block(Production::Exclusive, head, branches, tail)
    }

    /// `(body ↺ rollback)`; `body` is a graph whose first expansion is not a loop.
    pub fn looped(body: Self, rollback: Self) -> Self {
        let body = body.into_simple();
        let l = Self::inner(NonTerminal::LoopGraph, None, 0, vec![body, rollback]);
        Self::inner(NonTerminal::Graph, Some(Production::Loop), 0, vec![l])
    }

    fn block(kind: Production, head: Self, branches: Vec<Self>, tail: Self) -> Self {
        assert!(branches.len() >= 2, "a block needs at least two branches");
        let (nt, extend, close) = if kind == Production::Parallel {
            (
                NonTerminal::ParallelBranches,
                Production::ParallelExtend,
                Production::ParallelClose,
            )
        } else {
            (
                NonTerminal::ExclusiveBranches,
                Production::ExclusiveExtend,
                Production::ExclusiveClose,
            )
        };
        let mut it = branches.into_iter().rev();
        let last = it.next().unwrap();
        let before = it.next().unwrap();
        let mut node = Self::inner(nt, Some(close), 0, vec![before, last]);
        for b in it {
            node = Self::inner(nt, Some(extend), 0, vec![b, node]);
        }
        let head = head.into_activity();
        let tail = tail.into_activity();
        Self::graph_of(Self::simple(kind, vec![head, node, tail]))
    }

    fn plain_activity() -> Self {
        Self::inner(
            NonTerminal::Activity,
            Some(Production::PlainActivity),
            0,
            vec![Self::leaf(Terminal::Activity, 0)],
        )
    }

    fn simple(p: Production, children: Vec<Self>) -> Self {
        Self::inner(NonTerminal::SimpleGraph, Some(p), 0, children)
    }

    fn graph_of(simple: Self) -> Self {
        Self::inner(NonTerminal::Graph, Some(Production::Simple), 0, vec![simple])
    }

    fn into_simple(self) -> Self {
        assert_eq!(self.production, Some(Production::Simple), "expected `G -> G'`");
        self.children.into_iter().next().unwrap()
    }

    fn into_activity(self) -> Self {
        let simple = self.into_simple();
        assert_eq!(simple.production, Some(Production::Activity), "expected `G' -> A`");
        simple.children.into_iter().next().unwrap()
    }

    /// Wraps a graph as `P -> e_start ; G ; e_end`.
    pub fn process(graph: Self) -> Self {
        Self::inner(
            NonTerminal::Process,
            None,
            0,
            vec![
                Self::leaf(Terminal::StartEvent, 0),
                graph,
                Self::leaf(Terminal::EndEvent, 0),
            ],
        )
    }
}

/// One production decision, as recorded by [`Deriver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductionChoice {
    pub symbol: NonTerminal,
    pub production: Production,
    pub state: DerivationState,
}

/// Samples derivation trees, optionally recording every choice.
pub struct Deriver<'c, R> {
    config: &'c GrammarConfig,
    rng: R,
    record: Option<Vec<ProductionChoice>>,
}

impl<'c, R: Rng> Deriver<'c, R> {
    pub fn new(config: &'c GrammarConfig, rng: R) -> Self {
        Deriver {
            config,
            rng,
            record: None,
        }
    }

    pub fn recording(mut self) -> Self {
        self.record = Some(Vec::new());
        self
    }

    pub fn choices(&self) -> &[ProductionChoice] {
        self.record.as_deref().unwrap_or(&[])
    }

    pub fn rng(&mut self) -> &mut R {
        &mut self.rng
    }

    pub fn into_rng(self) -> R {
        self.rng
    }

    fn choose(&mut self, symbol: NonTerminal, state: DerivationState) -> Production {
        let production = sample_production(symbol, state, self.config, &mut self.rng);
        if let Some(r) = &mut self.record {
            r.push(ProductionChoice {
                symbol,
                production,
                state,
            });
        }
        production
    }

    /// Samples a `G` subtree whose root sits at `depth`.
    pub fn graph(&mut self, depth: u32) -> DerivationNode {
        let state = DerivationState { depth, branches: 0 };
        let p = self.choose(NonTerminal::Graph, state);
        let child = match p {
            Production::Simple => self.simple_graph(depth),
            Production::Loop => {
                let body = self.simple_graph(depth + 1);
                let rollback = self.graph(depth + 1);
                DerivationNode::inner(NonTerminal::LoopGraph, None, depth, vec![body, rollback])
            }
            _ => unreachable!(),
        };
        DerivationNode::inner(NonTerminal::Graph, Some(p), depth, vec![child])
    }

    fn simple_graph(&mut self, depth: u32) -> DerivationNode {
        let state = DerivationState { depth, branches: 0 };
        let p = self.choose(NonTerminal::SimpleGraph, state);
        let children = match p {
            Production::Activity => vec![self.activity(depth)],
            Production::Sequence => vec![self.graph(depth + 1), self.graph(depth + 1)],
            Production::Parallel | Production::Exclusive => {
                let nt = if p == Production::Parallel {
                    NonTerminal::ParallelBranches
                } else {
                    NonTerminal::ExclusiveBranches
                };
                let head = self.activity(depth);
                let branches = self.branches(nt, depth, 0);
                let tail = self.activity(depth);
                vec![head, branches, tail]
            }
            Production::Skip => vec![DerivationNode::leaf(Terminal::Empty, depth)],
            _ => unreachable!(),
        };
        DerivationNode::inner(NonTerminal::SimpleGraph, Some(p), depth, children)
    }

    fn branches(&mut self, nt: NonTerminal, depth: u32, committed: u32) -> DerivationNode {
        let state = DerivationState {
            depth,
            branches: committed,
        };
        let p = self.choose(nt, state);
        let children = match p {
            Production::ParallelExtend | Production::ExclusiveExtend => {
                let first = self.graph(depth + 1);
                vec![first, self.branches(nt, depth, committed + 1)]
            }
            _ => vec![self.graph(depth + 1), self.graph(depth + 1)],
        };
        DerivationNode::inner(nt, Some(p), depth, children)
    }

    fn activity(&mut self, depth: u32) -> DerivationNode {
        let state = DerivationState { depth, branches: 0 };
        let p = self.choose(NonTerminal::Activity, state);
        let child = match p {
            Production::PlainActivity => DerivationNode::leaf(Terminal::Activity, depth),
            Production::DataActivity => {
                let dp = self.choose(NonTerminal::DataActivity, state);
                let t = if dp == Production::RequiredData {
                    Terminal::RequiredData
                } else {
                    Terminal::GeneratedData
                };
                DerivationNode::inner(
                    NonTerminal::DataActivity,
                    Some(dp),
                    depth,
                    vec![
                        DerivationNode::leaf(Terminal::Activity, depth),
                        DerivationNode::leaf(t, depth),
                    ],
                )
            }
            _ => unreachable!(),
        };
        DerivationNode::inner(NonTerminal::Activity, Some(p), depth, vec![child])
    }
}

/// Entry and exit of a materialized sub-graph; `None` for `ε`.
pub type Span = Option<(ComponentId, ComponentId)>;

/// Turns derivation trees into model components inside a [`ModelDraft`].
pub struct Materializer<'d> {
    pub draft: &'d mut ModelDraft,
    next_id: u64,
    next_activity: usize,
    next_variable: usize,
    taken: HashSet<ComponentId>,
}

impl<'d> Materializer<'d> {
    /// Continues numbering after whatever the draft already holds.
    pub fn new(draft: &'d mut ModelDraft) -> Self {
        let mut taken: HashSet<ComponentId> = HashSet::new();
        taken.extend(draft.start_events.iter().cloned());
        taken.extend(draft.end_events.iter().cloned());
        taken.extend(draft.activities.iter().map(|a| a.id.clone()));
        taken.extend(draft.gateways.iter().map(|g| g.id.clone()));
        taken.extend(draft.data_objects.iter().map(|d| d.id.clone()));
        let next_id = taken
            .iter()
            .filter_map(|id| id.as_str().strip_prefix('n')?.parse::<u64>().ok())
            .max()
            .map_or(0, |n| n + 1);
        let next_activity = draft
            .activities
            .iter()
            .filter_map(|a| naming::activity_index(&a.name))
            .max()
            .map_or(0, |n| n + 1);
        let next_variable = draft
            .data_objects
            .iter()
            .filter_map(|d| naming::variable_index(&d.name))
            .max()
            .map_or(0, |n| n + 1);
        Materializer {
            draft,
            next_id,
            next_activity,
            next_variable,
            taken,
        }
    }

    pub fn fresh_id(&mut self) -> ComponentId {
        loop {
            let id = ComponentId::new(format!("n{}", self.next_id));
            self.next_id += 1;
            if self.taken.insert(id.clone()) {
                return id;
            }
        }
    }

    /// Materializes a `G` (or `G'`) subtree and returns its entry and exit.
    pub fn graph<R: Rng + ?Sized>(&mut self, node: &DerivationNode, rng: &mut R) -> Span {
        match node.symbol {
            Symbol::NonTerminal(NonTerminal::Graph) => self.graph(&node.children[0], rng),
            Symbol::NonTerminal(NonTerminal::LoopGraph) => self.looped(node, rng),
            Symbol::NonTerminal(NonTerminal::SimpleGraph) => self.simple(node, rng),
            other => panic!("not a graph symbol: {other:?}"),
        }
    }

    fn simple<R: Rng + ?Sized>(&mut self, node: &DerivationNode, rng: &mut R) -> Span {
        match node.production {
            Some(Production::Activity) => {
                let id = self.activity(&node.children[0], rng);
                Some((id.clone(), id))
            }
            Some(Production::Sequence) => {
                let first = self.graph(&node.children[0], rng);
                let second = self.graph(&node.children[1], rng);
                match (first, second) {
                    (None, s) | (s, None) => s,
                    (Some((entry, a)), Some((b, exit))) => {
                        self.draft.sequence(a, b);
                        Some((entry, exit))
                    }
                }
            }
            Some(p @ (Production::Parallel | Production::Exclusive)) => {
                let kind = if p == Production::Parallel {
                    GatewayKind::Parallel
                } else {
                    GatewayKind::Exclusive
                };
                let head = self.activity(&node.children[0], rng);
                let mut branch_nodes = Vec::new();
                collect_branches(&node.children[1], &mut branch_nodes);
                let branches: Vec<Span> = branch_nodes
                    .into_iter()
                    .map(|b| self.graph(b, rng))
                    .collect();
                let tail = self.activity(&node.children[2], rng);
                self.block(kind, head.clone(), branches, tail.clone());
                Some((head, tail))
            }
            Some(Production::Skip) => None,
            other => panic!("unexpected production for G': {other:?}"),
        }
    }

    /// Wires `head -> split -> branches -> join -> tail`. Repeated `ε`
    /// branches collapse into one edge; a block left with fewer than two
    /// distinct branches is replaced by a direct connection.
    fn block(&mut self, kind: GatewayKind, head: ComponentId, branches: Vec<Span>, tail: ComponentId) {
        let has_skip = branches.iter().any(Option::is_none);
        let bodies: Vec<(ComponentId, ComponentId)> = branches.into_iter().flatten().collect();
        let distinct = bodies.len() + usize::from(has_skip);
        if distinct < 2 {
            match bodies.into_iter().next() {
                Some((entry, exit)) => {
                    self.draft.sequence(head, entry);
                    self.draft.sequence(exit, tail);
                }
                None => {
                    self.draft.sequence(head, tail);
                }
            }
            return;
        }
        let split = self.fresh_id();
        let join = self.fresh_id();
        self.draft.gateway(split.clone(), kind);
        self.draft.gateway(join.clone(), kind);
        self.draft.sequence(head, split.clone());
        for (entry, exit) in bodies {
            self.draft.sequence(split.clone(), entry);
            self.draft.sequence(exit, join.clone());
        }
        if has_skip {
            self.draft.sequence(split.clone(), join.clone());
        }
        self.draft.sequence(join, tail);
    }

    /// `(body ↺ rollback)` becomes `join -> body -> split`, `split -> rollback
    /// -> join`, with the split's other edge leaving the loop.
    fn looped<R: Rng + ?Sized>(&mut self, node: &DerivationNode, rng: &mut R) -> Span {
        let join = self.fresh_id();
        self.draft.gateway(join.clone(), GatewayKind::Exclusive);
        let body = self.graph(&node.children[0], rng);
        let rollback = self.graph(&node.children[1], rng);
        let split = self.fresh_id();
        self.draft.gateway(split.clone(), GatewayKind::Exclusive);
        match body {
            Some((entry, exit)) => {
                self.draft.sequence(join.clone(), entry);
                self.draft.sequence(exit, split.clone());
            }
            None => {
                self.draft.sequence(join.clone(), split.clone());
            }
        }
        match rollback {
            Some((entry, exit)) => {
                self.draft.sequence(split.clone(), entry);
                self.draft.sequence(exit, join.clone());
            }
            None => {
                self.draft.sequence(split.clone(), join.clone());
            }
        }
        Some((join, split))
    }

    /// Materializes an `A` node.
    fn activity<R: Rng + ?Sized>(&mut self, node: &DerivationNode, rng: &mut R) -> ComponentId {
        let id = self.fresh_activity();
        if let Some(Production::DataActivity) = node.production {
            let direction = match node.children[0].production {
                Some(Production::RequiredData) => Direction::Required,
                _ => Direction::Generated,
            };
            self.plain_data_object(&id, direction, rng);
        }
        id
    }

    pub fn fresh_activity(&mut self) -> ComponentId {
        let id = self.fresh_id();
        let name = naming::activity_name(self.next_activity);
        self.next_activity += 1;
        self.draft.activity(Activity::new(id.clone(), name));
        id
    }

    /// Adds a plain data object named `variable_<letters>` with a random value.
    pub fn plain_data_object<R: Rng + ?Sized>(
        &mut self,
        activity: &ComponentId,
        direction: Direction,
        rng: &mut R,
    ) -> ComponentId {
        let id = self.fresh_id();
        let name = naming::variable_name(self.next_variable);
        self.next_variable += 1;
        let value = random_lowercase(rng, PLAIN_VALUE_LEN);
        self.draft.data_object(DataObject::plain(id.clone(), name, value));
        self.draft.association(activity.clone(), id.clone(), direction);
        id
    }
}

fn collect_branches<'a>(node: &'a DerivationNode, out: &mut Vec<&'a DerivationNode>) {
    out.push(&node.children[0]);
    match node.production {
        Some(Production::ParallelExtend | Production::ExclusiveExtend) => {
            collect_branches(&node.children[1], out)
        }
        _ => out.push(&node.children[1]),
    }
}

/// Builds a model from a `P` derivation. Returns `None` when the graph does
/// not begin and end with an activity, since start and end events may only
/// connect to activities.
pub fn materialize_process<R: Rng + ?Sized>(
    tree: &DerivationNode,
    id: impl Into<ComponentId>,
    name: impl Into<String>,
    rng: &mut R,
) -> Option<ModelDraft> {
    assert_eq!(tree.symbol, Symbol::NonTerminal(NonTerminal::Process));
    let mut draft = ModelDraft::new(id, name);
    let mut m = Materializer::new(&mut draft);
    let start = m.fresh_id();
    let span = m.graph(&tree.children[1], rng);
    let end = m.fresh_id();
    let (entry, exit) = span?;
    let is_activity = |id: &ComponentId| draft.activities.iter().any(|a| &a.id == id);
    if !is_activity(&entry) || !is_activity(&exit) {
        return None;
    }
    draft.start_events.insert(0, start.clone());
    draft.end_events.push(end.clone());
    draft.sequences.insert(0, crate::model::Sequence::new(start, entry));
    draft.sequence(exit, end);
    Some(draft)
}

/// Samples a random model. Identical configurations (seed included) give
/// identical models.
pub fn generate_model(config: &GrammarConfig) -> Result<ProcessModel, GrammarError> {
    let (model, _) = generate_recorded(config, false)?;
    Ok(model)
}

/// Like [`generate_model`], also returning every production choice made,
/// including those of rejected attempts.
pub fn generate_recorded(
    config: &GrammarConfig,
    record: bool,
) -> Result<(ProcessModel, Vec<ProductionChoice>), GrammarError> {
    config.validate()?;
    let mut deriver = Deriver::new(config, ChaCha8Rng::seed_from_u64(config.seed));
    if record {
        deriver = deriver.recording();
    }
    let model_id = format!("process-{}", config.seed);
    let model_name = format!("Process {}", config.seed);
    let mut draft = None;
    for _ in 0..MAX_ROOT_ATTEMPTS {
        let tree = DerivationNode::process(deriver.graph(0));
        if let Some(d) = materialize_process(&tree, model_id.clone(), model_name.clone(), deriver.rng()) {
            draft = Some(d);
            break;
        }
    }
    let mut draft = draft.unwrap_or_else(|| {
        log::warn!("no derivation produced an activity-bounded graph; using a single activity");
        let tree = DerivationNode::process(DerivationNode::activity());
        materialize_process(&tree, model_id, model_name, deriver.rng()).expect("single activity")
    });
    draft.provenance = Some(Provenance {
        grammar: Some(config.clone()),
        ..Provenance::default()
    });
    let choices = deriver.choices().to_vec();
    Ok((draft.into_model(), choices))
}

/// Gives each activity of `model`, independently with probability
/// `p_data_object`, one new plain data object whose direction is required
/// with probability `p_required`.
pub fn attach_data_objects<R: Rng + ?Sized>(
    model: &ProcessModel,
    config: &GrammarConfig,
    rng: &mut R,
) -> ProcessModel {
    let mut draft = model.to_draft();
    let ids: Vec<ComponentId> = draft.activities.iter().map(|a| a.id.clone()).collect();
    let mut m = Materializer::new(&mut draft);
    for id in ids {
        if rng.gen_bool(config.p_data_object) {
            let direction = if rng.gen_bool(config.p_required) {
                Direction::Required
            } else {
                Direction::Generated
            };
            m.plain_data_object(&id, direction, rng);
        }
    }
    draft.into_model()
}

/// Out-degree of every split gateway of the given kind.
pub fn split_degrees(model: &ProcessModel, kind: GatewayKind) -> Vec<usize> {
    model
        .gateways()
        .iter()
        .filter(|g| g.kind == kind)
        .filter_map(|g| {
            let n = model.outgoing(&g.id).ok()?.len();
            (n > 1).then_some(n)
        })
        .collect()
}

/// True if `id` names an activity of `model`.
pub fn is_activity(model: &ProcessModel, id: &ComponentId) -> bool {
    model.kind_of(id) == Some(NodeKind::Activity)
}
