//! Reachable state graph of a net and start marking, and analyses over it.
//!
//! Exploration is depth-first over an explicit stack, visiting transitions
//! in id order and each transition's deltas in canonical order. Unlike the
//! textbook recursion, an edge into an already-known state is recorded too,
//! otherwise cycles could never appear in the graph.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigUint;
use thiserror::Error;

use crate::net::{Net, NetError, State, StateDelta, TransitionId};
use crate::transitions::TransitionError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("invalid start marking: {0}")]
    InvalidStart(NetError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error("transition {transition} produced an inapplicable delta: {source}")]
    BadDelta {
        transition: TransitionId,
        source: NetError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExplorationLimits {
    pub max_states: usize,
    pub max_tokens_per_place: Option<u64>,
    pub max_depth: Option<usize>,
}

impl Default for ExplorationLimits {
    fn default() -> Self {
        ExplorationLimits {
            max_states: 1_000_000,
            max_tokens_per_place: Some(10_000),
            max_depth: None,
        }
    }
}

impl ExplorationLimits {
    pub fn with_max_states(mut self, n: usize) -> Self {
        self.max_states = n.max(1);
        self
    }

    pub fn with_max_tokens_per_place(mut self, n: Option<u64>) -> Self {
        self.max_tokens_per_place = n.map(|n| n.max(1));
        self
    }

    pub fn with_max_depth(mut self, n: Option<usize>) -> Self {
        self.max_depth = n.map(|n| n.max(1));
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TruncationReason {
    MaxStates,
    MaxTokensPerPlace,
    MaxDepth,
}

impl TruncationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TruncationReason::MaxStates => "max_states",
            TruncationReason::MaxTokensPerPlace => "max_tokens_per_place",
            TruncationReason::MaxDepth => "max_depth",
        }
    }
}

impl fmt::Display for TruncationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraphStatus {
    Complete,
    Truncated(BTreeSet<TruncationReason>),
}

impl GraphStatus {
    pub fn is_complete(&self) -> bool {
        matches!(self, GraphStatus::Complete)
    }

    pub fn truncated_by(&self, reason: TruncationReason) -> bool {
        match self {
            GraphStatus::Complete => false,
            GraphStatus::Truncated(reasons) => reasons.contains(&reason),
        }
    }
}

impl fmt::Display for GraphStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphStatus::Complete => f.write_str("complete"),
            GraphStatus::Truncated(reasons) => {
                f.write_str("truncated(")?;
                for (i, r) in reasons.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    f.write_str(r.as_str())?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub transition: TransitionId,
    pub delta: StateDelta,
    pub target: usize,
}

/// Nodes are kept in canonical order (the derived ordering of [`State`]),
/// so node indices do not depend on the order exploration found them in.
#[derive(Clone, Debug)]
pub struct StateGraph {
    states: Vec<State>,
    index: HashMap<State, usize>,
    edges: Vec<Vec<Edge>>,
    start: usize,
    frontier: BTreeSet<usize>,
    status: GraphStatus,
}

impl PartialEq for StateGraph {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states
            && self.edges == other.edges
            && self.start == other.start
            && self.frontier == other.frontier
            && self.status == other.status
    }
}

impl Eq for StateGraph {}

impl StateGraph {
    pub fn node_count(&self) -> usize {
        self.states.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &State {
        &self.states[i]
    }

    pub fn index_of(&self, s: &State) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn contains(&self, s: &State) -> bool {
        self.index.contains_key(s)
    }

    /// Outgoing edges of node `i`, sorted by (transition, delta, target).
    pub fn edges(&self, i: usize) -> &[Edge] {
        &self.edges[i]
    }

    pub fn start(&self) -> &State {
        &self.states[self.start]
    }

    pub fn start_index(&self) -> usize {
        self.start
    }

    pub fn status(&self) -> &GraphStatus {
        &self.status
    }

    pub fn is_complete(&self) -> bool {
        self.status.is_complete()
    }

    /// Nodes whose successors were not all explored because a limit was hit.
    pub fn frontier(&self) -> &BTreeSet<usize> {
        &self.frontier
    }

    pub fn has_edge(&self, from: &State, transition: TransitionId, delta: &StateDelta, to: &State) -> bool {
        let (Some(i), Some(j)) = (self.index_of(from), self.index_of(to)) else {
            return false;
        };
        self.edges[i]
            .iter()
            .any(|e| e.transition == transition && e.target == j && &e.delta == delta)
    }
}

type Successor = (TransitionId, StateDelta, State);

fn successors(net: &Net, s: &State) -> Result<Vec<Successor>, GraphError> {
    let mut out = Vec::new();
    for (id, t) in net.transitions() {
        if !t.enabled(s) {
            continue;
        }
        for d in t.updates(s)? {
            let next = s
                .apply(&d)
                .map_err(|source| GraphError::BadDelta { transition: id, source })?;
            out.push((id, d, next));
        }
    }
    Ok(out)
}

struct Frame {
    node: usize,
    succs: Vec<Successor>,
    cursor: usize,
}

struct Explorer<'a> {
    net: &'a Net,
    limits: ExplorationLimits,
    states: Vec<State>,
    index: HashMap<State, usize>,
    depth: Vec<usize>,
    edges: Vec<Vec<Edge>>,
    frontier: BTreeSet<usize>,
    reasons: BTreeSet<TruncationReason>,
}

impl Explorer<'_> {
    fn insert(&mut self, s: State, depth: usize) -> usize {
        let i = self.states.len();
        self.index.insert(s.clone(), i);
        self.states.push(s);
        self.depth.push(depth);
        self.edges.push(Vec::new());
        i
    }

    fn expand(&mut self, node: usize) -> Result<Option<Frame>, GraphError> {
        let s = &self.states[node];
        if let Some(cap) = self.limits.max_tokens_per_place {
            if s.max_count() > cap {
                self.reasons.insert(TruncationReason::MaxTokensPerPlace);
                self.frontier.insert(node);
                return Ok(None);
            }
        }
        let succs = successors(self.net, s)?;
        if succs.is_empty() {
            return Ok(None);
        }
        if let Some(max_depth) = self.limits.max_depth {
            if self.depth[node] >= max_depth {
                self.reasons.insert(TruncationReason::MaxDepth);
                self.frontier.insert(node);
                return Ok(None);
            }
        }
        Ok(Some(Frame {
            node,
            succs,
            cursor: 0,
        }))
    }

    fn run(&mut self, start: State) -> Result<usize, GraphError> {
        let root = self.insert(start, 0);
        let mut stack: Vec<Frame> = self.expand(root)?.into_iter().collect();
        while let Some(frame) = stack.last_mut() {
            if frame.cursor == frame.succs.len() {
                stack.pop();
                continue;
            }
            let node = frame.node;
            let (transition, delta, next) = frame.succs[frame.cursor].clone();
            frame.cursor += 1;
            match self.index.get(&next) {
                Some(&target) => self.edges[node].push(Edge {
                    transition,
                    delta,
                    target,
                }),
                None => {
                    if self.states.len() >= self.limits.max_states {
                        self.reasons.insert(TruncationReason::MaxStates);
                        self.frontier.insert(node);
                        continue;
                    }
                    let depth = self.depth[node] + 1;
                    let target = self.insert(next, depth);
                    self.edges[node].push(Edge {
                        transition,
                        delta,
                        target,
                    });
                    if let Some(f) = self.expand(target)? {
                        stack.push(f);
                    }
                }
            }
        }
        Ok(root)
    }

    /// Re-index nodes in canonical order.
    fn finish(self, root: usize) -> StateGraph {
        let mut order: Vec<usize> = (0..self.states.len()).collect();
        order.sort_by(|&a, &b| self.states[a].cmp(&self.states[b]));
        let mut remap = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let mut old_states: Vec<Option<State>> = self.states.into_iter().map(Some).collect();
        let mut old_edges: Vec<Vec<Edge>> = self.edges;
        let mut states = Vec::with_capacity(order.len());
        let mut edges = Vec::with_capacity(order.len());
        for &old in &order {
            states.push(old_states[old].take().expect("each node moved once"));
            let mut out: Vec<Edge> = std::mem::take(&mut old_edges[old])
                .into_iter()
                .map(|e| Edge {
                    target: remap[e.target],
                    ..e
                })
                .collect();
            out.sort();
            edges.push(out);
        }
        let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let status = if self.reasons.is_empty() {
            GraphStatus::Complete
        } else {
            GraphStatus::Truncated(self.reasons)
        };
        StateGraph {
            states,
            index,
            edges,
            start: remap[root],
            frontier: self.frontier.into_iter().map(|i| remap[i]).collect(),
            status,
        }
    }
}

/// Explores every state reachable from `start`, up to `limits`. Hitting a
/// limit is not an error: the partial graph comes back marked truncated.
pub fn compute_state_graph(net: &Net, start: &State, limits: ExplorationLimits) -> Result<StateGraph, GraphError> {
    net.check_state(start).map_err(GraphError::InvalidStart)?;
    let mut explorer = Explorer {
        net,
        limits,
        states: Vec::new(),
        index: HashMap::new(),
        depth: Vec::new(),
        edges: Vec::new(),
        frontier: BTreeSet::new(),
        reasons: BTreeSet::new(),
    };
    let root = explorer.run(start.clone())?;
    Ok(explorer.finish(root))
}

/// Terminal states of a graph. On a truncated graph, frontier nodes are left
/// out and `partial` is set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeadlockSet {
    pub states: Vec<State>,
    pub partial: bool,
}

pub fn deadlock_states(g: &StateGraph) -> DeadlockSet {
    let states = (0..g.node_count())
        .filter(|i| g.edges(*i).is_empty() && !g.frontier.contains(i))
        .map(|i| g.state(i).clone())
        .collect();
    DeadlockSet {
        states,
        partial: !g.is_complete(),
    }
}

/// Iterative three-color DFS; true on the first back edge.
fn has_directed_cycle(adjacency: &[Vec<usize>]) -> bool {
    const WHITE: u8 = 0;
    const GREY: u8 = 1;
    const BLACK: u8 = 2;
    let mut color = vec![WHITE; adjacency.len()];
    for root in 0..adjacency.len() {
        if color[root] != WHITE {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        color[root] = GREY;
        while let Some((node, next)) = stack.last_mut() {
            if let Some(&succ) = adjacency[*node].get(*next) {
                *next += 1;
                match color[succ] {
                    GREY => return true,
                    WHITE => {
                        color[succ] = GREY;
                        stack.push((succ, 0));
                    }
                    _ => {}
                }
            } else {
                color[*node] = BLACK;
                stack.pop();
            }
        }
    }
    false
}

pub fn graph_has_cycle(g: &StateGraph) -> bool {
    let adjacency: Vec<Vec<usize>> = g
        .edges
        .iter()
        .map(|es| es.iter().map(|e| e.target).collect())
        .collect();
    has_directed_cycle(&adjacency)
}

/// Cycle check on the bipartite place/transition graph itself.
pub fn net_has_cycle(n: &Net) -> bool {
    use crate::net::ArcDirection;
    let places = n.place_count();
    let mut adjacency = vec![Vec::new(); places + n.transition_count()];
    for arc in n.arcs() {
        if arc.place.index() >= places {
            continue;
        }
        let p = arc.place.index();
        let t = places + arc.transition.index();
        match arc.direction {
            ArcDirection::PlaceToTransition => adjacency[p].push(t),
            ArcDirection::TransitionToPlace => adjacency[t].push(p),
        }
    }
    has_directed_cycle(&adjacency)
}

/// `(p + 1)^t`: each of `t` distinct tokens sits on one of `p` places or is gone.
pub fn state_count_bound(places: u64, tokens: u64) -> BigUint {
    let base = BigUint::from(places) + 1u32;
    let mut acc = BigUint::from(1u32);
    // square-and-multiply; `tokens` may exceed u32
    let mut base = base;
    let mut e = tokens;
    while e > 0 {
        if e & 1 == 1 {
            acc *= &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    acc
}

/// Nodes failing `pred`, in canonical order.
pub fn check_predicate<F>(g: &StateGraph, pred: F) -> Vec<State>
where
    F: Fn(&State) -> bool,
{
    g.states().iter().filter(|s| !pred(s)).cloned().collect()
}

pub type StatePredicate = dyn Fn(&State) -> bool + Send + Sync;

pub struct NamedPredicate {
    pub name: String,
    pub pred: Box<StatePredicate>,
}

impl NamedPredicate {
    pub fn new(name: impl Into<String>, pred: impl Fn(&State) -> bool + Send + Sync + 'static) -> Self {
        NamedPredicate {
            name: name.into(),
            pred: Box::new(pred),
        }
    }
}

impl fmt::Debug for NamedPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NamedPredicate").field("name", &self.name).finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredicateViolation {
    pub name: String,
    pub states: Vec<State>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalysisReport {
    pub state_count: usize,
    pub edge_count: usize,
    pub status: GraphStatus,
    pub deadlocks: DeadlockSet,
    pub graph_has_cycle: bool,
    pub net_has_cycle: bool,
    /// Only predicates with at least one failing state are listed.
    pub violations: Vec<PredicateViolation>,
}

pub fn analyze(net: &Net, g: &StateGraph, predicates: &[NamedPredicate]) -> AnalysisReport {
    let violations = predicates
        .iter()
        .map(|p| PredicateViolation {
            name: p.name.clone(),
            states: check_predicate(g, &p.pred),
        })
        .filter(|v| !v.states.is_empty())
        .collect();
    AnalysisReport {
        state_count: g.node_count(),
        edge_count: g.edge_count(),
        status: g.status().clone(),
        deadlocks: deadlock_states(g),
        graph_has_cycle: graph_has_cycle(g),
        net_has_cycle: net_has_cycle(net),
        violations,
    }
}
