//! Random net generators and a brute-force reachability oracle that shares
//! no code with the library's explorer or transition semantics.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::PathBuf;

use ntnet::net::{ColorId, Net, PlaceId, Slot, State};
use ntnet::transitions::TransitionSpec;
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load_fixture(name: &str) -> (Net, State) {
    let text = std::fs::read_to_string(fixture(name)).expect("fixture exists");
    ntnet::io::parse_net(&text).expect("fixture parses")
}

/// (place index, color index)
pub type RawSlot = (usize, usize);

#[derive(Clone, Debug)]
pub enum RawTransition {
    And {
        inputs: Vec<(RawSlot, u32)>,
        outputs: Vec<(RawSlot, u32)>,
    },
    Xor {
        pairs: Vec<(RawSlot, RawSlot)>,
    },
}

impl RawTransition {
    pub fn input_places(&self) -> BTreeSet<usize> {
        match self {
            RawTransition::And { inputs, .. } => inputs.iter().map(|((p, _), _)| *p).collect(),
            RawTransition::Xor { pairs } => pairs.iter().map(|((p, _), _)| *p).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RawNet {
    pub place_names: Vec<String>,
    pub color_names: Vec<String>,
    pub transitions: Vec<RawTransition>,
    pub marking: Vec<(RawSlot, u64)>,
}

#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub max_places: usize,
    pub max_colors: usize,
    pub max_transitions: usize,
    pub max_arcs: usize,
    pub max_weight: u32,
    pub max_start_tokens: u64,
    /// Per color, no transition produces more tokens than it consumes, and
    /// Xor pairs keep the token's color.
    pub non_increasing: bool,
    pub allow_xor: bool,
    /// Every transition has at least one input arc.
    pub require_inputs: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_places: 4,
            max_colors: 2,
            max_transitions: 4,
            max_arcs: 3,
            max_weight: 2,
            max_start_tokens: 4,
            non_increasing: false,
            allow_xor: true,
            require_inputs: true,
        }
    }
}

const NAME_CHARS: &[char] = &['a', 'b', 'Z', '_', '0', '7', ' ', '"', '\\', 'é', '•', '/', '-', '\n'];

pub fn random_name<R: Rng>(rng: &mut R, prefix: &str, i: usize) -> String {
    let len = rng.random_range(0..4);
    let suffix: String = (0..len).map(|_| *NAME_CHARS.choose(rng).unwrap()).collect();
    format!("{prefix}{i}{suffix}")
}

fn random_slot<R: Rng>(rng: &mut R, places: usize, colors: usize) -> RawSlot {
    (rng.random_range(0..places), rng.random_range(0..colors))
}

pub fn random_net<R: Rng>(rng: &mut R, cfg: &GenConfig) -> RawNet {
    random_net_with(rng, cfg, false)
}

/// `odd_names` mixes quotes, backslashes and non-ASCII into identifiers.
pub fn random_net_with<R: Rng>(rng: &mut R, cfg: &GenConfig, odd_names: bool) -> RawNet {
    let places = rng.random_range(1..=cfg.max_places);
    let colors = rng.random_range(1..=cfg.max_colors);
    let n_trans = rng.random_range(0..=cfg.max_transitions);
    let mut transitions = Vec::with_capacity(n_trans);
    for _ in 0..n_trans {
        let xor = cfg.allow_xor && rng.random_bool(0.3);
        if xor {
            let n = rng.random_range(1..=cfg.max_arcs);
            let mut used = BTreeSet::new();
            let mut pairs = Vec::new();
            for _ in 0..n {
                let input = random_slot(rng, places, colors);
                if !used.insert(input) {
                    continue;
                }
                let out_color = if cfg.non_increasing { input.1 } else { rng.random_range(0..colors) };
                pairs.push((input, (rng.random_range(0..places), out_color)));
            }
            transitions.push(RawTransition::Xor { pairs });
        } else {
            let min_in = usize::from(cfg.require_inputs);
            let n_in = rng.random_range(min_in..=cfg.max_arcs);
            let inputs: Vec<(RawSlot, u32)> = (0..n_in)
                .map(|_| (random_slot(rng, places, colors), rng.random_range(1..=cfg.max_weight)))
                .collect();
            let outputs = if cfg.non_increasing {
                // Spend at most the consumed budget of each color.
                let mut budget: BTreeMap<usize, u32> = BTreeMap::new();
                for ((_, c), w) in &inputs {
                    *budget.entry(*c).or_default() += w;
                }
                let mut outputs = Vec::new();
                for (c, b) in budget {
                    let mut left = rng.random_range(0..=b);
                    while left > 0 {
                        let w = rng.random_range(1..=left);
                        outputs.push(((rng.random_range(0..places), c), w));
                        left -= w;
                    }
                }
                outputs
            } else {
                let n_out = rng.random_range(0..=cfg.max_arcs);
                (0..n_out)
                    .map(|_| (random_slot(rng, places, colors), rng.random_range(1..=cfg.max_weight)))
                    .collect()
            };
            transitions.push(RawTransition::And { inputs, outputs });
        }
    }
    let total = rng.random_range(0..=cfg.max_start_tokens);
    let mut marking: BTreeMap<RawSlot, u64> = BTreeMap::new();
    for _ in 0..total {
        *marking.entry(random_slot(rng, places, colors)).or_default() += 1;
    }
    let name = |rng: &mut R, prefix: &str, i: usize| {
        if odd_names {
            random_name(rng, prefix, i)
        } else {
            format!("{prefix}{i}")
        }
    };
    RawNet {
        place_names: (0..places).map(|i| name(rng, "P", i)).collect(),
        color_names: (0..colors).map(|i| name(rng, "c", i)).collect(),
        transitions,
        marking: marking.into_iter().collect(),
    }
}

fn slot((p, c): RawSlot) -> Slot {
    Slot::new(PlaceId(p as u32), ColorId(c as u16))
}

impl RawNet {
    pub fn places(&self) -> usize {
        self.place_names.len()
    }

    pub fn colors(&self) -> usize {
        self.color_names.len()
    }

    pub fn build(&self) -> (Net, State) {
        let mut net = Net::new(self.place_names.clone(), self.color_names.clone()).expect("valid names");
        for (i, t) in self.transitions.iter().enumerate() {
            let spec = match t {
                RawTransition::And { inputs, outputs } => TransitionSpec::and(
                    format!("T{i}"),
                    inputs.iter().map(|(s, w)| (slot(*s), *w)),
                    outputs.iter().map(|(s, w)| (slot(*s), *w)),
                )
                .expect("non-zero weights"),
                RawTransition::Xor { pairs } => {
                    TransitionSpec::xor(format!("T{i}"), pairs.iter().map(|(a, b)| (slot(*a), slot(*b))))
                }
            };
            net.add_transition(spec).expect("unique names");
        }
        let start = State::from_counts(self.marking.iter().map(|(s, n)| (slot(*s), *n)));
        (net, start)
    }

    fn index(&self, (p, c): RawSlot) -> usize {
        p * self.colors() + c
    }

    pub fn start_vector(&self) -> Vec<u64> {
        let mut v = vec![0; self.places() * self.colors()];
        for (s, n) in &self.marking {
            v[self.index(*s)] += n;
        }
        v
    }

    /// Successor markings of `m` through transition `t`, one per distinct change.
    pub fn successors(&self, t: &RawTransition, m: &[u64]) -> Vec<Vec<u64>> {
        let mut out = BTreeSet::new();
        match t {
            RawTransition::And { inputs, outputs } => {
                let mut need = vec![0u64; m.len()];
                for (s, w) in inputs {
                    need[self.index(*s)] += u64::from(*w);
                }
                if need.iter().zip(m).all(|(n, have)| have >= n) {
                    let mut next: Vec<u64> = m.iter().zip(&need).map(|(h, n)| h - n).collect();
                    for (s, w) in outputs {
                        next[self.index(*s)] += u64::from(*w);
                    }
                    out.insert(next);
                }
            }
            RawTransition::Xor { pairs } => {
                for (a, b) in pairs {
                    if m[self.index(*a)] >= 1 {
                        let mut next = m.to_vec();
                        next[self.index(*a)] -= 1;
                        next[self.index(*b)] += 1;
                        out.insert(next);
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    /// Breadth-first enumeration of every reachable marking, or `None` when
    /// more than `cap` markings exist.
    pub fn reachable(&self, cap: usize) -> Option<Oracle> {
        let start = self.start_vector();
        let mut seen: HashSet<Vec<u64>> = HashSet::from([start.clone()]);
        let mut queue = VecDeque::from([start]);
        let mut edges = 0usize;
        let mut deadlocks = BTreeSet::new();
        let mut adjacency: Vec<(Vec<u64>, Vec<Vec<u64>>)> = Vec::new();
        while let Some(m) = queue.pop_front() {
            let mut succ_all = Vec::new();
            for t in &self.transitions {
                let succ = self.successors(t, &m);
                edges += succ.len();
                for n in succ {
                    if seen.insert(n.clone()) {
                        if seen.len() > cap {
                            return None;
                        }
                        queue.push_back(n.clone());
                    }
                    succ_all.push(n);
                }
            }
            if succ_all.is_empty() {
                deadlocks.insert(m.clone());
            }
            adjacency.push((m, succ_all));
        }
        Some(Oracle {
            states: seen.into_iter().collect(),
            edges,
            deadlocks,
            adjacency,
        })
    }

    pub fn to_state(&self, v: &[u64]) -> State {
        let c = self.colors();
        State::from_counts(
            v.iter()
                .enumerate()
                .filter(|(_, n)| **n > 0)
                .map(|(i, n)| (slot((i / c, i % c)), *n)),
        )
    }
}

pub struct Oracle {
    pub states: BTreeSet<Vec<u64>>,
    pub edges: usize,
    pub deadlocks: BTreeSet<Vec<u64>>,
    pub adjacency: Vec<(Vec<u64>, Vec<Vec<u64>>)>,
}

/// Every set partition of `0..n`, as lists of blocks.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn go(i: usize, n: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(i);
            go(i + 1, n, blocks, out);
            blocks[b].pop();
        }
        blocks.push(vec![i]);
        go(i + 1, n, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    go(0, n, &mut Vec::new(), &mut out);
    out
}

/// A partition is valid when no two transitions in different blocks read
/// from the same place.
pub fn partition_is_valid(raw: &RawNet, blocks: &[Vec<usize>]) -> bool {
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (b, block) in blocks.iter().enumerate() {
        for &t in block {
            for p in raw.transitions[t].input_places() {
                if *owner.entry(p).or_insert(b) != b {
                    return false;
                }
            }
        }
    }
    true
}
