//! Net structure, markings and deltas.
//!
//! A [`Net`] is a bipartite graph of places and transitions. Arcs are never
//! stored on their own; they are implied by the transitions' payloads, so a
//! place-to-place or transition-to-transition arc cannot be expressed.

use std::collections::BTreeMap;
use std::fmt;
use std::num::NonZeroU32;

use thiserror::Error;

use crate::transitions::{TransitionKind, TransitionSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlaceId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColorId(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransitionId(pub u32);

impl PlaceId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ColorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TransitionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PlaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P#{}", self.0)
    }
}

impl fmt::Display for ColorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C#{}", self.0)
    }
}

impl fmt::Display for TransitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T#{}", self.0)
    }
}

/// A (place, color) pair: the unit a marking counts tokens in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Slot {
    pub place: PlaceId,
    pub color: ColorId,
}

impl Slot {
    pub fn new(place: PlaceId, color: ColorId) -> Self {
        Slot { place, color }
    }
}

/// Positive arc weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(NonZeroU32);

impl Weight {
    pub const ONE: Weight = Weight(NonZeroU32::MIN);

    pub fn new(w: u32) -> Option<Weight> {
        NonZeroU32::new(w).map(Weight)
    }

    pub fn get(self) -> u32 {
        self.0.get()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("duplicate {kind} name '{name}'")]
    DuplicateName { kind: &'static str, name: String },
    #[error("empty {kind} name")]
    EmptyName { kind: &'static str },
    #[error("a net must declare at least one color")]
    EmptyColorTable,
    #[error("arc weight must be positive")]
    ZeroWeight,
    #[error("too many {kind}s")]
    TooMany { kind: &'static str },
    #[error("{slot:?} would hold {would_be} tokens")]
    NegativeTokens { slot: Slot, would_be: i128 },
    #[error("marking references unknown {slot:?}")]
    UnknownSlot { slot: Slot },
}

/// A marking: token count per (place, color). Zero counts are never stored,
/// so equality and hashing are structural.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State {
    counts: BTreeMap<Slot, u64>,
}

impl State {
    pub fn new() -> Self {
        State::default()
    }

    /// Builds a state from counts; repeated slots are summed and zeros dropped.
    pub fn from_counts<I: IntoIterator<Item = (Slot, u64)>>(counts: I) -> Self {
        let mut map = BTreeMap::new();
        for (slot, n) in counts {
            *map.entry(slot).or_insert(0u64) += n;
        }
        map.retain(|_, n| *n != 0);
        State { counts: map }
    }

    /// Returns a copy with `slot` set to `count`.
    pub fn with(&self, slot: Slot, count: u64) -> Self {
        let mut counts = self.counts.clone();
        if count == 0 {
            counts.remove(&slot);
        } else {
            counts.insert(slot, count);
        }
        State { counts }
    }

    pub fn get(&self, slot: Slot) -> u64 {
        self.counts.get(&slot).copied().unwrap_or(0)
    }

    /// Total tokens at `place` across all colors.
    pub fn place_total(&self, place: PlaceId) -> u64 {
        self.counts
            .range(Slot::new(place, ColorId(0))..=Slot::new(place, ColorId(u16::MAX)))
            .map(|(_, n)| *n)
            .sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Slot, u64)> + '_ {
        self.counts.iter().map(|(s, n)| (*s, *n))
    }

    /// Number of non-zero slots.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    /// The sub-marking on the given places only.
    pub fn restrict<'a, I>(&self, places: I) -> State
    where
        I: IntoIterator<Item = &'a PlaceId>,
    {
        let mut counts = BTreeMap::new();
        for &place in places {
            for (slot, n) in self
                .counts
                .range(Slot::new(place, ColorId(0))..=Slot::new(place, ColorId(u16::MAX)))
            {
                counts.insert(*slot, *n);
            }
        }
        State { counts }
    }

    pub fn apply(&self, delta: &StateDelta) -> Result<State, NetError> {
        let mut counts = self.counts.clone();
        for (&slot, &change) in &delta.changes {
            let current = counts.get(&slot).copied().unwrap_or(0);
            let next = current as i128 + change as i128;
            if next < 0 {
                return Err(NetError::NegativeTokens {
                    slot,
                    would_be: next,
                });
            }
            if next == 0 {
                counts.remove(&slot);
            } else {
                counts.insert(slot, next as u64);
            }
        }
        Ok(State { counts })
    }

    /// True if `self[k] >= other[k]` for every slot.
    pub fn covers(&self, other: &State) -> bool {
        other.iter().all(|(slot, n)| self.get(slot) >= n)
    }
}

/// `s + d`, failing if any slot would go negative.
pub fn apply_delta(s: &State, d: &StateDelta) -> Result<State, NetError> {
    s.apply(d)
}

/// A signed change to a marking produced by one firing. No zero entries.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateDelta {
    changes: BTreeMap<Slot, i64>,
}

impl StateDelta {
    pub fn new() -> Self {
        StateDelta::default()
    }

    /// Sums repeated slots and drops entries that cancel to zero.
    pub fn from_changes<I: IntoIterator<Item = (Slot, i64)>>(changes: I) -> Self {
        let mut map = BTreeMap::new();
        for (slot, n) in changes {
            *map.entry(slot).or_insert(0i64) += n;
        }
        map.retain(|_, n| *n != 0);
        StateDelta { changes: map }
    }

    pub fn get(&self, slot: Slot) -> i64 {
        self.changes.get(&slot).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Slot, i64)> + '_ {
        self.changes.iter().map(|(s, n)| (*s, *n))
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn negate(&self) -> StateDelta {
        StateDelta {
            changes: self.changes.iter().map(|(s, n)| (*s, -n)).collect(),
        }
    }

    /// Entries with a negative change, as positive amounts.
    pub fn consumed(&self) -> impl Iterator<Item = (Slot, u64)> + '_ {
        self.iter()
            .filter(|(_, n)| *n < 0)
            .map(|(s, n)| (s, n.unsigned_abs()))
    }

    pub fn produced(&self) -> impl Iterator<Item = (Slot, u64)> + '_ {
        self.iter().filter(|(_, n)| *n > 0).map(|(s, n)| (s, n as u64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArcDirection {
    PlaceToTransition,
    TransitionToPlace,
}

/// One arc of the bipartite graph. Custom transitions have no color
/// requirement on their declared arcs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetArc {
    pub place: PlaceId,
    pub transition: TransitionId,
    pub direction: ArcDirection,
    pub weight: Weight,
    pub color: Option<ColorId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FindingKind {
    DanglingPlace(PlaceId),
    DanglingColor(ColorId),
    /// An AND transition with no inputs is enabled in every state.
    AlwaysEnabled,
    EmptyXor,
    DuplicateXorInput(Slot),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finding {
    pub transition: TransitionId,
    pub kind: FindingKind,
}

impl Finding {
    pub fn severity(&self) -> Severity {
        match self.kind {
            FindingKind::AlwaysEnabled => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    /// No error-severity findings. Warnings are allowed.
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity() == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity() == Severity::Warning)
    }
}

#[derive(Clone, Debug)]
pub struct Net {
    places: Vec<String>,
    colors: Vec<String>,
    transitions: Vec<TransitionSpec>,
}

fn check_names<S: AsRef<str>>(names: &[S], kind: &'static str) -> Result<(), NetError> {
    let mut seen = std::collections::HashSet::new();
    for name in names {
        let name = name.as_ref();
        if name.is_empty() {
            return Err(NetError::EmptyName { kind });
        }
        if !seen.insert(name) {
            return Err(NetError::DuplicateName {
                kind,
                name: name.to_string(),
            });
        }
    }
    Ok(())
}

impl Net {
    /// An empty net over the given places and colors. Ids follow list order.
    pub fn new<P, C>(places: P, colors: C) -> Result<Net, NetError>
    where
        P: IntoIterator,
        P::Item: Into<String>,
        C: IntoIterator,
        C::Item: Into<String>,
    {
        let places: Vec<String> = places.into_iter().map(Into::into).collect();
        let colors: Vec<String> = colors.into_iter().map(Into::into).collect();
        if colors.is_empty() {
            return Err(NetError::EmptyColorTable);
        }
        check_names(&places, "place")?;
        check_names(&colors, "color")?;
        if places.len() > u32::MAX as usize {
            return Err(NetError::TooMany { kind: "place" });
        }
        if colors.len() > u16::MAX as usize {
            return Err(NetError::TooMany { kind: "color" });
        }
        Ok(Net {
            places,
            colors,
            transitions: Vec::new(),
        })
    }

    /// Adds a transition. Only the name is checked here; dangling references
    /// and malformed payloads are reported by [`Net::validate`].
    pub fn add_transition(&mut self, spec: TransitionSpec) -> Result<TransitionId, NetError> {
        if spec.name().is_empty() {
            return Err(NetError::EmptyName { kind: "transition" });
        }
        if self.transitions.iter().any(|t| t.name() == spec.name()) {
            return Err(NetError::DuplicateName {
                kind: "transition",
                name: spec.name().to_string(),
            });
        }
        if self.transitions.len() >= u32::MAX as usize {
            return Err(NetError::TooMany { kind: "transition" });
        }
        let id = TransitionId(self.transitions.len() as u32);
        self.transitions.push(spec);
        Ok(id)
    }

    pub fn place_count(&self) -> usize {
        self.places.len()
    }

    pub fn color_count(&self) -> usize {
        self.colors.len()
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn place_ids(&self) -> impl Iterator<Item = PlaceId> {
        (0..self.places.len() as u32).map(PlaceId)
    }

    pub fn color_ids(&self) -> impl Iterator<Item = ColorId> {
        (0..self.colors.len() as u16).map(ColorId)
    }

    pub fn transition_ids(&self) -> impl Iterator<Item = TransitionId> {
        (0..self.transitions.len() as u32).map(TransitionId)
    }

    pub fn place(&self, name: &str) -> Option<PlaceId> {
        self.places
            .iter()
            .position(|p| p == name)
            .map(|i| PlaceId(i as u32))
    }

    pub fn color(&self, name: &str) -> Option<ColorId> {
        self.colors
            .iter()
            .position(|c| c == name)
            .map(|i| ColorId(i as u16))
    }

    pub fn transition_by_name(&self, name: &str) -> Option<TransitionId> {
        self.transitions
            .iter()
            .position(|t| t.name() == name)
            .map(|i| TransitionId(i as u32))
    }

    pub fn place_name(&self, id: PlaceId) -> Option<&str> {
        self.places.get(id.index()).map(String::as_str)
    }

    pub fn color_name(&self, id: ColorId) -> Option<&str> {
        self.colors.get(id.index()).map(String::as_str)
    }

    pub fn transition(&self, id: TransitionId) -> Option<&TransitionSpec> {
        self.transitions.get(id.index())
    }

    pub fn transitions(&self) -> impl Iterator<Item = (TransitionId, &TransitionSpec)> {
        self.transitions
            .iter()
            .enumerate()
            .map(|(i, t)| (TransitionId(i as u32), t))
    }

    pub fn place_names(&self) -> &[String] {
        &self.places
    }

    pub fn color_names(&self) -> &[String] {
        &self.colors
    }

    pub fn has_slot(&self, slot: Slot) -> bool {
        slot.place.index() < self.places.len() && slot.color.index() < self.colors.len()
    }

    /// Every arc implied by the transitions, in transition order.
    pub fn arcs(&self) -> Vec<NetArc> {
        let mut arcs = Vec::new();
        for (id, t) in self.transitions() {
            arcs.extend(t.arcs(id));
        }
        arcs
    }

    /// Fails if the marking references a place or color the net lacks.
    pub fn check_state(&self, s: &State) -> Result<(), NetError> {
        match s.iter().find(|(slot, _)| !self.has_slot(*slot)) {
            Some((slot, _)) => Err(NetError::UnknownSlot { slot }),
            None => Ok(()),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut findings = Vec::new();
        for (id, t) in self.transitions() {
            let mut push = |kind| findings.push(Finding { transition: id, kind });
            let mut dangling_places = std::collections::BTreeSet::new();
            let mut dangling_colors = std::collections::BTreeSet::new();
            for arc in t.arcs(id) {
                if arc.place.index() >= self.places.len() {
                    dangling_places.insert(arc.place);
                }
                if let Some(c) = arc.color {
                    if c.index() >= self.colors.len() {
                        dangling_colors.insert(c);
                    }
                }
            }
            for p in dangling_places {
                push(FindingKind::DanglingPlace(p));
            }
            for c in dangling_colors {
                push(FindingKind::DanglingColor(c));
            }
            match t.kind() {
                TransitionKind::And(and) => {
                    if and.inputs().is_empty() {
                        push(FindingKind::AlwaysEnabled);
                    }
                }
                TransitionKind::Xor(xor) => {
                    if xor.pairs().is_empty() {
                        push(FindingKind::EmptyXor);
                    }
                    let mut seen = std::collections::BTreeSet::new();
                    for pair in xor.pairs() {
                        if !seen.insert(pair.input) {
                            push(FindingKind::DuplicateXorInput(pair.input));
                        }
                    }
                }
                TransitionKind::Custom(_) => {}
            }
        }
        ValidationReport { findings }
    }
}
