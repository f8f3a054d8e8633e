//! Transition kinds and their firing rules.
//!
//! Every kind answers two questions about a marking: is the transition
//! enabled, and which deltas can one firing produce. AND transitions have a
//! single delta; XOR transitions have one delta per enabled pair; custom
//! transitions delegate both answers to host code.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::net::{ArcDirection, NetArc, NetError, PlaceId, Slot, State, StateDelta, TransitionId, Weight};

/// Default cap on the number of deltas a custom transition may emit per state.
pub const DEFAULT_DELTA_CAP: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("transition '{0}' is not enabled")]
    NotEnabled(String),
    #[error("transition '{0}' is enabled but produced no deltas")]
    EmptyUpdateSet(String),
    #[error("transition '{name}' produced {count} deltas, more than the cap of {cap}")]
    TooManyDeltas {
        name: String,
        count: usize,
        cap: usize,
    },
    #[error("transition '{name}' produced a delta touching {slot:?} outside its declared places")]
    UndeclaredPlace { name: String, slot: Slot },
    #[error("transition '{name}' produced a delta that drives {slot:?} negative")]
    Underflow { name: String, slot: Slot },
}

/// Conjunctive transition: needs every colored input, fires one fixed delta.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AndPayload {
    inputs: BTreeMap<Slot, Weight>,
    outputs: BTreeMap<Slot, Weight>,
}

fn merge_weights<I>(entries: I) -> Result<BTreeMap<Slot, Weight>, NetError>
where
    I: IntoIterator<Item = (Slot, u32)>,
{
    let mut merged: BTreeMap<Slot, u32> = BTreeMap::new();
    for (slot, w) in entries {
        if w == 0 {
            return Err(NetError::ZeroWeight);
        }
        let e = merged.entry(slot).or_insert(0);
        *e = e.checked_add(w).ok_or(NetError::TooMany { kind: "weight" })?;
    }
    Ok(merged
        .into_iter()
        .map(|(s, w)| (s, Weight::new(w).expect("nonzero")))
        .collect())
}

impl AndPayload {
    /// Duplicate (place, color) entries are merged by summing weights.
    pub fn new<I, O>(inputs: I, outputs: O) -> Result<Self, NetError>
    where
        I: IntoIterator<Item = (Slot, u32)>,
        O: IntoIterator<Item = (Slot, u32)>,
    {
        Ok(AndPayload {
            inputs: merge_weights(inputs)?,
            outputs: merge_weights(outputs)?,
        })
    }

    pub fn inputs(&self) -> &BTreeMap<Slot, Weight> {
        &self.inputs
    }

    pub fn outputs(&self) -> &BTreeMap<Slot, Weight> {
        &self.outputs
    }

    fn delta(&self) -> StateDelta {
        StateDelta::from_changes(
            self.outputs
                .iter()
                .map(|(s, w)| (*s, w.get() as i64))
                .chain(self.inputs.iter().map(|(s, w)| (*s, -(w.get() as i64)))),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct XorPair {
    pub input: Slot,
    pub output: Slot,
}

/// Exclusive transition: each firing moves one token from one pair's input
/// to the same pair's output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XorPayload {
    pairs: Vec<XorPair>,
}

impl XorPayload {
    pub fn new<I: IntoIterator<Item = (Slot, Slot)>>(pairs: I) -> Self {
        XorPayload {
            pairs: pairs
                .into_iter()
                .map(|(input, output)| XorPair { input, output })
                .collect(),
        }
    }

    pub fn pairs(&self) -> &[XorPair] {
        &self.pairs
    }
}

pub type EnableFn = dyn Fn(&State) -> bool + Send + Sync;
pub type DeltaFn = dyn Fn(&State) -> Vec<StateDelta> + Send + Sync;

/// Host-defined transition. Both closures receive the marking restricted to
/// the declared input places, never the full state.
#[derive(Clone)]
pub struct CustomPayload {
    inputs: BTreeSet<PlaceId>,
    outputs: BTreeSet<PlaceId>,
    enable: Arc<EnableFn>,
    deltas: Arc<DeltaFn>,
    delta_cap: usize,
}

impl CustomPayload {
    pub fn new<I, O, E, D>(inputs: I, outputs: O, enable: E, deltas: D) -> Self
    where
        I: IntoIterator<Item = PlaceId>,
        O: IntoIterator<Item = PlaceId>,
        E: Fn(&State) -> bool + Send + Sync + 'static,
        D: Fn(&State) -> Vec<StateDelta> + Send + Sync + 'static,
    {
        CustomPayload {
            inputs: inputs.into_iter().collect(),
            outputs: outputs.into_iter().collect(),
            enable: Arc::new(enable),
            deltas: Arc::new(deltas),
            delta_cap: DEFAULT_DELTA_CAP,
        }
    }

    pub fn with_delta_cap(mut self, cap: usize) -> Self {
        self.delta_cap = cap;
        self
    }

    pub fn inputs(&self) -> &BTreeSet<PlaceId> {
        &self.inputs
    }

    pub fn outputs(&self) -> &BTreeSet<PlaceId> {
        &self.outputs
    }

    pub fn delta_cap(&self) -> usize {
        self.delta_cap
    }
}

impl fmt::Debug for CustomPayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPayload")
            .field("inputs", &self.inputs)
            .field("outputs", &self.outputs)
            .field("delta_cap", &self.delta_cap)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub enum TransitionKind {
    And(AndPayload),
    Xor(XorPayload),
    Custom(CustomPayload),
}

#[derive(Clone, Debug)]
pub struct TransitionSpec {
    name: String,
    kind: TransitionKind,
}

impl TransitionSpec {
    pub fn new(name: impl Into<String>, kind: TransitionKind) -> Self {
        TransitionSpec {
            name: name.into(),
            kind,
        }
    }

    pub fn and<I, O>(name: impl Into<String>, inputs: I, outputs: O) -> Result<Self, NetError>
    where
        I: IntoIterator<Item = (Slot, u32)>,
        O: IntoIterator<Item = (Slot, u32)>,
    {
        Ok(Self::new(
            name,
            TransitionKind::And(AndPayload::new(inputs, outputs)?),
        ))
    }

    pub fn xor<I: IntoIterator<Item = (Slot, Slot)>>(name: impl Into<String>, pairs: I) -> Self {
        Self::new(name, TransitionKind::Xor(XorPayload::new(pairs)))
    }

    pub fn custom(name: impl Into<String>, payload: CustomPayload) -> Self {
        Self::new(name, TransitionKind::Custom(payload))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &TransitionKind {
        &self.kind
    }

    pub fn is_custom(&self) -> bool {
        matches!(self.kind, TransitionKind::Custom(_))
    }

    pub fn input_places(&self) -> BTreeSet<PlaceId> {
        match &self.kind {
            TransitionKind::And(p) => p.inputs.keys().map(|s| s.place).collect(),
            TransitionKind::Xor(p) => p.pairs.iter().map(|pair| pair.input.place).collect(),
            TransitionKind::Custom(p) => p.inputs.clone(),
        }
    }

    pub fn output_places(&self) -> BTreeSet<PlaceId> {
        match &self.kind {
            TransitionKind::And(p) => p.outputs.keys().map(|s| s.place).collect(),
            TransitionKind::Xor(p) => p.pairs.iter().map(|pair| pair.output.place).collect(),
            TransitionKind::Custom(p) => p.outputs.clone(),
        }
    }

    pub(crate) fn arcs(&self, id: TransitionId) -> Vec<NetArc> {
        let arc = |place, direction, weight, color| NetArc {
            place,
            transition: id,
            direction,
            weight,
            color,
        };
        use ArcDirection::*;
        match &self.kind {
            TransitionKind::And(p) => p
                .inputs
                .iter()
                .map(|(s, w)| arc(s.place, PlaceToTransition, *w, Some(s.color)))
                .chain(
                    p.outputs
                        .iter()
                        .map(|(s, w)| arc(s.place, TransitionToPlace, *w, Some(s.color))),
                )
                .collect(),
            TransitionKind::Xor(p) => p
                .pairs
                .iter()
                .flat_map(|pair| {
                    [
                        arc(pair.input.place, PlaceToTransition, Weight::ONE, Some(pair.input.color)),
                        arc(pair.output.place, TransitionToPlace, Weight::ONE, Some(pair.output.color)),
                    ]
                })
                .collect(),
            TransitionKind::Custom(p) => p
                .inputs
                .iter()
                .map(|pl| arc(*pl, PlaceToTransition, Weight::ONE, None))
                .chain(
                    p.outputs
                        .iter()
                        .map(|pl| arc(*pl, TransitionToPlace, Weight::ONE, None)),
                )
                .collect(),
        }
    }

    pub fn enabled(&self, s: &State) -> bool {
        match &self.kind {
            TransitionKind::And(p) => p.inputs.iter().all(|(slot, w)| s.get(*slot) >= w.get() as u64),
            TransitionKind::Xor(p) => p.pairs.iter().any(|pair| s.get(pair.input) >= 1),
            TransitionKind::Custom(p) => (p.enable)(&s.restrict(&p.inputs)),
        }
    }

    /// The set of deltas one firing can apply to `s`, in canonical order.
    pub fn updates(&self, s: &State) -> Result<Vec<StateDelta>, TransitionError> {
        if !self.enabled(s) {
            return Err(TransitionError::NotEnabled(self.name.clone()));
        }
        match &self.kind {
            TransitionKind::And(p) => Ok(vec![p.delta()]),
            TransitionKind::Xor(p) => {
                let set: BTreeSet<StateDelta> = p
                    .pairs
                    .iter()
                    .filter(|pair| s.get(pair.input) >= 1)
                    .map(|pair| StateDelta::from_changes([(pair.input, -1), (pair.output, 1)]))
                    .collect();
                Ok(set.into_iter().collect())
            }
            TransitionKind::Custom(p) => self.custom_updates(p, s),
        }
    }

    fn custom_updates(&self, p: &CustomPayload, s: &State) -> Result<Vec<StateDelta>, TransitionError> {
        let restricted = s.restrict(&p.inputs);
        let set: BTreeSet<StateDelta> = (p.deltas)(&restricted).into_iter().collect();
        if set.is_empty() {
            return Err(TransitionError::EmptyUpdateSet(self.name.clone()));
        }
        if set.len() > p.delta_cap {
            return Err(TransitionError::TooManyDeltas {
                name: self.name.clone(),
                count: set.len(),
                cap: p.delta_cap,
            });
        }
        for d in &set {
            for (slot, n) in d.iter() {
                let declared = if n < 0 {
                    p.inputs.contains(&slot.place)
                } else {
                    p.outputs.contains(&slot.place)
                };
                if !declared {
                    return Err(TransitionError::UndeclaredPlace {
                        name: self.name.clone(),
                        slot,
                    });
                }
                if n < 0 && restricted.get(slot) < n.unsigned_abs() {
                    return Err(TransitionError::Underflow {
                        name: self.name.clone(),
                        slot,
                    });
                }
            }
        }
        Ok(set.into_iter().collect())
    }
}
