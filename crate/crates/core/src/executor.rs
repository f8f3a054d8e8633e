//! Concurrent execution: one worker thread per work cluster.
//!
//! A firing happens in two steps:
//!
//! 1. *Commit and consume.* Under the ledger lock the worker checks its
//!    cluster's transitions against the committed marking and keeps the
//!    (transition, delta) candidates whose input tokens are physically
//!    present in the token store. It picks one by policy, appends it to the
//!    trace, advances the committed marking and takes the input tokens. The
//!    trace is therefore linearized by construction and every event is an
//!    edge of the state graph.
//! 2. *Run and deposit.* The transition's callback runs outside every lock,
//!    then the output tokens are deposited and the consuming clusters woken.
//!
//! Only one cluster consumes from any place, so taking tokens never competes
//! with another worker, and a consumer's callback never starts before the
//! callbacks that produced its tokens have finished.

use std::any::Any;
use std::collections::HashMap;
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clusters::{validate_partition, WorkClusterPartition};
use crate::net::{Net, NetError, Slot, State, StateDelta, TransitionId};
use crate::stategraph::StateGraph;
use crate::transitions::TransitionError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChoiceRule {
    /// Uniform over the cluster's enabled (transition, delta) pairs, drawn
    /// from a per-cluster stream derived from the policy seed.
    SeededRandom,
    /// Lowest transition id, then first delta in canonical order.
    FirstEnabled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopCondition {
    MaxFirings(u64),
    /// Run until nothing is enabled.
    Quiescence,
}

/// Cooperative stop request, shareable with another thread or a signal handler.
#[derive(Clone, Debug, Default)]
pub struct StopSignal(Arc<AtomicBool>);

impl StopSignal {
    pub fn new() -> Self {
        StopSignal::default()
    }

    pub fn stop(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Clone, Debug)]
pub struct ExecutionPolicy {
    pub seed: u64,
    pub choice: ChoiceRule,
    pub stop: StopCondition,
    /// Honored in addition to `stop`.
    pub signal: Option<StopSignal>,
}

impl ExecutionPolicy {
    pub fn seeded(seed: u64, stop: StopCondition) -> Self {
        ExecutionPolicy {
            seed,
            choice: ChoiceRule::SeededRandom,
            stop,
            signal: None,
        }
    }

    pub fn with_choice(mut self, choice: ChoiceRule) -> Self {
        self.choice = choice;
        self
    }

    pub fn with_signal(mut self, signal: StopSignal) -> Self {
        self.signal = Some(signal);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Quiescent,
    FiringLimit,
    Stopped,
    /// A callback or custom transition failed; the trace is partial.
    Failed,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Quiescent => "quiescent",
            Termination::FiringLimit => "firing_limit",
            Termination::Stopped => "stopped",
            Termination::Failed => "failed",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub transition: TransitionId,
    pub delta: StateDelta,
    /// Global marking right after this firing.
    pub snapshot: State,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub start: State,
    pub events: Vec<TraceEvent>,
    pub termination: Termination,
}

impl Trace {
    pub fn final_state(&self) -> &State {
        self.events.last().map_or(&self.start, |e| &e.snapshot)
    }
}

pub type Callback = Box<dyn FnMut(TransitionId, &StateDelta) + Send>;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid start marking: {0}")]
    InvalidStart(NetError),
    #[error("callback registered for unknown transition {0}")]
    UnknownCallback(TransitionId),
    #[error("callback of transition {transition} panicked: {message}")]
    CallbackPanic {
        transition: TransitionId,
        message: String,
        /// Includes the event whose callback failed.
        trace: Box<Trace>,
    },
    #[error("transition failed during execution: {source}")]
    Transition {
        source: TransitionError,
        trace: Box<Trace>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("trace and state graph start from different markings")]
    MismatchedStart,
    #[error("state graph is truncated; conformance cannot be decided")]
    IncompleteGraph,
}

/// Generation counter a worker sleeps on until something relevant changes.
#[derive(Default)]
struct Signal {
    generation: Mutex<u64>,
    cv: Condvar,
}

impl Signal {
    fn current(&self) -> u64 {
        *lock(&self.generation)
    }

    fn bump(&self) {
        *lock(&self.generation) += 1;
        self.cv.notify_all();
    }

    fn wait_changed(&self, seen: u64) {
        let mut g = lock(&self.generation);
        while *g == seen {
            g = self.cv.wait(g).unwrap_or_else(|e| e.into_inner());
        }
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

enum Failure {
    Callback { transition: TransitionId, message: String },
    Transition(TransitionError),
}

struct Ledger {
    snapshot: State,
    events: Vec<TraceEvent>,
    termination: Option<Termination>,
    failure: Option<Failure>,
}

struct Shared<'a> {
    net: &'a Net,
    policy: &'a ExecutionPolicy,
    colors: usize,
    /// Physical token counts, indexed by `place * colors + color`.
    tokens: Vec<AtomicU64>,
    /// Consuming cluster of each place, if any.
    consumer: Vec<Option<usize>>,
    signals: Vec<Signal>,
    ledger: Mutex<Ledger>,
    done: Condvar,
}

impl Shared<'_> {
    fn cell(&self, slot: Slot) -> &AtomicU64 {
        &self.tokens[slot.place.index() * self.colors + slot.color.index()]
    }

    fn wake_consumer(&self, slot: Slot) {
        if let Some(c) = self.consumer[slot.place.index()] {
            self.signals[c].bump();
        }
    }

    fn wake_all(&self) {
        for s in &self.signals {
            s.bump();
        }
    }

    fn terminate(&self, ledger: &mut Ledger, how: Termination) {
        if ledger.termination.is_none() {
            ledger.termination = Some(how);
            self.wake_all();
            self.done.notify_all();
        }
    }

    /// Input tokens of `d` are deposited, not just committed.
    fn available(&self, d: &StateDelta) -> bool {
        d.consumed()
            .all(|(slot, n)| self.cell(slot).load(Ordering::SeqCst) >= n)
    }

    fn quiescent(&self, s: &State) -> bool {
        self.net.transitions().all(|(_, t)| !t.enabled(s))
    }
}

fn panic_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

enum Step {
    /// Committed to the ledger; consume, run the callback, deposit.
    Fire(TransitionId, StateDelta),
    /// Nothing enabled in this cluster; sleep until the generation moves.
    Wait(u64),
    Exit,
}

struct Worker<'s, 'n> {
    index: usize,
    transitions: Vec<TransitionId>,
    callbacks: HashMap<TransitionId, Callback>,
    rng: ChaCha8Rng,
    shared: &'s Shared<'n>,
}

impl Worker<'_, '_> {
    fn decide(&mut self) -> Step {
        let shared = self.shared;
        let mut ledger = lock(&shared.ledger);
        if ledger.termination.is_some() {
            return Step::Exit;
        }
        let generation = shared.signals[self.index].current();
        let mut candidates = Vec::new();
        for &t in &self.transitions {
            let spec = shared.net.transition(t).expect("partition checked");
            if !spec.enabled(&ledger.snapshot) {
                continue;
            }
            match spec.updates(&ledger.snapshot) {
                Ok(ds) => candidates.extend(
                    ds.into_iter()
                        .filter(|d| shared.available(d))
                        .map(|d| (t, d)),
                ),
                Err(e) => {
                    ledger.failure = Some(Failure::Transition(e));
                    shared.terminate(&mut ledger, Termination::Failed);
                    return Step::Exit;
                }
            }
        }
        if candidates.is_empty() {
            if shared.quiescent(&ledger.snapshot) {
                shared.terminate(&mut ledger, Termination::Quiescent);
                return Step::Exit;
            }
            return Step::Wait(generation);
        }
        if let StopCondition::MaxFirings(n) = shared.policy.stop {
            if ledger.events.len() as u64 >= n {
                shared.terminate(&mut ledger, Termination::FiringLimit);
                return Step::Exit;
            }
        }
        let pick = match shared.policy.choice {
            ChoiceRule::FirstEnabled => 0,
            ChoiceRule::SeededRandom => self.rng.random_range(0..candidates.len()),
        };
        let (t, d) = candidates.swap_remove(pick);
        let next = match ledger.snapshot.apply(&d) {
            Ok(next) => next,
            Err(_) => unreachable!("updates() only yields applicable deltas"),
        };
        let seq = ledger.events.len() as u64;
        ledger.events.push(TraceEvent {
            seq,
            transition: t,
            delta: d.clone(),
            snapshot: next.clone(),
        });
        ledger.snapshot = next;
        for (slot, n) in d.consumed() {
            shared.cell(slot).fetch_sub(n, Ordering::SeqCst);
        }
        Step::Fire(t, d)
    }

    fn deposit(&self, d: &StateDelta) {
        for (slot, n) in d.produced() {
            self.shared.cell(slot).fetch_add(n, Ordering::SeqCst);
            self.shared.wake_consumer(slot);
        }
    }

    fn run(mut self) {
        let shared = self.shared;
        loop {
            let (t, d) = match self.decide() {
                Step::Fire(t, d) => (t, d),
                Step::Exit => return,
                Step::Wait(generation) => {
                    shared.signals[self.index].wait_changed(generation);
                    continue;
                }
            };
            if let Some(cb) = self.callbacks.get_mut(&t) {
                if let Err(payload) = panic::catch_unwind(AssertUnwindSafe(|| cb(t, &d))) {
                    let mut ledger = lock(&shared.ledger);
                    if ledger.failure.is_none() {
                        ledger.failure = Some(Failure::Callback {
                            transition: t,
                            message: panic_message(payload.as_ref()),
                        });
                    }
                    shared.terminate(&mut ledger, Termination::Failed);
                    return;
                }
            }
            self.deposit(&d);
        }
    }
}

/// Runs `net` from `start`, one worker per cluster of `partition`, until the
/// stop condition, quiescence, or an external stop.
pub fn run(
    net: &Net,
    start: &State,
    partition: &WorkClusterPartition,
    policy: &ExecutionPolicy,
    mut callbacks: HashMap<TransitionId, Callback>,
) -> Result<Trace, ExecError> {
    match validate_partition(net, partition) {
        Ok(true) => {}
        Ok(false) => {
            return Err(ExecError::InvalidPartition(
                "clusters share an input place".into(),
            ))
        }
        Err(e) => return Err(ExecError::InvalidPartition(e.to_string())),
    }
    net.check_state(start).map_err(ExecError::InvalidStart)?;
    if let Some(&t) = callbacks.keys().find(|t| t.index() >= net.transition_count()) {
        return Err(ExecError::UnknownCallback(t));
    }

    let colors = net.color_count();
    let mut consumer = vec![None; net.place_count()];
    for (ci, cluster) in partition.clusters().iter().enumerate() {
        for &t in cluster {
            for p in net.transition(t).expect("validated").input_places() {
                if let Some(c) = consumer.get_mut(p.index()) {
                    *c = Some(ci);
                }
            }
        }
    }
    let tokens = (0..net.place_count() * colors).map(|_| AtomicU64::new(0)).collect();
    let shared = Shared {
        net,
        policy,
        colors,
        tokens,
        consumer,
        signals: partition.clusters().iter().map(|_| Signal::default()).collect(),
        ledger: Mutex::new(Ledger {
            snapshot: start.clone(),
            events: Vec::new(),
            termination: None,
            failure: None,
        }),
        done: Condvar::new(),
    };
    for (slot, n) in start.iter() {
        shared.cell(slot).store(n, Ordering::SeqCst);
    }

    {
        let mut ledger = lock(&shared.ledger);
        if shared.quiescent(&ledger.snapshot) {
            shared.terminate(&mut ledger, Termination::Quiescent);
        }
    }

    let workers: Vec<Worker> = partition
        .clusters()
        .iter()
        .enumerate()
        .map(|(index, cluster)| Worker {
            index,
            transitions: cluster.clone(),
            callbacks: cluster
                .iter()
                .filter_map(|t| callbacks.remove_entry(t))
                .collect(),
            rng: ChaCha8Rng::seed_from_u64(
                policy.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            ),
            shared: &shared,
        })
        .collect();

    std::thread::scope(|scope| {
        for w in workers {
            scope.spawn(move || w.run());
        }
        let mut ledger = lock(&shared.ledger);
        while ledger.termination.is_none() {
            match &policy.signal {
                Some(signal) => {
                    if signal.is_stopped() {
                        shared.terminate(&mut ledger, Termination::Stopped);
                        break;
                    }
                    ledger = shared
                        .done
                        .wait_timeout(ledger, Duration::from_millis(5))
                        .unwrap_or_else(|e| e.into_inner())
                        .0;
                }
                None => {
                    ledger = shared.done.wait(ledger).unwrap_or_else(|e| e.into_inner());
                }
            }
        }
    });

    let ledger = shared.ledger.into_inner().unwrap_or_else(|e| e.into_inner());
    let trace = Trace {
        start: start.clone(),
        events: ledger.events,
        termination: ledger.termination.expect("terminated before join"),
    };
    match ledger.failure {
        None => Ok(trace),
        Some(Failure::Callback { transition, message }) => Err(ExecError::CallbackPanic {
            transition,
            message,
            trace: Box::new(trace),
        }),
        Some(Failure::Transition(source)) => Err(ExecError::Transition {
            source,
            trace: Box::new(trace),
        }),
    }
}

/// True iff every step of `t` is an edge of `g` with the same transition and delta.
pub fn validate_trace(t: &Trace, g: &StateGraph) -> Result<bool, TraceError> {
    if &t.start != g.start() {
        return Err(TraceError::MismatchedStart);
    }
    if !g.is_complete() {
        return Err(TraceError::IncompleteGraph);
    }
    let mut prev = &t.start;
    for e in &t.events {
        match prev.apply(&e.delta) {
            Ok(next) if next == e.snapshot => {}
            _ => return Ok(false),
        }
        if !g.has_edge(prev, e.transition, &e.delta, &e.snapshot) {
            return Ok(false);
        }
        prev = &e.snapshot;
    }
    Ok(true)
}
