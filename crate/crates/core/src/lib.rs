//! Nondeterministic-transition colored Petri nets: state-graph verification,
//! work-cluster partitioning and concurrent execution.
//!
//! ```
//! use ntnet::net::{ColorId, Net, Slot, State};
//! use ntnet::stategraph::{compute_state_graph, deadlock_states, ExplorationLimits};
//! use ntnet::transitions::TransitionSpec;
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let mut net = Net::new(["H2", "O2", "H2O"], ["•"])?;
//! let s = |p: &str| Slot::new(net.place(p).unwrap(), ColorId(0));
//! let (h2, o2, h2o) = (s("H2"), s("O2"), s("H2O"));
//! net.add_transition(TransitionSpec::and("T", [(h2, 2), (o2, 1)], [(h2o, 2)])?)?;
//! let start = State::from_counts([(h2, 2), (o2, 1)]);
//! let graph = compute_state_graph(&net, &start, ExplorationLimits::default())?;
//! assert_eq!(graph.node_count(), 2);
//! assert_eq!(deadlock_states(&graph).states.len(), 1);
//! # Ok(())
//! # }
//! ```

pub mod net;
pub mod transitions;
pub mod stategraph;
pub mod clusters;
pub mod executor;
pub mod io;
pub mod cli;
