//! Text formats: the JSON net document, JSON state graphs, and Graphviz DOT.
//!
//! Net document (schema version "1"):
//!
//! ```json
//! {
//!   "version": "1",
//!   "colors": ["•"],
//!   "places": ["H2", "O2", "H2O"],
//!   "transitions": [
//!     {"kind": "and", "name": "T",
//!      "inputs": [{"place": "H2", "color": "•", "weight": 2},
//!                 {"place": "O2", "color": "•", "weight": 1}],
//!      "outputs": [{"place": "H2O", "color": "•", "weight": 2}]},
//!     {"kind": "xor", "name": "X",
//!      "pairs": [{"input": {"place": "H2O", "color": "•"},
//!                 "output": {"place": "H2", "color": "•"}}]}
//!   ],
//!   "marking": [["H2", "•", 2], ["O2", "•", 1]]
//! }
//! ```
//!
//! `color` may be omitted when the net declares exactly one color, and
//! `weight` defaults to 1. Custom transitions have no document form.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clusters::WorkClusterPartition;
use crate::net::{ArcDirection, ColorId, Net, PlaceId, Slot, State, StateDelta};
use crate::stategraph::{GraphStatus, StateGraph};
use crate::transitions::{TransitionKind, TransitionSpec};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Semantic(String),
    #[error("unsupported document version {0:?} (expected \"1\")")]
    Version(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SerializeError {
    #[error("transition '{0}' is a custom transition and cannot be serialized")]
    UnserializableTransition(String),
    #[error("transition '{0}' references an undeclared place or color")]
    DanglingReference(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetDocument {
    version: String,
    colors: Vec<String>,
    places: Vec<String>,
    #[serde(default)]
    transitions: Vec<TransitionDoc>,
    #[serde(default)]
    marking: Vec<(String, String, u64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TransitionDoc {
    And {
        name: String,
        #[serde(default)]
        inputs: Vec<ArcDoc>,
        #[serde(default)]
        outputs: Vec<ArcDoc>,
    },
    Xor {
        name: String,
        pairs: Vec<PairDoc>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArcDoc {
    place: String,
    #[serde(default)]
    color: Option<String>,
    #[serde(default = "one")]
    weight: u32,
}

fn one() -> u32 {
    1
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotDoc {
    place: String,
    #[serde(default)]
    color: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairDoc {
    input: SlotDoc,
    output: SlotDoc,
}

fn syntax(e: serde_json::Error) -> ParseError {
    ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

struct Resolver<'a> {
    net: &'a Net,
}

impl Resolver<'_> {
    fn slot(&self, place: &str, color: Option<&str>, context: &str) -> Result<Slot, ParseError> {
        let p = self
            .net
            .place(place)
            .ok_or_else(|| ParseError::Semantic(format!("{context}: unknown place '{place}'")))?;
        let c = match color {
            Some(name) => self
                .net
                .color(name)
                .ok_or_else(|| ParseError::Semantic(format!("{context}: unknown color '{name}'")))?,
            None if self.net.color_count() == 1 => ColorId(0),
            None => {
                return Err(ParseError::Semantic(format!(
                    "{context}: color required for place '{place}' in a multi-color net"
                )))
            }
        };
        Ok(Slot::new(p, c))
    }

    fn arcs(&self, arcs: &[ArcDoc], context: &str) -> Result<Vec<(Slot, u32)>, ParseError> {
        arcs.iter()
            .map(|a| {
                if a.weight == 0 {
                    return Err(ParseError::Semantic(format!(
                        "{context}: arc on place '{}' has weight 0",
                        a.place
                    )));
                }
                Ok((self.slot(&a.place, a.color.as_deref(), context)?, a.weight))
            })
            .collect()
    }
}

/// Parses and validates a net document, returning the net and its start marking.
pub fn parse_net(text: &str) -> Result<(Net, State), ParseError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(syntax)?;
    match value.get("version") {
        Some(serde_json::Value::String(v)) if v == FORMAT_VERSION => {}
        Some(serde_json::Value::String(v)) => return Err(ParseError::Version(v.clone())),
        Some(other) => return Err(ParseError::Version(other.to_string())),
        None => {}
    }
    let doc: NetDocument = serde_json::from_str(text).map_err(syntax)?;

    let mut net = Net::new(doc.places, doc.colors).map_err(|e| ParseError::Semantic(e.to_string()))?;
    let mut specs = Vec::with_capacity(doc.transitions.len());
    {
        let r = Resolver { net: &net };
        for t in &doc.transitions {
            let spec = match t {
                TransitionDoc::And { name, inputs, outputs } => {
                    let ctx = format!("transition '{name}'");
                    TransitionSpec::and(name.clone(), r.arcs(inputs, &ctx)?, r.arcs(outputs, &ctx)?)
                        .map_err(|e| ParseError::Semantic(format!("{ctx}: {e}")))?
                }
                TransitionDoc::Xor { name, pairs } => {
                    let ctx = format!("transition '{name}'");
                    let pairs = pairs
                        .iter()
                        .map(|p| {
                            Ok((
                                r.slot(&p.input.place, p.input.color.as_deref(), &ctx)?,
                                r.slot(&p.output.place, p.output.color.as_deref(), &ctx)?,
                            ))
                        })
                        .collect::<Result<Vec<_>, ParseError>>()?;
                    TransitionSpec::xor(name.clone(), pairs)
                }
            };
            specs.push(spec);
        }
    }
    for spec in specs {
        net.add_transition(spec).map_err(|e| ParseError::Semantic(e.to_string()))?;
    }
    let report = net.validate();
    if let Some(f) = report.errors().next() {
        let name = net.transition(f.transition).map_or("?", |t| t.name());
        return Err(ParseError::Semantic(format!("transition '{name}': {:?}", f.kind)));
    }

    let r = Resolver { net: &net };
    let mut seen = BTreeSet::new();
    let mut counts = Vec::with_capacity(doc.marking.len());
    for (place, color, n) in &doc.marking {
        let slot = r.slot(place, Some(color), "marking")?;
        if !seen.insert(slot) {
            return Err(ParseError::Semantic(format!(
                "marking: duplicate entry for place '{place}' color '{color}'"
            )));
        }
        counts.push((slot, *n));
    }
    let start = State::from_counts(counts);
    Ok((net, start))
}

fn place_label(net: &Net, p: PlaceId) -> String {
    net.place_name(p).map_or_else(|| format!("#{}", p.0), str::to_string)
}

fn color_label(net: &Net, c: ColorId) -> String {
    net.color_name(c).map_or_else(|| format!("#{}", c.0), str::to_string)
}

/// Deterministic document text for `net` and marking `s`.
pub fn serialize_net(net: &Net, s: &State) -> Result<String, SerializeError> {
    let name_of = |slot: Slot, t: &TransitionSpec| -> Result<(String, String), SerializeError> {
        match (net.place_name(slot.place), net.color_name(slot.color)) {
            (Some(p), Some(c)) => Ok((p.to_string(), c.to_string())),
            _ => Err(SerializeError::DanglingReference(t.name().to_string())),
        }
    };
    let mut transitions = Vec::with_capacity(net.transition_count());
    for (_, t) in net.transitions() {
        let doc = match t.kind() {
            TransitionKind::Custom(_) => {
                return Err(SerializeError::UnserializableTransition(t.name().to_string()))
            }
            TransitionKind::And(p) => {
                let arcs = |m: &std::collections::BTreeMap<Slot, crate::net::Weight>| {
                    m.iter()
                        .map(|(slot, w)| {
                            let (place, color) = name_of(*slot, t)?;
                            Ok(ArcDoc {
                                place,
                                color: Some(color),
                                weight: w.get(),
                            })
                        })
                        .collect::<Result<Vec<_>, SerializeError>>()
                };
                TransitionDoc::And {
                    name: t.name().to_string(),
                    inputs: arcs(p.inputs())?,
                    outputs: arcs(p.outputs())?,
                }
            }
            TransitionKind::Xor(p) => TransitionDoc::Xor {
                name: t.name().to_string(),
                pairs: p
                    .pairs()
                    .iter()
                    .map(|pair| {
                        let (ip, ic) = name_of(pair.input, t)?;
                        let (op, oc) = name_of(pair.output, t)?;
                        Ok(PairDoc {
                            input: SlotDoc {
                                place: ip,
                                color: Some(ic),
                            },
                            output: SlotDoc {
                                place: op,
                                color: Some(oc),
                            },
                        })
                    })
                    .collect::<Result<Vec<_>, SerializeError>>()?,
            },
        };
        transitions.push(doc);
    }
    let doc = NetDocument {
        version: FORMAT_VERSION.to_string(),
        colors: net.color_names().to_vec(),
        places: net.place_names().to_vec(),
        transitions,
        marking: s
            .iter()
            .map(|(slot, n)| (place_label(net, slot.place), color_label(net, slot.color), n))
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("document is plain data");
    text.push('\n');
    Ok(text)
}

#[derive(Serialize)]
struct GraphDocument {
    version: &'static str,
    status: &'static str,
    truncated_by: Vec<&'static str>,
    start: usize,
    states: Vec<Vec<(String, String, u64)>>,
    edges: Vec<EdgeDoc>,
    frontier: Vec<usize>,
}

#[derive(Serialize)]
struct EdgeDoc {
    from: usize,
    to: usize,
    transition: String,
    delta: Vec<(String, String, i64)>,
}

/// Marking as sorted (place, color, count) triples.
pub fn marking_triples(net: &Net, s: &State) -> Vec<(String, String, u64)> {
    s.iter()
        .map(|(slot, n)| (place_label(net, slot.place), color_label(net, slot.color), n))
        .collect()
}

pub fn delta_triples(net: &Net, d: &StateDelta) -> Vec<(String, String, i64)> {
    d.iter()
        .map(|(slot, n)| (place_label(net, slot.place), color_label(net, slot.color), n))
        .collect()
}

/// JSON form of a state graph. Node indices follow canonical node order.
pub fn serialize_graph(net: &Net, g: &StateGraph) -> String {
    let (status, truncated_by) = match g.status() {
        GraphStatus::Complete => ("complete", vec![]),
        GraphStatus::Truncated(r) => ("truncated", r.iter().map(|r| r.as_str()).collect()),
    };
    let mut edges = Vec::with_capacity(g.edge_count());
    for i in 0..g.node_count() {
        for e in g.edges(i) {
            edges.push(EdgeDoc {
                from: i,
                to: e.target,
                transition: net
                    .transition(e.transition)
                    .map_or_else(|| e.transition.to_string(), |t| t.name().to_string()),
                delta: delta_triples(net, &e.delta),
            });
        }
    }
    let doc = GraphDocument {
        version: FORMAT_VERSION,
        status,
        truncated_by,
        start: g.start_index(),
        states: g.states().iter().map(|s| marking_triples(net, s)).collect(),
        edges,
        frontier: g.frontier().iter().copied().collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("plain data");
    text.push('\n');
    text
}

/// What to render as DOT.
pub enum DotTarget<'a> {
    Net {
        net: &'a Net,
        partition: Option<&'a WorkClusterPartition>,
    },
    Graph {
        net: &'a Net,
        graph: &'a StateGraph,
    },
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Short human label for a marking, e.g. `H2:2 O2:1`.
pub fn marking_label(net: &Net, s: &State) -> String {
    if s.is_empty() {
        return "(empty)".to_string();
    }
    let multi = net.color_count() > 1;
    s.iter()
        .map(|(slot, n)| {
            if multi {
                format!("{}[{}]:{}", place_label(net, slot.place), color_label(net, slot.color), n)
            } else {
                format!("{}:{}", place_label(net, slot.place), n)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn export_dot(target: DotTarget<'_>) -> String {
    match target {
        DotTarget::Net { net, partition } => net_dot(net, partition),
        DotTarget::Graph { net, graph } => graph_dot(net, graph),
    }
}

fn transition_node(net: &Net, t: crate::net::TransitionId) -> String {
    let spec = net.transition(t).expect("transition of this net");
    let shape = match spec.kind() {
        TransitionKind::And(_) => "square",
        TransitionKind::Xor(_) => "diamond",
        TransitionKind::Custom(_) => "hexagon",
    };
    format!("{} [shape={shape}, label={}];", quote(&format!("t{}", t.0)), quote(spec.name()))
}

fn net_dot(net: &Net, partition: Option<&WorkClusterPartition>) -> String {
    let mut out = String::from("digraph net {\n");
    for p in net.place_ids() {
        let _ = writeln!(
            out,
            "  {} [shape=circle, label={}];",
            quote(&format!("p{}", p.0)),
            quote(&place_label(net, p))
        );
    }
    match partition {
        Some(partition) => {
            for (i, cluster) in partition.clusters().iter().enumerate() {
                let _ = writeln!(out, "  subgraph {} {{", quote(&format!("cluster_{i}")));
                let _ = writeln!(out, "    label={};", quote(&format!("work cluster {i}")));
                for &t in cluster {
                    let _ = writeln!(out, "    {}", transition_node(net, t));
                }
                out.push_str("  }\n");
            }
        }
        None => {
            for t in net.transition_ids() {
                let _ = writeln!(out, "  {}", transition_node(net, t));
            }
        }
    }
    let multi = net.color_count() > 1;
    for arc in net.arcs() {
        if arc.place.index() >= net.place_count() {
            continue;
        }
        let p = quote(&format!("p{}", arc.place.0));
        let t = quote(&format!("t{}", arc.transition.0));
        let (from, to) = match arc.direction {
            ArcDirection::PlaceToTransition => (p, t),
            ArcDirection::TransitionToPlace => (t, p),
        };
        let mut attrs = Vec::new();
        if arc.weight.get() != 1 {
            attrs.push(format!("label={}", quote(&arc.weight.get().to_string())));
        }
        if multi {
            if let Some(name) = arc.color.and_then(|c| net.color_name(c)) {
                attrs.push(format!("color={}", quote(name)));
            }
        }
        if attrs.is_empty() {
            let _ = writeln!(out, "  {from} -> {to};");
        } else {
            let _ = writeln!(out, "  {from} -> {to} [{}];", attrs.join(", "));
        }
    }
    out.push_str("}\n");
    out
}

fn graph_dot(net: &Net, g: &StateGraph) -> String {
    let mut out = String::from("digraph state_graph {\n");
    for (i, s) in g.states().iter().enumerate() {
        let mut attrs = vec!["shape=box".to_string(), format!("label={}", quote(&marking_label(net, s)))];
        if i == g.start_index() {
            attrs.push("style=bold".into());
        } else if g.frontier().contains(&i) {
            attrs.push("style=dashed".into());
        }
        let _ = writeln!(out, "  {} [{}];", quote(&format!("s{i}")), attrs.join(", "));
    }
    for i in 0..g.node_count() {
        for e in g.edges(i) {
            let label = net
                .transition(e.transition)
                .map_or_else(|| e.transition.to_string(), |t| t.name().to_string());
            let _ = writeln!(
                out,
                "  {} -> {} [label={}];",
                quote(&format!("s{i}")),
                quote(&format!("s{}", e.target)),
                quote(&label)
            );
        }
    }
    out.push_str("}\n");
    out
}
