//! Command-line front end: `check`, `partition`, `run` and `export`.
//!
//! Exit codes: 0 pass, 1 failed check, 2 usage or input error.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::clusters::{compute_work_clusters, WorkClusterPartition};
use crate::executor::{self, ExecError, ExecutionPolicy, StopCondition, StopSignal, Trace};
use crate::io::{self, marking_label, marking_triples, DotTarget};
use crate::net::{Net, State};
use crate::stategraph::{
    analyze, compute_state_graph, state_count_bound, AnalysisReport, ExplorationLimits, GraphStatus, NamedPredicate,
    StateGraph,
};
use crate::transitions::TransitionKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "ntnet", version, about = "Analyze and run nondeterministic-transition colored Petri nets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Explore the state graph and report deadlocks, cycles and truncation.
    Check {
        /// Net document path, or `-` for stdin.
        input: PathBuf,
        #[command(flatten)]
        limits: LimitArgs,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
        /// Conditions that make the check fail (comma separated).
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [FailOn::Deadlock, FailOn::Truncation])]
        fail_on: Vec<FailOn>,
        /// Built-in safety predicate: `max-total-tokens=N` or `max-place-tokens=PLACE:N`.
        #[arg(long = "predicate")]
        predicates: Vec<String>,
    },
    /// Print the maximal work-cluster partition.
    Partition {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Execute the net under the maximal partition and check the trace against the state graph.
    Run {
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop after this many firings.
        #[arg(long, default_value_t = 1000)]
        firings: u64,
        #[command(flatten)]
        limits: LimitArgs,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Write Graphviz DOT to stdout.
    Export {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ExportTarget::Net)]
        target: ExportTarget,
        #[command(flatten)]
        limits: LimitArgs,
    },
}

#[derive(clap::Args, Debug, Clone)]
pub struct LimitArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub max_states: usize,
    /// Per-place token cap; 0 disables it.
    #[arg(long, default_value_t = 10_000)]
    pub max_tokens_per_place: u64,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

impl LimitArgs {
    fn limits(&self) -> ExplorationLimits {
        ExplorationLimits::default()
            .with_max_states(self.max_states)
            .with_max_tokens_per_place((self.max_tokens_per_place > 0).then_some(self.max_tokens_per_place))
            .with_max_depth(self.max_depth)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Human,
    Report,
    Dot,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailOn {
    Deadlock,
    Truncation,
    None,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportTarget {
    Net,
    Graph,
    ClusteredNet,
}

/// Failure that maps to exit code 2.
struct InputError(String);

type CmdResult = Result<i32, InputError>;

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with_signal(args, stdin, out, err, None)
}

/// Like [`run`], with a stop signal forwarded to the executor.
pub fn run_with_signal<I, T>(
    args: I,
    stdin: &mut dyn Read,
    out: &mut dyn Write,
    err: &mut dyn Write,
    signal: Option<StopSignal>,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Check {
            input,
            limits,
            format,
            fail_on,
            predicates,
        } => cmd_check(&input, stdin, out, &limits, format, &fail_on, &predicates),
        Command::Partition { input, format } => cmd_partition(&input, stdin, out, format),
        Command::Run {
            input,
            seed,
            firings,
            limits,
            format,
        } => cmd_run(&input, stdin, out, seed, firings, &limits, format, signal),
        Command::Export { input, target, limits } => cmd_export(&input, stdin, out, target, &limits),
    };
    match result {
        Ok(code) => code,
        Err(InputError(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_INPUT
        }
    }
}

fn load(input: &PathBuf, stdin: &mut dyn Read) -> Result<(Net, State), InputError> {
    let text = if input.as_os_str() == "-" {
        let mut s = String::new();
        stdin
            .read_to_string(&mut s)
            .map_err(|e| InputError(format!("reading stdin: {e}")))?;
        s
    } else {
        std::fs::read_to_string(input).map_err(|e| InputError(format!("reading {}: {e}", input.display())))?
    };
    io::parse_net(&text).map_err(|e| InputError(e.to_string()))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), InputError> {
    out.write_all(text.as_bytes())
        .map_err(|e| InputError(format!("writing output: {e}")))
}

fn graph(net: &Net, start: &State, limits: &LimitArgs) -> Result<StateGraph, InputError> {
    compute_state_graph(net, start, limits.limits()).map_err(|e| InputError(e.to_string()))
}

fn parse_predicate(net: &Net, text: &str) -> Result<NamedPredicate, InputError> {
    let bad = || InputError(format!("unrecognized predicate '{text}'"));
    let (name, arg) = text.split_once('=').ok_or_else(bad)?;
    match name {
        "max-total-tokens" => {
            let n: u64 = arg.parse().map_err(|_| bad())?;
            Ok(NamedPredicate::new(text, move |s: &State| s.total_tokens() <= n))
        }
        "max-place-tokens" => {
            let (place, n) = arg.rsplit_once(':').ok_or_else(bad)?;
            let n: u64 = n.parse().map_err(|_| bad())?;
            let p = net
                .place(place)
                .ok_or_else(|| InputError(format!("predicate '{text}': unknown place '{place}'")))?;
            Ok(NamedPredicate::new(text, move |s: &State| s.place_total(p) <= n))
        }
        _ => Err(bad()),
    }
}

/// True when every transition is an And/Xor transition that never creates
/// tokens of any color, which is when the `(p+1)^t` bound holds.
fn bound_applies(net: &Net) -> bool {
    net.transitions().all(|(_, t)| match t.kind() {
        TransitionKind::Custom(_) => false,
        TransitionKind::Xor(x) => x.pairs().iter().all(|p| p.input.color == p.output.color),
        TransitionKind::And(a) => net.color_ids().all(|c| {
            let sum = |m: &std::collections::BTreeMap<crate::net::Slot, crate::net::Weight>| -> u64 {
                m.iter().filter(|(s, _)| s.color == c).map(|(_, w)| u64::from(w.get())).sum()
            };
            sum(a.outputs()) <= sum(a.inputs())
        }),
    })
}

fn check_verdict(report: &AnalysisReport, fail_on: &[FailOn]) -> Vec<&'static str> {
    let mut reasons = Vec::new();
    let wants = |f| fail_on.contains(&f) && !fail_on.contains(&FailOn::None);
    if wants(FailOn::Truncation) && !report.status.is_complete() {
        reasons.push("truncated");
    }
    if wants(FailOn::Deadlock) && !report.deadlocks.states.is_empty() {
        reasons.push("deadlock");
    }
    if !report.violations.is_empty() {
        reasons.push("predicate");
    }
    reasons
}

fn status_parts(status: &GraphStatus) -> (&'static str, Vec<&'static str>) {
    match status {
        GraphStatus::Complete => ("complete", vec![]),
        GraphStatus::Truncated(r) => ("truncated", r.iter().map(|r| r.as_str()).collect()),
    }
}

fn cmd_check(
    input: &PathBuf,
    stdin: &mut dyn Read,
    out: &mut dyn Write,
    limits: &LimitArgs,
    format: Format,
    fail_on: &[FailOn],
    predicates: &[String],
) -> CmdResult {
    let (net, start) = load(input, stdin)?;
    let preds = predicates
        .iter()
        .map(|p| parse_predicate(&net, p))
        .collect::<Result<Vec<_>, _>>()?;
    let g = graph(&net, &start, limits)?;
    let report = analyze(&net, &g, &preds);
    let bound = state_count_bound(net.place_count() as u64, start.total_tokens());
    let applies = bound_applies(&net);
    let reasons = check_verdict(&report, fail_on);
    let (status, truncated_by) = status_parts(&report.status);

    let text = match format {
        Format::Report => {
            let doc = json!({
                "version": io::FORMAT_VERSION,
                "states": report.state_count,
                "edges": report.edge_count,
                "status": status,
                "truncated_by": truncated_by,
                "deadlocks": report.deadlocks.states.iter().map(|s| marking_triples(&net, s)).collect::<Vec<_>>(),
                "deadlocks_partial": report.deadlocks.partial,
                "graph_has_cycle": report.graph_has_cycle,
                "net_has_cycle": report.net_has_cycle,
                "bound": bound.to_string(),
                "bound_applies": applies,
                "predicates": report.violations.iter().map(|v| json!({
                    "name": v.name,
                    "violations": v.states.iter().map(|s| marking_triples(&net, s)).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
                "verdict": if reasons.is_empty() { "pass" } else { "fail" },
                "failed_on": reasons,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("plain data");
            s.push('\n');
            s
        }
        Format::Human => {
            let mut s = String::new();
            s += &format!("states: {}\n", report.state_count);
            s += &format!("edges: {}\n", report.edge_count);
            s += &format!("status: {}\n", report.status);
            let partial = if report.deadlocks.partial { " (partial: graph truncated)" } else { "" };
            s += &format!("deadlocks: {}{partial}\n", report.deadlocks.states.len());
            for d in &report.deadlocks.states {
                s += &format!("  {}\n", marking_label(&net, d));
            }
            s += &format!("graph cycle: {}\n", yes_no(report.graph_has_cycle));
            s += &format!("net cycle: {}\n", yes_no(report.net_has_cycle));
            s += &format!(
                "state bound (p+1)^t: ({}+1)^{} = {}{}\n",
                net.place_count(),
                start.total_tokens(),
                bound,
                if applies { "" } else { " (not applicable: net may create or recolor tokens)" }
            );
            for v in &report.violations {
                s += &format!("predicate {} violated in {} state(s)\n", v.name, v.states.len());
                for st in &v.states {
                    s += &format!("  {}\n", marking_label(&net, st));
                }
            }
            if reasons.is_empty() {
                s += "verdict: pass\n";
            } else {
                s += &format!("verdict: fail ({})\n", reasons.join(", "));
            }
            s
        }
        Format::Dot => io::export_dot(DotTarget::Graph { net: &net, graph: &g }),
    };
    emit(out, &text)?;
    Ok(if reasons.is_empty() { EXIT_OK } else { EXIT_FAIL })
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn cluster_names(net: &Net, p: &WorkClusterPartition) -> Vec<Vec<String>> {
    p.clusters()
        .iter()
        .map(|c| {
            c.iter()
                .map(|t| net.transition(*t).map_or_else(|| t.to_string(), |s| s.name().to_string()))
                .collect()
        })
        .collect()
}

fn cmd_partition(input: &PathBuf, stdin: &mut dyn Read, out: &mut dyn Write, format: Format) -> CmdResult {
    let (net, _) = load(input, stdin)?;
    let p = compute_work_clusters(&net);
    let names = cluster_names(&net, &p);
    let text = match format {
        Format::Report => {
            let mut s = serde_json::to_string_pretty(&json!({ "clusters": names })).expect("plain data");
            s.push('\n');
            s
        }
        Format::Human => names
            .iter()
            .enumerate()
            .map(|(i, c)| format!("cluster {i}: {}\n", c.join(" ")))
            .collect(),
        Format::Dot => io::export_dot(DotTarget::Net {
            net: &net,
            partition: Some(&p),
        }),
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    input: &PathBuf,
    stdin: &mut dyn Read,
    out: &mut dyn Write,
    seed: u64,
    firings: u64,
    limits: &LimitArgs,
    format: Format,
    signal: Option<StopSignal>,
) -> CmdResult {
    let (net, start) = load(input, stdin)?;
    let partition = compute_work_clusters(&net);
    let mut policy = ExecutionPolicy::seeded(seed, StopCondition::MaxFirings(firings));
    if let Some(signal) = signal {
        policy = policy.with_signal(signal);
    }
    let (trace, failure) = match executor::run(&net, &start, &partition, &policy, HashMap::new()) {
        Ok(trace) => (trace, None),
        Err(ExecError::Transition { source, trace }) => (*trace, Some(source.to_string())),
        Err(e) => return Err(InputError(e.to_string())),
    };
    let g = graph(&net, &start, limits)?;
    let verdict = match executor::validate_trace(&trace, &g) {
        Ok(true) if failure.is_none() => "conformant",
        Ok(_) => "nonconformant",
        Err(_) => "unverified",
    };
    let text = match format {
        Format::Report => run_report(&net, &trace, verdict, failure.as_deref()),
        Format::Human | Format::Dot => {
            let mut s = String::new();
            s += &format!("start: {}\n", marking_label(&net, &trace.start));
            for e in &trace.events {
                let name = net.transition(e.transition).map_or("?", |t| t.name());
                s += &format!("{:>4} {} -> {}\n", e.seq, name, marking_label(&net, &e.snapshot));
            }
            s += &format!("firings: {}\n", trace.events.len());
            s += &format!("termination: {}\n", trace.termination.as_str());
            if let Some(f) = &failure {
                s += &format!("failure: {f}\n");
            }
            s += &format!("conformance: {verdict}\n");
            s
        }
    };
    emit(out, &text)?;
    Ok(if verdict == "conformant" { EXIT_OK } else { EXIT_FAIL })
}

fn run_report(net: &Net, trace: &Trace, verdict: &str, failure: Option<&str>) -> String {
    let doc = json!({
        "version": io::FORMAT_VERSION,
        "start": marking_triples(net, &trace.start),
        "events": trace.events.iter().map(|e| json!({
            "seq": e.seq,
            "transition": net.transition(e.transition).map_or("?", |t| t.name()),
            "delta": io::delta_triples(net, &e.delta),
            "marking": marking_triples(net, &e.snapshot),
        })).collect::<Vec<_>>(),
        "termination": trace.termination.as_str(),
        "failure": failure,
        "conformance": verdict,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("plain data");
    s.push('\n');
    s
}

fn cmd_export(
    input: &PathBuf,
    stdin: &mut dyn Read,
    out: &mut dyn Write,
    target: ExportTarget,
    limits: &LimitArgs,
) -> CmdResult {
    let (net, start) = load(input, stdin)?;
    let text = match target {
        ExportTarget::Net => io::export_dot(DotTarget::Net {
            net: &net,
            partition: None,
        }),
        ExportTarget::ClusteredNet => {
            let p = compute_work_clusters(&net);
            io::export_dot(DotTarget::Net {
                net: &net,
                partition: Some(&p),
            })
        }
        ExportTarget::Graph => {
            let g = graph(&net, &start, limits)?;
            io::export_dot(DotTarget::Graph { net: &net, graph: &g })
        }
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}
