//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{load_fixture, partition_is_valid, random_net, set_partitions, GenConfig, RawNet, RawTransition};
use ntnet::clusters::{compute_work_clusters, validate_partition, WorkClusterPartition};
use ntnet::executor::{run, validate_trace, ExecutionPolicy, StopCondition};
use ntnet::io::{parse_net, serialize_net};
use ntnet::net::{ColorId, Slot, State, TransitionId};
use ntnet::stategraph::{
    compute_state_graph, deadlock_states, graph_has_cycle, net_has_cycle, state_count_bound, ExplorationLimits,
    TruncationReason,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn limits(max_states: usize) -> ExplorationLimits {
    ExplorationLimits::default().with_max_states(max_states)
}

fn h2o_fixture() -> Outcome {
    let (net, start) = load_fixture("h2o.json");
    let slot = |name: &str| Slot::new(net.place(name).unwrap(), ColorId(0));
    // Hand enumeration: 2 H2 + O2 -> 2 H2O fires once, then nothing is enabled.
    let s0 = State::from_counts([(slot("H2"), 2), (slot("O2"), 1)]);
    let s1 = State::from_counts([(slot("H2O"), 2)]);
    ensure(start == s0, || format!("unexpected start {start:?}"))?;
    let g = compute_state_graph(&net, &start, limits(1000)).map_err(|e| e.to_string())?;
    ensure(g.is_complete(), || "graph truncated".into())?;
    ensure(g.node_count() == 2 && g.edge_count() == 1, || {
        format!("{} states, {} edges", g.node_count(), g.edge_count())
    })?;
    ensure(g.contains(&s1), || "post-firing state {H2O:2} missing".into())?;
    let dead = deadlock_states(&g);
    ensure(dead.states == vec![s1.clone()] && !dead.partial, || format!("deadlocks {:?}", dead.states))?;
    Ok("2 states, 1 edge, sole deadlock {H2O:2}".into())
}

fn colored_enablement() -> Outcome {
    let (net, start) = load_fixture("colored.json");
    let t0 = net.transition_by_name("T0").unwrap();
    let t1 = net.transition_by_name("T1").unwrap();
    let e0 = net.transition(t0).unwrap().enabled(&start);
    let e1 = net.transition(t1).unwrap().enabled(&start);
    ensure(e0 && !e1, || format!("enabled(T0)={e0}, enabled(T1)={e1}"))?;
    Ok("blue token at P0: T0 enabled, T1 not".into())
}

/// Non-token-increasing, color-preserving net whose start marking holds one
/// token of each color.
fn bound_net(rng: &mut ChaCha8Rng) -> RawNet {
    let tokens = rng.random_range(1..=4usize);
    let cfg = GenConfig {
        max_places: 4,
        max_colors: 1,
        max_transitions: 5,
        max_arcs: 3,
        max_weight: 1,
        max_start_tokens: 0,
        non_increasing: true,
        allow_xor: true,
        require_inputs: true,
    };
    let mut raw = random_net(rng, &cfg);
    // Spread the generated arcs over `tokens` colors, keeping each arc's
    // color consistent between consumption and production.
    raw.color_names = (0..tokens).map(|c| format!("c{c}")).collect();
    for t in &mut raw.transitions {
        match t {
            RawTransition::And { inputs, outputs } => {
                let c = rng.random_range(0..tokens);
                for ((_, col), _) in inputs.iter_mut().chain(outputs.iter_mut()) {
                    *col = c;
                }
            }
            RawTransition::Xor { pairs } => {
                let mut used = BTreeSet::new();
                pairs.retain_mut(|(a, b)| {
                    let c = rng.random_range(0..tokens);
                    a.1 = c;
                    b.1 = c;
                    used.insert(*a)
                });
            }
        }
    }
    let places = raw.places();
    raw.marking = (0..tokens).map(|c| ((rng.random_range(0..places), c), 1)).collect();
    raw
}

fn bound_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut nets = 0;
    let mut tight = 0;
    while nets < 600 {
        let raw = bound_net(&mut rng);
        let (net, start) = raw.build();
        let g = compute_state_graph(&net, &start, limits(100_000)).map_err(|e| e.to_string())?;
        ensure(g.is_complete(), || format!("non-increasing net truncated: {raw:?}"))?;
        let p = net.place_count() as u64;
        let t = start.total_tokens();
        let bound = state_count_bound(p, t);
        ensure(num_bigint::BigUint::from(g.node_count()) <= bound, || {
            format!("{} states > bound {bound} for p={p}, t={t}: {raw:?}", g.node_count())
        })?;
        if num_bigint::BigUint::from(g.node_count()) == bound {
            tight += 1;
        }
        nets += 1;
    }
    Ok(format!("{nets} nets, 0 violations, {tight} reach the bound exactly"))
}

fn cycle_proposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = GenConfig::default();
    let mut complete = 0;
    let mut with_graph_cycle = 0;
    let mut tries = 0;
    while complete < 600 {
        tries += 1;
        ensure(tries < 10_000, || "too few complete graphs".into())?;
        let raw = random_net(&mut rng, &cfg);
        let (net, start) = raw.build();
        let g = compute_state_graph(&net, &start, limits(2000)).map_err(|e| e.to_string())?;
        if !g.is_complete() {
            continue;
        }
        complete += 1;
        if graph_has_cycle(&g) {
            with_graph_cycle += 1;
            ensure(net_has_cycle(&net), || format!("graph cycle without net cycle: {raw:?}"))?;
        }
    }
    let (net, start) = load_fixture("unreachable_cycle.json");
    let g = compute_state_graph(&net, &start, limits(1000)).map_err(|e| e.to_string())?;
    ensure(g.is_complete() && net_has_cycle(&net) && !graph_has_cycle(&g), || {
        "converse fixture does not separate the two notions".into()
    })?;
    Ok(format!(
        "{complete} complete graphs ({with_graph_cycle} cyclic), 0 violations; converse fixture: net cycle, acyclic graph"
    ))
}

fn work_clusters() -> Outcome {
    let (net, _) = load_fixture("shared_resource.json");
    let t0 = net.transition_by_name("T0").unwrap();
    let t1 = net.transition_by_name("T1").unwrap();
    let p = compute_work_clusters(&net);
    ensure(p.clusters() == [vec![t0, t1]], || format!("computed {p}"))?;
    let split = WorkClusterPartition::new(vec![vec![t0], vec![t1]]);
    ensure(!validate_partition(&net, &split).unwrap(), || "[{T0},{T1}] accepted".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = GenConfig {
        max_places: 5,
        max_transitions: 5,
        ..GenConfig::default()
    };
    let mut enumerated = 0usize;
    for _ in 0..300 {
        let raw = random_net(&mut rng, &cfg);
        let (net, _) = raw.build();
        let computed = compute_work_clusters(&net);
        let computed_blocks: Vec<BTreeSet<usize>> = computed
            .clusters()
            .iter()
            .map(|c| c.iter().map(|t| t.index()).collect())
            .collect();
        for blocks in set_partitions(net.transition_count()) {
            enumerated += 1;
            if !partition_is_valid(&raw, &blocks) {
                continue;
            }
            for c in &computed_blocks {
                ensure(blocks.iter().any(|b| c.iter().all(|t| b.contains(t))), || {
                    format!("valid partition {blocks:?} is not a coarsening of {computed_blocks:?}")
                })?;
            }
        }
        for (ci, c) in computed_blocks.iter().enumerate() {
            let members: Vec<usize> = c.iter().copied().collect();
            for mask in 1..(1u32 << members.len()) - 1 {
                let mut clusters: Vec<Vec<TransitionId>> = computed
                    .clusters()
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != ci)
                    .map(|(_, b)| b.clone())
                    .collect();
                let pick = |inside: bool| {
                    members
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| (mask & (1 << i) != 0) == inside)
                        .map(|(_, &t)| TransitionId(t as u32))
                        .collect()
                };
                clusters.push(pick(true));
                clusters.push(pick(false));
                ensure(!validate_partition(&net, &WorkClusterPartition::new(clusters)).unwrap(), || {
                    format!("a 2-split of cluster {c:?} was accepted")
                })?;
            }
        }
    }
    Ok(format!(
        "shared-resource net gives cluster {{T0,T1}}; 300 random nets, {enumerated} partitions enumerated, 0 violations"
    ))
}

fn executor_conformance() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = GenConfig {
        max_transitions: 5,
        max_places: 6,
        max_arcs: 2,
        ..GenConfig::default()
    };
    let mut nets = 0;
    let mut runs = 0;
    let mut concurrent = 0;
    let mut firings = 0;
    while nets < 120 {
        let raw = random_net(&mut rng, &cfg);
        let (net, start) = raw.build();
        let g = compute_state_graph(&net, &start, limits(2000)).map_err(|e| e.to_string())?;
        if !g.is_complete() || net.transition_count() == 0 {
            continue;
        }
        nets += 1;
        let maximal = compute_work_clusters(&net);
        let single = WorkClusterPartition::single(&net);
        if maximal.len() > 1 {
            concurrent += 1;
        }
        for seed in 0..10u64 {
            for partition in [&maximal, &single] {
                let policy = ExecutionPolicy::seeded(seed, StopCondition::MaxFirings(40));
                let trace = run(&net, &start, partition, &policy, HashMap::new()).map_err(|e| e.to_string())?;
                firings += trace.events.len();
                ensure(validate_trace(&trace, &g) == Ok(true), || {
                    format!("nonconformant trace, seed {seed}, partition {partition}: {raw:?}")
                })?;
                runs += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed <= Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{nets} nets ({concurrent} with >1 cluster) x 10 seeds x 2 partitions = {runs} runs, {firings} firings, all conformant in {:.1}s",
        elapsed.as_secs_f64()
    ))
}

/// The pipeline topology written out independently of the fixture file.
fn pipeline_raw() -> RawNet {
    let and = |ins: &[usize], outs: &[usize]| RawTransition::And {
        inputs: ins.iter().map(|&p| ((p, 0), 1)).collect(),
        outputs: outs.iter().map(|&p| ((p, 0), 1)).collect(),
    };
    RawNet {
        place_names: (0..11).map(|i| format!("P{i}")).collect(),
        color_names: vec!["•".into()],
        transitions: vec![
            RawTransition::Xor {
                pairs: vec![((0, 0), (1, 0)), ((9, 0), (10, 0))],
            },
            and(&[1, 2], &[0, 3]),
            and(&[3, 4], &[2, 5]),
            and(&[6, 8], &[7]),
            and(&[5, 10], &[4, 6]),
            and(&[7], &[8, 9]),
        ],
        marking: vec![((0, 0), 1), ((2, 0), 1), ((4, 0), 1), ((8, 0), 1), ((10, 0), 5)],
    }
}

fn pipeline() -> Outcome {
    let (net, start) = load_fixture("pipeline.json");
    let raw = pipeline_raw();
    let (hand, hand_start) = raw.build();
    ensure(
        serialize_net(&net, &start).unwrap() == serialize_net(&hand, &hand_start).unwrap(),
        || "fixture differs from the written-out topology".into(),
    )?;
    let oracle = raw.reachable(1_000_000).ok_or("oracle: unbounded")?;
    let g = compute_state_graph(&net, &start, limits(1_000_000)).map_err(|e| e.to_string())?;
    ensure(g.is_complete(), || format!("status {}", g.status()))?;
    ensure(g.node_count() == oracle.states.len() && g.edge_count() == oracle.edges, || {
        format!(
            "{} states / {} edges vs oracle {} / {}",
            g.node_count(),
            g.edge_count(),
            oracle.states.len(),
            oracle.edges
        )
    })?;
    ensure(oracle.deadlocks.is_empty(), || "oracle finds a deadlock".into())?;
    let dead = deadlock_states(&g);
    ensure(dead.states.is_empty(), || format!("{} deadlocks", dead.states.len()))?;
    Ok(format!("complete, {} states, no deadlocks (matches exhaustive oracle)", g.node_count()))
}

fn truncation() -> Outcome {
    let (net, start) = load_fixture("self_replenishing.json");
    let g = compute_state_graph(&net, &start, limits(50)).map_err(|e| e.to_string())?;
    let reasons: Vec<_> = match g.status() {
        ntnet::stategraph::GraphStatus::Truncated(r) => r.iter().copied().collect(),
        other => return Err(format!("status {other}")),
    };
    ensure(reasons == [TruncationReason::MaxStates], || format!("reasons {reasons:?}"))?;
    ensure(g.node_count() == 50, || format!("{} states", g.node_count()))?;
    Ok("truncated(max_states) with exactly 50 states".into())
}

fn check_report(text: &str) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = ntnet::cli::run(
        ["ntnet", "check", "-", "--format", "report", "--max-states", "500"],
        &mut text.as_bytes(),
        &mut out,
        &mut err,
    );
    (code, out)
}

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = GenConfig {
        max_colors: 3,
        ..GenConfig::default()
    };
    for i in 0..600 {
        let raw = common::random_net_with(&mut rng, &cfg, true);
        let (net, start) = raw.build();
        let a = serialize_net(&net, &start).map_err(|e| e.to_string())?;
        let b = serialize_net(&net, &start).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("net {i}: repeated serialization differs"))?;
        let (back, back_start) = parse_net(&a).map_err(|e| format!("net {i}: {e}"))?;
        ensure(serialize_net(&back, &back_start).unwrap() == a && back_start == start, || {
            format!("net {i}: serialize(parse(x)) != x")
        })?;
        let r1 = check_report(&a);
        let r2 = check_report(&a);
        ensure(r1 == r2, || format!("net {i}: check reports differ"))?;
        ensure(r1.0 != 2, || format!("net {i}: check rejected its own document"))?;
    }
    Ok("600 random And/Xor nets: round-trip identity, byte-equal serialization and check reports".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 h2o state graph", h2o_fixture),
        ("2 colored enablement", colored_enablement),
        ("3 state-count bound", bound_property),
        ("4 graph cycle implies net cycle", cycle_proposition),
        ("5 work clusters", work_clusters),
        ("6 executor conformance", executor_conformance),
        ("7 pipeline has no deadlock", pipeline),
        ("8 max_states truncation", truncation),
        ("9 round trip and determinism", round_trip),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
