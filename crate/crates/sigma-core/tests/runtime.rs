//! Runtime integration: hand-off semantics, plasticity in flight, reactive
//! bridging, distribution patterns, cancellation, determinism.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use sigma_core::catalog::DEFAULT_FIELD;
use sigma_core::distribution::{self, DispatchPolicy, LoopPredicate};
use sigma_core::endpoints::{MemorySink, VecSource};
use sigma_core::graph::{compose, SubgraphTemplate};
use sigma_core::reactives::ReactiveEngine;
use sigma_core::runtime::{
    self, ExecutionMode, ModifierConfig, RunConfig, RunSetup,
};
use sigma_core::{Fragment, NodeId, ProcessorKind, ProcessorSpec, StreamGraph, SyncMode, Value};

fn num_frags(values: &[f64]) -> Vec<Fragment> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| Fragment::new(i as i64, i as u64).with(DEFAULT_FIELD, Value::Num(*v)))
        .collect()
}

fn collect_values(frags: &[Fragment]) -> Vec<f64> {
    frags
        .iter()
        .map(|f| f.get(DEFAULT_FIELD).unwrap().as_num().unwrap())
        .collect()
}

fn chain_setup(behaviors: Vec<ProcessorSpec>, modes: Vec<SyncMode>, input: Vec<Fragment>) -> (RunSetup, sigma_core::endpoints::MemoryHandle) {
    let mut nodes = vec![ProcessorSpec::handler("in", "source")];
    nodes.extend(behaviors);
    nodes.push(ProcessorSpec::handler("out", "sink"));
    let mut all_modes = vec![SyncMode::Sync];
    all_modes.extend(modes);
    all_modes.push(SyncMode::Sync);
    let graph = compose(nodes, all_modes).unwrap();
    let (sink, handle) = MemorySink::new();
    let setup = RunSetup::new(graph)
        .bind_source("in", Box::new(VecSource::new(input)))
        .bind_sink("out", Box::new(sink));
    (setup, handle)
}

#[test]
fn sync_chain_composes_functions() {
    // [+1, x2] on payload value 3 -> sink receives 8
    let (setup, handle) = chain_setup(
        vec![
            ProcessorSpec::handler("plus1", "add").with_param("k", Value::Num(1.0)),
            ProcessorSpec::handler("times2", "scale").with_param("factor", Value::Num(2.0)),
        ],
        vec![SyncMode::Sync],
        num_frags(&[3.0]),
    );
    let outcome = runtime::run(setup, RunConfig::oracle(0)).unwrap();
    assert_eq!(collect_values(&handle.lock().unwrap()), vec![8.0]);
    let counts = &outcome.report.nodes;
    assert_eq!(counts["plus1"].inbound, 1);
    assert_eq!(counts["plus1"].outbound, 1);
}

#[test]
fn identity_chain_preserves_order_and_count() {
    // the 5-symbol sequence arrives at the sink intact and in order
    let symbols = ["IBM", "IBM", "GOOG", "GOOG", "AMZN"];
    let input: Vec<Fragment> = symbols
        .iter()
        .enumerate()
        .map(|(i, s)| Fragment::new(i as i64, i as u64).with("sym", Value::Text(s.to_string())))
        .collect();
    let (setup, handle) = chain_setup(
        vec![ProcessorSpec::handler("id", "identity")],
        vec![],
        input,
    );
    runtime::run(setup, RunConfig::oracle(0)).unwrap();
    let got: Vec<String> = handle
        .lock()
        .unwrap()
        .iter()
        .map(|f| f.get("sym").unwrap().as_text().unwrap().to_string())
        .collect();
    assert_eq!(got, symbols.map(str::to_string).to_vec());
}

#[test]
fn sync_total_order_on_linear_chain() {
    let input = num_frags(&(0..500).map(|i| i as f64).collect::<Vec<_>>());
    let (setup, handle) = chain_setup(
        vec![
            ProcessorSpec::handler("a", "add").with_param("k", Value::Num(0.5)),
            ProcessorSpec::handler("b", "identity"),
        ],
        vec![SyncMode::Sync],
        input,
    );
    runtime::run(setup, RunConfig::multitask(0)).unwrap();
    let seqs: Vec<u64> = handle.lock().unwrap().iter().map(|f| f.source_seq).collect();
    let expected: Vec<u64> = (0..500).collect();
    assert_eq!(seqs, expected, "all-sync chain must deliver in source order");
}

#[test]
fn handler_failures_skip_and_count() {
    // fragments missing the field are dropped, not fatal
    let mut input = num_frags(&[1.0, 2.0]);
    input.insert(
        1,
        Fragment::new(0, 10).with("other", Value::Num(9.0)),
    );
    // fix sequencing: rebuild seq/time strictly increasing
    for (i, f) in input.iter_mut().enumerate() {
        f.source_seq = i as u64;
        f.event_time = i as i64;
    }
    let (setup, handle) = chain_setup(
        vec![ProcessorSpec::handler("h", "add").with_param("k", Value::Num(1.0))],
        vec![],
        input,
    );
    let outcome = runtime::run(setup, RunConfig::oracle(0)).unwrap();
    assert_eq!(handle.lock().unwrap().len(), 2);
    let counts = outcome.report.nodes["h"];
    assert_eq!(counts.inbound, 3);
    assert_eq!(counts.outbound, 2);
    assert_eq!(counts.dropped, 1);
    assert_eq!(counts.inbound, counts.outbound + counts.dropped);
    assert_eq!(outcome.report.errors.len(), 1);
}

fn split_join_setup(
    policy: DispatchPolicy,
    n_branches: usize,
    input: Vec<Fragment>,
    resequence: bool,
) -> (RunSetup, sigma_core::endpoints::MemoryHandle) {
    let branches: Vec<StreamGraph> = (0..n_branches)
        .map(|i| {
            compose(
                vec![ProcessorSpec::handler(format!("b{i}"), "identity")],
                vec![],
            )
            .unwrap()
        })
        .collect();
    let sj = distribution::split_join("sj", branches, policy, 64).unwrap();
    let mut graph = sj.graph.clone();
    graph.add_node(ProcessorSpec::handler("in", "source")).unwrap();
    graph.add_edge(&"in".into(), &sj.splitter, SyncMode::Sync).unwrap();
    graph.unmark_source(&sj.splitter);
    graph.mark_source(&"in".into()).unwrap();
    let tail = if resequence {
        graph
            .add_node(ProcessorSpec::connector("rs", "resequence"))
            .unwrap();
        graph.add_edge(&sj.joiner, &"rs".into(), SyncMode::Sync).unwrap();
        NodeId::from("rs")
    } else {
        sj.joiner.clone()
    };
    graph.add_node(ProcessorSpec::handler("out", "sink")).unwrap();
    graph.add_edge(&tail, &"out".into(), SyncMode::Sync).unwrap();
    graph.unmark_sink(&sj.joiner);
    graph.mark_sink(&"out".into()).unwrap();

    let (sink, handle) = MemorySink::new();
    let setup = RunSetup::new(graph)
        .bind_source("in", Box::new(VecSource::new(input)))
        .bind_sink("out", Box::new(sink));
    (setup, handle)
}

fn multiset(frags: &[Fragment]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for f in frags {
        *out.entry(f.canonical()).or_insert(0) += 1;
    }
    out
}

#[test]
fn broadcast_split_join_multiset_matches_oracle() {
    let input = || num_frags(&[1.0, 2.0]);
    let (oracle_setup, oracle_handle) =
        split_join_setup(DispatchPolicy::Broadcast, 3, input(), false);
    runtime::run(oracle_setup, RunConfig::oracle(7)).unwrap();
    let oracle_out = multiset(&oracle_handle.lock().unwrap());
    // join receives multiset {1,1,1,2,2,2}
    assert_eq!(oracle_out.values().sum::<usize>(), 6);

    for seed in 0..5 {
        let (setup, handle) = split_join_setup(DispatchPolicy::Broadcast, 3, input(), false);
        runtime::run(setup, RunConfig::multitask(seed)).unwrap();
        assert_eq!(
            multiset(&handle.lock().unwrap()),
            oracle_out,
            "multitask run (seed {seed}) must match oracle multiset"
        );
    }
}

#[test]
fn keyroute_splits_alternating_keys_evenly() {
    let input: Vec<Fragment> = (0..100)
        .map(|i| {
            Fragment::new(i as i64, i as u64)
                .with("key", Value::Text(if i % 2 == 0 { "a" } else { "b" }.to_string()))
                .with(DEFAULT_FIELD, Value::Int(i as i64))
        })
        .collect();
    let (setup, _handle) = split_join_setup(
        DispatchPolicy::KeyRoute {
            key_field: "key".to_string(),
        },
        2,
        input,
        false,
    );
    let outcome = runtime::run(setup, RunConfig::oracle(0)).unwrap();
    assert_eq!(outcome.report.nodes["b0"].inbound, 50);
    assert_eq!(outcome.report.nodes["b1"].inbound, 50);
}

#[test]
fn single_branch_broadcast_is_identity() {
    let input = num_frags(&[1.0, 2.0, 3.0]);
    let (setup, handle) = split_join_setup(DispatchPolicy::Broadcast, 1, input.clone(), false);
    runtime::run(setup, RunConfig::oracle(0)).unwrap();
    assert_eq!(multiset(&handle.lock().unwrap()), multiset(&input));
}

#[test]
fn resequencer_restores_oracle_sequence_under_multitask() {
    let values: Vec<f64> = (0..200).map(|i| i as f64).collect();
    let (oracle_setup, oracle_handle) = split_join_setup(
        DispatchPolicy::RoundRobin,
        3,
        num_frags(&values),
        true,
    );
    runtime::run(oracle_setup, RunConfig::oracle(0)).unwrap();
    let reference: Vec<String> = oracle_handle
        .lock()
        .unwrap()
        .iter()
        .map(|f| f.canonical())
        .collect();

    for seed in 0..10 {
        let (setup, handle) = split_join_setup(
            DispatchPolicy::RoundRobin,
            3,
            num_frags(&values),
            true,
        );
        runtime::run(setup, RunConfig::multitask(seed)).unwrap();
        let got: Vec<String> = handle.lock().unwrap().iter().map(|f| f.canonical()).collect();
        assert_eq!(got, reference, "resequenced output must equal oracle order");
    }
}

#[test]
fn backpressure_counter_stays_within_capacity() {
    let values: Vec<f64> = (0..2000).map(|i| i as f64).collect();
    let (setup, _handle) = split_join_setup(DispatchPolicy::Broadcast, 4, num_frags(&values), false);
    let outcome = runtime::run(setup, RunConfig::multitask(1)).unwrap();
    assert!(outcome.report.queue_peak >= 0);
    assert!(
        outcome.report.queue_peak as usize <= outcome.report.queue_capacity,
        "resident {} exceeded capacity {}",
        outcome.report.queue_peak,
        outcome.report.queue_capacity
    );
}

#[test]
fn feedback_loop_drains_value_to_zero() {
    // body decrements; predicate value > 0; input 3 leaves as 0
    let body = compose(
        vec![ProcessorSpec::handler("dec", "add").with_param("k", Value::Int(-1))],
        vec![],
    )
    .unwrap();
    let fb = distribution::feedback(
        "fb",
        body,
        LoopPredicate {
            field: DEFAULT_FIELD.to_string(),
            op: "gt".to_string(),
            than: Value::Int(0),
        },
        10,
    )
    .unwrap();
    let mut graph = fb.graph.clone();
    graph.add_node(ProcessorSpec::handler("in", "source")).unwrap();
    graph.add_edge(&"in".into(), &fb.entry, SyncMode::Sync).unwrap();
    graph.unmark_source(&fb.entry);
    graph.mark_source(&"in".into()).unwrap();
    graph.add_node(ProcessorSpec::handler("out", "sink")).unwrap();
    graph.add_edge(&fb.exit, &"out".into(), SyncMode::Sync).unwrap();
    graph.unmark_sink(&fb.exit);
    graph.mark_sink(&"out".into()).unwrap();

    let (sink, handle) = MemorySink::new();
    let input = vec![Fragment::new(0, 0).with(DEFAULT_FIELD, Value::Int(3))];
    let setup = RunSetup::new(graph)
        .bind_source("in", Box::new(VecSource::new(input)))
        .bind_sink("out", Box::new(sink));
    let outcome = runtime::run(setup, RunConfig::oracle(0)).unwrap();
    let out = handle.lock().unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].get(DEFAULT_FIELD).unwrap(), &Value::Int(0));
    assert_eq!(outcome.report.fuel_exhausted, 0);
}

#[test]
fn feedback_fuel_bound_routes_to_error_sink() {
    // predicate always true: fragment reaches the error sink with counter 5
    let body = compose(
        vec![ProcessorSpec::handler("noop", "identity")],
        vec![],
    )
    .unwrap();
    let fb = distribution::feedback(
        "fb",
        body,
        LoopPredicate {
            field: DEFAULT_FIELD.to_string(),
            op: "ge".to_string(),
            than: Value::Int(0),
        },
        5,
    )
    .unwrap();
    let mut graph = fb.graph.clone();
    graph.add_node(ProcessorSpec::handler("in", "source")).unwrap();
    graph.add_edge(&"in".into(), &fb.entry, SyncMode::Sync).unwrap();
    graph.unmark_source(&fb.entry);
    graph.mark_source(&"in".into()).unwrap();
    graph.add_node(ProcessorSpec::handler("out", "sink")).unwrap();
    graph.add_edge(&fb.exit, &"out".into(), SyncMode::Sync).unwrap();
    graph.unmark_sink(&fb.exit);
    graph.mark_sink(&"out".into()).unwrap();

    let (err_sink, err_handle) = MemorySink::new();
    let input = vec![Fragment::new(0, 0).with(DEFAULT_FIELD, Value::Int(1))];
    let setup = RunSetup::new(graph)
        .bind_source("in", Box::new(VecSource::new(input)))
        .bind_sink(fb.error_sink.as_str(), Box::new(err_sink));
    let outcome = runtime::run(setup, RunConfig::oracle(0)).unwrap();
    let errs = err_handle.lock().unwrap();
    assert_eq!(errs.len(), 1);
    assert_eq!(errs[0].get("_loop").unwrap(), &Value::Int(5));
    assert_eq!(outcome.report.fuel_exhausted, 1);
}

#[test]
fn feedback_never_predicate_passes_straight_through() {
    let body = compose(vec![ProcessorSpec::handler("noop", "identity")], vec![]).unwrap();
    let fb = distribution::feedback(
        "fb",
        body,
        LoopPredicate {
            field: DEFAULT_FIELD.to_string(),
            op: "lt".to_string(),
            than: Value::Int(i64::MIN + 1),
        },
        5,
    )
    .unwrap();
    let mut graph = fb.graph.clone();
    graph.add_node(ProcessorSpec::handler("in", "source")).unwrap();
    graph.add_edge(&"in".into(), &fb.entry, SyncMode::Sync).unwrap();
    graph.unmark_source(&fb.entry);
    graph.mark_source(&"in".into()).unwrap();
    graph.add_node(ProcessorSpec::handler("out", "sink")).unwrap();
    graph.add_edge(&fb.exit, &"out".into(), SyncMode::Sync).unwrap();
    graph.unmark_sink(&fb.exit);
    graph.mark_sink(&"out".into()).unwrap();
    let (sink, handle) = MemorySink::new();
    let input = num_frags(&[5.0, 6.0]);
    let setup = RunSetup::new(graph)
        .bind_source("in", Box::new(VecSource::new(input.clone())))
        .bind_sink("out", Box::new(sink));
    runtime::run(setup, RunConfig::oracle(0)).unwrap();
    assert_eq!(collect_values(&handle.lock().unwrap()), vec![5.0, 6.0]);
}

fn plasticity_setup(symbols: &[&str]) -> RunSetup {
    let graph = compose(
        vec![
            ProcessorSpec::handler("feed", "source"),
            ProcessorSpec::new("route", ProcessorKind::Modifier, "modify")
                .with_param("key", Value::Text("sym".to_string())),
        ],
        vec![SyncMode::Sync],
    )
    .unwrap();
    let template = SubgraphTemplate::chain(
        vec![
            ProcessorSpec::handler("price", "ewma")
                .with_param("alpha", Value::Num(0.5))
                .with_param("field", Value::Text("price".to_string())),
        ],
        vec![],
    )
    .unwrap();
    let input: Vec<Fragment> = symbols
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Fragment::new(i as i64, i as u64)
                .with("sym", Value::Text(s.to_string()))
                .with("price", Value::Num(100.0 + i as f64))
        })
        .collect();
    RunSetup::new(graph)
        .bind_source("feed", Box::new(VecSource::new(input)))
        .with_template(
            "route",
            ModifierConfig {
                key_field: "sym".to_string(),
                template,
                branch_mode: SyncMode::asynchronous(),
            },
        )
}

#[test]
fn plasticity_builds_branch_per_distinct_symbol() {
    let setup = plasticity_setup(&["IBM", "IBM", "GOOG", "GOOG", "AMZN"]);
    let outcome = runtime::run(setup, RunConfig::oracle(0)).unwrap();
    let summary = &outcome.plastic["route"];
    assert_eq!(summary.predicate_trace, vec![true, false, true, false, true]);
    let keys: Vec<&str> = summary.branch_catalog.keys().map(|s| s.as_str()).collect();
    assert_eq!(keys, vec!["AMZN", "GOOG", "IBM"]);
    assert_eq!(summary.versions.len(), 4);
    // every fragment reached exactly one branch
    let total_branch_in: u64 = ["IBM", "GOOG", "AMZN"]
        .iter()
        .map(|k| outcome.report.nodes[&format!("price[{k}]")].inbound)
        .sum();
    assert_eq!(total_branch_in, 5);
    assert_eq!(outcome.report.nodes[&format!("price[IBM]")].inbound, 2);
}

#[test]
fn plasticity_branch_count_equals_distinct_keys() {
    let symbols: Vec<String> = (0..1000).map(|i| format!("S{}", i % 7)).collect();
    let refs: Vec<&str> = symbols.iter().map(|s| s.as_str()).collect();
    let setup = plasticity_setup(&refs);
    let outcome = runtime::run(setup, RunConfig::oracle(0)).unwrap();
    assert_eq!(outcome.plastic["route"].branch_catalog.len(), 7);
}

#[test]
fn plasticity_version_chain_replays_identically() {
    let symbols = ["A", "B", "A", "C", "B", "D"];
    let hashes = |setup| {
        let outcome = runtime::run(setup, RunConfig::oracle(0)).unwrap();
        outcome.plastic["route"]
            .versions
            .iter()
            .map(|v| v.hash.clone())
            .collect::<Vec<_>>()
    };
    let a = hashes(plasticity_setup(&symbols));
    let b = hashes(plasticity_setup(&symbols));
    assert_eq!(a, b);
    assert_eq!(a.len(), 5); // base + 4 distinct keys
}

#[test]
fn reactive_nodes_bridge_streams_into_behaviors() {
    // two streams feed R' and R''; f = R' + R'' fires on either arrival
    let mut engine = ReactiveEngine::new();
    let r1 = engine.source("R1").unwrap();
    let r2 = engine.source("R2").unwrap();
    engine
        .define(
            "f",
            sigma_core::reactives::Expr::Binary(
                "+",
                Box::new(sigma_core::reactives::Expr::Ref(r1)),
                Box::new(sigma_core::reactives::Expr::Ref(r2)),
            ),
        )
        .unwrap();
    let engine = Arc::new(Mutex::new(engine));

    let mut graph = StreamGraph::empty();
    graph.add_node(ProcessorSpec::handler("in1", "source")).unwrap();
    graph.add_node(ProcessorSpec::handler("in2", "source")).unwrap();
    graph
        .add_node(
            ProcessorSpec::new("rx1", ProcessorKind::Reactive, "react")
                .with_param("name", Value::Text("R1".to_string())),
        )
        .unwrap();
    graph
        .add_node(
            ProcessorSpec::new("rx2", ProcessorKind::Reactive, "react")
                .with_param("name", Value::Text("R2".to_string())),
        )
        .unwrap();
    graph.add_edge(&"in1".into(), &"rx1".into(), SyncMode::Sync).unwrap();
    graph.add_edge(&"in2".into(), &"rx2".into(), SyncMode::Sync).unwrap();
    graph.mark_source(&"in1".into()).unwrap();
    graph.mark_source(&"in2".into()).unwrap();
    graph.mark_sink(&"rx1".into()).unwrap();
    graph.mark_sink(&"rx2".into()).unwrap();

    let in1 = vec![Fragment::new(0, 0).with(DEFAULT_FIELD, Value::Int(1))];
    let in2 = vec![Fragment::new(1, 0).with(DEFAULT_FIELD, Value::Int(2))];
    let mut setup = RunSetup::new(graph)
        .bind_source("in1", Box::new(VecSource::new(in1)))
        .bind_source("in2", Box::new(VecSource::new(in2)));
    setup.reactive = Some(engine.clone());
    let outcome = runtime::run(setup, RunConfig::oracle(0)).unwrap();
    let f = outcome
        .reactive
        .iter()
        .find(|(name, _)| name == "f")
        .unwrap();
    assert_eq!(f.1, Some(Value::Int(3)));
    // the reactive node forwarded its fragments unchanged (they are sinks here)
    assert_eq!(outcome.report.nodes["rx1"].inbound, 1);
}

#[test]
fn reactive_partial_input_stays_unset() {
    let mut engine = ReactiveEngine::new();
    engine.source("R1").unwrap();
    engine.source("R2").unwrap();
    let r1 = engine.lookup("R1").unwrap();
    let r2 = engine.lookup("R2").unwrap();
    engine
        .define(
            "f",
            sigma_core::reactives::Expr::Binary(
                "+",
                Box::new(sigma_core::reactives::Expr::Ref(r1)),
                Box::new(sigma_core::reactives::Expr::Ref(r2)),
            ),
        )
        .unwrap();
    let engine = Arc::new(Mutex::new(engine));
    let graph = compose(
        vec![
            ProcessorSpec::handler("in1", "source"),
            ProcessorSpec::new("rx1", ProcessorKind::Reactive, "react")
                .with_param("name", Value::Text("R1".to_string())),
        ],
        vec![SyncMode::Sync],
    )
    .unwrap();
    let mut setup = RunSetup::new(graph).bind_source(
        "in1",
        Box::new(VecSource::new(vec![
            Fragment::new(0, 0).with(DEFAULT_FIELD, Value::Int(5))
        ])),
    );
    setup.reactive = Some(engine);
    let outcome = runtime::run(setup, RunConfig::oracle(0)).unwrap();
    let f = outcome.reactive.iter().find(|(n, _)| n == "f").unwrap();
    assert_eq!(f.1, None, "formula with unset input stays unset");
}

#[test]
fn cancel_before_start_yields_empty_report() {
    let values: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
    let (setup, _handle) = chain_setup(
        vec![ProcessorSpec::handler("h", "identity")],
        vec![],
        num_frags(&values),
    );
    let mut handle = runtime::spawn(setup, RunConfig::multitask(0), true).unwrap();
    let outcome = handle.cancel().as_ref().unwrap();
    assert!(outcome.report.cancelled);
    let total_in: u64 = outcome.report.nodes.values().map(|c| c.inbound).sum();
    assert_eq!(total_in, 0, "no fragment consumed before the gate opened");
}

#[test]
fn cancel_after_completion_returns_final_report() {
    let (setup, handle) = chain_setup(
        vec![ProcessorSpec::handler("h", "identity")],
        vec![],
        num_frags(&[1.0, 2.0, 3.0]),
    );
    let mut run = runtime::spawn(setup, RunConfig::multitask(0), false).unwrap();
    run.wait().as_ref().unwrap();
    let outcome = run.cancel().as_ref().unwrap();
    assert_eq!(outcome.report.nodes["h"].inbound, 3);
    assert_eq!(handle.lock().unwrap().len(), 3);
}

#[test]
fn cancel_mid_run_keeps_count_arithmetic() {
    let values: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
    let (setup, _handle) = chain_setup(
        vec![
            ProcessorSpec::handler("a", "add").with_param("k", Value::Num(1.0)),
            ProcessorSpec::handler("b", "identity"),
        ],
        vec![SyncMode::asynchronous()],
        num_frags(&values),
    );
    let mut run = runtime::spawn(setup, RunConfig::multitask(0), false).unwrap();
    std::thread::sleep(std::time::Duration::from_millis(2));
    let outcome = run.cancel().as_ref().unwrap();
    for (id, c) in &outcome.report.nodes {
        assert!(
            c.inbound >= c.outbound,
            "node {id}: in {} < out {}",
            c.inbound,
            c.outbound
        );
    }
}

#[test]
fn oracle_same_seed_is_byte_identical() {
    let run_once = |seed| {
        let values: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (setup, handle) = chain_setup(
            vec![
                ProcessorSpec::handler("j", "jitter").with_param("spread", Value::Num(2.0)),
            ],
            vec![],
            num_frags(&values),
        );
        runtime::run(setup, RunConfig::oracle(seed)).unwrap();
        let frags = handle.lock().unwrap();
        frags.iter().map(|f| f.canonical()).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(run_once(7), run_once(7));
    assert_ne!(run_once(7), run_once(8));
}

#[test]
fn unbound_source_is_an_error() {
    let graph = compose(
        vec![
            ProcessorSpec::handler("in", "source"),
            ProcessorSpec::handler("out", "sink"),
        ],
        vec![SyncMode::Sync],
    )
    .unwrap();
    let err = runtime::run(RunSetup::new(graph), RunConfig::oracle(0)).unwrap_err();
    assert!(matches!(
        err,
        sigma_core::runtime::RuntimeError::UnboundSource(_)
    ));
}

#[test]
fn invalid_graph_is_rejected_before_running() {
    let mut graph = compose(
        vec![ProcessorSpec::handler("in", "source")],
        vec![],
    )
    .unwrap();
    graph.add_node(ProcessorSpec::handler("stranded", "identity")).unwrap();
    let err = runtime::run(RunSetup::new(graph), RunConfig::oracle(0)).unwrap_err();
    assert!(matches!(err, sigma_core::runtime::RuntimeError::Invalid(_)));
}

#[test]
fn multitask_pool_size_allowed_on_stateless_region() {
    // a stateless mid-region runs with pool_size workers; output multiset
    // must still match the oracle
    let values: Vec<f64> = (0..300).map(|i| i as f64).collect();
    let build = || {
        let mut nodes = vec![ProcessorSpec::handler("in", "source")];
        nodes.push(ProcessorSpec::handler("stateless", "add").with_param("k", Value::Num(1.0)));
        nodes.push(ProcessorSpec::handler("out", "sink"));
        let graph = compose(
            nodes,
            vec![SyncMode::asynchronous(), SyncMode::asynchronous()],
        )
        .unwrap();
        let (sink, handle) = MemorySink::new();
        let setup = RunSetup::new(graph)
            .bind_source("in", Box::new(VecSource::new(num_frags(&values))))
            .bind_sink("out", Box::new(sink));
        (setup, handle)
    };
    let (oracle_setup, oracle_handle) = build();
    runtime::run(oracle_setup, RunConfig::oracle(0)).unwrap();
    let expected = multiset(&oracle_handle.lock().unwrap());

    let (setup, handle) = build();
    let mut config = RunConfig::multitask(0);
    config.pool_size = 4;
    runtime::run(setup, config).unwrap();
    assert_eq!(multiset(&handle.lock().unwrap()), expected);
}

#[test]
fn report_canonical_text_is_stable() {
    let (setup, _) = chain_setup(
        vec![ProcessorSpec::handler("h", "identity")],
        vec![],
        num_frags(&[1.0]),
    );
    let outcome = runtime::run(setup, RunConfig::oracle(3)).unwrap();
    let text = outcome.report.canonical();
    assert!(text.contains("seed 3"));
    assert!(text.contains("mode oracle"));
    assert!(text.contains("node \"h\" in=1 out=1 dropped=0"));
    assert!(!text.contains("wall"), "wall time must not enter the canonical record");
    assert_eq!(outcome.report.mode, ExecutionMode::SingleTaskOracle);
}
