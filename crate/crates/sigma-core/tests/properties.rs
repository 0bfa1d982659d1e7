//! Property tests over the core invariants: serialization round-trips,
//! space partitioning, connect associativity, composition equivalence, and
//! scale-time ordering.

use proptest::prelude::*;

use sigma_core::catalog::DEFAULT_FIELD;
use sigma_core::endpoints::{MemorySink, VecSource};
use sigma_core::graph::{compose, connect, parse_canonical, partition_spaces};
use sigma_core::runtime::{self, RunConfig, RunSetup};
use sigma_core::simulation::Scale;
use sigma_core::{Fragment, ProcessorSpec, SyncMode, Value};

fn arb_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<i64>().prop_map(Value::Int),
        (-1.0e12f64..1.0e12).prop_map(Value::Num),
        "[ -~]{0,12}".prop_map(Value::Text),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::Time),
    ]
}

proptest! {
    #[test]
    fn value_canonical_round_trips(v in arb_value()) {
        let text = v.canonical();
        let back = Value::parse_canonical(&text).unwrap();
        prop_assert_eq!(back.canonical(), text);
    }

    #[test]
    fn fragment_canonical_round_trips(
        time in any::<i64>(),
        seq in any::<u64>(),
        fields in proptest::collection::vec(("[a-z][a-z0-9_]{0,8}", arb_value()), 0..6),
    ) {
        let mut frag = Fragment::new(time, seq);
        for (name, value) in fields {
            frag.set(&name, value);
        }
        let back = Fragment::parse_canonical(&frag.canonical()).unwrap();
        prop_assert_eq!(back, frag);
    }
}

/// Random linear chain of handlers with assorted modes.
fn arb_chain() -> impl Strategy<Value = (Vec<ProcessorSpec>, Vec<SyncMode>)> {
    proptest::collection::vec(
        prop_oneof![
            Just(("identity", None)),
            (-100.0f64..100.0).prop_map(|k| ("add", Some(k))),
            (-4.0f64..4.0).prop_map(|k| ("scale", Some(k))),
            Just(("negate", None)),
            Just(("abs", None)),
        ],
        1..8,
    )
    .prop_flat_map(|specs| {
        let n = specs.len();
        (
            Just(specs),
            proptest::collection::vec(any::<bool>(), n.saturating_sub(1)),
        )
    })
    .prop_map(|(specs, async_flags)| {
        let nodes: Vec<ProcessorSpec> = specs
            .iter()
            .enumerate()
            .map(|(i, (name, k))| {
                let mut p = ProcessorSpec::handler(format!("n{i}"), *name);
                if let Some(k) = k {
                    let param = if *name == "scale" { "factor" } else { "k" };
                    p = p.with_param(param, Value::Num(*k));
                }
                p
            })
            .collect();
        let modes: Vec<SyncMode> = async_flags
            .into_iter()
            .map(|a| if a { SyncMode::asynchronous() } else { SyncMode::Sync })
            .collect();
        (nodes, modes)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_canonical_round_trips((nodes, modes) in arb_chain()) {
        let graph = compose(nodes, modes).unwrap();
        let text = graph.canonical();
        let back = parse_canonical(&text).unwrap();
        prop_assert_eq!(back.canonical(), text);
        prop_assert_eq!(back.edges(), graph.edges());
    }

    #[test]
    fn spaces_partition_nodes((nodes, modes) in arb_chain()) {
        let graph = compose(nodes, modes).unwrap();
        let spaces = partition_spaces(&graph).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for s in &spaces {
            prop_assert!(!s.members.is_empty());
            for m in &s.members {
                prop_assert!(seen.insert(m.clone()), "node in two spaces");
            }
        }
        prop_assert_eq!(seen.len(), graph.node_count());
    }

    #[test]
    fn handler_chain_composition_matches_direct_eval(
        (nodes, _modes) in arb_chain(),
        inputs in proptest::collection::vec(-1.0e6f64..1.0e6, 1..20),
    ) {
        // engine output must equal folding the functions directly, exactly
        let ops: Vec<(String, Option<f64>)> = nodes
            .iter()
            .map(|n| {
                let k = n
                    .param("k")
                    .or_else(|| n.param("factor"))
                    .and_then(|v| v.as_num().ok());
                (n.behavior.clone(), k)
            })
            .collect();

        let mut chain = vec![ProcessorSpec::handler("in", "source")];
        chain.extend(nodes);
        chain.push(ProcessorSpec::handler("out", "sink"));
        let modes = vec![SyncMode::Sync; chain.len() - 1];
        let graph = compose(chain, modes).unwrap();

        let frags: Vec<Fragment> = inputs
            .iter()
            .enumerate()
            .map(|(i, v)| Fragment::new(i as i64, i as u64).with(DEFAULT_FIELD, Value::Num(*v)))
            .collect();
        let (sink, handle) = MemorySink::new();
        let setup = RunSetup::new(graph)
            .bind_source("in", Box::new(VecSource::new(frags)))
            .bind_sink("out", Box::new(sink));
        runtime::run(setup, RunConfig::oracle(0)).unwrap();

        let got: Vec<f64> = handle
            .lock()
            .unwrap()
            .iter()
            .map(|f| f.get(DEFAULT_FIELD).unwrap().as_num().unwrap())
            .collect();
        let expected: Vec<f64> = inputs
            .iter()
            .map(|x| {
                ops.iter().fold(*x, |acc, (name, k)| match name.as_str() {
                    "add" => acc + k.unwrap(),
                    "scale" => acc * k.unwrap(),
                    "negate" => -acc,
                    "abs" => acc.abs(),
                    _ => acc,
                })
            })
            .collect();
        prop_assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(&expected) {
            prop_assert_eq!(g.to_bits(), e.to_bits(), "exact bit equality required");
        }
    }

    #[test]
    fn scale_time_is_monotone_and_exact(
        t0 in -1_000_000_000i64..1_000_000_000,
        num in 1i64..10_000,
        den in 1i64..10_000,
        mut times in proptest::collection::vec(-1_000_000_000i64..1_000_000_000, 1..50),
    ) {
        let k = Scale::new(num, den).unwrap();
        times.sort_unstable();
        let mapped: Vec<i64> = times.iter().map(|t| k.apply(t0, *t).unwrap()).collect();
        for w in mapped.windows(2) {
            prop_assert!(w[0] <= w[1], "order must be preserved");
        }
        // exactness cross-check against i128 rational arithmetic
        for (t, m) in times.iter().zip(&mapped) {
            let num128 = *t as i128 * den as i128;
            let den128 = num as i128;
            let q = num128.div_euclid(den128);
            let r = num128.rem_euclid(den128);
            let rounded = if r * 2 > den128 || (r * 2 == den128 && q % 2 != 0) { q + 1 } else { q };
            prop_assert_eq!(*m as i128, rounded + t0 as i128);
        }
    }

    #[test]
    fn connect_is_associative_on_node_and_edge_sets(seed in 0u64..1000) {
        // connecting (A,B) then C equals connecting A then (B,C) on id sets
        let mk = |tag: &str| {
            compose(
                vec![
                    ProcessorSpec::handler(format!("{tag}1"), "identity"),
                    ProcessorSpec::handler(format!("{tag}2"), "identity"),
                ],
                vec![SyncMode::Sync],
            )
            .unwrap()
        };
        let _ = seed;
        let left = {
            let ab = connect(
                ProcessorSpec::connector("join1", "join"),
                vec![mk("a")],
                vec![mk("b")],
                vec![SyncMode::Sync],
                vec![SyncMode::Sync],
            )
            .unwrap();
            connect(
                ProcessorSpec::connector("join2", "join"),
                vec![ab],
                vec![mk("c")],
                vec![SyncMode::Sync],
                vec![SyncMode::Sync],
            )
            .unwrap()
        };
        let right = {
            let bc = connect(
                ProcessorSpec::connector("join2", "join"),
                vec![mk("b")],
                vec![mk("c")],
                vec![SyncMode::Sync],
                vec![SyncMode::Sync],
            )
            .unwrap();
            connect(
                ProcessorSpec::connector("join1", "join"),
                vec![mk("a")],
                vec![bc],
                vec![SyncMode::Sync],
                vec![SyncMode::Sync],
            )
            .unwrap()
        };
        let ids = |g: &sigma_core::StreamGraph| {
            let mut v: Vec<String> = g.node_ids().map(|n| n.as_str().to_string()).collect();
            v.sort();
            v
        };
        let edges = |g: &sigma_core::StreamGraph| {
            let mut v: Vec<String> = g
                .edges()
                .iter()
                .map(|e| format!("{}->{} {}", e.from, e.to, e.mode.canonical()))
                .collect();
            v.sort();
            v
        };
        prop_assert_eq!(ids(&left), ids(&right));
        prop_assert_eq!(edges(&left), edges(&right));
    }
}
