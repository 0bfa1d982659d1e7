//! Plasticity: runtime self-modification of the stream graph.
//!
//! A modification connector carries a predicate over fragments, a subgraph
//! template, and a routing key extractor. When the predicate fires for an
//! arriving fragment, a branch instantiated from the template for that
//! fragment's key is appended to the graph, producing a new graph version;
//! the fragment (and all later arrivals with that key) route to the branch.
//! Modification is atomic between fragments: no fragment ever observes a
//! half-installed branch, and versions form a strictly increasing chain each
//! differing from its predecessor by exactly one appended branch.

use std::collections::BTreeMap;

use indexmap::{IndexMap, IndexSet};

use crate::digest::sha256_hex;
use crate::fragment::Fragment;
use crate::graph::{
    NodeId, StreamGraph, SubgraphTemplate, SyncMode, TemplateError,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PlasticityError {
    #[error("fragment missing routing key field `{0}`")]
    KeyMissing(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("graph modification failed: {0}")]
    Graph(#[from] crate::graph::GraphError),
}

/// Predicate over fragments, `P: X -> {true, false}`. First-arrival
/// predicates remember the keys they have seen, so predicates may hold
/// state; the `pure` flag records whether the outcome depends only on the
/// fragment itself.
pub struct Predicate {
    key_field: String,
    kind: PredicateKind,
    seen: IndexSet<String>,
}

enum PredicateKind {
    FirstArrival,
    Always,
    Never,
}

impl Predicate {
    /// True exactly once per distinct key, on its first arrival.
    pub fn first_arrival(key_field: &str) -> Predicate {
        Predicate {
            key_field: key_field.to_string(),
            kind: PredicateKind::FirstArrival,
            seen: IndexSet::new(),
        }
    }

    pub fn always(key_field: &str) -> Predicate {
        Predicate {
            key_field: key_field.to_string(),
            kind: PredicateKind::Always,
            seen: IndexSet::new(),
        }
    }

    pub fn never(key_field: &str) -> Predicate {
        Predicate {
            key_field: key_field.to_string(),
            kind: PredicateKind::Never,
            seen: IndexSet::new(),
        }
    }

    pub fn is_pure(&self) -> bool {
        !matches!(self.kind, PredicateKind::FirstArrival)
    }

    pub fn key_field(&self) -> &str {
        &self.key_field
    }

    /// Extracts the routing key from a fragment.
    pub fn key_of(&self, frag: &Fragment) -> Result<String, PlasticityError> {
        frag.get(&self.key_field)
            .map(|v| v.route_key())
            .ok_or_else(|| PlasticityError::KeyMissing(self.key_field.clone()))
    }

    /// Evaluates the predicate, updating state for stateful kinds.
    pub fn eval(&mut self, frag: &Fragment) -> Result<bool, PlasticityError> {
        let key = self.key_of(frag)?;
        Ok(match self.kind {
            PredicateKind::FirstArrival => self.seen.insert(key),
            PredicateKind::Always => true,
            PredicateKind::Never => false,
        })
    }

    /// Keys seen so far, in first-arrival order.
    pub fn seen_keys(&self) -> impl Iterator<Item = &str> {
        self.seen.iter().map(|s| s.as_str())
    }
}

/// The modification connector definition: predicate, template, and the
/// modifier node it is installed on.
pub struct ModificationConnector {
    pub node: NodeId,
    pub predicate: Predicate,
    pub template: SubgraphTemplate,
    /// Hand-off mode for the modifier-to-branch edge. Branches run
    /// concurrently per key, so this defaults to async.
    pub branch_mode: SyncMode,
}

/// One entry in the version chain.
#[derive(Debug, Clone)]
pub struct GraphVersion {
    pub index: usize,
    /// Key whose first arrival produced this version; `None` for the base.
    pub added_key: Option<String>,
    pub canonical: String,
    pub hash: String,
}

/// Routing outcome for one fragment at the modification connector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RouteDecision {
    /// Predicate fired: a branch was instantiated and the fragment routes to
    /// it. Carries the new version index.
    NewBranch {
        key: String,
        entry: NodeId,
        version: usize,
    },
    /// Branch already exists; graph version unchanged.
    Existing { key: String, entry: NodeId },
    /// Predicate false and no branch holds this key.
    Unroutable { key: String },
}

/// Owns the evolving graph, the version chain, and the branch catalog for
/// one modification connector.
pub struct PlasticEngine {
    connector: ModificationConnector,
    current: StreamGraph,
    versions: Vec<GraphVersion>,
    branches: IndexMap<String, NodeId>,
    predicate_trace: Vec<bool>,
}

impl PlasticEngine {
    pub fn new(base: StreamGraph, connector: ModificationConnector) -> PlasticEngine {
        let canonical = base.canonical();
        let hash = sha256_hex(canonical.as_bytes());
        PlasticEngine {
            connector,
            current: base,
            versions: vec![GraphVersion {
                index: 0,
                added_key: None,
                canonical,
                hash,
            }],
            branches: IndexMap::new(),
            predicate_trace: Vec::new(),
        }
    }

    /// Applies one fragment: evaluates the predicate, possibly appends an
    /// instantiated branch (emitting a new version atomically), and returns
    /// the route decision for the fragment.
    pub fn apply(&mut self, frag: &Fragment) -> Result<RouteDecision, PlasticityError> {
        let key = self.connector.predicate.key_of(frag)?;
        let fired = self.connector.predicate.eval(frag)?;
        self.predicate_trace.push(fired);
        if fired {
            let instance = self
                .connector
                .template
                .instantiate(&key, &IndexMap::new())?;
            let next = crate::graph::template_append(
                &self.current,
                &self.connector.node,
                &instance,
                self.connector.branch_mode,
            )?;
            let canonical = next.canonical();
            let hash = sha256_hex(canonical.as_bytes());
            let version = self.versions.len();
            self.versions.push(GraphVersion {
                index: version,
                added_key: Some(key.clone()),
                canonical,
                hash,
            });
            self.current = next;
            self.branches.insert(key.clone(), instance.entry.clone());
            Ok(RouteDecision::NewBranch {
                key,
                entry: instance.entry,
                version,
            })
        } else {
            match self.branches.get(&key) {
                Some(entry) => Ok(RouteDecision::Existing {
                    key,
                    entry: entry.clone(),
                }),
                None => Ok(RouteDecision::Unroutable { key }),
            }
        }
    }

    /// Branch catalog: one entry per instantiated branch, key to the node
    /// ids of that branch, in instantiation order.
    pub fn branch_catalog(&self) -> BTreeMap<String, Vec<NodeId>> {
        let mut out = BTreeMap::new();
        for (key, _entry) in &self.branches {
            let ids: Vec<NodeId> = self
                .connector
                .template
                .nodes()
                .iter()
                .map(|n| n.id.keyed(key))
                .collect();
            out.insert(key.clone(), ids);
        }
        out
    }

    pub fn branch_keys(&self) -> impl Iterator<Item = &str> {
        self.branches.keys().map(|s| s.as_str())
    }

    pub fn branch_entry(&self, key: &str) -> Option<&NodeId> {
        self.branches.get(key)
    }

    pub fn current_graph(&self) -> &StreamGraph {
        &self.current
    }

    pub fn versions(&self) -> &[GraphVersion] {
        &self.versions
    }

    pub fn current_version(&self) -> &GraphVersion {
        self.versions.last().expect("version chain nonempty")
    }

    /// Sequence of predicate outcomes, one per applied fragment.
    pub fn predicate_trace(&self) -> &[bool] {
        &self.predicate_trace
    }

    /// Keys seen by the predicate, in first-arrival order; part of the
    /// configuration snapshot so replay restores predicate state.
    pub fn predicate_state(&self) -> Vec<String> {
        self.connector
            .predicate
            .seen_keys()
            .map(str::to_string)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{compose, ProcessorKind, ProcessorSpec};
    use crate::value::Value;

    fn tick(sym: &str, seq: u64) -> Fragment {
        Fragment::new(seq as i64, seq)
            .with("sym", Value::Text(sym.to_string()))
            .with("price", Value::Num(100.0 + seq as f64))
    }

    fn engine() -> PlasticEngine {
        let base = compose(
            vec![
                ProcessorSpec::handler("feed", "source"),
                ProcessorSpec::new("route", ProcessorKind::Modifier, "modify")
                    .with_param("key", Value::Text("sym".to_string())),
            ],
            vec![SyncMode::Sync],
        )
        .unwrap();
        let template = SubgraphTemplate::chain(
            vec![ProcessorSpec::handler("price", "ewma").with_param("alpha", Value::Num(0.5))],
            vec![],
        )
        .unwrap();
        PlasticEngine::new(
            base,
            ModificationConnector {
                node: NodeId::from("route"),
                predicate: Predicate::first_arrival("sym"),
                template,
                branch_mode: SyncMode::asynchronous(),
            },
        )
    }

    #[test]
    fn first_arrival_sequence_matches_symbol_feed() {
        // (IBM, IBM, GOOG, GOOG, AMZN) -> (true, false, true, false, true)
        let mut p = Predicate::first_arrival("sym");
        let outcomes: Vec<bool> = ["IBM", "IBM", "GOOG", "GOOG", "AMZN"]
            .iter()
            .enumerate()
            .map(|(i, s)| p.eval(&tick(s, i as u64)).unwrap())
            .collect();
        assert_eq!(outcomes, vec![true, false, true, false, true]);
    }

    #[test]
    fn all_distinct_keys_all_fire() {
        let mut p = Predicate::first_arrival("sym");
        for (i, s) in ["A", "B", "C"].iter().enumerate() {
            assert!(p.eval(&tick(s, i as u64)).unwrap());
        }
    }

    #[test]
    fn missing_key_field_is_an_error() {
        let mut p = Predicate::first_arrival("sym");
        let frag = Fragment::new(0, 0).with("price", Value::Num(1.0));
        assert_eq!(
            p.eval(&frag).unwrap_err(),
            PlasticityError::KeyMissing("sym".to_string())
        );
    }

    #[test]
    fn symbol_feed_builds_three_branches() {
        let mut eng = engine();
        for (i, s) in ["IBM", "IBM", "GOOG", "GOOG", "AMZN"].iter().enumerate() {
            eng.apply(&tick(s, i as u64)).unwrap();
        }
        let catalog = eng.branch_catalog();
        let keys: Vec<&str> = catalog.keys().map(|s| s.as_str()).collect();
        assert_eq!(keys, vec!["AMZN", "GOOG", "IBM"]);
        assert_eq!(eng.versions().len(), 4); // base + 3 branches
        assert_eq!(eng.predicate_trace(), &[true, false, true, false, true]);
    }

    #[test]
    fn repeat_key_routes_without_new_version() {
        let mut eng = engine();
        let first = eng.apply(&tick("IBM", 0)).unwrap();
        assert!(matches!(first, RouteDecision::NewBranch { version: 1, .. }));
        let versions_before = eng.versions().len();
        let second = eng.apply(&tick("IBM", 1)).unwrap();
        assert_eq!(
            second,
            RouteDecision::Existing {
                key: "IBM".to_string(),
                entry: NodeId::from("price[IBM]"),
            }
        );
        assert_eq!(eng.versions().len(), versions_before);
    }

    #[test]
    fn versions_differ_by_exactly_one_branch() {
        let mut eng = engine();
        for (i, s) in ["IBM", "GOOG"].iter().enumerate() {
            eng.apply(&tick(s, i as u64)).unwrap();
        }
        let v = eng.versions();
        for w in v.windows(2) {
            let before: std::collections::BTreeSet<&str> = w[0].canonical.lines().collect();
            let added: Vec<&str> = w[1]
                .canonical
                .lines()
                .filter(|l| !before.contains(l))
                .collect();
            // one node line + one edge line per appended single-node branch
            // (plus the sink designation for the branch terminal)
            let node_lines = added.iter().filter(|l| l.trim_start().starts_with("node ")).count();
            assert_eq!(node_lines, 1, "exactly one node appended: {added:?}");
        }
    }

    #[test]
    fn replaying_inputs_reproduces_version_hashes() {
        let feed = ["IBM", "IBM", "GOOG", "AMZN", "GOOG", "MSFT"];
        let run = || {
            let mut eng = engine();
            for (i, s) in feed.iter().enumerate() {
                eng.apply(&tick(s, i as u64)).unwrap();
            }
            eng.versions().iter().map(|v| v.hash.clone()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn never_predicate_reports_unroutable() {
        let mut eng = engine();
        eng.connector.predicate = Predicate::never("sym");
        let decision = eng.apply(&tick("IBM", 0)).unwrap();
        assert_eq!(
            decision,
            RouteDecision::Unroutable {
                key: "IBM".to_string()
            }
        );
    }
}
