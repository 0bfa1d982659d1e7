//! Subgraph templates: parameterized branches instantiated by plasticity.
//!
//! A template is a branch-shaped graph fragment whose node ids are base
//! names; instantiation with a key suffixes every id with `[key]` and
//! substitutes `$key` in text parameters, so `price` becomes `price[AMZN]`
//! and a sink location `out/$key.csv` becomes `out/AMZN.csv`.

use indexmap::IndexMap;

use crate::value::Value;

use super::{NodeId, ProcessorSpec, StreamGraph, SyncMode};

#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphTemplate {
    nodes: Vec<ProcessorSpec>,
    edges: Vec<(NodeId, NodeId, SyncMode)>,
    /// Node that receives fragments from the parent graph.
    attachment_in: NodeId,
    /// Parameter names that must be bound at instantiation; `key` is always
    /// implicitly bound to the triggering key.
    parameters: Vec<String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TemplateError {
    #[error("template has no nodes")]
    Empty,
    #[error("attachment node `{0}` is not in the template")]
    UnknownAttachment(NodeId),
    #[error("edge references unknown template node `{0}`")]
    UnknownEdgeNode(NodeId),
    #[error("unbound template parameter `{0}`")]
    UnboundParameter(String),
}

/// One instantiated branch: the subgraph to append plus its entry node and
/// terminal (sink-designated) nodes.
#[derive(Debug, Clone)]
pub struct BranchInstance {
    pub subgraph: StreamGraph,
    pub entry: NodeId,
    pub terminals: Vec<NodeId>,
}

impl SubgraphTemplate {
    pub fn new(
        nodes: Vec<ProcessorSpec>,
        edges: Vec<(NodeId, NodeId, SyncMode)>,
        attachment_in: NodeId,
        parameters: Vec<String>,
    ) -> Result<SubgraphTemplate, TemplateError> {
        if nodes.is_empty() {
            return Err(TemplateError::Empty);
        }
        let known = |id: &NodeId| nodes.iter().any(|n| &n.id == id);
        if !known(&attachment_in) {
            return Err(TemplateError::UnknownAttachment(attachment_in));
        }
        for (from, to, _) in &edges {
            if !known(from) {
                return Err(TemplateError::UnknownEdgeNode(from.clone()));
            }
            if !known(to) {
                return Err(TemplateError::UnknownEdgeNode(to.clone()));
            }
        }
        Ok(SubgraphTemplate {
            nodes,
            edges,
            attachment_in,
            parameters,
        })
    }

    /// Linear-chain convenience: first node is the attachment point.
    pub fn chain(nodes: Vec<ProcessorSpec>, modes: Vec<SyncMode>) -> Result<Self, TemplateError> {
        if nodes.is_empty() {
            return Err(TemplateError::Empty);
        }
        assert_eq!(modes.len(), nodes.len() - 1, "chain template mode count");
        let edges = modes
            .into_iter()
            .enumerate()
            .map(|(i, m)| (nodes[i].id.clone(), nodes[i + 1].id.clone(), m))
            .collect();
        let attachment = nodes[0].id.clone();
        SubgraphTemplate::new(nodes, edges, attachment, Vec::new())
    }

    pub fn attachment_in(&self) -> &NodeId {
        &self.attachment_in
    }

    pub fn parameters(&self) -> &[String] {
        &self.parameters
    }

    pub fn nodes(&self) -> &[ProcessorSpec] {
        &self.nodes
    }

    /// Instantiates the branch for `key` with the given parameter bindings.
    /// Every declared parameter must be bound; `$key` and `$<param>` are
    /// substituted in text param values.
    pub fn instantiate(
        &self,
        key: &str,
        bindings: &IndexMap<String, String>,
    ) -> Result<BranchInstance, TemplateError> {
        for p in &self.parameters {
            if !bindings.contains_key(p) {
                return Err(TemplateError::UnboundParameter(p.clone()));
            }
        }
        let substitute = |text: &str| -> String {
            let mut out = text.replace("$key", key);
            for (name, value) in bindings {
                out = out.replace(&format!("${name}"), value);
            }
            out
        };

        let mut subgraph = StreamGraph::empty();
        for spec in &self.nodes {
            let mut inst = spec.clone();
            inst.id = spec.id.keyed(key);
            for value in inst.params.values_mut() {
                if let Value::Text(t) = value {
                    *value = Value::Text(substitute(t));
                }
            }
            subgraph
                .add_node(inst)
                .expect("template ids unique implies instance ids unique");
        }
        for (from, to, mode) in &self.edges {
            subgraph
                .add_edge(&from.keyed(key), &to.keyed(key), *mode)
                .expect("template edges reference known nodes");
        }
        // terminals: nodes with no outbound template edge
        let terminals: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| !self.edges.iter().any(|(from, _, _)| from == &n.id))
            .map(|n| n.id.keyed(key))
            .collect();
        for t in &terminals {
            subgraph.mark_sink(t).expect("terminal in subgraph");
        }
        Ok(BranchInstance {
            subgraph,
            entry: self.attachment_in.keyed(key),
            terminals,
        })
    }

}

/// Appends an instantiated branch to a graph, wiring the modifier node to
/// the branch entry with the given mode. Returns the new graph value.
pub(crate) fn append_branch(
    base: &StreamGraph,
    modifier: &NodeId,
    branch: &BranchInstance,
    mode: SyncMode,
) -> Result<StreamGraph, super::GraphError> {
    let mut next = base.clone();
    next.merge(branch.subgraph.clone())?;
    next.add_edge(modifier, &branch.entry, mode)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ProcessorKind;

    fn template() -> SubgraphTemplate {
        SubgraphTemplate::chain(
            vec![
                ProcessorSpec::handler("ewma", "ewma")
                    .with_param("alpha", Value::Num(0.5))
                    .with_param("tag", Value::Text("branch $key".to_string())),
                ProcessorSpec::handler("out", "sink")
                    .with_param("location", Value::Text("out/$key.csv".to_string())),
            ],
            vec![SyncMode::Sync],
        )
        .unwrap()
    }

    #[test]
    fn instantiation_suffixes_ids_and_substitutes_params() {
        let inst = template().instantiate("AMZN", &IndexMap::new()).unwrap();
        assert_eq!(inst.entry, NodeId::from("ewma[AMZN]"));
        let sink = inst.subgraph.node(&"out[AMZN]".into()).unwrap();
        assert_eq!(
            sink.param("location").unwrap(),
            &Value::Text("out/AMZN.csv".to_string())
        );
        let ewma = inst.subgraph.node(&"ewma[AMZN]".into()).unwrap();
        assert_eq!(
            ewma.param("tag").unwrap(),
            &Value::Text("branch AMZN".to_string())
        );
        assert_eq!(inst.terminals, vec![NodeId::from("out[AMZN]")]);
    }

    #[test]
    fn unbound_parameter_is_an_error() {
        let t = SubgraphTemplate::new(
            vec![ProcessorSpec::handler("h", "identity")],
            vec![],
            "h".into(),
            vec!["rate".to_string()],
        )
        .unwrap();
        assert_eq!(
            t.instantiate("X", &IndexMap::new()).unwrap_err(),
            TemplateError::UnboundParameter("rate".to_string())
        );
    }

    #[test]
    fn distinct_keys_yield_disjoint_branches() {
        let t = template();
        let a = t.instantiate("IBM", &IndexMap::new()).unwrap();
        let b = t.instantiate("GOOG", &IndexMap::new()).unwrap();
        let mut merged = a.subgraph.clone();
        merged.merge(b.subgraph).unwrap();
        assert_eq!(merged.node_count(), 4);
        assert!(merged.node(&"ewma[IBM]".into()).unwrap().kind == ProcessorKind::Handler);
    }
}
