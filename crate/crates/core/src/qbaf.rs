//! Bipolar argumentation graphs and their quadratic-energy equilibrium.
//!
//! A [`QbafGraph`] holds a central claim, the arguments raised for and against
//! it, the attack/support edges between them and a base strength per node.
//! [`solve_equilibrium`] computes final strengths by damped fixed-point
//! iteration of the local equilibrium condition
//!
//! ```text
//! E_j   = sum(strength of supporters of j) - sum(strength of attackers of j)
//! h(x)  = max(x,0)^2 / (1 + max(x,0)^2)
//! s*_j  = tau_j + (1 - tau_j) h(E_j) - tau_j h(-E_j)
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved id of the central claim node.
pub const CLAIM_ID: &str = "claim";

/// Base strength the claim starts from.
pub const CLAIM_BASE_STRENGTH: f64 = 0.5;

/// Model-proposed relations below this confidence never become edges.
pub const MIN_MODEL_CONFIDENCE: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn claim() -> Self {
        NodeId(CLAIM_ID.to_string())
    }

    pub fn is_claim(&self) -> bool {
        self.0 == CLAIM_ID
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

/// Position of an argument toward the claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Support,
    Attack,
}

impl Stance {
    pub fn opposite(self) -> Stance {
        match self {
            Stance::Support => Stance::Attack,
            Stance::Attack => Stance::Support,
        }
    }

    /// The relation kind an argument of this stance has toward the claim.
    pub fn relation(self) -> RelationKind {
        match self {
            Stance::Support => RelationKind::Support,
            Stance::Attack => RelationKind::Attack,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stance::Support => "support",
            Stance::Attack => "attack",
        }
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Argument {
    pub id: NodeId,
    pub text: String,
    pub stance: Stance,
    pub author_role: String,
    pub evidence_refs: Vec<String>,
    pub base_strength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Attack,
    Support,
}

impl RelationKind {
    /// Sign of the contribution a source of this kind makes to its target's energy.
    pub fn sign(self) -> f64 {
        match self {
            RelationKind::Support => 1.0,
            RelationKind::Attack => -1.0,
        }
    }
}

/// Where an edge came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeOrigin {
    Heuristic,
    Model,
    Human,
    Construction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub kind: RelationKind,
    pub confidence: f64,
    pub origin: EdgeOrigin,
}

impl Edge {
    pub fn new(
        source: impl Into<NodeId>,
        target: impl Into<NodeId>,
        kind: RelationKind,
        confidence: f64,
        origin: EdgeOrigin,
    ) -> Self {
        Edge {
            source: source.into(),
            target: target.into(),
            kind,
            confidence,
            origin,
        }
    }

    fn key(&self) -> (NodeId, NodeId, RelationKind) {
        (self.source.clone(), self.target.clone(), self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimNode {
    pub id: NodeId,
    pub text: String,
    pub base_strength: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("claim text is empty")]
    EmptyClaim,
    #[error("duplicate node id `{0}`")]
    DuplicateId(NodeId),
    #[error("argument `{0}` has empty text")]
    EmptyText(NodeId),
    #[error("base strength {value} of `{node}` is outside [0, 1]")]
    StrengthOutOfRange { node: NodeId, value: f64 },
    #[error("relation {from} -> {target} references unknown node `{missing}`")]
    DanglingEndpoint {
        from: NodeId,
        target: NodeId,
        missing: NodeId,
    },
    #[error("self relation on `{0}`")]
    SelfRelation(NodeId),
    #[error("relation {from} -> claim is {kind:?} but the argument's stance is {stance}")]
    StanceParity {
        from: NodeId,
        kind: RelationKind,
        stance: Stance,
    },
    #[error("the claim cannot be the source of a relation (target `{0}`)")]
    ClaimAsSource(NodeId),
    #[error("relation {from} -> {target} has confidence {confidence} outside the accepted range")]
    BadConfidence {
        from: NodeId,
        target: NodeId,
        confidence: f64,
    },
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("no strength recorded for `{0}`")]
    MissingStrength(NodeId),
    #[error("invalid graph: {0}")]
    Invalid(String),
}

/// One invariant violation reported by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    DuplicateId { node: NodeId },
    EmptyText { node: NodeId },
    StrengthOutOfRange { node: NodeId, value: f64 },
    DanglingEndpoint { edge: usize, missing: NodeId },
    SelfRelation { edge: usize, node: NodeId },
    DuplicateEdge { edge: usize },
    ClaimAsSource { edge: usize },
    ConfidenceOutOfRange { edge: usize, confidence: f64 },
    LowConfidenceModelEdge { edge: usize, confidence: f64 },
    MissingStanceEdge { node: NodeId },
    StanceEdgeMismatch { node: NodeId },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DuplicateId { node } => write!(f, "duplicate node id `{node}`"),
            Diagnostic::EmptyText { node } => write!(f, "`{node}` has empty text"),
            Diagnostic::StrengthOutOfRange { node, value } => {
                write!(f, "base strength {value} of `{node}` outside [0, 1]")
            }
            Diagnostic::DanglingEndpoint { edge, missing } => {
                write!(f, "edge #{edge} references missing node `{missing}`")
            }
            Diagnostic::SelfRelation { edge, node } => write!(f, "edge #{edge} loops on `{node}`"),
            Diagnostic::DuplicateEdge { edge } => write!(f, "edge #{edge} is a duplicate"),
            Diagnostic::ClaimAsSource { edge } => write!(f, "edge #{edge} starts at the claim"),
            Diagnostic::ConfidenceOutOfRange { edge, confidence } => {
                write!(f, "edge #{edge} confidence {confidence} outside [0, 1]")
            }
            Diagnostic::LowConfidenceModelEdge { edge, confidence } => {
                write!(f, "model edge #{edge} has confidence {confidence} below {MIN_MODEL_CONFIDENCE}")
            }
            Diagnostic::MissingStanceEdge { node } => {
                write!(f, "`{node}` has no edge to the claim")
            }
            Diagnostic::StanceEdgeMismatch { node } => {
                write!(f, "`{node}` relates to the claim against its stance")
            }
        }
    }
}

/// Serialized shape of a [`QbafGraph`]. Loading always re-validates.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphDocument {
    claim: ClaimNode,
    arguments: Vec<Argument>,
    edges: Vec<Edge>,
}

/// The tuple of nodes, attack edges, support edges and base strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphDocument", into = "GraphDocument")]
pub struct QbafGraph {
    claim: ClaimNode,
    arguments: Vec<Argument>,
    edges: Vec<Edge>,
}

impl TryFrom<GraphDocument> for QbafGraph {
    type Error = String;

    fn try_from(doc: GraphDocument) -> Result<Self, Self::Error> {
        let graph = QbafGraph {
            claim: doc.claim,
            arguments: doc.arguments,
            edges: doc.edges,
        };
        let diagnostics = validate(&graph);
        if diagnostics.is_empty() {
            Ok(graph)
        } else {
            let joined: Vec<String> = diagnostics.iter().map(|d| d.to_string()).collect();
            Err(joined.join("; "))
        }
    }
}

impl From<QbafGraph> for GraphDocument {
    fn from(g: QbafGraph) -> Self {
        GraphDocument {
            claim: g.claim,
            arguments: g.arguments,
            edges: g.edges,
        }
    }
}

/// Incoming neighbourhood of a node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Neighborhood {
    pub supporters: Vec<NodeId>,
    pub attackers: Vec<NodeId>,
}

impl QbafGraph {
    pub fn claim(&self) -> &ClaimNode {
        &self.claim
    }

    pub fn arguments(&self) -> &[Argument] {
        &self.arguments
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn argument(&self, id: &NodeId) -> Option<&Argument> {
        self.arguments.iter().find(|a| &a.id == id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        id == &self.claim.id || self.argument(id).is_some()
    }

    pub fn node_count(&self) -> usize {
        self.arguments.len() + 1
    }

    /// Claim first, then arguments in insertion order.
    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        std::iter::once(&self.claim.id).chain(self.arguments.iter().map(|a| &a.id))
    }

    pub fn base_strength(&self, id: &NodeId) -> Option<f64> {
        if id == &self.claim.id {
            Some(self.claim.base_strength)
        } else {
            self.argument(id).map(|a| a.base_strength)
        }
    }

    pub fn incoming(&self, id: &NodeId) -> Neighborhood {
        let mut hood = Neighborhood::default();
        for e in self.edges.iter().filter(|e| &e.target == id) {
            match e.kind {
                RelationKind::Support => hood.supporters.push(e.source.clone()),
                RelationKind::Attack => hood.attackers.push(e.source.clone()),
            }
        }
        hood
    }

    /// Edges between arguments, excluding the stance edges into the claim.
    pub fn inter_argument_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges
            .iter()
            .filter(|e| !e.target.is_claim() && !e.source.is_claim())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::Invalid(e.to_string()))
    }

    fn has_edge_key(&self, key: &(NodeId, NodeId, RelationKind)) -> bool {
        self.edges.iter().any(|e| &e.key() == key)
    }

    /// Inserts an edge unless its (source, target, kind) key is already present.
    fn insert_edge(&mut self, edge: Edge) -> bool {
        if self.has_edge_key(&edge.key()) {
            return false;
        }
        self.edges.push(edge);
        true
    }

    pub(crate) fn remove_argument(&mut self, id: &NodeId) -> Option<Argument> {
        let pos = self.arguments.iter().position(|a| &a.id == id)?;
        let removed = self.arguments.remove(pos);
        self.edges.retain(|e| &e.source != id && &e.target != id);
        Some(removed)
    }

    pub(crate) fn add_argument(&mut self, argument: Argument) -> Result<(), GraphError> {
        check_argument(&argument)?;
        if self.contains(&argument.id) {
            return Err(GraphError::DuplicateId(argument.id));
        }
        let stance_edge = Edge::new(
            argument.id.clone(),
            self.claim.id.clone(),
            argument.stance.relation(),
            1.0,
            EdgeOrigin::Construction,
        );
        self.arguments.push(argument);
        self.insert_edge(stance_edge);
        Ok(())
    }

    pub(crate) fn argument_mut(&mut self, id: &NodeId) -> Option<&mut Argument> {
        self.arguments.iter_mut().find(|a| &a.id == id)
    }

    /// Replaces every relation between two arguments, in both directions.
    /// `kind = None` removes them.
    pub(crate) fn set_symmetric_relation(
        &mut self,
        a: &NodeId,
        b: &NodeId,
        kind: Option<RelationKind>,
        origin: EdgeOrigin,
    ) -> Result<(), GraphError> {
        for id in [a, b] {
            if id.is_claim() {
                return Err(GraphError::ClaimAsSource(id.clone()));
            }
            if self.argument(id).is_none() {
                return Err(GraphError::UnknownNode(id.clone()));
            }
        }
        if a == b {
            return Err(GraphError::SelfRelation(a.clone()));
        }
        self.edges.retain(|e| {
            !((&e.source == a && &e.target == b) || (&e.source == b && &e.target == a))
        });
        if let Some(kind) = kind {
            self.insert_edge(Edge::new(a.clone(), b.clone(), kind, 1.0, origin));
            self.insert_edge(Edge::new(b.clone(), a.clone(), kind, 1.0, origin));
        }
        Ok(())
    }
}

fn check_argument(a: &Argument) -> Result<(), GraphError> {
    if a.id.is_claim() {
        return Err(GraphError::DuplicateId(a.id.clone()));
    }
    if a.text.trim().is_empty() {
        return Err(GraphError::EmptyText(a.id.clone()));
    }
    if !(0.0..=1.0).contains(&a.base_strength) {
        return Err(GraphError::StrengthOutOfRange {
            node: a.id.clone(),
            value: a.base_strength,
        });
    }
    Ok(())
}

/// Builds a graph around a claim with base strength 0.5, wiring every
/// argument to the claim according to its stance and adding the supplied
/// inter-argument relations.
pub fn build_graph(
    claim_text: &str,
    arguments: Vec<Argument>,
    relations: Vec<Edge>,
) -> Result<QbafGraph, GraphError> {
    if claim_text.trim().is_empty() {
        return Err(GraphError::EmptyClaim);
    }
    let mut seen = HashSet::new();
    for a in &arguments {
        check_argument(a)?;
        if !seen.insert(a.id.clone()) {
            return Err(GraphError::DuplicateId(a.id.clone()));
        }
    }

    let mut graph = QbafGraph {
        claim: ClaimNode {
            id: NodeId::claim(),
            text: claim_text.to_string(),
            base_strength: CLAIM_BASE_STRENGTH,
        },
        arguments: Vec::with_capacity(arguments.len()),
        edges: Vec::new(),
    };
    let stances: HashMap<NodeId, Stance> =
        arguments.iter().map(|a| (a.id.clone(), a.stance)).collect();

    for a in arguments {
        let edge = Edge::new(
            a.id.clone(),
            NodeId::claim(),
            a.stance.relation(),
            1.0,
            EdgeOrigin::Construction,
        );
        graph.arguments.push(a);
        graph.insert_edge(edge);
    }

    for rel in relations {
        if rel.source == rel.target {
            return Err(GraphError::SelfRelation(rel.source));
        }
        if rel.source.is_claim() {
            return Err(GraphError::ClaimAsSource(rel.target));
        }
        for endpoint in [&rel.source, &rel.target] {
            if !endpoint.is_claim() && !stances.contains_key(endpoint) {
                return Err(GraphError::DanglingEndpoint {
                    from: rel.source.clone(),
                    target: rel.target.clone(),
                    missing: endpoint.clone(),
                });
            }
        }
        let confidence_ok = (0.0..=1.0).contains(&rel.confidence)
            && !(rel.origin == EdgeOrigin::Model && rel.confidence < MIN_MODEL_CONFIDENCE);
        if !confidence_ok {
            return Err(GraphError::BadConfidence {
                from: rel.source,
                target: rel.target,
                confidence: rel.confidence,
            });
        }
        if rel.target.is_claim() {
            let stance = stances[&rel.source];
            if stance.relation() != rel.kind {
                return Err(GraphError::StanceParity {
                    from: rel.source,
                    kind: rel.kind,
                    stance,
                });
            }
        }
        graph.insert_edge(rel);
    }
    Ok(graph)
}

/// Reports invariant violations without touching the graph.
pub fn validate(graph: &QbafGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut ids: HashSet<&NodeId> = HashSet::new();
    ids.insert(&graph.claim.id);

    if !graph.claim.id.is_claim() {
        out.push(Diagnostic::DuplicateId {
            node: graph.claim.id.clone(),
        });
    }
    if graph.claim.text.trim().is_empty() {
        out.push(Diagnostic::EmptyText {
            node: graph.claim.id.clone(),
        });
    }
    if !(0.0..=1.0).contains(&graph.claim.base_strength) {
        out.push(Diagnostic::StrengthOutOfRange {
            node: graph.claim.id.clone(),
            value: graph.claim.base_strength,
        });
    }
    for a in &graph.arguments {
        if !ids.insert(&a.id) {
            out.push(Diagnostic::DuplicateId { node: a.id.clone() });
        }
        if a.text.trim().is_empty() {
            out.push(Diagnostic::EmptyText { node: a.id.clone() });
        }
        if !(0.0..=1.0).contains(&a.base_strength) {
            out.push(Diagnostic::StrengthOutOfRange {
                node: a.id.clone(),
                value: a.base_strength,
            });
        }
    }

    let mut keys = HashSet::new();
    for (i, e) in graph.edges.iter().enumerate() {
        for endpoint in [&e.source, &e.target] {
            if !ids.contains(endpoint) {
                out.push(Diagnostic::DanglingEndpoint {
                    edge: i,
                    missing: endpoint.clone(),
                });
            }
        }
        if e.source == e.target {
            out.push(Diagnostic::SelfRelation {
                edge: i,
                node: e.source.clone(),
            });
        }
        if e.source == graph.claim.id {
            out.push(Diagnostic::ClaimAsSource { edge: i });
        }
        if !keys.insert(e.key()) {
            out.push(Diagnostic::DuplicateEdge { edge: i });
        }
        if !(0.0..=1.0).contains(&e.confidence) {
            out.push(Diagnostic::ConfidenceOutOfRange {
                edge: i,
                confidence: e.confidence,
            });
        } else if e.origin == EdgeOrigin::Model && e.confidence < MIN_MODEL_CONFIDENCE {
            out.push(Diagnostic::LowConfidenceModelEdge {
                edge: i,
                confidence: e.confidence,
            });
        }
    }

    for a in &graph.arguments {
        let to_claim: Vec<&Edge> = graph
            .edges
            .iter()
            .filter(|e| e.source == a.id && e.target == graph.claim.id)
            .collect();
        if to_claim.is_empty() {
            out.push(Diagnostic::MissingStanceEdge { node: a.id.clone() });
        } else if to_claim.iter().any(|e| e.kind != a.stance.relation()) {
            out.push(Diagnostic::StanceEdgeMismatch { node: a.id.clone() });
        }
    }
    out
}

/// Damped fixed-point iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            damping: 0.5,
            tolerance: 1e-6,
            max_iterations: 1000,
        }
    }
}

impl SolverParams {
    pub fn check(&self) -> Result<(), GraphError> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(GraphError::Invalid(format!(
                "damping {} outside (0, 1]",
                self.damping
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(GraphError::Invalid(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(GraphError::Invalid("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Final strengths plus how the solver got there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthMap {
    pub strengths: BTreeMap<NodeId, f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl StrengthMap {
    pub fn get(&self, id: &NodeId) -> Option<f64> {
        self.strengths.get(id).copied()
    }

    pub fn claim(&self) -> f64 {
        self.strengths
            .get(&NodeId::claim())
            .copied()
            .unwrap_or(CLAIM_BASE_STRENGTH)
    }
}

/// Supporter strengths minus attacker strengths over the edges entering `node`.
pub fn energy(graph: &QbafGraph, node: &NodeId, strengths: &StrengthMap) -> Result<f64, GraphError> {
    if !graph.contains(node) {
        return Err(GraphError::UnknownNode(node.clone()));
    }
    let mut total = 0.0;
    for e in graph.edges.iter().filter(|e| &e.target == node) {
        let s = strengths
            .get(&e.source)
            .ok_or_else(|| GraphError::MissingStrength(e.source.clone()))?;
        total += e.kind.sign() * s;
    }
    Ok(total)
}

/// Saturating quadratic impact `max(x,0)^2 / (1 + max(x,0)^2)`.
pub fn impact(x: f64) -> f64 {
    let p = x.max(0.0);
    let sq = p * p;
    sq / (1.0 + sq)
}

/// Strength a node with base strength `tau` settles at under `energy`.
pub fn local_equilibrium(tau: f64, energy: f64) -> Result<f64, GraphError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(GraphError::Invalid(format!("base strength {tau} outside [0, 1]")));
    }
    Ok(equilibrium_unchecked(tau, energy))
}

#[inline]
fn equilibrium_unchecked(tau: f64, energy: f64) -> f64 {
    tau + (1.0 - tau) * impact(energy) - tau * impact(-energy)
}

/// Computes equilibrium strengths for every node.
///
/// Starts from the base strengths and applies synchronous damped updates
/// `s <- (1 - damping) s + damping * local_equilibrium(tau, E(s))` until the
/// largest fixed-point residual drops to `tolerance`. Nodes without incoming
/// edges stay at their base strength exactly. Hitting `max_iterations`
/// returns the last iterate with `converged = false`.
pub fn solve_equilibrium(graph: &QbafGraph, params: &SolverParams) -> StrengthMap {
    let ids: Vec<&NodeId> = graph.node_ids().collect();
    let index: HashMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let tau: Vec<f64> = std::iter::once(graph.claim.base_strength)
        .chain(graph.arguments.iter().map(|a| a.base_strength))
        .collect();

    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ids.len()];
    for e in &graph.edges {
        if let (Some(&s), Some(&t)) = (index.get(&e.source), index.get(&e.target)) {
            incoming[t].push((s, e.kind.sign()));
        }
    }

    if let Some(order) = topological_order(&incoming) {
        return exact_acyclic(ids, &tau, &incoming, &order);
    }

    let mut strengths = tau.clone();
    let mut targets = vec![0.0; ids.len()];
    let mut iterations = 0;
    let mut residual;
    let mut converged = false;

    loop {
        residual = 0.0f64;
        for j in 0..ids.len() {
            if incoming[j].is_empty() {
                targets[j] = tau[j];
                continue;
            }
            let e: f64 = incoming[j].iter().map(|&(i, sign)| sign * strengths[i]).sum();
            targets[j] = equilibrium_unchecked(tau[j], e);
            residual = residual.max((strengths[j] - targets[j]).abs());
        }
        if residual <= params.tolerance {
            converged = true;
            break;
        }
        if iterations >= params.max_iterations {
            break;
        }
        for j in 0..ids.len() {
            if !incoming[j].is_empty() {
                strengths[j] = (1.0 - params.damping) * strengths[j] + params.damping * targets[j];
            }
        }
        iterations += 1;
    }

    StrengthMap {
        strengths: ids
            .into_iter()
            .cloned()
            .zip(strengths.into_iter().map(|s| s.clamp(0.0, 1.0)))
            .collect(),
        iterations,
        residual,
        converged,
    }
}

/// Kahn's algorithm over the incoming lists; `None` when a cycle exists.
fn topological_order(incoming: &[Vec<(usize, f64)>]) -> Option<Vec<usize>> {
    let n = incoming.len();
    let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut pending: Vec<usize> = incoming.iter().map(Vec::len).collect();
    for (t, list) in incoming.iter().enumerate() {
        for &(s, _) in list {
            outgoing[s].push(t);
        }
    }
    let mut order: Vec<usize> = (0..n).filter(|&j| pending[j] == 0).collect();
    let mut next = 0;
    while next < order.len() {
        let j = order[next];
        next += 1;
        for &t in &outgoing[j] {
            pending[t] -= 1;
            if pending[t] == 0 {
                order.push(t);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// An acyclic graph has a unique fixed point, reached in one pass once every
/// node is visited after its sources. `iterations` reports the pass depth.
fn exact_acyclic(ids: Vec<&NodeId>, tau: &[f64], incoming: &[Vec<(usize, f64)>], order: &[usize]) -> StrengthMap {
    let mut strengths = tau.to_vec();
    let mut depth = vec![0usize; ids.len()];
    for &j in order {
        if incoming[j].is_empty() {
            continue;
        }
        let e: f64 = incoming[j].iter().map(|&(i, sign)| sign * strengths[i]).sum();
        strengths[j] = equilibrium_unchecked(tau[j], e).clamp(0.0, 1.0);
        depth[j] = 1 + incoming[j].iter().map(|&(i, _)| depth[i]).max().unwrap_or(0);
    }
    let residual = (0..ids.len())
        .filter(|&j| !incoming[j].is_empty())
        .map(|j| {
            let e: f64 = incoming[j].iter().map(|&(i, sign)| sign * strengths[i]).sum();
            (strengths[j] - equilibrium_unchecked(tau[j], e)).abs()
        })
        .fold(0.0, f64::max);
    StrengthMap {
        strengths: ids.into_iter().cloned().zip(strengths).collect(),
        iterations: depth.into_iter().max().unwrap_or(0),
        residual,
        converged: true,
    }
}
