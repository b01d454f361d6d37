//! Compositional pattern producing networks for body encoding.
//!
//! A [`CppnGenome`] is a small feed-forward graph with four inputs
//! `(x, y, z, tree distance to core)` and five outputs: three module-type
//! scores (brick, joint, empty) followed by two rotation scores (0°, 90°).
//! Genomes grow NEAT-style: connections carry innovation numbers handed out
//! by a run-wide [`InnovationTracker`], so two genomes that made the same
//! structural change agree on the numbering and can be aligned in crossover.

use std::collections::{HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_INPUTS: usize = 4;
pub const NUM_OUTPUTS: usize = 5;

/// Schema tag written into every serialized genome.
pub const CPPN_SCHEMA: &str = "morphevo.cppn.v1";

/// Node id reserved for an optional bias node (constant 1.0).
pub const BIAS_ID: NodeId = NodeId(9);
const FIRST_HIDDEN_ID: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn input(i: usize) -> Self {
        assert!(i < NUM_INPUTS);
        NodeId(i as u32)
    }

    pub fn output(i: usize) -> Self {
        assert!(i < NUM_OUTPUTS);
        NodeId((NUM_INPUTS + i) as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Sigmoid,
    Sine,
    Gaussian,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Linear,
        Activation::Sigmoid,
        Activation::Sine,
        Activation::Gaussian,
    ];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Sine => x.sin(),
            Activation::Gaussian => (-x * x).exp(),
        }
    }

    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        *Self::ALL.choose(rng).expect("non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Input,
    Bias,
    Hidden,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGene {
    pub id: NodeId,
    pub kind: NodeKind,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionGene {
    pub src: NodeId,
    pub dst: NodeId,
    pub weight: f64,
    pub enabled: bool,
    pub innovation: u64,
}

/// Hands out innovation numbers and hidden-node ids for one run.
///
/// The same `(src, dst)` pair always receives the same innovation number, and
/// splitting the same connection always yields the same hidden node id. This
/// is the only mutable state shared between genomes, so it lives with the
/// (sequential) reproduction step.
#[derive(Debug, Clone)]
pub struct InnovationTracker {
    next_innovation: u64,
    next_node: u32,
    connections: HashMap<(NodeId, NodeId), u64>,
    splits: HashMap<u64, NodeId>,
}

impl Default for InnovationTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl InnovationTracker {
    /// A tracker with the 20 input→output connections pre-registered as
    /// innovations `0..20`, matching [`random_cppn`].
    pub fn new() -> Self {
        let mut tracker = InnovationTracker {
            next_innovation: 0,
            next_node: FIRST_HIDDEN_ID,
            connections: HashMap::new(),
            splits: HashMap::new(),
        };
        for i in 0..NUM_INPUTS {
            for o in 0..NUM_OUTPUTS {
                tracker.connection(NodeId::input(i), NodeId::output(o));
            }
        }
        tracker
    }

    pub fn connection(&mut self, src: NodeId, dst: NodeId) -> u64 {
        *self.connections.entry((src, dst)).or_insert_with(|| {
            let n = self.next_innovation;
            self.next_innovation += 1;
            n
        })
    }

    fn split(&mut self, innovation: u64) -> NodeId {
        *self.splits.entry(innovation).or_insert_with(|| {
            let id = NodeId(self.next_node);
            self.next_node += 1;
            id
        })
    }

    /// Number of distinct connection structures registered so far.
    pub fn innovations_issued(&self) -> u64 {
        self.next_innovation
    }
}

/// A CPPN genotype.
///
/// Invariants (checked by [`CppnGenome::from_parts`]): input nodes `0..4` and
/// output nodes `4..9` are present, node ids are unique, every connection
/// targets a hidden or output node, innovation numbers and `(src, dst)`
/// pairs are unique, and the graph over all connections (enabled or not) is
/// acyclic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SerializedCppn", into = "SerializedCppn")]
pub struct CppnGenome {
    nodes: Vec<NodeGene>,
    connections: Vec<ConnectionGene>,
}

#[derive(Serialize, Deserialize)]
struct SerializedCppn {
    schema: String,
    nodes: Vec<NodeGene>,
    connections: Vec<ConnectionGene>,
}

impl From<CppnGenome> for SerializedCppn {
    fn from(g: CppnGenome) -> Self {
        SerializedCppn {
            schema: CPPN_SCHEMA.to_string(),
            nodes: g.nodes,
            connections: g.connections,
        }
    }
}

impl TryFrom<SerializedCppn> for CppnGenome {
    type Error = Error;

    fn try_from(s: SerializedCppn) -> Result<Self> {
        if s.schema != CPPN_SCHEMA {
            return Err(Error::invalid(format!(
                "unsupported cppn schema {:?} (expected {CPPN_SCHEMA:?})",
                s.schema
            )));
        }
        CppnGenome::from_parts(s.nodes, s.connections)
    }
}

impl CppnGenome {
    pub fn from_parts(mut nodes: Vec<NodeGene>, mut connections: Vec<ConnectionGene>) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        connections.sort_by_key(|c| c.innovation);

        let mut kinds = HashMap::new();
        for n in &nodes {
            if kinds.insert(n.id, n.kind).is_some() {
                return Err(Error::invalid(format!("duplicate node id {}", n.id.0)));
            }
        }
        for i in 0..NUM_INPUTS {
            if kinds.get(&NodeId::input(i)) != Some(&NodeKind::Input) {
                return Err(Error::invalid(format!("missing input node {i}")));
            }
        }
        for o in 0..NUM_OUTPUTS {
            if kinds.get(&NodeId::output(o)) != Some(&NodeKind::Output) {
                return Err(Error::invalid(format!("missing output node {o}")));
            }
        }
        let io_count = nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Input | NodeKind::Output))
            .count();
        if io_count != NUM_INPUTS + NUM_OUTPUTS {
            return Err(Error::invalid("genome must have exactly 4 inputs and 5 outputs"));
        }
        if let Some(n) = nodes.iter().find(|n| n.kind == NodeKind::Bias && n.id != BIAS_ID) {
            return Err(Error::invalid(format!("bias node must use id {}, found {}", BIAS_ID.0, n.id.0)));
        }

        let mut innovations = HashSet::new();
        let mut pairs = HashSet::new();
        for c in &connections {
            let Some(&dst_kind) = kinds.get(&c.dst) else {
                return Err(Error::invalid(format!("connection {} targets unknown node", c.innovation)));
            };
            if !kinds.contains_key(&c.src) {
                return Err(Error::invalid(format!("connection {} starts at unknown node", c.innovation)));
            }
            if matches!(dst_kind, NodeKind::Input | NodeKind::Bias) {
                return Err(Error::invalid(format!("connection {} targets an input", c.innovation)));
            }
            if !c.weight.is_finite() {
                return Err(Error::invalid(format!("connection {} has non-finite weight", c.innovation)));
            }
            if !innovations.insert(c.innovation) {
                return Err(Error::invalid(format!("duplicate innovation {}", c.innovation)));
            }
            if !pairs.insert((c.src, c.dst)) {
                return Err(Error::invalid(format!("duplicate connection {}->{}", c.src.0, c.dst.0)));
            }
        }

        let genome = CppnGenome { nodes, connections };
        if genome.topological_order(false).is_none() {
            return Err(Error::invalid("connection graph contains a cycle"));
        }
        Ok(genome)
    }

    pub fn nodes(&self) -> &[NodeGene] {
        &self.nodes
    }

    /// Connections sorted by innovation number.
    pub fn connections(&self) -> &[ConnectionGene] {
        &self.connections
    }

    pub fn hidden_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Hidden).count()
    }

    fn has_node(&self, id: NodeId) -> bool {
        self.nodes.binary_search_by_key(&id, |n| n.id).is_ok()
    }

    /// Kahn ordering of node indices; `None` when a cycle exists.
    fn topological_order(&self, enabled_only: bool) -> Option<Vec<usize>> {
        let index: HashMap<NodeId, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut indegree = vec![0usize; self.nodes.len()];
        let mut outgoing = vec![Vec::new(); self.nodes.len()];
        for c in self.connections.iter().filter(|c| c.enabled || !enabled_only) {
            let (s, d) = (index[&c.src], index[&c.dst]);
            indegree[d] += 1;
            outgoing[s].push(d);
        }
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop() {
            order.push(n);
            for &d in &outgoing[n] {
                indegree[d] -= 1;
                if indegree[d] == 0 {
                    ready.push(d);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    /// True if `to` is reachable from `from` along any connection.
    fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        let mut stack = vec![from];
        let mut seen = HashSet::new();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.connections.iter().filter(|c| c.src == n).map(|c| c.dst));
            }
        }
        false
    }

    pub fn compile(&self) -> CompiledCppn {
        CompiledCppn::new(self)
    }

    /// Evaluates the network at `query = (x, y, z, tree distance)`.
    pub fn evaluate(&self, query: [f64; NUM_INPUTS]) -> Result<[f64; NUM_OUTPUTS]> {
        self.compile().evaluate(query)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("genome serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("cppn json: {e}")))
    }
}

/// Target slot, activation and weighted source slots of one node.
type Step = (usize, Activation, Vec<(usize, f64)>);

/// A genome flattened into evaluation order.
#[derive(Debug, Clone)]
pub struct CompiledCppn {
    steps: Vec<Step>,
    slots: usize,
    bias: Option<usize>,
    outputs: [usize; NUM_OUTPUTS],
}

impl CompiledCppn {
    pub fn new(genome: &CppnGenome) -> Self {
        let index: HashMap<NodeId, usize> = genome.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let order = genome
            .topological_order(true)
            .expect("validated genomes are acyclic");
        let mut incoming = vec![Vec::new(); genome.nodes.len()];
        for c in genome.connections.iter().filter(|c| c.enabled) {
            incoming[index[&c.dst]].push((index[&c.src], c.weight));
        }
        let steps = order
            .into_iter()
            .filter(|&i| matches!(genome.nodes[i].kind, NodeKind::Hidden | NodeKind::Output))
            .map(|i| (i, genome.nodes[i].activation, std::mem::take(&mut incoming[i])))
            .collect();
        CompiledCppn {
            steps,
            slots: genome.nodes.len(),
            bias: genome.nodes.iter().position(|n| n.kind == NodeKind::Bias),
            outputs: std::array::from_fn(|o| index[&NodeId::output(o)]),
        }
    }

    pub fn evaluate(&self, query: [f64; NUM_INPUTS]) -> Result<[f64; NUM_OUTPUTS]> {
        if let Some(v) = query.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite cppn query component {v}")));
        }
        // Inputs occupy node slots 0..4 since nodes are sorted by id.
        let mut values = vec![0.0; self.slots];
        values[..NUM_INPUTS].copy_from_slice(&query);
        if let Some(b) = self.bias {
            values[b] = 1.0;
        }
        for (node, activation, inputs) in &self.steps {
            let sum: f64 = inputs.iter().map(|&(s, w)| values[s] * w).sum();
            values[*node] = activation.apply(sum);
        }
        Ok(self.outputs.map(|o| values[o]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CppnInitParams {
    /// Initial weights are drawn uniformly from `[-weight_range, weight_range]`.
    pub weight_range: f64,
}

impl Default for CppnInitParams {
    fn default() -> Self {
        CppnInitParams { weight_range: 1.0 }
    }
}

/// Minimal genome: every input wired to every output, no hidden nodes.
/// Output activations are drawn uniformly from [`Activation::ALL`].
pub fn random_cppn<R: Rng + ?Sized>(rng: &mut R, params: &CppnInitParams) -> CppnGenome {
    let mut nodes = Vec::with_capacity(NUM_INPUTS + NUM_OUTPUTS);
    for i in 0..NUM_INPUTS {
        nodes.push(NodeGene {
            id: NodeId::input(i),
            kind: NodeKind::Input,
            activation: Activation::Linear,
        });
    }
    for o in 0..NUM_OUTPUTS {
        nodes.push(NodeGene {
            id: NodeId::output(o),
            kind: NodeKind::Output,
            activation: Activation::random(rng),
        });
    }
    let mut connections = Vec::with_capacity(NUM_INPUTS * NUM_OUTPUTS);
    for i in 0..NUM_INPUTS {
        for o in 0..NUM_OUTPUTS {
            connections.push(ConnectionGene {
                src: NodeId::input(i),
                dst: NodeId::output(o),
                weight: rng.random_range(-params.weight_range..=params.weight_range),
                enabled: true,
                // Same numbering as InnovationTracker::new.
                innovation: (i * NUM_OUTPUTS + o) as u64,
            });
        }
    }
    CppnGenome { nodes, connections }
}

/// Per-genome mutation rates. Weight rates apply per connection; at most one
/// structural change (add-node or add-connection) happens per call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CppnMutationParams {
    pub weight_perturb_prob: f64,
    pub weight_sigma: f64,
    pub weight_reset_prob: f64,
    pub add_connection_prob: f64,
    pub add_node_prob: f64,
    /// Attempts to find a legal new connection or split before giving up.
    pub max_attempts: usize,
}

impl Default for CppnMutationParams {
    fn default() -> Self {
        CppnMutationParams {
            weight_perturb_prob: 0.8,
            weight_sigma: 0.1,
            weight_reset_prob: 0.05,
            add_connection_prob: 0.1,
            add_node_prob: 0.05,
            max_attempts: 20,
        }
    }
}

impl CppnMutationParams {
    pub fn disabled() -> Self {
        CppnMutationParams {
            weight_perturb_prob: 0.0,
            weight_sigma: 0.0,
            weight_reset_prob: 0.0,
            add_connection_prob: 0.0,
            add_node_prob: 0.0,
            max_attempts: 0,
        }
    }
}

pub fn mutate_cppn<R: Rng + ?Sized>(
    genome: &CppnGenome,
    rng: &mut R,
    tracker: &mut InnovationTracker,
    params: &CppnMutationParams,
) -> CppnGenome {
    let mut child = genome.clone();

    let perturb = Normal::new(0.0, params.weight_sigma.max(0.0)).expect("sigma is non-negative");
    for c in &mut child.connections {
        if rng.random_bool(params.weight_perturb_prob) {
            c.weight += perturb.sample(rng);
        } else if rng.random_bool(params.weight_reset_prob) {
            c.weight = rng.random_range(-1.0..=1.0);
        }
    }

    let u: f64 = rng.random();
    if u < params.add_node_prob {
        add_node(&mut child, rng, tracker, params.max_attempts);
    } else if u < params.add_node_prob + params.add_connection_prob {
        add_connection(&mut child, rng, tracker, params.max_attempts);
    }
    child
}

/// Splits an enabled connection `a -> b` into `a -> new -> b`. The incoming
/// edge gets weight 1 and the outgoing edge keeps the old weight.
pub fn add_node<R: Rng + ?Sized>(
    genome: &mut CppnGenome,
    rng: &mut R,
    tracker: &mut InnovationTracker,
    max_attempts: usize,
) -> bool {
    let enabled: Vec<usize> = (0..genome.connections.len())
        .filter(|&i| genome.connections[i].enabled)
        .collect();
    if enabled.is_empty() {
        return false;
    }
    for _ in 0..max_attempts {
        let ci = *enabled.choose(rng).expect("non-empty");
        let old = genome.connections[ci].clone();
        let node = tracker.split(old.innovation);
        if genome.has_node(node) {
            continue;
        }
        genome.connections[ci].enabled = false;
        let pos = genome.nodes.partition_point(|n| n.id < node);
        genome.nodes.insert(
            pos,
            NodeGene {
                id: node,
                kind: NodeKind::Hidden,
                activation: Activation::random(rng),
            },
        );
        let first = ConnectionGene {
            src: old.src,
            dst: node,
            weight: 1.0,
            enabled: true,
            innovation: tracker.connection(old.src, node),
        };
        let second = ConnectionGene {
            src: node,
            dst: old.dst,
            weight: old.weight,
            enabled: true,
            innovation: tracker.connection(node, old.dst),
        };
        genome.connections.push(first);
        genome.connections.push(second);
        genome.connections.sort_by_key(|c| c.innovation);
        return true;
    }
    false
}

/// Adds a new connection that keeps the graph acyclic.
pub fn add_connection<R: Rng + ?Sized>(
    genome: &mut CppnGenome,
    rng: &mut R,
    tracker: &mut InnovationTracker,
    max_attempts: usize,
) -> bool {
    let targets: Vec<NodeId> = genome
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Hidden | NodeKind::Output))
        .map(|n| n.id)
        .collect();
    for _ in 0..max_attempts {
        let src = genome.nodes.choose(rng).expect("non-empty").id;
        let dst = *targets.choose(rng).expect("outputs always exist");
        if src == dst
            || genome.connections.iter().any(|c| c.src == src && c.dst == dst)
            || genome.reaches(dst, src)
        {
            continue;
        }
        genome.connections.push(ConnectionGene {
            src,
            dst,
            weight: rng.random_range(-1.0..=1.0),
            enabled: true,
            innovation: tracker.connection(src, dst),
        });
        genome.connections.sort_by_key(|c| c.innovation);
        return true;
    }
    false
}

/// NEAT crossover: matching genes come from either parent with equal
/// probability, disjoint and excess genes from the fitter parent (`a` on
/// ties). The offspring therefore has the fitter parent's structure.
pub fn crossover_cppn<R: Rng + ?Sized>(
    parent_a: &CppnGenome,
    parent_b: &CppnGenome,
    fitness_a: f64,
    fitness_b: f64,
    rng: &mut R,
) -> CppnGenome {
    let (fitter, other) = if fitness_b > fitness_a {
        (parent_b, parent_a)
    } else {
        (parent_a, parent_b)
    };
    let connections = fitter
        .connections
        .iter()
        .map(|gene| {
            match other
                .connections
                .binary_search_by_key(&gene.innovation, |c| c.innovation)
            {
                Ok(j) if rng.random_bool(0.5) => {
                    let matched = &other.connections[j];
                    ConnectionGene {
                        weight: matched.weight,
                        enabled: matched.enabled,
                        ..gene.clone()
                    }
                }
                _ => gene.clone(),
            }
        })
        .collect();
    CppnGenome {
        nodes: fitter.nodes.clone(),
        connections,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_io(connections: Vec<ConnectionGene>) -> CppnGenome {
        let mut nodes = Vec::new();
        for i in 0..NUM_INPUTS {
            nodes.push(NodeGene { id: NodeId::input(i), kind: NodeKind::Input, activation: Activation::Linear });
        }
        for o in 0..NUM_OUTPUTS {
            nodes.push(NodeGene { id: NodeId::output(o), kind: NodeKind::Output, activation: Activation::Linear });
        }
        CppnGenome::from_parts(nodes, connections).unwrap()
    }

    fn zero_weights(g: &CppnGenome) -> CppnGenome {
        let mut g = g.clone();
        for c in &mut g.connections {
            c.weight = 0.0;
        }
        for n in &mut g.nodes {
            n.activation = Activation::Linear;
        }
        g
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = zero_weights(&random_cppn(&mut rng, &CppnInitParams::default()));
        for q in [[0.0, 0.0, 0.0, 0.0], [3.0, -2.0, 1.0, 4.0]] {
            assert_eq!(g.evaluate(q).unwrap(), [0.0; 5]);
        }
    }

    #[test]
    fn single_edge_network() {
        let g = linear_io(vec![ConnectionGene {
            src: NodeId::input(0),
            dst: NodeId::output(0),
            weight: 1.0,
            enabled: true,
            innovation: 0,
        }]);
        assert_eq!(g.evaluate([2.0, 0.0, 0.0, 0.0]).unwrap(), [2.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_cppn(&mut rng, &CppnInitParams::default());
        let q = [1.0, -2.0, 0.0, 3.0];
        let a = g.evaluate(q).unwrap();
        let b = g.evaluate(q).unwrap();
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
    }

    #[test]
    fn non_finite_query_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_cppn(&mut rng, &CppnInitParams::default());
        assert!(g.evaluate([f64::NAN, 0.0, 0.0, 1.0]).is_err());
        assert!(g.evaluate([0.0, f64::INFINITY, 0.0, 1.0]).is_err());
    }

    #[test]
    fn random_genome_shape() {
        let a = random_cppn(&mut ChaCha8Rng::seed_from_u64(5), &CppnInitParams::default());
        let b = random_cppn(&mut ChaCha8Rng::seed_from_u64(5), &CppnInitParams::default());
        assert_eq!(a, b);
        assert_eq!(a.connections().len(), 20);
        assert_eq!(a.nodes().len(), 9);
        assert!(a.connections().iter().all(|c| (-1.0..=1.0).contains(&c.weight)));
    }

    #[test]
    fn tracker_agrees_with_initial_numbering() {
        let mut tracker = InnovationTracker::new();
        let g = random_cppn(&mut ChaCha8Rng::seed_from_u64(0), &CppnInitParams::default());
        for c in g.connections() {
            assert_eq!(tracker.connection(c.src, c.dst), c.innovation);
        }
        assert_eq!(tracker.innovations_issued(), 20);
    }

    #[test]
    fn disabled_mutation_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tracker = InnovationTracker::new();
        let g = random_cppn(&mut rng, &CppnInitParams::default());
        let m = mutate_cppn(&g, &mut rng, &mut tracker, &CppnMutationParams::disabled());
        assert_eq!(g, m);
    }

    #[test]
    fn add_node_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tracker = InnovationTracker::new();
        let g = random_cppn(&mut rng, &CppnInitParams::default());
        let mut m = g.clone();
        assert!(add_node(&mut m, &mut rng, &mut tracker, 10));
        assert_eq!(m.nodes().len(), g.nodes().len() + 1);
        assert_eq!(m.connections().len(), g.connections().len() + 2);
        let disabled: Vec<_> = m.connections().iter().filter(|c| !c.enabled).collect();
        assert_eq!(disabled.len(), 1);
        let split = disabled[0];
        let hidden = m.nodes().iter().find(|n| n.kind == NodeKind::Hidden).unwrap().id;
        let into = m.connections().iter().find(|c| c.dst == hidden).unwrap();
        let out = m.connections().iter().find(|c| c.src == hidden).unwrap();
        assert_eq!((into.src, into.weight), (split.src, 1.0));
        assert_eq!((out.dst, out.weight), (split.dst, split.weight));
    }

    #[test]
    fn same_split_gets_same_node_id_across_genomes() {
        let mut tracker = InnovationTracker::new();
        let g = random_cppn(&mut ChaCha8Rng::seed_from_u64(4), &CppnInitParams::default());
        let mut a = g.clone();
        let mut b = g.clone();
        // Same rng seed picks the same connection.
        add_node(&mut a, &mut ChaCha8Rng::seed_from_u64(8), &mut tracker, 5);
        add_node(&mut b, &mut ChaCha8Rng::seed_from_u64(8), &mut tracker, 5);
        let ia: Vec<u64> = a.connections().iter().map(|c| c.innovation).collect();
        let ib: Vec<u64> = b.connections().iter().map(|c| c.innovation).collect();
        assert_eq!(ia, ib);
        assert_eq!(
            a.nodes().iter().map(|n| n.id).collect::<Vec<_>>(),
            b.nodes().iter().map(|n| n.id).collect::<Vec<_>>()
        );
    }

    #[test]
    fn repeated_mutation_stays_acyclic() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut tracker = InnovationTracker::new();
        let params = CppnMutationParams {
            add_connection_prob: 0.5,
            add_node_prob: 0.3,
            ..CppnMutationParams::default()
        };
        let mut g = random_cppn(&mut rng, &CppnInitParams::default());
        for _ in 0..1000 {
            g = mutate_cppn(&g, &mut rng, &mut tracker, &params);
            assert!(g.topological_order(false).is_some());
        }
        // Round-tripping through the validating constructor must succeed too.
        let again = CppnGenome::from_parts(g.nodes().to_vec(), g.connections().to_vec()).unwrap();
        assert_eq!(again, g);
    }

    #[test]
    fn self_crossover_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut tracker = InnovationTracker::new();
        let mut g = random_cppn(&mut rng, &CppnInitParams::default());
        add_node(&mut g, &mut rng, &mut tracker, 5);
        let child = crossover_cppn(&g, &g, 1.0, 1.0, &mut rng);
        assert_eq!(child, g);
    }

    #[test]
    fn fitter_parent_structure_wins() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut tracker = InnovationTracker::new();
        let base = random_cppn(&mut rng, &CppnInitParams::default());
        let mut a = base.clone();
        let mut b = base.clone();
        add_node(&mut a, &mut ChaCha8Rng::seed_from_u64(1), &mut tracker, 5);
        add_node(&mut a, &mut ChaCha8Rng::seed_from_u64(2), &mut tracker, 5);
        add_node(&mut b, &mut ChaCha8Rng::seed_from_u64(3), &mut tracker, 5);
        let hidden = |g: &CppnGenome| -> Vec<NodeId> {
            g.nodes().iter().filter(|n| n.kind == NodeKind::Hidden).map(|n| n.id).collect()
        };
        assert_ne!(hidden(&a), hidden(&b));
        for seed in 0..10 {
            let child = crossover_cppn(&a, &b, 2.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(hidden(&child), hidden(&a));
            let innov = |g: &CppnGenome| g.connections().iter().map(|c| c.innovation).collect::<Vec<_>>();
            assert_eq!(innov(&child), innov(&a));
            assert!(child.nodes().len() >= 9);
            let child = crossover_cppn(&a, &b, 1.0, 2.0, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(hidden(&child), hidden(&b));
        }
    }

    #[test]
    fn rejects_invalid_genomes() {
        let ok = linear_io(vec![]);
        let mut nodes = ok.nodes().to_vec();
        nodes.retain(|n| n.id != NodeId::output(4));
        assert!(CppnGenome::from_parts(nodes, vec![]).is_err());

        let mut nodes = ok.nodes().to_vec();
        nodes.push(NodeGene { id: NodeId(10), kind: NodeKind::Hidden, activation: Activation::Sine });
        nodes.push(NodeGene { id: NodeId(11), kind: NodeKind::Hidden, activation: Activation::Sine });
        let edge = |src, dst, innovation| ConnectionGene { src: NodeId(src), dst: NodeId(dst), weight: 0.5, enabled: true, innovation };
        let cyclic = vec![edge(10, 11, 100), edge(11, 10, 101)];
        assert!(CppnGenome::from_parts(nodes.clone(), cyclic).is_err());
        // A disabled back edge still counts as a cycle.
        let mut disabled_cycle = vec![edge(10, 11, 100), edge(11, 10, 101)];
        disabled_cycle[1].enabled = false;
        assert!(CppnGenome::from_parts(nodes.clone(), disabled_cycle).is_err());
        assert!(CppnGenome::from_parts(nodes.clone(), vec![edge(10, 0, 1)]).is_err());
        assert!(CppnGenome::from_parts(nodes.clone(), vec![edge(0, 10, 1), edge(1, 10, 1)]).is_err());
        assert!(CppnGenome::from_parts(nodes, vec![edge(0, 10, 1), edge(10, 4, 2)]).is_ok());
    }

    #[test]
    fn json_round_trip_preserves_behavior() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut tracker = InnovationTracker::new();
        let mut g = random_cppn(&mut rng, &CppnInitParams::default());
        for _ in 0..30 {
            g = mutate_cppn(&g, &mut rng, &mut tracker, &CppnMutationParams { add_node_prob: 0.3, add_connection_prob: 0.3, ..Default::default() });
        }
        let text = g.to_json();
        assert!(text.contains(CPPN_SCHEMA));
        let back = CppnGenome::from_json(&text).unwrap();
        assert_eq!(back, g);
        let q = [1.0, 2.0, -1.0, 2.0];
        assert_eq!(back.evaluate(q).unwrap().map(f64::to_bits), g.evaluate(q).unwrap().map(f64::to_bits));

        let wrong = text.replace(CPPN_SCHEMA, "morphevo.cppn.v0");
        assert!(CppnGenome::from_json(&wrong).is_err());
    }
}
