//! Network model: topology validation, incidence matrix, node-capacitance
//! merging and the assembled |V|+|E|-state port-Hamiltonian system with
//! supply-node reduction.
//!
//! Orientation convention: the incidence matrix carries +1 where an edge
//! leaves (its `from` node) and −1 where it arrives, and a positive edge
//! flow runs from `from` to `to`. With this choice a one-edge network
//! reproduces the single-pipeline model identically, including the gravity
//! term, with the `from` side playing the pipe's left end.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::friction::PipeGeometry;
use crate::gas::{FrozenGasState, GasProperties};
use crate::pipeline::{mean_pressure, resistive_coefficient, PipeParams};
use crate::scalar::{as_f64, gravity, lit, Scalar};

/// Role of a node: free pressure with an injection port, or a fixed supply
/// pressure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind<T: Scalar> {
    Demand,
    Supply { pressure: T },
}

/// One junction of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Node<T: Scalar> {
    pub id: String,
    /// Elevation above the common datum [m].
    pub elevation: T,
    pub kind: NodeKind<T>,
}

/// One pipe as declared by the user. The inclination is never given here;
/// it is derived from the endpoint elevations so the two can not disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct PipeEdge<T: Scalar> {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Length [m].
    pub length: T,
    /// Inner diameter [m].
    pub diameter: T,
    /// Surface roughness [m].
    pub roughness: T,
    /// Friction efficiency factor (0, 1].
    pub efficiency: T,
    /// Number of series segments this pipe is expanded into (≥ 1).
    pub segments: usize,
}

/// Validated graph of nodes and pipes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology<T: Scalar> {
    nodes: Vec<Node<T>>,
    edges: Vec<PipeEdge<T>>,
}

impl<T: Scalar> NetworkTopology<T> {
    pub fn new(nodes: Vec<Node<T>>, edges: Vec<PipeEdge<T>>) -> Result<Self> {
        if nodes.len() < 2 || edges.is_empty() {
            return Err(Error::Topology(
                "a network needs at least two nodes and one pipe".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for node in &nodes {
            if !seen.insert(node.id.clone()) {
                return Err(Error::Topology(format!("duplicate node id `{}`", node.id)));
            }
            if let NodeKind::Supply { pressure } = node.kind {
                if !(pressure > T::zero()) {
                    return Err(Error::NonPositivePressure {
                        location: format!("supply node `{}`", node.id),
                        value: as_f64(pressure),
                    });
                }
            }
        }
        let index_of = |id: &str| nodes.iter().position(|n| n.id == id);
        let mut edge_ids = std::collections::BTreeSet::new();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for edge in &edges {
            if !edge_ids.insert(edge.id.clone()) {
                return Err(Error::Topology(format!("duplicate pipe id `{}`", edge.id)));
            }
            let from = index_of(&edge.from).ok_or_else(|| Error::UnknownNode(edge.from.clone()))?;
            let to = index_of(&edge.to).ok_or_else(|| Error::UnknownNode(edge.to.clone()))?;
            if from == to {
                return Err(Error::Topology(format!(
                    "pipe `{}` is a self-loop at node `{}`",
                    edge.id, edge.from
                )));
            }
            if !(edge.length > T::zero()) {
                return Err(Error::InvalidParameter {
                    name: "length",
                    requirement: "strictly positive",
                    value: as_f64(edge.length),
                });
            }
            if !(edge.diameter > T::zero()) {
                return Err(Error::InvalidParameter {
                    name: "diameter",
                    requirement: "strictly positive",
                    value: as_f64(edge.diameter),
                });
            }
            if edge.segments == 0 {
                return Err(Error::Topology(format!(
                    "pipe `{}` must have at least one segment",
                    edge.id
                )));
            }
            let rise = nodes[to].elevation - nodes[from].elevation;
            if rise.abs() > edge.length {
                return Err(Error::Topology(format!(
                    "pipe `{}`: elevation difference {} m exceeds its length {} m",
                    edge.id,
                    as_f64(rise),
                    as_f64(edge.length)
                )));
            }
            adjacency[from].push(to);
            adjacency[to].push(from);
        }
        // connectivity (undirected reachability from node 0)
        let mut visited = vec![false; nodes.len()];
        let mut stack = vec![0usize];
        visited[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adjacency[i] {
                if !visited[j] {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(Error::Topology(format!(
                "graph is disconnected: node `{}` is unreachable",
                nodes[i].id
            )));
        }
        Ok(Self { nodes, edges })
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[PipeEdge<T>] {
        &self.edges
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Expands every pipe declared with `segments: n > 1` into n series
    /// edges joined by internal zero-injection nodes with linearly
    /// interpolated elevations. Pipes with one segment are kept verbatim.
    pub fn expand_segments(&self) -> Result<Self> {
        if self.edges.iter().all(|e| e.segments == 1) {
            return Ok(self.clone());
        }
        let mut nodes = self.nodes.clone();
        let mut edges = Vec::new();
        for edge in &self.edges {
            if edge.segments == 1 {
                edges.push(edge.clone());
                continue;
            }
            let n = edge.segments;
            let from = self.node_index(&edge.from).expect("validated");
            let to = self.node_index(&edge.to).expect("validated");
            let elev_from = self.nodes[from].elevation;
            let elev_to = self.nodes[to].elevation;
            let mut previous = edge.from.clone();
            for k in 1..=n {
                let end = if k == n {
                    edge.to.clone()
                } else {
                    let theta = lit::<T>(k as f64 / n as f64);
                    let id = format!("{}__n{}", edge.id, k);
                    nodes.push(Node {
                        id: id.clone(),
                        elevation: elev_from + theta * (elev_to - elev_from),
                        kind: NodeKind::Demand,
                    });
                    id
                };
                edges.push(PipeEdge {
                    id: if n == 1 {
                        edge.id.clone()
                    } else {
                        format!("{}__s{}", edge.id, k)
                    },
                    from: previous.clone(),
                    to: end.clone(),
                    length: edge.length / lit(n as f64),
                    diameter: edge.diameter,
                    roughness: edge.roughness,
                    efficiency: edge.efficiency,
                    segments: 1,
                });
                previous = end;
            }
        }
        Self::new(nodes, edges)
    }
}

/// Incidence matrix stored sparsely as the edge endpoint list; a dense view
/// is materialized on demand for structure checks.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    n_nodes: usize,
    endpoints: Vec<(usize, usize)>,
}

impl IncidenceMatrix {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.endpoints.len()
    }

    /// (source, sink) node indices of an edge.
    pub fn endpoints(&self, edge: usize) -> (usize, usize) {
        self.endpoints[edge]
    }

    /// +1 where the edge leaves, −1 where it arrives, 0 elsewhere.
    pub fn coefficient(&self, node: usize, edge: usize) -> i8 {
        let (from, to) = self.endpoints[edge];
        if node == from {
            1
        } else if node == to {
            -1
        } else {
            0
        }
    }

    pub fn to_dense<T: Scalar>(&self) -> DMatrix<T> {
        let mut b = DMatrix::zeros(self.n_nodes, self.endpoints.len());
        for (e, &(from, to)) in self.endpoints.iter().enumerate() {
            b[(from, e)] = T::one();
            b[(to, e)] = -T::one();
        }
        b
    }
}

/// Builds the incidence matrix of a topology.
pub fn incidence_matrix<T: Scalar>(topology: &NetworkTopology<T>) -> Result<IncidenceMatrix> {
    let mut endpoints = Vec::with_capacity(topology.edges().len());
    for edge in topology.edges() {
        let from = topology
            .node_index(&edge.from)
            .ok_or_else(|| Error::UnknownNode(edge.from.clone()))?;
        let to = topology
            .node_index(&edge.to)
            .ok_or_else(|| Error::UnknownNode(edge.to.clone()))?;
        endpoints.push((from, to));
    }
    Ok(IncidenceMatrix {
        n_nodes: topology.nodes().len(),
        endpoints,
    })
}

/// Equivalent capacitance of a node: Σ over incident pipes of L·A/(2ρn·c²).
pub fn node_capacitance<T: Scalar>(
    topology: &NetworkTopology<T>,
    node_id: &str,
    gas_state: &FrozenGasState<T>,
) -> Result<T> {
    let Some(_) = topology.node_index(node_id) else {
        return Err(Error::UnknownNode(node_id.to_string()));
    };
    let mut total = T::zero();
    let mut incident = false;
    for edge in topology.edges() {
        if edge.from == node_id || edge.to == node_id {
            incident = true;
            let area = T::pi() * edge.diameter * edge.diameter / lit(4.0);
            total += edge.length * area
                / (lit::<T>(2.0) * gas_state.standard_density * gas_state.speed_of_sound_sq);
        }
    }
    if !incident {
        return Err(Error::Topology(format!(
            "node `{node_id}` has no incident pipes"
        )));
    }
    Ok(total)
}

/// Gravity-term handling of the momentum equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    /// Port-Hamiltonian form: per-edge gravity disturbance frozen at the
    /// initial mean pressure.
    Phs,
    /// Plain lumped form: the gravity term follows the live mean pressure.
    LivePm,
}

/// Assembled network PHS. States are the co-state pairs (node pressures of
/// retained nodes, edge flows); fixed supply pressures enter the edge rows
/// as constant inputs.
#[derive(Debug, Clone)]
pub struct NetworkPhs<T: Scalar> {
    gas: GasProperties<T>,
    gas_state: FrozenGasState<T>,
    node_ids: Vec<String>,
    declared_kind: Vec<NodeKind<T>>,
    fixed_pressure: Vec<Option<T>>,
    retained: Vec<usize>,
    incidence: IncidenceMatrix,
    edge_ids: Vec<String>,
    edge_geometry: Vec<PipeGeometry<T>>,
    capacitance: Vec<T>,
    inertia: Vec<T>,
    frozen_pm: Vec<T>,
}

/// Assembles the network PHS from a validated topology.
///
/// `frozen_pm` gives the per-declared-pipe mean pressure the gravity
/// disturbances are frozen at; segment-expanded edges inherit their parent
/// pipe's value. `None` freezes everything at the gas-state reference
/// pressure; [`NetworkPhs::with_frozen_pm_from_state`] refines the values
/// once an initial steady state is known.
pub fn assemble_network_phs<T: Scalar>(
    topology: &NetworkTopology<T>,
    gas: GasProperties<T>,
    gas_state: FrozenGasState<T>,
    frozen_pm: Option<&[T]>,
) -> Result<NetworkPhs<T>> {
    if let Some(values) = frozen_pm {
        if values.len() != topology.edges().len() {
            return Err(Error::Scenario(format!(
                "frozen mean pressures: expected {} values, got {}",
                topology.edges().len(),
                values.len()
            )));
        }
        for &pm in values {
            if !(pm > T::zero()) {
                return Err(Error::NonPositivePressure {
                    location: "assemble_network_phs (frozen mean pressure)".into(),
                    value: as_f64(pm),
                });
            }
        }
    }
    // per-declared-pipe frozen value, inherited by expanded segments
    let declared_pm: Vec<T> = match frozen_pm {
        Some(values) => values.to_vec(),
        None => vec![gas_state.reference_pressure; topology.edges().len()],
    };
    let parent_pm: std::collections::BTreeMap<&str, T> = topology
        .edges()
        .iter()
        .zip(&declared_pm)
        .map(|(e, &pm)| (e.id.as_str(), pm))
        .collect();

    let expanded = topology.expand_segments()?;
    let incidence = incidence_matrix(&expanded)?;

    let node_ids: Vec<String> = expanded.nodes().iter().map(|n| n.id.clone()).collect();
    let declared_kind: Vec<NodeKind<T>> = expanded.nodes().iter().map(|n| n.kind).collect();

    let mut capacitance = Vec::with_capacity(node_ids.len());
    for node in expanded.nodes() {
        capacitance.push(node_capacitance(&expanded, &node.id, &gas_state)?);
    }

    let mut edge_ids = Vec::with_capacity(expanded.edges().len());
    let mut edge_geometry = Vec::with_capacity(expanded.edges().len());
    let mut inertia = Vec::with_capacity(expanded.edges().len());
    let mut frozen = Vec::with_capacity(expanded.edges().len());
    for (e, edge) in expanded.edges().iter().enumerate() {
        let (from, to) = incidence.endpoints(e);
        let rise = expanded.nodes()[to].elevation - expanded.nodes()[from].elevation;
        let geometry = PipeGeometry::new(
            edge.length,
            edge.diameter,
            edge.roughness,
            edge.efficiency,
            rise / edge.length,
        )?;
        inertia.push(gas_state.standard_density * edge.length / geometry.cross_section);
        edge_geometry.push(geometry);
        let parent = edge.id.split("__s").next().unwrap_or(&edge.id);
        frozen.push(
            parent_pm
                .get(parent)
                .copied()
                .unwrap_or(gas_state.reference_pressure),
        );
        edge_ids.push(edge.id.clone());
    }

    Ok(NetworkPhs {
        gas,
        gas_state,
        retained: (0..node_ids.len()).collect(),
        fixed_pressure: vec![None; node_ids.len()],
        node_ids,
        declared_kind,
        incidence,
        edge_ids,
        edge_geometry,
        capacitance,
        inertia,
        frozen_pm: frozen,
    })
}

impl<T: Scalar> NetworkPhs<T> {
    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_ids.len()
    }

    pub fn n_retained(&self) -> usize {
        self.retained.len()
    }

    pub fn state_dim(&self) -> usize {
        self.retained.len() + self.n_edges()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn edge_ids(&self) -> &[String] {
        &self.edge_ids
    }

    /// Node indices that carry a pressure state, in state order.
    pub fn retained_nodes(&self) -> &[usize] {
        &self.retained
    }

    /// Node indices whose pressure is externally fixed.
    pub fn fixed_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| self.fixed_pressure[i].is_some())
            .collect()
    }

    pub fn fixed_pressure(&self, node: usize) -> Option<T> {
        self.fixed_pressure[node]
    }

    pub fn incidence(&self) -> &IncidenceMatrix {
        &self.incidence
    }

    pub fn gas(&self) -> &GasProperties<T> {
        &self.gas
    }

    pub fn gas_state(&self) -> &FrozenGasState<T> {
        &self.gas_state
    }

    pub fn capacitances(&self) -> &[T] {
        &self.capacitance
    }

    pub fn inertias(&self) -> &[T] {
        &self.inertia
    }

    pub fn frozen_mean_pressures(&self) -> &[T] {
        &self.frozen_pm
    }

    pub fn edge_geometry(&self, edge: usize) -> &PipeGeometry<T> {
        &self.edge_geometry[edge]
    }

    /// Pipe parameters of one edge, for the per-pipe diagnostics.
    pub fn edge_params(&self, edge: usize) -> PipeParams<T> {
        PipeParams::new(self.edge_geometry[edge], self.gas, self.gas_state)
    }

    /// g·L·sinθ/c² of one edge.
    pub fn edge_gravity_factor(&self, edge: usize) -> T {
        let geometry = &self.edge_geometry[edge];
        gravity::<T>() * geometry.length * geometry.inclination_sin
            / self.gas_state.speed_of_sound_sq
    }

    /// Fixes the pressure of one node, removing its state row and its
    /// injection input; the pressure becomes a constant input of the edge
    /// dynamics.
    pub fn apply_supply_node(&self, node_id: &str, p_fixed: T) -> Result<Self> {
        let node = self
            .node_ids
            .iter()
            .position(|id| id == node_id)
            .ok_or_else(|| Error::UnknownNode(node_id.to_string()))?;
        if !(p_fixed > T::zero()) {
            return Err(Error::NonPositivePressure {
                location: format!("supply node `{node_id}`"),
                value: as_f64(p_fixed),
            });
        }
        if self.fixed_pressure[node].is_some() {
            return Err(Error::Topology(format!(
                "node `{node_id}` is already a fixed-pressure node"
            )));
        }
        if self.retained.len() == 1 {
            return Err(Error::Topology(
                "cannot fix every node: no pressure dynamics would remain".into(),
            ));
        }
        let mut reduced = self.clone();
        reduced.fixed_pressure[node] = Some(p_fixed);
        reduced.retained.retain(|&i| i != node);
        Ok(reduced)
    }

    /// Applies [`Self::apply_supply_node`] to every node declared as supply
    /// in the topology.
    pub fn reduce_supplies(&self) -> Result<Self> {
        let mut phs = self.clone();
        for i in 0..self.n_nodes() {
            if let NodeKind::Supply { pressure } = self.declared_kind[i] {
                phs = phs.apply_supply_node(&self.node_ids[i].clone(), pressure)?;
            }
        }
        Ok(phs)
    }

    /// Position of a node's pressure inside the state vector, if retained.
    pub fn pressure_index(&self, node: usize) -> Option<usize> {
        self.retained.iter().position(|&i| i == node)
    }

    /// Position of an edge's flow inside the state vector.
    pub fn flow_index(&self, edge: usize) -> usize {
        self.retained.len() + edge
    }

    /// All |V| node pressures, combining state entries and fixed supplies.
    pub fn full_pressures(&self, state: &[T]) -> Vec<T> {
        let mut pressures = vec![T::zero(); self.n_nodes()];
        for (slot, &node) in self.retained.iter().enumerate() {
            pressures[node] = state[slot];
        }
        for node in 0..self.n_nodes() {
            if let Some(p) = self.fixed_pressure[node] {
                pressures[node] = p;
            }
        }
        pressures
    }

    /// Builds a state vector from per-node pressures and per-edge flows.
    pub fn state_from_parts(&self, pressures: &[T], flows: &[T]) -> DVector<T> {
        let mut state = DVector::zeros(self.state_dim());
        for (slot, &node) in self.retained.iter().enumerate() {
            state[slot] = pressures[node];
        }
        for e in 0..self.n_edges() {
            state[self.retained.len() + e] = flows[e];
        }
        state
    }

    fn check_positive_pressures(&self, pressures: &[T]) -> Result<()> {
        for (node, &p) in pressures.iter().enumerate() {
            if !(p > T::zero()) {
                return Err(Error::NonPositivePressure {
                    location: format!("node `{}`", self.node_ids[node]),
                    value: as_f64(p),
                });
            }
        }
        Ok(())
    }

    /// Resistive coefficient of one edge at a flow and live mean pressure.
    pub fn edge_resistive_coefficient(&self, edge: usize, flow: T, pm: T) -> Result<T> {
        resistive_coefficient(&self.edge_params(edge), flow, pm)
    }

    /// State derivative: node rows (qn_i − b_iᵀqnm)/C_i, edge rows
    /// (bᵀp − R·qnm − d)/(ρn·L/A), with the live resistive mean pressure and
    /// the gravity mean pressure chosen by the variant.
    pub fn rhs(
        &self,
        state: &[T],
        injections: &[T],
        variant: ModelVariant,
    ) -> Result<DVector<T>> {
        let mut derivative = DVector::zeros(self.state_dim());
        self.rhs_into(state, injections, variant, derivative.as_mut_slice())?;
        Ok(derivative)
    }

    /// Allocation-free form of [`Self::rhs`].
    pub fn rhs_into(
        &self,
        state: &[T],
        injections: &[T],
        variant: ModelVariant,
        out: &mut [T],
    ) -> Result<()> {
        if injections.len() != self.retained.len() {
            return Err(Error::Scenario(format!(
                "expected {} injections, got {}",
                self.retained.len(),
                injections.len()
            )));
        }
        let pressures = self.full_pressures(state);
        self.check_positive_pressures(&pressures)?;

        let n_ret = self.retained.len();
        // net outflow b_iᵀ·qnm accumulated per node
        let mut node_outflow = vec![T::zero(); self.n_nodes()];
        for e in 0..self.n_edges() {
            let (from, to) = self.incidence.endpoints(e);
            let flow = state[n_ret + e];
            node_outflow[from] += flow;
            node_outflow[to] -= flow;

            let pm_live = mean_pressure(pressures[from], pressures[to])?;
            let resistive = self.edge_resistive_coefficient(e, flow, pm_live)?;
            let pm_gravity = match variant {
                ModelVariant::Phs => self.frozen_pm[e],
                ModelVariant::LivePm => pm_live,
            };
            let disturbance = self.edge_gravity_factor(e) * pm_gravity;
            out[n_ret + e] = (pressures[from] - pressures[to]
                - resistive * flow
                - disturbance)
                / self.inertia[e];
        }
        for (slot, &node) in self.retained.iter().enumerate() {
            out[slot] = (injections[slot] - node_outflow[node]) / self.capacitance[node];
        }
        Ok(())
    }

    /// Recovered injection b_iᵀ·qnm at every fixed-pressure node,
    /// positive when the node feeds the network.
    pub fn supply_flows(&self, state: &[T]) -> Vec<(usize, T)> {
        let n_ret = self.retained.len();
        let mut flows = Vec::new();
        for node in 0..self.n_nodes() {
            if self.fixed_pressure[node].is_none() {
                continue;
            }
            let mut net = T::zero();
            for e in 0..self.n_edges() {
                let (from, to) = self.incidence.endpoints(e);
                if from == node {
                    net += state[n_ret + e];
                } else if to == node {
                    net -= state[n_ret + e];
                }
            }
            flows.push((node, net));
        }
        flows
    }

    /// Storage function H = ½·Σ C_i·p_i² + ½·Σ (ρn·L/A)·qnm².
    pub fn hamiltonian(&self, state: &[T]) -> T {
        let half = lit::<T>(0.5);
        let n_ret = self.retained.len();
        let mut h = T::zero();
        for (slot, &node) in self.retained.iter().enumerate() {
            h += half * self.capacitance[node] * state[slot] * state[slot];
        }
        for e in 0..self.n_edges() {
            let q = state[n_ret + e];
            h += half * self.inertia[e] * q * q;
        }
        h
    }

    /// Dissipated power ∂HᵀR(x)∂H = Σ R_e·qnm_e² ≥ 0.
    pub fn dissipation_rate(&self, state: &[T]) -> Result<T> {
        let pressures = self.full_pressures(state);
        self.check_positive_pressures(&pressures)?;
        let n_ret = self.retained.len();
        let mut total = T::zero();
        for e in 0..self.n_edges() {
            let (from, to) = self.incidence.endpoints(e);
            let pm = mean_pressure(pressures[from], pressures[to])?;
            let flow = state[n_ret + e];
            total += self.edge_resistive_coefficient(e, flow, pm)? * flow * flow;
        }
        Ok(total)
    }

    /// Power entering through the gravity disturbance port, Σ z_e·d_e with
    /// z = −qnm (for the live variant d follows the live mean pressure).
    pub fn disturbance_power(&self, state: &[T], variant: ModelVariant) -> Result<T> {
        let pressures = self.full_pressures(state);
        let n_ret = self.retained.len();
        let mut total = T::zero();
        for e in 0..self.n_edges() {
            let pm = match variant {
                ModelVariant::Phs => self.frozen_pm[e],
                ModelVariant::LivePm => {
                    let (from, to) = self.incidence.endpoints(e);
                    mean_pressure(pressures[from], pressures[to])?
                }
            };
            total -= state[n_ret + e] * self.edge_gravity_factor(e) * pm;
        }
        Ok(total)
    }

    /// Refreezes all gravity disturbances at the mean pressures of a state,
    /// typically the initial steady state.
    pub fn with_frozen_pm_from_state(&self, state: &[T]) -> Result<Self> {
        let pressures = self.full_pressures(state);
        self.check_positive_pressures(&pressures)?;
        let mut phs = self.clone();
        for e in 0..self.n_edges() {
            let (from, to) = self.incidence.endpoints(e);
            phs.frozen_pm[e] = mean_pressure(pressures[from], pressures[to])?;
        }
        Ok(phs)
    }

    /// Dense storage matrix Q = diag(C⁻¹ on retained nodes, A/(ρn·L) on edges).
    pub fn q_matrix(&self) -> DMatrix<T> {
        let n = self.state_dim();
        let n_ret = self.retained.len();
        let mut q = DMatrix::zeros(n, n);
        for (slot, &node) in self.retained.iter().enumerate() {
            q[(slot, slot)] = T::one() / self.capacitance[node];
        }
        for e in 0..self.n_edges() {
            q[(n_ret + e, n_ret + e)] = T::one() / self.inertia[e];
        }
        q
    }

    /// Dense interconnection J = [[0, −B], [Bᵀ, 0]] restricted to retained
    /// node rows.
    pub fn j_matrix(&self) -> DMatrix<T> {
        let n = self.state_dim();
        let n_ret = self.retained.len();
        let mut j = DMatrix::zeros(n, n);
        for e in 0..self.n_edges() {
            for (slot, &node) in self.retained.iter().enumerate() {
                let b = self.incidence.coefficient(node, e);
                if b != 0 {
                    let value = lit::<T>(b as f64);
                    j[(slot, n_ret + e)] = -value;
                    j[(n_ret + e, slot)] = value;
                }
            }
        }
        j
    }

    /// Dense input map G = [I; 0] selecting the retained-node injections.
    pub fn g_matrix(&self) -> DMatrix<T> {
        let n = self.state_dim();
        let n_ret = self.retained.len();
        let mut g = DMatrix::zeros(n, n_ret);
        for slot in 0..n_ret {
            g[(slot, slot)] = T::one();
        }
        g
    }

    /// Dense disturbance map E = [0; −I].
    pub fn e_matrix(&self) -> DMatrix<T> {
        let n = self.state_dim();
        let n_ret = self.retained.len();
        let mut e_mat = DMatrix::zeros(n, self.n_edges());
        for e in 0..self.n_edges() {
            e_mat[(n_ret + e, e)] = -T::one();
        }
        e_mat
    }

    /// Dense resistive matrix at a state: diag(0, R_e(qnm, pM)).
    pub fn r_matrix(&self, state: &[T]) -> Result<DMatrix<T>> {
        let pressures = self.full_pressures(state);
        self.check_positive_pressures(&pressures)?;
        let n = self.state_dim();
        let n_ret = self.retained.len();
        let mut r = DMatrix::zeros(n, n);
        for e in 0..self.n_edges() {
            let (from, to) = self.incidence.endpoints(e);
            let pm = mean_pressure(pressures[from], pressures[to])?;
            r[(n_ret + e, n_ret + e)] =
                self.edge_resistive_coefficient(e, state[n_ret + e], pm)?;
        }
        Ok(r)
    }
}
