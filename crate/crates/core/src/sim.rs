//! Scenario execution: steady-state initialization, time integration of the
//! network model with energy/mass bookkeeping, the single-pipe simulation
//! used for audits, and the bundled three-node benchmark.

use nalgebra::{DMatrix, DVector};

use crate::analysis::{self, EnergyAccounting, EnergyReport, StabilityReport};
use crate::error::{Error, Result};
use crate::friction::PipeGeometry;
use crate::gas::{freeze_gas_state, FrozenGasState, GasProperties};
use crate::network::{
    assemble_network_phs, ModelVariant, NetworkPhs, NetworkTopology, Node, NodeKind, PipeEdge,
};
use crate::ode::{self, Controls, Method, OdeSystem, Solution, SolverStats};
use crate::pipeline::{mean_pressure, PipelinePhs, PipelineState};
use crate::scalar::{as_f64, lit, Scalar};

/// Piecewise-linear profile q(t); constant before the first and after the
/// last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear<T: Scalar> {
    points: Vec<(T, T)>,
}

impl<T: Scalar> PiecewiseLinear<T> {
    pub fn new(points: Vec<(T, T)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Profile("profile needs at least one point".into()));
        }
        for pair in points.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return Err(Error::Profile(format!(
                    "profile times must strictly increase ({} then {})",
                    as_f64(pair[0].0),
                    as_f64(pair[1].0)
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn constant(value: T) -> Self {
        Self {
            points: vec![(T::zero(), value)],
        }
    }

    pub fn points(&self) -> &[(T, T)] {
        &self.points
    }

    pub fn value(&self, t: T) -> T {
        let first = self.points[0];
        if t <= first.0 {
            return first.1;
        }
        let last = self.points[self.points.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        for pair in self.points.windows(2) {
            let (t0, v0) = pair[0];
            let (t1, v1) = pair[1];
            if t <= t1 {
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        last.1
    }

    /// Exact integral over [a, b] of the clamped piecewise-linear function.
    pub fn integral(&self, a: T, b: T) -> T {
        if b <= a {
            return T::zero();
        }
        let mut cuts: Vec<T> = vec![a];
        for &(t, _) in &self.points {
            if t > a && t < b {
                cuts.push(t);
            }
        }
        cuts.push(b);
        let half = lit::<T>(0.5);
        let mut total = T::zero();
        for pair in cuts.windows(2) {
            // the function is linear between consecutive cuts
            total += (pair[1] - pair[0]) * half * (self.value(pair[0]) + self.value(pair[1]));
        }
        total
    }

    /// Knots strictly inside (t0, t1).
    pub fn knots_in(&self, t0: T, t1: T) -> Vec<T> {
        self.points
            .iter()
            .map(|&(t, _)| t)
            .filter(|&t| t > t0 && t < t1)
            .collect()
    }
}

/// Solver settings of one scenario.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T: Scalar> {
    pub method: Method,
    pub rtol: T,
    pub atol: T,
    pub max_step: Option<T>,
    /// Output sampling interval [s].
    pub sample_dt: T,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            rtol: lit(1e-6),
            atol: lit(1e-8),
            max_step: None,
            sample_dt: lit(60.0),
        }
    }
}

/// A complete simulation request. Loads are signed injections qn(t)
/// (negative values draw gas), following the network port convention.
#[derive(Debug, Clone)]
pub struct Scenario<T: Scalar> {
    pub topology: NetworkTopology<T>,
    pub gas: GasProperties<T>,
    /// Pressure the compressibility is frozen at; defaults to the first
    /// supply node's pressure.
    pub z_reference_pressure: Option<T>,
    /// Injection profiles per demand node id.
    pub loads: Vec<(String, PiecewiseLinear<T>)>,
    /// Optional explicit initial node pressures (else Newton steady state).
    pub initial_pressures: Option<Vec<(String, T)>>,
    /// Simulated span [0, t_end] seconds.
    pub t_end: T,
    pub solver: SolverOptions<T>,
    pub variant: ModelVariant,
}

/// Reduced network plus its load profiles; implements the integrator- and
/// audit-facing traits.
#[derive(Debug, Clone)]
pub struct NetworkModel<T: Scalar> {
    phs: NetworkPhs<T>,
    variant: ModelVariant,
    /// Injection profile per retained state slot.
    loads: Vec<Option<PiecewiseLinear<T>>>,
}

impl<T: Scalar> NetworkModel<T> {
    pub fn new(
        phs: NetworkPhs<T>,
        variant: ModelVariant,
        loads: &[(String, PiecewiseLinear<T>)],
    ) -> Result<Self> {
        let mut per_slot: Vec<Option<PiecewiseLinear<T>>> = vec![None; phs.n_retained()];
        for (id, profile) in loads {
            let node = phs
                .node_ids()
                .iter()
                .position(|n| n == id)
                .ok_or_else(|| Error::UnknownNode(id.clone()))?;
            let Some(slot) = phs.pressure_index(node) else {
                return Err(Error::Scenario(format!(
                    "node `{id}` has a fixed pressure and cannot take a load profile"
                )));
            };
            if per_slot[slot].is_some() {
                return Err(Error::Scenario(format!("duplicate load profile for `{id}`")));
            }
            per_slot[slot] = Some(profile.clone());
        }
        Ok(Self {
            phs,
            variant,
            loads: per_slot,
        })
    }

    pub fn phs(&self) -> &NetworkPhs<T> {
        &self.phs
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    /// Same model with the other gravity-term handling.
    pub fn with_variant(&self, variant: ModelVariant) -> Self {
        Self {
            phs: self.phs.clone(),
            variant,
            loads: self.loads.clone(),
        }
    }

    pub fn injections_at(&self, t: T) -> Vec<T> {
        self.loads
            .iter()
            .map(|profile| profile.as_ref().map_or(T::zero(), |p| p.value(t)))
            .collect()
    }

    /// Exact integral of every injection profile over [a, b].
    pub fn injected_volume(&self, a: T, b: T) -> T {
        self.loads
            .iter()
            .map(|profile| profile.as_ref().map_or(T::zero(), |p| p.integral(a, b)))
            .fold(T::zero(), |acc, v| acc + v)
    }

    fn port_power(&self, t: T, y: &[T]) -> Result<T> {
        let injections = self.injections_at(t);
        let mut power = T::zero();
        for slot in 0..self.phs.n_retained() {
            power += y[slot] * injections[slot];
        }
        // fixed-pressure nodes deliver p_fixed times their recovered flow
        for (node, flow) in self.phs.supply_flows(y) {
            let p = self.phs.fixed_pressure(node).expect("supply node");
            power += p * flow;
        }
        Ok(power)
    }
}

impl<T: Scalar> OdeSystem<T> for NetworkModel<T> {
    fn dim(&self) -> usize {
        self.phs.state_dim()
    }

    fn rhs(&self, t: T, y: &[T], dydt: &mut [T]) -> Result<()> {
        let injections = self.injections_at(t);
        self.phs.rhs_into(y, &injections, self.variant, dydt)
    }

    fn error_scale(&self, component: usize) -> T {
        if component < self.phs.n_retained() {
            lit(1e5)
        } else {
            T::one()
        }
    }

    fn quad_dim(&self) -> usize {
        3 + self.phs.fixed_nodes().len()
    }

    fn quadrature_rates(&self, t: T, y: &[T], out: &mut [T]) -> Result<()> {
        out[0] = self.phs.dissipation_rate(y)?;
        out[1] = self.port_power(t, y)?;
        out[2] = self.phs.disturbance_power(y, self.variant)?;
        for (i, (_, flow)) in self.phs.supply_flows(y).into_iter().enumerate() {
            out[3 + i] = flow;
        }
        Ok(())
    }

    fn check_state(&self, t: T, y: &[T]) -> Result<()> {
        let pressures = self.phs.full_pressures(y);
        for (node, &p) in pressures.iter().enumerate() {
            if !(p > T::zero()) {
                return Err(Error::NonPositivePressure {
                    location: format!(
                        "node `{}` at t = {} s",
                        self.phs.node_ids()[node],
                        as_f64(t)
                    ),
                    value: as_f64(p),
                });
            }
        }
        Ok(())
    }

    fn breakpoints(&self, t0: T, t_end: T) -> Vec<T> {
        let mut knots = Vec::new();
        for profile in self.loads.iter().flatten() {
            knots.extend(profile.knots_in(t0, t_end));
        }
        knots
    }
}

impl<T: Scalar> EnergyAccounting<T> for NetworkModel<T> {
    fn hamiltonian_of(&self, y: &[T]) -> T {
        self.phs.hamiltonian(y)
    }

    fn dissipation_rate_of(&self, y: &[T]) -> Result<T> {
        self.phs.dissipation_rate(y)
    }

    fn port_power_of(&self, t: T, y: &[T]) -> Result<T> {
        self.port_power(t, y)
    }

    fn disturbance_power_of(&self, y: &[T]) -> Result<T> {
        self.phs.disturbance_power(y, self.variant)
    }
}

/// Single pipeline driven by boundary flow profiles, for audits and tests:
/// u = (qnl(t), −qnr(t)) with the state (pl, pr, qnm).
#[derive(Debug, Clone)]
pub struct PipelineSimulation<T: Scalar> {
    phs: PipelinePhs<T>,
    inflow_left: PiecewiseLinear<T>,
    outflow_right: PiecewiseLinear<T>,
}

impl<T: Scalar> PipelineSimulation<T> {
    pub fn new(
        phs: PipelinePhs<T>,
        inflow_left: PiecewiseLinear<T>,
        outflow_right: PiecewiseLinear<T>,
    ) -> Self {
        Self {
            phs,
            inflow_left,
            outflow_right,
        }
    }

    pub fn phs(&self) -> &PipelinePhs<T> {
        &self.phs
    }

    pub fn state_of(y: &[T]) -> PipelineState<T> {
        PipelineState::new(y[0], y[1], y[2])
    }

    fn input_at(&self, t: T) -> [T; 2] {
        [self.inflow_left.value(t), -self.outflow_right.value(t)]
    }
}

impl<T: Scalar> OdeSystem<T> for PipelineSimulation<T> {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, t: T, y: &[T], dydt: &mut [T]) -> Result<()> {
        let derivative = self.phs.rhs(&Self::state_of(y), self.input_at(t))?;
        dydt[0] = derivative[0];
        dydt[1] = derivative[1];
        dydt[2] = derivative[2];
        Ok(())
    }

    fn error_scale(&self, component: usize) -> T {
        if component < 2 {
            lit(1e5)
        } else {
            T::one()
        }
    }

    fn quad_dim(&self) -> usize {
        3
    }

    fn quadrature_rates(&self, t: T, y: &[T], out: &mut [T]) -> Result<()> {
        out[0] = self.dissipation_rate_of(y)?;
        out[1] = self.port_power_of(t, y)?;
        out[2] = self.disturbance_power_of(y)?;
        Ok(())
    }

    fn check_state(&self, t: T, y: &[T]) -> Result<()> {
        for (side, &p) in ["left", "right"].iter().zip(&y[..2]) {
            if !(p > T::zero()) {
                return Err(Error::NonPositivePressure {
                    location: format!("pipeline {side} side at t = {} s", as_f64(t)),
                    value: as_f64(p),
                });
            }
        }
        Ok(())
    }

    fn breakpoints(&self, t0: T, t_end: T) -> Vec<T> {
        let mut knots = self.inflow_left.knots_in(t0, t_end);
        knots.extend(self.outflow_right.knots_in(t0, t_end));
        knots
    }
}

impl<T: Scalar> EnergyAccounting<T> for PipelineSimulation<T> {
    fn hamiltonian_of(&self, y: &[T]) -> T {
        self.phs.hamiltonian(&Self::state_of(y))
    }

    fn dissipation_rate_of(&self, y: &[T]) -> Result<T> {
        let state = Self::state_of(y);
        let pm = mean_pressure(state.p_left, state.p_right)?;
        let r = self.phs.resistive_coefficient(state.flow_middle, pm)?;
        Ok(r * state.flow_middle * state.flow_middle)
    }

    fn port_power_of(&self, t: T, y: &[T]) -> Result<T> {
        let ports = self.phs.ports(&Self::state_of(y));
        let input = self.input_at(t);
        Ok(ports.y[0] * input[0] + ports.y[1] * input[1])
    }

    fn disturbance_power_of(&self, y: &[T]) -> Result<T> {
        let ports = self.phs.ports(&Self::state_of(y));
        Ok(ports.z * self.phs.disturbance())
    }
}

/// Newton result for an equilibrium of the network dynamics.
#[derive(Debug, Clone)]
pub struct SteadyState<T: Scalar> {
    pub state: Vec<T>,
    /// Scaled residual ∞-norm (node rows in bar/s).
    pub residual_norm: T,
    pub iterations: usize,
}

/// Solves rhs(x) = 0 under constant injections by a damped Newton iteration
/// with a forward-difference Jacobian. Node-row residuals are scaled to
/// bar/s; convergence demands a scaled ∞-norm below `tol`.
pub fn steady_state_with<T: Scalar>(
    phs: &NetworkPhs<T>,
    injections: &[T],
    variant: ModelVariant,
    tol: T,
    max_iterations: usize,
) -> Result<SteadyState<T>> {
    let fixed = phs.fixed_nodes();
    if fixed.is_empty() {
        return Err(Error::Scenario(
            "steady state needs at least one fixed-pressure node as anchor".into(),
        ));
    }
    let n = phs.state_dim();
    let n_ret = phs.n_retained();
    let pressure_scale = lit::<T>(1e5);

    let scale = |i: usize| -> T {
        if i < n_ret {
            pressure_scale
        } else {
            T::one()
        }
    };
    let residual = |x: &[T]| -> Result<DVector<T>> {
        let raw = phs.rhs(x, injections, variant)?;
        Ok(DVector::from_iterator(
            n,
            raw.iter().enumerate().map(|(i, &v)| v / scale(i)),
        ))
    };

    // anchor guess: mean of the fixed pressures, and edge flows from the
    // minimum-norm solution of the node mass balance B_ret·q = injections,
    // so the Newton iteration starts mass-balanced
    let mut anchor = T::zero();
    for &node in &fixed {
        anchor += phs.fixed_pressure(node).expect("fixed node");
    }
    anchor /= lit(fixed.len() as f64);
    let mut x = vec![T::zero(); n];
    for slot in 0..n_ret {
        x[slot] = anchor;
    }
    let n_edges = phs.n_edges();
    let mut b_ret = DMatrix::<T>::zeros(n_ret, n_edges);
    for e in 0..n_edges {
        for (slot, &node) in phs.retained_nodes().iter().enumerate() {
            b_ret[(slot, e)] = lit(phs.incidence().coefficient(node, e) as f64);
        }
    }
    let gram = &b_ret * b_ret.transpose();
    let injections_vec = DVector::from_column_slice(injections);
    if let Some(multipliers) = gram.lu().solve(&injections_vec) {
        let flows = b_ret.transpose() * multipliers;
        for e in 0..n_edges {
            x[n_ret + e] = flows[e];
        }
    }

    let mut f = residual(&x)?;
    let mut norm = f.amax();
    for iteration in 0..max_iterations {
        if norm < tol {
            return Ok(SteadyState {
                state: x,
                residual_norm: norm,
                iterations: iteration,
            });
        }
        // forward-difference Jacobian of the scaled residual
        let mut jac = DMatrix::<T>::zeros(n, n);
        for j in 0..n {
            let delta = lit::<T>(1.49e-8) * (x[j].abs() + scale(j));
            let saved = x[j];
            x[j] = saved + delta;
            let f_pert = residual(&x)?;
            x[j] = saved;
            for i in 0..n {
                jac[(i, j)] = (f_pert[i] - f[i]) / delta;
            }
        }
        let minus_f = -&f;
        let Some(step) = jac.lu().solve(&minus_f) else {
            return Err(Error::SingularJacobian {
                what: "network steady state",
            });
        };
        // damped update: keep pressures positive, demand residual decrease
        let mut lambda = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let mut candidate = x.clone();
            for i in 0..n {
                candidate[i] += lambda * step[i];
            }
            let positive = (0..n_ret).all(|slot| candidate[slot] > T::zero());
            if positive {
                if let Ok(f_new) = residual(&candidate) {
                    let norm_new = f_new.amax();
                    if norm_new < norm || norm_new < tol {
                        x = candidate;
                        f = f_new;
                        norm = norm_new;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= lit(0.5);
        }
        if !accepted {
            return Err(Error::NonConvergence {
                what: "network steady state (line search stalled)",
                iterations: iteration,
                residual: as_f64(norm),
            });
        }
    }
    if norm < tol {
        return Ok(SteadyState {
            state: x,
            residual_norm: norm,
            iterations: max_iterations,
        });
    }
    Err(Error::NonConvergence {
        what: "network steady state",
        iterations: max_iterations,
        residual: as_f64(norm),
    })
}

/// [`steady_state_with`] at the default tolerance 1e-10 and 60 iterations.
pub fn steady_state<T: Scalar>(
    phs: &NetworkPhs<T>,
    injections: &[T],
    variant: ModelVariant,
) -> Result<SteadyState<T>> {
    steady_state_with(phs, injections, variant, lit(1e-10), 60)
}

/// Where the compressibility reference pressure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZReferenceSource {
    Explicit,
    DefaultSupplyPressure,
}

/// Everything derived from a scenario before time integration starts.
#[derive(Debug, Clone)]
pub struct PreparedScenario<T: Scalar> {
    pub model: NetworkModel<T>,
    pub initial_state: Vec<T>,
    pub gas_state: FrozenGasState<T>,
    pub z_reference_source: ZReferenceSource,
    /// Newton diagnostics when the initial state came from a steady solve.
    pub steady: Option<SteadyState<T>>,
}

/// Freezes the gas state, assembles and reduces the network, initializes the
/// state (explicit pressures or Newton steady state of the live-pM model)
/// and freezes the per-edge gravity mean pressures from that initial state.
pub fn prepare<T: Scalar>(scenario: &Scenario<T>) -> Result<PreparedScenario<T>> {
    let (z_ref, source) = match scenario.z_reference_pressure {
        Some(p) => (p, ZReferenceSource::Explicit),
        None => {
            let supply = scenario.topology.nodes().iter().find_map(|n| match n.kind {
                NodeKind::Supply { pressure } => Some(pressure),
                NodeKind::Demand => None,
            });
            match supply {
                Some(p) => (p, ZReferenceSource::DefaultSupplyPressure),
                None => {
                    return Err(Error::Scenario(
                        "no supply node: set z_reference_pressure explicitly".into(),
                    ))
                }
            }
        }
    };
    let gas_state = freeze_gas_state(&scenario.gas, z_ref)?;
    let phs = assemble_network_phs(&scenario.topology, scenario.gas, gas_state, None)?
        .reduce_supplies()?;

    let (initial, steady) = match &scenario.initial_pressures {
        Some(entries) => {
            let mut pressures = vec![z_ref; phs.n_nodes()];
            for (id, p) in entries {
                let node = phs
                    .node_ids()
                    .iter()
                    .position(|n| n == id)
                    .ok_or_else(|| Error::UnknownNode(id.clone()))?;
                pressures[node] = *p;
            }
            let flows = vec![T::zero(); phs.n_edges()];
            (
                phs.state_from_parts(&pressures, &flows).as_slice().to_vec(),
                None,
            )
        }
        None => {
            let model_for_loads = NetworkModel::new(phs.clone(), ModelVariant::LivePm, &scenario.loads)?;
            let injections = model_for_loads.injections_at(T::zero());
            let solved = steady_state(&phs, &injections, ModelVariant::LivePm)?;
            (solved.state.clone(), Some(solved))
        }
    };

    let phs = phs.with_frozen_pm_from_state(&initial)?;
    let model = NetworkModel::new(phs, scenario.variant, &scenario.loads)?;
    Ok(PreparedScenario {
        model,
        initial_state: initial,
        gas_state,
        z_reference_source: source,
        steady,
    })
}

/// Uniform output grid 0, dt, 2dt, …, t_end.
pub fn sample_grid<T: Scalar>(t_end: T, dt: T) -> Vec<T> {
    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let t = lit::<T>(k as f64) * dt;
        if t >= t_end - dt * lit(1e-9) {
            grid.push(t_end);
            return grid;
        }
        grid.push(t);
        k += 1;
    }
}

/// Time-stamped result of one network integration.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Scalar> {
    pub times: Vec<T>,
    pub node_ids: Vec<String>,
    pub edge_ids: Vec<String>,
    pub supply_node_ids: Vec<String>,
    /// Node pressures [Pa], all nodes including supplies, per sample.
    pub pressures: Vec<Vec<T>>,
    /// Edge flows [m³/s] per sample.
    pub flows: Vec<Vec<T>>,
    /// Recovered supply injections [m³/s] per sample.
    pub supply_flows: Vec<Vec<T>>,
    /// Injections applied at the retained nodes per sample.
    pub injections: Vec<Vec<T>>,
    /// Raw integrator output (states and accumulated quadratures).
    pub solution: Solution<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn stats(&self) -> &SolverStats {
        &self.solution.stats
    }
}

/// Integrates a prepared model from `initial` over [0, t_end].
pub fn integrate<T: Scalar>(
    model: &NetworkModel<T>,
    initial: &[T],
    t_end: T,
    options: &SolverOptions<T>,
) -> Result<Trajectory<T>> {
    if !(options.sample_dt > T::zero()) {
        return Err(Error::Scenario("sample_dt must be positive".into()));
    }
    let grid = sample_grid(t_end, options.sample_dt);
    let controls = Controls {
        rtol: options.rtol,
        atol: options.atol,
        max_step: options.max_step,
    };
    let solution = ode::integrate(model, T::zero(), initial, &grid, options.method, &controls)?;

    let phs = model.phs();
    let mut pressures = Vec::with_capacity(solution.times.len());
    let mut flows = Vec::with_capacity(solution.times.len());
    let mut supply_flows = Vec::with_capacity(solution.times.len());
    let mut injections = Vec::with_capacity(solution.times.len());
    for (t, y) in solution.times.iter().zip(&solution.states) {
        pressures.push(phs.full_pressures(y));
        flows.push(y[phs.n_retained()..].to_vec());
        supply_flows.push(phs.supply_flows(y).into_iter().map(|(_, q)| q).collect());
        injections.push(model.injections_at(*t));
    }
    Ok(Trajectory {
        times: solution.times.clone(),
        node_ids: phs.node_ids().to_vec(),
        edge_ids: phs.edge_ids().to_vec(),
        supply_node_ids: phs
            .fixed_nodes()
            .into_iter()
            .map(|i| phs.node_ids()[i].clone())
            .collect(),
        pressures,
        flows,
        supply_flows,
        injections,
        solution,
    })
}

/// A prepared scenario together with its computed trajectory.
#[derive(Debug, Clone)]
pub struct SimulationRun<T: Scalar> {
    pub prepared: PreparedScenario<T>,
    pub trajectory: Trajectory<T>,
}

/// Prepares and integrates a scenario.
pub fn run_scenario<T: Scalar>(scenario: &Scenario<T>) -> Result<SimulationRun<T>> {
    let prepared = prepare(scenario)?;
    let trajectory = integrate(
        &prepared.model,
        &prepared.initial_state,
        scenario.t_end,
        &scenario.solver,
    )?;
    Ok(SimulationRun {
        prepared,
        trajectory,
    })
}

/// A sample where the gas velocity left the slow-flow envelope the model
/// was derived under.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityViolation<T: Scalar> {
    pub time: T,
    pub edge_id: String,
    /// Gas velocity [m/s], signed.
    pub velocity: T,
}

/// Flags samples with |v| = |ρn·qn/(ρ·A)| above `limit` (the model assumes
/// slow flow; 15 m/s is the customary envelope).
pub fn velocity_violations<T: Scalar>(
    model: &NetworkModel<T>,
    trajectory: &Trajectory<T>,
    limit: T,
) -> Result<Vec<VelocityViolation<T>>> {
    let phs = model.phs();
    let gs = phs.gas_state();
    let mut violations = Vec::new();
    for (k, t) in trajectory.times.iter().enumerate() {
        let pressures = &trajectory.pressures[k];
        for e in 0..phs.n_edges() {
            let (from, to) = phs.incidence().endpoints(e);
            let pm = mean_pressure(pressures[from], pressures[to])?;
            let rho = gs.density_at(pm)?;
            let geometry = phs.edge_geometry(e);
            let velocity =
                gs.standard_density * trajectory.flows[k][e] / (rho * geometry.cross_section);
            if velocity.abs() > limit {
                violations.push(VelocityViolation {
                    time: *t,
                    edge_id: trajectory.edge_ids[e].clone(),
                    velocity,
                });
            }
        }
    }
    Ok(violations)
}

/// Mass audit of one run: stored linepack change versus integrated net
/// injection.
#[derive(Debug, Clone, Copy)]
pub struct MassBalance<T: Scalar> {
    /// Δ Σ C_i·p_i over the run [m³ at standard conditions].
    pub linepack_change: T,
    /// Exact integral of the demand-node injections [m³].
    pub injected_volume: T,
    /// Integrated recovered supply flows [m³].
    pub supply_volume: T,
    /// linepack_change − injected − supply.
    pub residual: T,
    /// |residual| relative to the gross moved volume.
    pub relative_residual: T,
}

/// Checks conservation of stored gas over a trajectory. The supply-side
/// volume comes from the integrator's quadrature components.
pub fn mass_balance<T: Scalar>(
    model: &NetworkModel<T>,
    trajectory: &Trajectory<T>,
) -> Result<MassBalance<T>> {
    let phs = model.phs();
    let first = trajectory
        .solution
        .states
        .first()
        .ok_or_else(|| Error::Scenario("empty trajectory".into()))?;
    let last = trajectory.solution.states.last().unwrap();
    let mut linepack_change = T::zero();
    for (slot, &node) in phs.retained_nodes().iter().enumerate() {
        linepack_change += phs.capacitances()[node] * (last[slot] - first[slot]);
    }
    let t0 = trajectory.times[0];
    let t1 = *trajectory.times.last().unwrap();
    let injected_volume = model.injected_volume(t0, t1);
    let quads = trajectory
        .solution
        .quadratures
        .last()
        .ok_or_else(|| Error::Scenario("trajectory lacks quadratures".into()))?;
    let n_supply = phs.fixed_nodes().len();
    let mut supply_volume = T::zero();
    let mut gross = T::zero();
    for i in 0..n_supply {
        supply_volume += quads[3 + i];
        gross += quads[3 + i].abs();
    }
    for profile in model.loads.iter().flatten() {
        gross += profile.integral(t0, t1).abs();
    }
    let residual = linepack_change - injected_volume - supply_volume;
    let scale = gross.max(linepack_change.abs()).max(T::one());
    Ok(MassBalance {
        linepack_change,
        injected_volume,
        supply_volume,
        residual,
        relative_residual: residual.abs() / scale,
    })
}

/// Artifact-default parameters of the bundled three-node benchmark: one
/// supply node held at 50 bar feeding two loaded nodes over three equal
/// 80 km pipes (lengths and load shapes are artifact defaults, not measured
/// data; override them through the scenario file when needed).
pub fn three_node_scenario<T: Scalar>(elevation_supply: T, variant: ModelVariant) -> Scenario<T> {
    let gas = GasProperties::natural_gas();
    let nodes = vec![
        Node {
            id: "n1".into(),
            elevation: elevation_supply,
            kind: NodeKind::Supply {
                pressure: lit(50.0e5),
            },
        },
        Node {
            id: "n2".into(),
            elevation: T::zero(),
            kind: NodeKind::Demand,
        },
        Node {
            id: "n3".into(),
            elevation: T::zero(),
            kind: NodeKind::Demand,
        },
    ];
    let pipe = |id: &str, from: &str, to: &str| PipeEdge {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        length: lit(80.0e3),
        diameter: lit(0.6),
        roughness: lit(0.012e-3),
        efficiency: lit(0.98),
        segments: 1,
    };
    let topology = NetworkTopology::new(
        nodes,
        vec![pipe("p12", "n1", "n2"), pipe("p13", "n1", "n3"), pipe("p23", "n2", "n3")],
    )
    .expect("benchmark topology is valid");

    let profile = |points: &[(f64, f64)]| {
        PiecewiseLinear::new(points.iter().map(|&(t, v)| (lit(t), lit(v))).collect())
            .expect("benchmark profile is valid")
    };
    // signed injections: the two consumers draw gas
    let loads = vec![
        (
            "n2".to_string(),
            profile(&[
                (0.0, -20.0),
                (3600.0, -20.0),
                (5400.0, -50.0),
                (9000.0, -50.0),
                (10800.0, -35.0),
                (14400.0, -35.0),
                (16200.0, -10.0),
                (21600.0, -10.0),
            ]),
        ),
        (
            "n3".to_string(),
            profile(&[
                (0.0, -15.0),
                (2700.0, -15.0),
                (4500.0, -40.0),
                (9000.0, -40.0),
                (12600.0, -25.0),
                (18000.0, -45.0),
                (21600.0, -45.0),
            ]),
        ),
    ];
    Scenario {
        topology,
        gas,
        z_reference_pressure: None,
        loads,
        initial_pressures: None,
        t_end: lit(21600.0),
        solver: SolverOptions::default(),
        variant,
    }
}

/// One elevation case of the benchmark: the same network simulated with the
/// frozen-gravity PHS form and with the live-mean-pressure lumped form,
/// plus agreement metrics and per-pipe diagnostics.
#[derive(Debug, Clone)]
pub struct BenchmarkOutcome<T: Scalar> {
    pub elevation: T,
    pub phs_run: SimulationRun<T>,
    pub live_run: SimulationRun<T>,
    pub energy_phs: EnergyReport<T>,
    pub energy_live: EnergyReport<T>,
    /// Per-edge diagnostics at the initial steady state.
    pub stability: Vec<StabilityReport<T>>,
    /// max |Δp| over nodes and samples, as a fraction of the 50 bar supply.
    pub max_pressure_deviation: T,
    /// max |Δqnm| over edges and samples, as a fraction of the peak |qnm|.
    pub max_flow_deviation: T,
}

/// Runs the three-node benchmark at one supply elevation.
pub fn benchmark_three_node<T: Scalar>(elevation_supply: T) -> Result<BenchmarkOutcome<T>> {
    let phs_run = run_scenario(&three_node_scenario(elevation_supply, ModelVariant::Phs))?;
    let live_run = run_scenario(&three_node_scenario(elevation_supply, ModelVariant::LivePm))?;

    let nominal_pressure = lit::<T>(50.0e5);
    let mut dp = T::zero();
    let mut dq = T::zero();
    let mut q_peak = T::zero();
    for k in 0..phs_run.trajectory.times.len() {
        for (a, b) in phs_run.trajectory.pressures[k]
            .iter()
            .zip(&live_run.trajectory.pressures[k])
        {
            dp = dp.max((*a - *b).abs());
        }
        for (a, b) in phs_run.trajectory.flows[k]
            .iter()
            .zip(&live_run.trajectory.flows[k])
        {
            dq = dq.max((*a - *b).abs());
            q_peak = q_peak.max(a.abs());
        }
    }

    let energy_phs = analysis::energy_balance(&phs_run.prepared.model, &phs_run.trajectory.solution)?;
    let energy_live =
        analysis::energy_balance(&live_run.prepared.model, &live_run.trajectory.solution)?;

    let phs = phs_run.prepared.model.phs();
    let initial_pressures = phs.full_pressures(&phs_run.prepared.initial_state);
    let mut stability = Vec::new();
    for e in 0..phs.n_edges() {
        let (from, to) = phs.incidence().endpoints(e);
        let state = PipelineState::new(
            initial_pressures[from],
            initial_pressures[to],
            phs_run.prepared.initial_state[phs.n_retained() + e],
        );
        stability.push(analysis::stability_report(&phs.edge_params(e), &state)?);
    }

    Ok(BenchmarkOutcome {
        elevation: elevation_supply,
        max_pressure_deviation: dp / nominal_pressure,
        max_flow_deviation: if q_peak > T::zero() { dq / q_peak } else { dq },
        energy_phs,
        energy_live,
        stability,
        phs_run,
        live_run,
    })
}

/// The elevation cases swept by the benchmark command.
pub fn benchmark_elevations<T: Scalar>() -> [T; 5] {
    [
        lit(-1000.0),
        lit(-500.0),
        lit(0.0),
        lit(500.0),
        lit(1000.0),
    ]
}

/// Builds a Table-1 class pipe with frozen gas state at 50 bar; shared by
/// tests and the single-pipe examples.
pub fn table1_pipe_params<T: Scalar>(
    length: T,
    inclination_sin: T,
) -> Result<crate::pipeline::PipeParams<T>> {
    let gas = GasProperties::natural_gas();
    let gas_state = freeze_gas_state(&gas, lit(50.0e5))?;
    let geometry = PipeGeometry::new(length, lit(0.6), lit(0.012e-3), lit(0.98), inclination_sin)?;
    Ok(crate::pipeline::PipeParams::new(geometry, gas, gas_state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::build_pipeline_phs;
    use approx::assert_relative_eq;

    #[test]
    fn profile_value_and_integral() {
        let p = PiecewiseLinear::new(vec![(0.0, 0.0), (10.0, 10.0), (20.0, 10.0)]).unwrap();
        assert_eq!(p.value(-5.0), 0.0);
        assert_eq!(p.value(5.0), 5.0);
        assert_eq!(p.value(15.0), 10.0);
        assert_eq!(p.value(50.0), 10.0);
        // ∫₀²⁰ = 50 + 100
        assert_relative_eq!(p.integral(0.0, 20.0), 150.0);
        // clamped extension on both sides
        assert_relative_eq!(p.integral(-10.0, 0.0), 0.0);
        assert_relative_eq!(p.integral(20.0, 30.0), 100.0);
        assert_relative_eq!(p.integral(5.0, 15.0), 37.5 + 50.0);
        assert!(PiecewiseLinear::new(vec![(1.0, 0.0), (1.0, 2.0)]).is_err());
        assert!(PiecewiseLinear::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn steady_state_flat_for_zero_loads() {
        let scenario = three_node_scenario(0.0f64, ModelVariant::Phs);
        let gs = freeze_gas_state(&scenario.gas, 50.0e5).unwrap();
        let phs = assemble_network_phs(&scenario.topology, scenario.gas, gs, None)
            .unwrap()
            .reduce_supplies()
            .unwrap();
        let steady = steady_state(&phs, &[0.0, 0.0], ModelVariant::LivePm).unwrap();
        let pressures = phs.full_pressures(&steady.state);
        for p in pressures {
            assert_relative_eq!(p, 50.0e5, max_relative = 1e-9);
        }
        for e in 0..phs.n_edges() {
            assert!(steady.state[phs.n_retained() + e].abs() < 1e-6);
        }
    }

    #[test]
    fn steady_state_single_pipe_matches_bisection_oracle() {
        // fixed left pressure, constant draw on the right; compare the
        // Newton solution against a 1-D bisection on the momentum balance
        let gas = GasProperties::natural_gas();
        let gs = freeze_gas_state(&gas, 50.0e5).unwrap();
        let topology = NetworkTopology::new(
            vec![
                Node {
                    id: "src".into(),
                    elevation: 0.0,
                    kind: NodeKind::Supply { pressure: 50.0e5 },
                },
                Node {
                    id: "dst".into(),
                    elevation: 0.0,
                    kind: NodeKind::Demand,
                },
            ],
            vec![PipeEdge {
                id: "p".into(),
                from: "src".into(),
                to: "dst".into(),
                length: 80.0e3,
                diameter: 0.6,
                roughness: 0.012e-3,
                efficiency: 0.98,
                segments: 1,
            }],
        )
        .unwrap();
        let phs = assemble_network_phs(&topology, gas, gs, None)
            .unwrap()
            .reduce_supplies()
            .unwrap();
        let draw = 60.0;
        let steady = steady_state(&phs, &[-draw], ModelVariant::LivePm).unwrap();
        let p_newton = steady.state[0];
        // at steady state the pipe flow equals the draw
        assert_relative_eq!(steady.state[1], draw, max_relative = 1e-9);

        // bisection oracle on the same momentum balance
        let params = phs.edge_params(0);
        let momentum = |pr: f64| {
            crate::pipeline::lumped_momentum_rhs(
                &PipelineState::new(50.0e5, pr, draw),
                &params,
            )
            .unwrap()
        };
        let (mut lo, mut hi) = (1.0e5, 50.0e5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if momentum(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let p_bisect = 0.5 * (lo + hi);
        assert_relative_eq!(p_newton, p_bisect, max_relative = 1e-8);
    }

    #[test]
    fn steady_state_inclined_zero_flow_gravity_balance() {
        // zero draw on an inclined pipe: (pl − pr)/L = g·sinθ·pM/c²
        let gas = GasProperties::natural_gas();
        let gs = freeze_gas_state(&gas, 50.0e5).unwrap();
        let topology = NetworkTopology::new(
            vec![
                Node {
                    id: "low".into(),
                    elevation: 0.0,
                    kind: NodeKind::Supply { pressure: 50.0e5 },
                },
                Node {
                    id: "high".into(),
                    elevation: 800.0,
                    kind: NodeKind::Demand,
                },
            ],
            vec![PipeEdge {
                id: "up".into(),
                from: "low".into(),
                to: "high".into(),
                length: 40.0e3,
                diameter: 0.6,
                roughness: 0.012e-3,
                efficiency: 0.98,
                segments: 1,
            }],
        )
        .unwrap();
        let phs = assemble_network_phs(&topology, gas, gs, None)
            .unwrap()
            .reduce_supplies()
            .unwrap();
        let steady = steady_state(&phs, &[0.0], ModelVariant::LivePm).unwrap();
        let pr = steady.state[0];
        let pm = mean_pressure(50.0e5, pr).unwrap();
        let lhs = (50.0e5 - pr) / 40.0e3;
        let rhs = crate::scalar::STANDARD_GRAVITY * (800.0 / 40.0e3) * pm
            / gs.speed_of_sound_sq;
        assert_relative_eq!(lhs, rhs, max_relative = 1e-7);
        assert!(pr < 50.0e5, "pressure must drop with elevation");
    }

    #[test]
    fn equilibrium_stays_constant_under_integration() {
        let mut scenario = three_node_scenario(0.0, ModelVariant::Phs);
        // constant loads equal to their t = 0 values
        scenario.loads = vec![
            ("n2".into(), PiecewiseLinear::constant(-20.0)),
            ("n3".into(), PiecewiseLinear::constant(-15.0)),
        ];
        scenario.t_end = 3600.0;
        let run = run_scenario(&scenario).unwrap();
        let first = &run.trajectory.pressures[0];
        let last = run.trajectory.pressures.last().unwrap();
        for (a, b) in first.iter().zip(last) {
            assert_relative_eq!(a, b, max_relative = 1e-6);
        }
    }

    #[test]
    fn two_variants_identical_on_level_network() {
        let phs_run = run_scenario(&three_node_scenario(0.0, ModelVariant::Phs)).unwrap();
        let live_run = run_scenario(&three_node_scenario(0.0, ModelVariant::LivePm)).unwrap();
        for k in 0..phs_run.trajectory.times.len() {
            for (a, b) in phs_run.trajectory.pressures[k]
                .iter()
                .zip(&live_run.trajectory.pressures[k])
            {
                assert_relative_eq!(a, b, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn integration_is_deterministic() {
        let scenario = three_node_scenario(500.0, ModelVariant::Phs);
        let a = run_scenario(&scenario).unwrap();
        let b = run_scenario(&scenario).unwrap();
        assert_eq!(a.trajectory.solution.states, b.trajectory.solution.states);
        assert_eq!(a.trajectory.solution.stats, b.trajectory.solution.stats);
    }

    #[test]
    fn self_convergence_in_rtol() {
        let base = three_node_scenario(1000.0, ModelVariant::Phs);
        let run_at = |rtol: f64| {
            let mut s = base.clone();
            s.solver.rtol = rtol;
            s.solver.atol = rtol * 1e-2;
            run_scenario(&s).unwrap()
        };
        let reference = run_at(1e-10);
        let err = |run: &SimulationRun<f64>| -> f64 {
            let a = run.trajectory.pressures.last().unwrap();
            let b = reference.trajectory.pressures.last().unwrap();
            a.iter()
                .zip(b)
                .map(|(x, y)| ((x - y) / 1e5).abs())
                .fold(0.0, f64::max)
        };
        let e5 = err(&run_at(1e-5));
        let e6 = err(&run_at(1e-6));
        let e7 = err(&run_at(1e-7));
        // at least linear decay per tolerance decade
        assert!(e6 <= e5 * 0.5 + 1e-12, "e5 = {e5:.3e}, e6 = {e6:.3e}");
        assert!(e7 <= e6 * 0.5 + 1e-12, "e6 = {e6:.3e}, e7 = {e7:.3e}");
        // halving rtol moves the terminal state by less than 10·rtol
        let mut s_half = base.clone();
        s_half.solver.rtol = 0.5e-6;
        let half = run_scenario(&s_half).unwrap();
        let full = run_at(1e-6);
        let dev = full
            .trajectory
            .pressures
            .last()
            .unwrap()
            .iter()
            .zip(half.trajectory.pressures.last().unwrap())
            .map(|(x, y)| ((x - y) / x).abs())
            .fold(0.0, f64::max);
        assert!(dev < 10.0 * 1e-6, "dev = {dev:.3e}");
    }

    #[test]
    fn trapezoidal_agrees_with_rk45() {
        let mut scenario = three_node_scenario(0.0, ModelVariant::Phs);
        scenario.t_end = 7200.0;
        let rk = run_scenario(&scenario).unwrap();
        scenario.solver.method = Method::Trapezoidal;
        scenario.solver.max_step = Some(5.0);
        let trap = run_scenario(&scenario).unwrap();
        for (a, b) in rk
            .trajectory
            .pressures
            .last()
            .unwrap()
            .iter()
            .zip(trap.trajectory.pressures.last().unwrap())
        {
            assert_relative_eq!(a, b, max_relative = 5e-5);
        }
        assert!(trap.trajectory.stats().newton_iterations > 0);
    }

    #[test]
    fn segment_chaining_converges_to_same_steady_state() {
        // refining one pipe into segments keeps the end pressure consistent
        let gas = GasProperties::natural_gas();
        let gs = freeze_gas_state(&gas, 50.0e5).unwrap();
        let build = |segments: usize| {
            let topology = NetworkTopology::new(
                vec![
                    Node {
                        id: "a".into(),
                        elevation: 0.0,
                        kind: NodeKind::Supply { pressure: 50.0e5 },
                    },
                    Node {
                        id: "b".into(),
                        elevation: 0.0,
                        kind: NodeKind::Demand,
                    },
                ],
                vec![PipeEdge {
                    id: "p".into(),
                    from: "a".into(),
                    to: "b".into(),
                    length: 80.0e3,
                    diameter: 0.6,
                    roughness: 0.012e-3,
                    efficiency: 0.98,
                    segments,
                }],
            )
            .unwrap();
            assemble_network_phs(&topology, gas, gs, None)
                .unwrap()
                .reduce_supplies()
                .unwrap()
        };
        let coarse = build(1);
        let fine = build(4);
        let steady_coarse = steady_state(&coarse, &[-60.0], ModelVariant::LivePm).unwrap();
        let inj_fine = {
            // internal nodes take zero injection; `b` is the last retained
            let mut inj = vec![0.0; fine.n_retained()];
            let b_slot = fine
                .pressure_index(fine.node_ids().iter().position(|n| n == "b").unwrap())
                .unwrap();
            inj[b_slot] = -60.0;
            inj
        };
        let steady_fine = steady_state(&fine, &inj_fine, ModelVariant::LivePm).unwrap();
        let p_coarse = coarse.full_pressures(&steady_coarse.state)[1];
        let b_index = fine.node_ids().iter().position(|n| n == "b").unwrap();
        let p_fine = fine.full_pressures(&steady_fine.state)[b_index];
        // both discretizations express the same physics; the segmented pipe
        // resolves the nonlinear pressure profile slightly differently
        assert_relative_eq!(p_coarse, p_fine, max_relative = 2e-3);
    }

    #[test]
    fn velocity_guard_flags_fast_flow() {
        let scenario = three_node_scenario(0.0, ModelVariant::Phs);
        let run = run_scenario(&scenario).unwrap();
        // benchmark loads stay comfortably below the envelope
        let violations = velocity_violations(&run.prepared.model, &run.trajectory, 15.0).unwrap();
        assert!(violations.is_empty());
        // a tight limit must flag samples
        let violations = velocity_violations(&run.prepared.model, &run.trajectory, 1.0).unwrap();
        assert!(!violations.is_empty());
    }

    #[test]
    fn mass_balance_closes_on_benchmark() {
        let run = run_scenario(&three_node_scenario(0.0, ModelVariant::Phs)).unwrap();
        let balance = mass_balance(&run.prepared.model, &run.trajectory).unwrap();
        assert!(
            balance.relative_residual < 1e-6,
            "relative residual {:.3e}",
            balance.relative_residual
        );
        assert!(balance.supply_volume > 0.0);
        assert!(balance.injected_volume < 0.0);
    }

    #[test]
    fn pipeline_simulation_energy_audit() {
        let params = table1_pipe_params(80.0e3, 0.0).unwrap();
        let phs = build_pipeline_phs(params, 50.0e5).unwrap();
        let sim = PipelineSimulation::new(
            phs,
            PiecewiseLinear::new(vec![(600.0, 0.0), (660.0, 30.0)]).unwrap(),
            PiecewiseLinear::constant(0.0),
        );
        let grid = sample_grid(3600.0, 10.0);
        let controls = Controls {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: None,
        };
        let solution = ode::integrate(
            &sim,
            0.0,
            &[50.0e5, 50.0e5, 0.0],
            &grid,
            Method::Rk45,
            &controls,
        )
        .unwrap();
        let report = analysis::energy_balance(&sim, &solution).unwrap();
        assert!(report.normalized_residual < 1e-6);
        assert!(report.min_dissipation_rate >= 0.0);
        // the inflow raises the stored energy
        assert!(report.hamiltonian.last().unwrap() > &report.hamiltonian[0]);
    }
}
