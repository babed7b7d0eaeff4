//! Single-pipeline models: the lumped two-section mass/momentum ODEs, the
//! Weymouth mean pressure, the third-order port-Hamiltonian form and its
//! split inductive-resistive / capacitive representation.
//!
//! The stored simulation variables are the co-states (pl, pr, qnm); the
//! storage states x are recovered through the constant diagonal Q whenever
//! the Hamiltonian is evaluated.

use nalgebra::{Matrix3, Matrix3x2, Vector3};

use crate::error::{Error, Result};
use crate::friction::{
    effective_friction, laminar_damping, EffectiveFriction, PipeGeometry,
};
use crate::gas::{FrozenGasState, GasProperties};
use crate::scalar::{as_f64, gravity, lit, Scalar};

/// Everything needed to evaluate one pipe's dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeParams<T: Scalar> {
    pub geometry: PipeGeometry<T>,
    pub gas: GasProperties<T>,
    pub gas_state: FrozenGasState<T>,
}

impl<T: Scalar> PipeParams<T> {
    pub fn new(geometry: PipeGeometry<T>, gas: GasProperties<T>, gas_state: FrozenGasState<T>) -> Self {
        Self { geometry, gas, gas_state }
    }

    /// 2·ρn·c²/(L·A), the storage weight of both pressure states.
    pub fn pressure_weight(&self) -> T {
        lit::<T>(2.0) * self.gas_state.standard_density * self.gas_state.speed_of_sound_sq
            / (self.geometry.length * self.geometry.cross_section)
    }

    /// A/(ρn·L), the storage weight of the flow state.
    pub fn flow_weight(&self) -> T {
        self.geometry.cross_section / (self.gas_state.standard_density * self.geometry.length)
    }

    /// g·L·sinθ/c², the gravity factor multiplying the mean pressure.
    pub fn gravity_factor(&self) -> T {
        gravity::<T>() * self.geometry.length * self.geometry.inclination_sin
            / self.gas_state.speed_of_sound_sq
    }
}

/// Pipeline co-states: boundary pressures and the middle standard flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineState<T: Scalar> {
    /// Left-side pressure pl [Pa], positive.
    pub p_left: T,
    /// Right-side pressure pr [Pa], positive.
    pub p_right: T,
    /// Standard volumetric flow through the middle qnm [m³/s].
    pub flow_middle: T,
}

impl<T: Scalar> PipelineState<T> {
    pub fn new(p_left: T, p_right: T, flow_middle: T) -> Self {
        Self { p_left, p_right, flow_middle }
    }
}

/// Weymouth mean pressure pM = (2/3)·(pl + pr − pl·pr/(pl + pr)).
///
/// Algebraically identical to (2/3)·(pl³ − pr³)/(pl² − pr²) but regular at
/// pl = pr; always between min(pl, pr) and max(pl, pr).
pub fn mean_pressure<T: Scalar>(p_left: T, p_right: T) -> Result<T> {
    if !(p_left > T::zero()) {
        return Err(Error::NonPositivePressure {
            location: "mean_pressure (left)".into(),
            value: as_f64(p_left),
        });
    }
    if !(p_right > T::zero()) {
        return Err(Error::NonPositivePressure {
            location: "mean_pressure (right)".into(),
            value: as_f64(p_right),
        });
    }
    let sum = p_left + p_right;
    Ok(lit::<T>(2.0 / 3.0) * (sum - p_left * p_right / sum))
}

/// Per-pipe resistive coefficient R(qnm, pM) [Pa·s/m³]:
/// f_e·ρn²·c²·L·|qnm| / (2·D·A²·pM) with the closed-form laminar value below
/// the regime switch, so the coefficient stays finite and continuous at rest.
pub fn resistive_coefficient<T: Scalar>(
    params: &PipeParams<T>,
    flow_middle: T,
    mean_pressure: T,
) -> Result<T> {
    let geometry = &params.geometry;
    match effective_friction(flow_middle.abs(), geometry, &params.gas_state, &params.gas)? {
        EffectiveFriction::LaminarClosedForm => {
            laminar_damping(geometry, &params.gas_state, &params.gas, mean_pressure)
        }
        EffectiveFriction::Factor(fe) => {
            let re = crate::friction::reynolds(
                flow_middle.abs(),
                geometry,
                &params.gas_state,
                &params.gas,
            )?;
            if re < lit(crate::scalar::LAMINAR_TURBULENT_REYNOLDS) {
                // identical to f = 64/Re expanded, without the 0/0 at rest
                laminar_damping(geometry, &params.gas_state, &params.gas, mean_pressure)
            } else {
                if !(mean_pressure > T::zero()) {
                    return Err(Error::NonPositivePressure {
                        location: "resistive_coefficient".into(),
                        value: as_f64(mean_pressure),
                    });
                }
                let rho_n = params.gas_state.standard_density;
                let area = geometry.cross_section;
                Ok(fe * rho_n * rho_n * params.gas_state.speed_of_sound_sq * geometry.length
                    * flow_middle.abs()
                    / (lit::<T>(2.0) * geometry.diameter * area * area * mean_pressure))
            }
        }
    }
}

/// Mass-conservation ODEs of the two pipe halves:
/// ṗl = 2ρn·c²/(L·A)·(qnl − qnm), ṗr = 2ρn·c²/(L·A)·(qnm − qnr).
pub fn lumped_mass_rhs<T: Scalar>(
    state: &PipelineState<T>,
    inflow_left: T,
    outflow_right: T,
    params: &PipeParams<T>,
) -> (T, T) {
    let w = params.pressure_weight();
    (
        w * (inflow_left - state.flow_middle),
        w * (state.flow_middle - outflow_right),
    )
}

fn momentum_rhs_impl<T: Scalar>(
    state: &PipelineState<T>,
    params: &PipeParams<T>,
    gravity_mean_pressure: Option<T>,
) -> Result<T> {
    let pm_live = mean_pressure(state.p_left, state.p_right)?;
    let pm_gravity = gravity_mean_pressure.unwrap_or(pm_live);
    let resistive = resistive_coefficient(params, state.flow_middle, pm_live)?;
    let pressure_drive = state.p_left - state.p_right;
    let gravity_term = params.gravity_factor() * pm_gravity;
    Ok(params.flow_weight() * (pressure_drive - resistive * state.flow_middle - gravity_term))
}

/// Momentum ODE of the whole pipe with the live mean pressure everywhere:
/// ρn·L/A·q̇nm = (pl − pr) − R(qnm, pM)·qnm − g·L·sinθ·pM/c².
pub fn lumped_momentum_rhs<T: Scalar>(state: &PipelineState<T>, params: &PipeParams<T>) -> Result<T> {
    momentum_rhs_impl(state, params, None)
}

/// Momentum ODE with the gravity term frozen at a fixed mean pressure while
/// the resistive denominator stays live.
pub fn lumped_momentum_rhs_frozen_gravity<T: Scalar>(
    state: &PipelineState<T>,
    params: &PipeParams<T>,
    frozen_mean_pressure: T,
) -> Result<T> {
    momentum_rhs_impl(state, params, Some(frozen_mean_pressure))
}

/// Which half of the pipe a capacitive sub-system belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipeSide {
    Left,
    Right,
}

/// Port outputs of the pipeline PHS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelinePorts<T: Scalar> {
    /// y = Gᵀ·∂H/∂x = (pl, pr), conjugate to the flow inputs (qnl, −qnr).
    pub y: [T; 2],
    /// z = eᵀ·∂H/∂x = −qnm, conjugate to the gravity disturbance d, so that
    /// Ḣ = −∂HᵀR∂H + yᵀu + z·d holds along trajectories.
    pub z: T,
}

/// Third-order PHS of one pipeline: constant Q, J, G, e, frozen gravity
/// disturbance d and the state-dependent resistive coefficient.
#[derive(Debug, Clone)]
pub struct PipelinePhs<T: Scalar> {
    params: PipeParams<T>,
    frozen_mean_pressure: T,
    pressure_weight: T,
    flow_weight: T,
    gravity_disturbance: T,
}

/// Builds the pipeline PHS, freezing the gravity disturbance at the given
/// mean pressure. The resistive coefficient keeps its live mean pressure.
pub fn build_pipeline_phs<T: Scalar>(
    params: PipeParams<T>,
    frozen_mean_pressure: T,
) -> Result<PipelinePhs<T>> {
    if !(frozen_mean_pressure > T::zero()) {
        return Err(Error::NonPositivePressure {
            location: "build_pipeline_phs (frozen mean pressure)".into(),
            value: as_f64(frozen_mean_pressure),
        });
    }
    let pressure_weight = params.pressure_weight();
    let flow_weight = params.flow_weight();
    let gravity_disturbance = params.gravity_factor() * frozen_mean_pressure;
    Ok(PipelinePhs {
        params,
        frozen_mean_pressure,
        pressure_weight,
        flow_weight,
        gravity_disturbance,
    })
}

impl<T: Scalar> PipelinePhs<T> {
    pub fn params(&self) -> &PipeParams<T> {
        &self.params
    }

    /// Mean pressure the gravity disturbance was frozen at.
    pub fn frozen_mean_pressure(&self) -> T {
        self.frozen_mean_pressure
    }

    /// Constant gravity disturbance d = g·L·sinθ·pM/c².
    pub fn disturbance(&self) -> T {
        self.gravity_disturbance
    }

    /// Storage matrix Q = diag(2ρn·c²/(L·A), 2ρn·c²/(L·A), A/(ρn·L)).
    pub fn q_matrix(&self) -> Matrix3<T> {
        Matrix3::from_diagonal(&Vector3::new(
            self.pressure_weight,
            self.pressure_weight,
            self.flow_weight,
        ))
    }

    /// Skew interconnection J.
    pub fn j_matrix(&self) -> Matrix3<T> {
        let o = T::zero();
        let l = T::one();
        Matrix3::new(o, o, -l, o, o, l, l, -l, o)
    }

    /// Input map G selecting the two pressure states.
    pub fn g_matrix(&self) -> Matrix3x2<T> {
        let o = T::zero();
        let l = T::one();
        Matrix3x2::new(l, o, o, l, o, o)
    }

    /// Disturbance map e = (0, 0, −1)ᵀ.
    pub fn e_vector(&self) -> Vector3<T> {
        Vector3::new(T::zero(), T::zero(), -T::one())
    }

    /// Resistive matrix R(x) = diag(0, 0, R(qnm, pM)) at the given state.
    pub fn resistive_matrix(&self, state: &PipelineState<T>) -> Result<Matrix3<T>> {
        let pm = mean_pressure(state.p_left, state.p_right)?;
        let r = resistive_coefficient(&self.params, state.flow_middle, pm)?;
        Ok(Matrix3::from_diagonal(&Vector3::new(T::zero(), T::zero(), r)))
    }

    /// Per-pipe resistive coefficient at a given flow and mean pressure.
    pub fn resistive_coefficient(&self, flow_middle: T, mean_pressure: T) -> Result<T> {
        resistive_coefficient(&self.params, flow_middle, mean_pressure)
    }

    /// Co-state derivatives (ṗl, ṗr, q̇nm) under the port input u = (qnl, −qnr),
    /// with the gravity disturbance frozen (the PHS form).
    pub fn rhs(&self, state: &PipelineState<T>, input: [T; 2]) -> Result<Vector3<T>> {
        let pm_live = mean_pressure(state.p_left, state.p_right)?;
        let resistive = resistive_coefficient(&self.params, state.flow_middle, pm_live)?;
        let dp_left = self.pressure_weight * (input[0] - state.flow_middle);
        let dp_right = self.pressure_weight * (state.flow_middle + input[1]);
        let dq = self.flow_weight
            * (state.p_left - state.p_right - resistive * state.flow_middle
                - self.gravity_disturbance);
        Ok(Vector3::new(dp_left, dp_right, dq))
    }

    /// Co-state derivatives of the non-PHS variant that keeps the mean
    /// pressure in the gravity term live (the plain lumped model).
    pub fn rhs_live_pm(&self, state: &PipelineState<T>, input: [T; 2]) -> Result<Vector3<T>> {
        let (dp_left, dp_right) = lumped_mass_rhs(
            state,
            input[0],
            -input[1],
            &self.params,
        );
        let dq = lumped_momentum_rhs(state, &self.params)?;
        Ok(Vector3::new(dp_left, dp_right, dq))
    }

    /// Storage function H = ½·xᵀQx evaluated from the co-states.
    pub fn hamiltonian(&self, state: &PipelineState<T>) -> T {
        let half = lit::<T>(0.5);
        half * state.p_left * state.p_left / self.pressure_weight
            + half * state.p_right * state.p_right / self.pressure_weight
            + half * state.flow_middle * state.flow_middle / self.flow_weight
    }

    /// Port outputs (y, z) at a state.
    pub fn ports(&self, state: &PipelineState<T>) -> PipelinePorts<T> {
        PipelinePorts {
            y: [state.p_left, state.p_right],
            z: -state.flow_middle,
        }
    }

    /// Inductive-resistive half of the split form: q̇nm driven by the two
    /// boundary pressures as coupling inputs.
    pub fn split_rl_rhs(&self, p_left: T, p_right: T, flow_middle: T) -> Result<T> {
        let pm_live = mean_pressure(p_left, p_right)?;
        let resistive = resistive_coefficient(&self.params, flow_middle, pm_live)?;
        Ok(self.flow_weight
            * (p_left - p_right - resistive * flow_middle - self.gravity_disturbance))
    }

    /// Capacitive half of the split form on one side of the pipe, with the
    /// middle flow as coupling input: ṗk = Qk·βk·(qn_k − qnm), βl = 1, βr = −1.
    pub fn split_c_rhs(&self, side: PipeSide, boundary_flow: T, flow_middle: T) -> T {
        let beta = match side {
            PipeSide::Left => T::one(),
            PipeSide::Right => -T::one(),
        };
        self.pressure_weight * beta * (boundary_flow - flow_middle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::friction::friction_colebrook_white;
    use crate::gas::freeze_gas_state;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table1_params(length: f64, incl_sin: f64) -> PipeParams<f64> {
        let gas = GasProperties::natural_gas();
        let gs = freeze_gas_state(&gas, 50.0e5).unwrap();
        let geom = PipeGeometry::new(length, 0.6, 0.012e-3, 0.98, incl_sin).unwrap();
        PipeParams::new(geom, gas, gs)
    }

    fn random_state(rng: &mut ChaCha8Rng) -> PipelineState<f64> {
        PipelineState::new(
            rng.gen_range(1.0e5..100.0e5),
            rng.gen_range(1.0e5..100.0e5),
            rng.gen_range(-300.0..300.0),
        )
    }

    #[test]
    fn mean_pressure_symmetric_point() {
        assert_eq!(mean_pressure(50.0e5, 50.0e5).unwrap(), 50.0e5);
    }

    #[test]
    fn mean_pressure_two_to_one_bar() {
        let pm = mean_pressure(2.0e5, 1.0e5).unwrap();
        assert_relative_eq!(pm, 14.0e5 / 9.0, max_relative = 1e-15);
    }

    #[test]
    fn mean_pressure_forms_agree() {
        // Cubic-over-quadratic form as the independent algebraic route.
        let cubic = |pl: f64, pr: f64| {
            2.0 / 3.0 * (pl.powi(3) - pr.powi(3)) / (pl.powi(2) - pr.powi(2))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let pl: f64 = rng.gen_range(1.0e5..100.0e5);
            let mut pr: f64 = rng.gen_range(1.0e5..100.0e5);
            if (pl - pr).abs() < 1e-3 * pl {
                pr *= 1.01; // keep the singular form well-conditioned
            }
            let a = mean_pressure(pl, pr).unwrap();
            let b = cubic(pl, pr);
            assert_relative_eq!(a, b, max_relative = 1e-13);
            assert!(a >= pl.min(pr) && a <= pl.max(pr));
        }
    }

    #[test]
    fn mean_pressure_rejects_nonpositive() {
        assert!(mean_pressure(0.0, 1.0e5).is_err());
        assert!(mean_pressure(1.0e5, -2.0).is_err());
    }

    #[test]
    fn mass_rhs_uniform_flow_is_equilibrium() {
        let params = table1_params(100.0e3, 0.0);
        let state = PipelineState::new(50.0e5, 50.0e5, 7.0);
        let (dl, dr) = lumped_mass_rhs(&state, 7.0, 7.0, &params);
        assert_eq!(dl, 0.0);
        assert_eq!(dr, 0.0);
    }

    #[test]
    fn mass_rhs_coefficient_matches_oracle() {
        // 2·ρn·c²/(L·A) for the Table-1 pipe at 100 km, frozen at 50 bar.
        let params = table1_params(100.0e3, 0.0);
        let state = PipelineState::new(50.0e5, 50.0e5, 0.0);
        let (dl, _) = lumped_mass_rhs(&state, 1.0, 0.0, &params);
        assert_relative_eq!(dl, 6.441886661851713, max_relative = 1e-13);
    }

    #[test]
    fn mass_rhs_antisymmetry() {
        let params = table1_params(80.0e3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let state = random_state(&mut rng);
            let qnl = rng.gen_range(-50.0..50.0);
            let qnr = rng.gen_range(-50.0..50.0);
            let (dl, dr) = lumped_mass_rhs(&state, qnl, qnr, &params);
            let swapped = PipelineState::new(state.p_right, state.p_left, -state.flow_middle);
            let (sl, sr) = lumped_mass_rhs(&swapped, -qnr, -qnl, &params);
            assert_eq!(sl, -dl);
            assert_eq!(sr, -dr);
        }
    }

    #[test]
    fn momentum_rest_equilibrium() {
        let params = table1_params(80.0e3, 0.0);
        let state = PipelineState::new(50.0e5, 50.0e5, 0.0);
        assert_eq!(lumped_momentum_rhs(&state, &params).unwrap(), 0.0);
    }

    #[test]
    fn momentum_sign_symmetry_level_pipe() {
        let params = table1_params(80.0e3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let state = random_state(&mut rng);
            let mirrored = PipelineState::new(state.p_right, state.p_left, -state.flow_middle);
            let a = lumped_momentum_rhs(&state, &params).unwrap();
            let b = lumped_momentum_rhs(&mirrored, &params).unwrap();
            assert_relative_eq!(a, -b, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn momentum_steady_state_against_independent_oracle() {
        // Solve (17) = 0 for pr by bisection on an independently written
        // balance that uses Colebrook-White friction and the cubic mean
        // pressure form; the production rhs (Hofer) must vanish there up to
        // the documented <1% spread between the two turbulent closures.
        let params = table1_params(80.0e3, 0.0);
        let gs = params.gas_state;
        let geom = params.geometry;
        let pl = 60.0e5f64;
        let qnm = 120.0f64;
        let balance = |pr: f64| -> f64 {
            let re = gs.standard_density * qnm.abs() * geom.diameter
                / (params.gas.dynamic_viscosity * geom.cross_section);
            let f = friction_colebrook_white(re, &geom, 1e-12).unwrap();
            let fe = f / (0.98f64 * 0.98);
            let pm = 2.0 / 3.0 * (pl.powi(3) - pr.powi(3)) / (pl.powi(2) - pr.powi(2));
            (pl - pr)
                - fe * gs.standard_density.powi(2) * gs.speed_of_sound_sq * geom.length
                    * qnm.abs() * qnm
                    / (2.0 * geom.diameter * geom.cross_section.powi(2) * pm)
        };
        let (mut lo, mut hi) = (1.0e5, pl - 1.0);
        assert!(balance(lo) < 0.0 && balance(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if balance(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let pr = 0.5 * (lo + hi);
        let state = PipelineState::new(pl, pr, qnm);
        let residual = lumped_momentum_rhs(&state, &params).unwrap();
        // compare against the size of the friction term itself
        let pm = mean_pressure(pl, pr).unwrap();
        let friction_term =
            resistive_coefficient(&params, qnm, pm).unwrap() * qnm * params.flow_weight();
        assert!(residual.abs() < 0.02 * friction_term.abs());
    }

    #[test]
    fn phs_matches_stacked_lumped_odes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for incl in [0.0, 0.01, -0.02] {
            let params = table1_params(80.0e3, incl);
            let pm_frozen = 48.0e5;
            let phs = build_pipeline_phs(params, pm_frozen).unwrap();
            for _ in 0..1000 {
                let state = random_state(&mut rng);
                let qnl = rng.gen_range(-100.0..100.0);
                let qnr = rng.gen_range(-100.0..100.0);
                let full = phs.rhs(&state, [qnl, -qnr]).unwrap();
                let (dl, dr) = lumped_mass_rhs(&state, qnl, qnr, &params);
                let dq = lumped_momentum_rhs_frozen_gravity(&state, &params, pm_frozen).unwrap();
                for (a, b) in full.iter().zip([dl, dr, dq]) {
                    assert_relative_eq!(*a, b, max_relative = 1e-12, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn level_pipe_has_zero_disturbance() {
        let phs = build_pipeline_phs(table1_params(80.0e3, 0.0), 50.0e5).unwrap();
        assert_eq!(phs.disturbance(), 0.0);
    }

    #[test]
    fn hamiltonian_matches_hand_value() {
        // ½ xᵀQx at pl = pr = 50 bar, qnm = 0, L = 100 km (50-digit oracle).
        let phs = build_pipeline_phs(table1_params(100.0e3, 0.0), 50.0e5).unwrap();
        let h = phs.hamiltonian(&PipelineState::new(50.0e5, 50.0e5, 0.0));
        assert_relative_eq!(h, 3.8808506439655024e12, max_relative = 1e-13);
    }

    #[test]
    fn hamiltonian_is_positive_definite_quadratic() {
        let phs = build_pipeline_phs(table1_params(80.0e3, 0.0), 50.0e5).unwrap();
        assert_eq!(phs.hamiltonian(&PipelineState::new(0.0, 0.0, 0.0)), 0.0);
        let h1 = phs.hamiltonian(&PipelineState::new(2.0e5, 1.0e5, 3.0));
        let h2 = phs.hamiltonian(&PipelineState::new(4.0e5, 2.0e5, 6.0));
        assert_relative_eq!(h2, 4.0 * h1, max_relative = 1e-14);
    }

    #[test]
    fn ports_select_costates() {
        let phs = build_pipeline_phs(table1_params(80.0e3, 0.01), 50.0e5).unwrap();
        let state = PipelineState::new(61.0e5, 44.0e5, 12.5);
        let ports = phs.ports(&state);
        assert_eq!(ports.y, [61.0e5, 44.0e5]);
        assert_eq!(ports.z, -12.5);
    }

    #[test]
    fn j_matrix_is_skew_exact() {
        let phs = build_pipeline_phs(table1_params(80.0e3, 0.0), 50.0e5).unwrap();
        let j = phs.j_matrix();
        assert_eq!(j + j.transpose(), Matrix3::zeros());
    }

    #[test]
    fn resistive_matrix_psd_over_random_states() {
        let phs = build_pipeline_phs(table1_params(80.0e3, 0.0), 50.0e5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..2000 {
            let state = random_state(&mut rng);
            let r = phs.resistive_matrix(&state).unwrap();
            assert!(r[(2, 2)] >= 0.0);
            assert_eq!(r[(0, 0)], 0.0);
            assert_eq!(r[(1, 1)], 0.0);
        }
    }

    #[test]
    fn resistive_coefficient_monotone_in_flow_magnitude() {
        let params = table1_params(80.0e3, 0.0);
        for pm_bar in [20.0, 50.0, 80.0] {
            let pm = pm_bar * 1e5;
            let mut previous = -1.0f64;
            for i in 0..=2000 {
                let qn = i as f64 * 0.1;
                let r = resistive_coefficient(&params, qn, pm).unwrap();
                assert!(r >= previous - 1e-12 * previous.abs());
                previous = r;
            }
        }
    }

    #[test]
    fn resistive_is_continuous_and_laminar_at_rest() {
        let params = table1_params(80.0e3, 0.0);
        let pm = 50.0e5;
        let at_rest = resistive_coefficient(&params, 0.0, pm).unwrap();
        let tiny = resistive_coefficient(&params, 1e-9, pm).unwrap();
        assert_eq!(at_rest, tiny);
        let lam = laminar_damping(&params.geometry, &params.gas_state, &params.gas, pm).unwrap();
        assert_eq!(at_rest, lam);
    }

    #[test]
    fn split_form_reproduces_monolithic_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for incl in [0.0, 0.0125] {
            let phs = build_pipeline_phs(table1_params(80.0e3, incl), 47.0e5).unwrap();
            for _ in 0..1000 {
                let state = random_state(&mut rng);
                let qnl = rng.gen_range(-100.0..100.0);
                let qnr = rng.gen_range(-100.0..100.0);
                let full = phs.rhs(&state, [qnl, -qnr]).unwrap();
                let dl = phs.split_c_rhs(PipeSide::Left, qnl, state.flow_middle);
                let dr = phs.split_c_rhs(PipeSide::Right, qnr, state.flow_middle);
                let dq = phs
                    .split_rl_rhs(state.p_left, state.p_right, state.flow_middle)
                    .unwrap();
                assert_relative_eq!(full[0], dl, max_relative = 1e-14);
                assert_relative_eq!(full[1], dr, max_relative = 1e-14);
                assert_relative_eq!(full[2], dq, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn split_c_signs_follow_beta_convention() {
        let phs = build_pipeline_phs(table1_params(80.0e3, 0.0), 50.0e5).unwrap();
        // inflow raises the left pressure, the middle flow drains it
        assert!(phs.split_c_rhs(PipeSide::Left, 1.0, 0.0) > 0.0);
        assert!(phs.split_c_rhs(PipeSide::Left, 0.0, 1.0) < 0.0);
        // the middle flow feeds the right side
        assert!(phs.split_c_rhs(PipeSide::Right, 0.0, 1.0) > 0.0);
        // C-side storage weight equals the pressure diagonal of Q
        let q = phs.q_matrix();
        assert_eq!(q[(0, 0)], q[(1, 1)]);
    }

    #[test]
    fn generic_over_f32_smoke() {
        let gas = GasProperties::<f32>::natural_gas();
        let gs = freeze_gas_state(&gas, 50.0e5).unwrap();
        let geom = PipeGeometry::<f32>::new(80.0e3, 0.6, 0.012e-3, 0.98, 0.0).unwrap();
        let phs = build_pipeline_phs(PipeParams::new(geom, gas, gs), 50.0e5).unwrap();
        let rhs = phs
            .rhs(&PipelineState::new(50.0e5, 49.0e5, 10.0), [5.0, -5.0])
            .unwrap();
        assert!(rhs.iter().all(|v| v.is_finite()));
    }
}
