//! Passivity and stability diagnostics: storage/energy-balance auditing of
//! simulated trajectories, the output-feedback passivity index, and the
//! eigenvalue analysis of the variable-mean-pressure dynamics.

use nalgebra::Matrix3;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::friction::laminar_damping;
use crate::ode::Solution;
use crate::pipeline::{mean_pressure, resistive_coefficient, PipeParams, PipelineState};
use crate::scalar::{as_f64, gravity, lit, Scalar};

/// Power bookkeeping of a simulated system, used by [`energy_balance`].
///
/// Implementations put the three power integrands, in this order, at the
/// front of their quadrature components: dissipation, port power,
/// disturbance power.
pub trait EnergyAccounting<T: Scalar> {
    /// Storage function H at a state.
    fn hamiltonian_of(&self, y: &[T]) -> T;
    /// Dissipated power ∂HᵀR(x)∂H ≥ 0.
    fn dissipation_rate_of(&self, y: &[T]) -> Result<T>;
    /// Power entering through the input/output port pair, yᵀu.
    fn port_power_of(&self, t: T, y: &[T]) -> Result<T>;
    /// Power entering through the disturbance port pair, zᵀd.
    fn disturbance_power_of(&self, y: &[T]) -> Result<T>;
}

/// Sample-wise energy audit of one trajectory.
#[derive(Debug, Clone)]
pub struct EnergyReport<T: Scalar> {
    pub times: Vec<T>,
    /// Storage H at each sample.
    pub hamiltonian: Vec<T>,
    /// Dissipation integrand at each sample (must be ≥ 0).
    pub dissipation_rate: Vec<T>,
    /// Port power yᵀu at each sample.
    pub port_power: Vec<T>,
    /// Disturbance power zᵀd at each sample.
    pub disturbance_power: Vec<T>,
    /// ΔH − ∫(−∂HᵀR∂H + yᵀu + zᵀd)dt accumulated to each sample.
    pub residual: Vec<T>,
    pub max_abs_residual: T,
    pub max_hamiltonian: T,
    /// max |residual| / max H.
    pub normalized_residual: T,
    pub min_dissipation_rate: T,
}

/// Audits the dissipation identity Ḣ = −∂HᵀR∂H + yᵀu + zᵀd along a
/// trajectory.
///
/// When the solution carries quadrature components (the integrators
/// accumulate the three power integrals at solver accuracy) those are used;
/// otherwise the integrals are rebuilt from the samples by the trapezoidal
/// rule, which requires a dense sampling to be meaningful.
pub fn energy_balance<T: Scalar, S: EnergyAccounting<T>>(
    system: &S,
    solution: &Solution<T>,
) -> Result<EnergyReport<T>> {
    let n = solution.times.len();
    if n == 0 {
        return Err(Error::Scenario("empty trajectory".into()));
    }
    let mut hamiltonian = Vec::with_capacity(n);
    let mut dissipation = Vec::with_capacity(n);
    let mut port = Vec::with_capacity(n);
    let mut disturbance = Vec::with_capacity(n);
    for (t, y) in solution.times.iter().zip(&solution.states) {
        hamiltonian.push(system.hamiltonian_of(y));
        dissipation.push(system.dissipation_rate_of(y)?);
        port.push(system.port_power_of(*t, y)?);
        disturbance.push(system.disturbance_power_of(y)?);
    }

    let have_quadratures =
        !solution.quadratures.is_empty() && solution.quadratures[0].len() >= 3;
    let mut residual = Vec::with_capacity(n);
    let mut supplied_integral = T::zero();
    for k in 0..n {
        let supplied = if have_quadratures {
            let q = &solution.quadratures[k];
            -q[0] + q[1] + q[2]
        } else {
            if k > 0 {
                let dt = solution.times[k] - solution.times[k - 1];
                let f_prev = -dissipation[k - 1] + port[k - 1] + disturbance[k - 1];
                let f_here = -dissipation[k] + port[k] + disturbance[k];
                supplied_integral += dt * lit::<T>(0.5) * (f_prev + f_here);
            }
            supplied_integral
        };
        residual.push(hamiltonian[k] - hamiltonian[0] - supplied);
    }

    let max_abs_residual = residual
        .iter()
        .fold(T::zero(), |acc, r| acc.max(r.abs()));
    let max_hamiltonian = hamiltonian.iter().fold(T::zero(), |acc, h| acc.max(*h));
    let min_dissipation_rate = dissipation
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or(T::one()), T::min);
    let normalized_residual = if max_hamiltonian > T::zero() {
        max_abs_residual / max_hamiltonian
    } else {
        max_abs_residual
    };
    Ok(EnergyReport {
        times: solution.times.clone(),
        hamiltonian,
        dissipation_rate: dissipation,
        port_power: port,
        disturbance_power: disturbance,
        residual,
        max_abs_residual,
        max_hamiltonian,
        normalized_residual,
        min_dissipation_rate,
    })
}

/// Output-feedback passivity index of the flow dynamics: the closed-form
/// laminar damping coefficient, which lower-bounds the resistive coefficient
/// over all flows at the same mean pressure.
pub fn ofp_index<T: Scalar>(params: &PipeParams<T>, mean_pressure: T) -> Result<T> {
    laminar_damping(&params.geometry, &params.gas_state, &params.gas, mean_pressure)
}

/// Checks the lower-bound property of [`ofp_index`] by sampling the
/// resistive coefficient over a flow grid; returns the smallest margin
/// R(|qn|) − ρ_ofp found.
pub fn ofp_bound_margin<T: Scalar>(
    params: &PipeParams<T>,
    mean_pressure: T,
    flow_max: T,
    samples: usize,
) -> Result<T> {
    let index = ofp_index(params, mean_pressure)?;
    let mut margin = T::max_value().unwrap_or(T::one());
    for i in 0..=samples {
        let qn = flow_max * lit(i as f64 / samples as f64);
        let r = resistive_coefficient(params, qn, mean_pressure)?;
        margin = margin.min(r - index);
    }
    Ok(margin)
}

/// Splits the mean pressure into pM = kl·pl + kr·pr with
/// kl = (2 − pr/(pl+pr))/3 and kr = (2 − pl/(pl+pr))/3; both weights lie in
/// (1/3, 2/3) for positive pressures and sum to one.
pub fn pressure_weights<T: Scalar>(p_left: T, p_right: T) -> Result<(T, T)> {
    if !(p_left > T::zero()) || !(p_right > T::zero()) {
        return Err(Error::NonPositivePressure {
            location: "pressure_weights".into(),
            value: as_f64(if p_left > T::zero() { p_right } else { p_left }),
        });
    }
    let sum = p_left + p_right;
    let third = lit::<T>(1.0 / 3.0);
    let two = lit::<T>(2.0);
    Ok((
        third * (two - p_right / sum),
        third * (two - p_left / sum),
    ))
}

/// State matrix A of the variable-mean-pressure pipeline dynamics,
/// Q⁻¹·(d/dt co-states) = A·(pl, pr, qnm)ᵀ + (qnl, −qnr, 0)ᵀ:
/// rows (0, 0, −1), (0, 0, 1), (1−φ·kl, −1−φ·kr, −R).
pub fn variable_pm_state_matrix<T: Scalar>(
    params: &PipeParams<T>,
    state: &PipelineState<T>,
) -> Result<Matrix3<T>> {
    let (kl, kr) = pressure_weights(state.p_left, state.p_right)?;
    let pm = mean_pressure(state.p_left, state.p_right)?;
    let r = resistive_coefficient(params, state.flow_middle, pm)?;
    let phi = params.gravity_factor();
    let o = T::zero();
    let l = T::one();
    Ok(Matrix3::new(
        o,
        o,
        -l,
        o,
        o,
        l,
        l - phi * kl,
        -l - phi * kr,
        -r,
    ))
}

/// Closed-form eigenvalues of the variable-mean-pressure state matrix:
/// λ1 = 0 and λ2,3 = −R/2 ± ½·√(R² − 8 − 4φ(kr − kl)), continued into the
/// complex plane when the discriminant is negative.
pub fn eigenvalues_variable_pm<T: Scalar>(
    resistive: T,
    phi: T,
    k_left: T,
    k_right: T,
) -> [Complex<T>; 3] {
    let four = lit::<T>(4.0);
    let eight = lit::<T>(8.0);
    let half = lit::<T>(0.5);
    let discriminant = resistive * resistive - eight - four * phi * (k_right - k_left);
    let (re, im) = if discriminant >= T::zero() {
        (discriminant.sqrt(), T::zero())
    } else {
        (T::zero(), (-discriminant).sqrt())
    };
    let base = -half * resistive;
    [
        Complex::new(T::zero(), T::zero()),
        Complex::new(base + half * re, half * im),
        Complex::new(base - half * re, -half * im),
    ]
}

/// Result of the Lyapunov-stability sufficient condition L·sinθ < 6c²/g.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityCheck<T: Scalar> {
    pub ok: bool,
    /// 6c²/g − L·sinθ [m].
    pub margin: T,
}

/// Evaluates the sufficient condition for Lyapunov stability of the
/// variable-mean-pressure dynamics using the frozen speed of sound.
pub fn check_stability_condition<T: Scalar>(params: &PipeParams<T>) -> StabilityCheck<T> {
    let threshold =
        lit::<T>(6.0) * params.gas_state.speed_of_sound_sq / gravity::<T>();
    let rise = params.geometry.length * params.geometry.inclination_sin;
    StabilityCheck {
        ok: rise < threshold,
        margin: threshold - rise,
    }
}

/// Conservative variant of [`check_stability_condition`] using the smallest
/// speed of sound over a pressure range (the worst case for the threshold).
pub fn check_stability_condition_worst_case<T: Scalar>(
    params: &PipeParams<T>,
    p_low: T,
    p_high: T,
) -> Result<StabilityCheck<T>> {
    if !(p_low > T::zero() && p_high >= p_low) {
        return Err(Error::Scenario(
            "worst-case stability check needs 0 < p_low <= p_high".into(),
        ));
    }
    let gas = &params.gas;
    let mut min_c2 = T::max_value().unwrap_or(T::one());
    let n = 64usize;
    for i in 0..=n {
        let p = p_low + (p_high - p_low) * lit(i as f64 / n as f64);
        let z = crate::gas::papay_compressibility(p, gas.temperature, gas)?;
        min_c2 = min_c2.min(z * gas.specific_gas_constant * gas.temperature);
    }
    let threshold = lit::<T>(6.0) * min_c2 / gravity::<T>();
    let rise = params.geometry.length * params.geometry.inclination_sin;
    Ok(StabilityCheck {
        ok: rise < threshold,
        margin: threshold - rise,
    })
}

/// Per-pipe stability diagnostics at one operating state.
#[derive(Debug, Clone)]
pub struct StabilityReport<T: Scalar> {
    /// Mean-pressure weights at the state.
    pub k_left: T,
    pub k_right: T,
    /// Gravity factor φ = g·L·sinθ/c².
    pub phi: T,
    /// Resistive coefficient at the state.
    pub resistive: T,
    /// Eigenvalues of the variable-mean-pressure state matrix.
    pub eigenvalues: [Complex<T>; 3],
    /// Sufficient condition L·sinθ < 6c²/g and its margin.
    pub condition: StabilityCheck<T>,
    /// Equilibrium-independent passivity applies (zero inclination).
    pub equilibrium_independent: bool,
}

/// Builds the stability diagnostics of one pipe at a state.
pub fn stability_report<T: Scalar>(
    params: &PipeParams<T>,
    state: &PipelineState<T>,
) -> Result<StabilityReport<T>> {
    let (k_left, k_right) = pressure_weights(state.p_left, state.p_right)?;
    let pm = mean_pressure(state.p_left, state.p_right)?;
    let resistive = resistive_coefficient(params, state.flow_middle, pm)?;
    let phi = params.gravity_factor();
    Ok(StabilityReport {
        k_left,
        k_right,
        phi,
        resistive,
        eigenvalues: eigenvalues_variable_pm(resistive, phi, k_left, k_right),
        condition: check_stability_condition(params),
        equilibrium_independent: params.geometry.inclination_sin == T::zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::friction::PipeGeometry;
    use crate::gas::{freeze_gas_state, FrozenGasState, GasProperties};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(incl_sin: f64) -> PipeParams<f64> {
        let gas = GasProperties::natural_gas();
        let gs = freeze_gas_state(&gas, 50.0e5).unwrap();
        let geom = PipeGeometry::new(80.0e3, 0.6, 0.012e-3, 0.98, incl_sin).unwrap();
        PipeParams::new(geom, gas, gs)
    }

    #[test]
    fn weights_symmetric_and_hand_values() {
        let (kl, kr) = pressure_weights(5.0e5, 5.0e5).unwrap();
        assert_eq!(kl, 0.5);
        assert_eq!(kr, 0.5);
        let (kl, kr) = pressure_weights(2.0, 1.0).unwrap();
        assert_relative_eq!(kl, 5.0 / 9.0, max_relative = 1e-15);
        assert_relative_eq!(kr, 4.0 / 9.0, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn weights_reconstruct_mean_pressure(
            pl in 1.0e4f64..2.0e7,
            pr in 1.0e4f64..2.0e7,
        ) {
            let (kl, kr) = pressure_weights(pl, pr).unwrap();
            prop_assert!(kl > 1.0 / 3.0 && kl < 2.0 / 3.0);
            prop_assert!(kr > 1.0 / 3.0 && kr < 2.0 / 3.0);
            prop_assert!((kl + kr - 1.0).abs() < 1e-14);
            let pm = mean_pressure(pl, pr).unwrap();
            prop_assert!(((kl * pl + kr * pr) - pm).abs() <= 1e-13 * pm);
            // (pr − pl)/(pr + pl) = 3(kr − kl)
            let lhs = (pr - pl) / (pr + pl);
            prop_assert!((lhs - 3.0 * (kr - kl)).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalues_zero_damping_zero_slope() {
        let eig = eigenvalues_variable_pm(0.0, 0.0, 0.5, 0.5);
        assert_eq!(eig[0], Complex::new(0.0, 0.0));
        assert_abs_diff_eq!(eig[1].im, 2.0f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(eig[2].im, -(2.0f64.sqrt()), epsilon = 1e-15);
        assert_eq!(eig[1].re, 0.0);
    }

    #[test]
    fn closed_form_matches_numeric_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..200 {
            let pl: f64 = rng.gen_range(1.0e5..100.0e5);
            let pr: f64 = rng.gen_range(1.0e5..100.0e5);
            let r: f64 = rng.gen_range(0.0..5.0);
            let phi: f64 = rng.gen_range(-3.0..3.0);
            let (kl, kr) = pressure_weights(pl, pr).unwrap();
            let a = Matrix3::new(
                0.0, 0.0, -1.0, //
                0.0, 0.0, 1.0, //
                1.0 - phi * kl,
                -1.0 - phi * kr,
                -r,
            );
            let numeric = DMatrix::from_iterator(3, 3, a.iter().copied()).complex_eigenvalues();
            let closed = eigenvalues_variable_pm(r, phi, kl, kr);
            // match by minimal total distance over all assignments
            let mut best = f64::INFINITY;
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            for perm in perms {
                let total: f64 = (0..3)
                    .map(|i| (closed[i] - numeric[perm[i]]).norm())
                    .sum();
                best = best.min(total);
            }
            assert!(best < 1e-10, "eigenvalue mismatch: {best}");
        }
    }

    #[test]
    fn negative_real_parts_inside_condition_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let mut checked = 0usize;
        for _ in 0..500 {
            let pl: f64 = rng.gen_range(1.0e5..100.0e5);
            let pr: f64 = rng.gen_range(1.0e5..100.0e5);
            let (kl, kr) = pressure_weights(pl, pr).unwrap();
            let r: f64 = rng.gen_range(0.0..10.0);
            let phi: f64 = rng.gen_range(-6.0..6.0);
            if (phi * (kr - kl)).abs() < 2.0 {
                let eig = eigenvalues_variable_pm(r, phi, kl, kr);
                assert!(eig[1].re <= 1e-14);
                assert!(eig[2].re <= 1e-14);
                checked += 1;
            }
        }
        assert!(checked > 400);
    }

    #[test]
    fn state_matrix_collapses_to_phs_structure_when_level() {
        // with φ = 0, A equals J − R(x) of the pipeline form
        let p = params(0.0);
        let state = PipelineState::new(61.0e5, 45.0e5, 80.0);
        let a = variable_pm_state_matrix(&p, &state).unwrap();
        let pm = mean_pressure(state.p_left, state.p_right).unwrap();
        let r = resistive_coefficient(&p, state.flow_middle, pm).unwrap();
        let expected = Matrix3::new(0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 1.0, -1.0, -r);
        assert_eq!(a, expected);
    }

    #[test]
    fn state_matrix_reproduces_live_pm_rhs() {
        // Q⁻¹·cȯ = A·co + (qnl, −qnr, 0): ties the matrix to the lumped ODEs
        let p = params(0.0125);
        let phs = crate::pipeline::build_pipeline_phs(p, 50.0e5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for _ in 0..200 {
            let state = PipelineState::new(
                rng.gen_range(10e5..90e5),
                rng.gen_range(10e5..90e5),
                rng.gen_range(-200.0..200.0),
            );
            let qnl: f64 = rng.gen_range(-100.0..100.0);
            let qnr: f64 = rng.gen_range(-100.0..100.0);
            let a = variable_pm_state_matrix(&p, &state).unwrap();
            let co = nalgebra::Vector3::new(state.p_left, state.p_right, state.flow_middle);
            let forcing = nalgebra::Vector3::new(qnl, -qnr, 0.0);
            let qdot_weighted = a * co + forcing;
            let q = phs.q_matrix();
            let expected = phs.rhs_live_pm(&state, [qnl, -qnr]).unwrap();
            for i in 0..3 {
                assert_relative_eq!(
                    q[(i, i)] * qdot_weighted[i],
                    expected[i],
                    max_relative = 1e-12,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn stability_threshold_footnote_value() {
        // c = 300 m/s, g = 9.805 m/s² → 6c²/g ≈ 55.07 km
        let gas = GasProperties::natural_gas();
        let gs = FrozenGasState {
            compressibility: 1.0,
            speed_of_sound_sq: 300.0 * 300.0,
            standard_density: 0.7,
            reference_pressure: 50.0e5,
        };
        let geom = PipeGeometry::level(80.0e3, 0.6, 0.0, 1.0).unwrap();
        let check = check_stability_condition(&PipeParams::new(geom, gas, gs));
        assert!(check.ok);
        assert_relative_eq!(check.margin, 55_073.94, max_relative = 2e-7);

        // a synthetic pipe with a 60 km rise fails the condition
        let steep = PipeGeometry::new(100.0e3, 0.6, 0.0, 1.0, 0.6).unwrap();
        let check = check_stability_condition(&PipeParams::new(steep, gas, gs));
        assert!(!check.ok);
        assert!(check.margin < 0.0);
    }

    #[test]
    fn worst_case_threshold_is_tighter() {
        let p = params(0.0125);
        let plain = check_stability_condition(&p);
        let worst = check_stability_condition_worst_case(&p, 1.0e5, 80.0e5).unwrap();
        assert!(worst.margin <= plain.margin * 1.01);
        assert!(worst.ok);
    }

    #[test]
    fn ofp_index_equals_laminar_damping_and_bounds_sampled_damping() {
        let p = params(0.0);
        let index = ofp_index(&p, 50.0e5).unwrap();
        let lam = laminar_damping(&p.geometry, &p.gas_state, &p.gas, 50.0e5).unwrap();
        assert_eq!(index, lam);
        // 1/pM scaling
        let index2 = ofp_index(&p, 100.0e5).unwrap();
        assert_relative_eq!(index2, index / 2.0, max_relative = 1e-15);
        // lower bound over a [0, 200] m³/s grid
        let margin = ofp_bound_margin(&p, 50.0e5, 200.0, 400).unwrap();
        assert!(margin >= 0.0);
    }

    #[test]
    fn stability_report_contents() {
        let p = params(0.0125);
        let report = stability_report(&p, &PipelineState::new(52.0e5, 48.0e5, 60.0)).unwrap();
        assert!(report.condition.ok);
        assert!(!report.equilibrium_independent);
        assert!(report.k_left > 1.0 / 3.0 && report.k_left < 2.0 / 3.0);
        assert_eq!(report.eigenvalues[0], Complex::new(0.0, 0.0));
        let level = stability_report(&params(0.0), &PipelineState::new(52.0e5, 48.0e5, 60.0))
            .unwrap();
        assert!(level.equilibrium_independent);
        assert_eq!(level.phi, 0.0);
    }
}
