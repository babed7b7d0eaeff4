//! Reynolds number and friction-factor closures: Hagen-Poiseuille for
//! laminar flow, Hofer and Colebrook-White for turbulent flow, the
//! efficiency correction and the closed-form laminar damping coefficient.

use crate::error::{Error, Result};
use crate::gas::{FrozenGasState, GasProperties};
use crate::scalar::{as_f64, lit, Scalar, LAMINAR_TURBULENT_REYNOLDS};

/// Geometry and friction data of one pipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeGeometry<T: Scalar> {
    /// Length L [m].
    pub length: T,
    /// Inner diameter D [m].
    pub diameter: T,
    /// Surface roughness k [m].
    pub roughness: T,
    /// Friction efficiency factor η ∈ (0, 1].
    pub efficiency: T,
    /// Sine of the inclination angle, (elevation rise)/L ∈ [−1, 1].
    pub inclination_sin: T,
    /// Cross section A = π·D²/4 [m²]; derived, kept consistent by construction.
    pub cross_section: T,
}

impl<T: Scalar> PipeGeometry<T> {
    pub fn new(length: T, diameter: T, roughness: T, efficiency: T, inclination_sin: T) -> Result<Self> {
        if !(length > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "length",
                requirement: "strictly positive",
                value: as_f64(length),
            });
        }
        if !(diameter > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "diameter",
                requirement: "strictly positive",
                value: as_f64(diameter),
            });
        }
        if roughness < T::zero() {
            return Err(Error::InvalidParameter {
                name: "roughness",
                requirement: "non-negative",
                value: as_f64(roughness),
            });
        }
        if !(efficiency > T::zero() && efficiency <= T::one()) {
            return Err(Error::InvalidParameter {
                name: "efficiency",
                requirement: "within (0, 1]",
                value: as_f64(efficiency),
            });
        }
        if inclination_sin < -T::one() || inclination_sin > T::one() {
            return Err(Error::InvalidParameter {
                name: "inclination_sin",
                requirement: "within [-1, 1]",
                value: as_f64(inclination_sin),
            });
        }
        let cross_section = T::pi() * diameter * diameter / lit(4.0);
        Ok(Self {
            length,
            diameter,
            roughness,
            efficiency,
            inclination_sin,
            cross_section,
        })
    }

    /// Level pipe (zero inclination).
    pub fn level(length: T, diameter: T, roughness: T, efficiency: T) -> Result<Self> {
        Self::new(length, diameter, roughness, efficiency, T::zero())
    }
}

/// Reynolds number Re = ρn·|qn|·D / (μ·A) of a standard volumetric flow.
pub fn reynolds<T: Scalar>(
    standard_flow_abs: T,
    geometry: &PipeGeometry<T>,
    gas_state: &FrozenGasState<T>,
    gas: &GasProperties<T>,
) -> Result<T> {
    if standard_flow_abs < T::zero() {
        return Err(Error::InvalidParameter {
            name: "standard_flow_abs",
            requirement: "non-negative",
            value: as_f64(standard_flow_abs),
        });
    }
    Ok(gas_state.standard_density * standard_flow_abs * geometry.diameter
        / (gas.dynamic_viscosity * geometry.cross_section))
}

/// Hagen-Poiseuille friction factor f = 64/Re for laminar flow.
///
/// Re = 0 is rejected; resting flow is handled by the closed-form damping
/// coefficient instead (see [`laminar_damping`]).
pub fn friction_laminar<T: Scalar>(reynolds_number: T) -> Result<T> {
    if !(reynolds_number > T::zero()) {
        return Err(Error::FrictionDomain {
            context: "laminar friction",
            reynolds: as_f64(reynolds_number),
            requirement: "strictly positive",
        });
    }
    Ok(lit::<T>(64.0) / reynolds_number)
}

/// Hofer's explicit approximation of the turbulent friction factor.
pub fn friction_turbulent_hofer<T: Scalar>(
    reynolds_number: T,
    geometry: &PipeGeometry<T>,
) -> Result<T> {
    if reynolds_number < lit(LAMINAR_TURBULENT_REYNOLDS) {
        return Err(Error::FrictionDomain {
            context: "Hofer friction",
            reynolds: as_f64(reynolds_number),
            requirement: "at least 2300",
        });
    }
    let inner = lit::<T>(4.518) / reynolds_number * (reynolds_number / lit(7.0)).log10()
        + geometry.roughness / (lit::<T>(3.71) * geometry.diameter);
    let f = (lit::<T>(2.0) * inner.log10()).powi(-2);
    Ok(f)
}

/// Solves the implicit Colebrook-White equation
/// 1/√f = −2·log10(2.51/(Re·√f) + k/(3.71·D))
/// by damped fixed-point iteration on x = 1/√f, seeded by Hofer's formula.
///
/// Converges when the residual of the equation drops below `tol`; capped at
/// 100 iterations.
pub fn friction_colebrook_white<T: Scalar>(
    reynolds_number: T,
    geometry: &PipeGeometry<T>,
    tol: T,
) -> Result<T> {
    if reynolds_number < lit(LAMINAR_TURBULENT_REYNOLDS) {
        return Err(Error::FrictionDomain {
            context: "Colebrook-White friction",
            reynolds: as_f64(reynolds_number),
            requirement: "at least 2300",
        });
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "tol",
            requirement: "strictly positive",
            value: as_f64(tol),
        });
    }
    let relative_roughness = geometry.roughness / (lit::<T>(3.71) * geometry.diameter);
    let map = |x: T| -> T { -lit::<T>(2.0) * (lit::<T>(2.51) * x / reynolds_number + relative_roughness).log10() };

    let seed = friction_turbulent_hofer(reynolds_number, geometry)?;
    let mut x = T::one() / seed.sqrt();
    let mut residual = (x - map(x)).abs();
    const MAX_ITERATIONS: usize = 100;
    for _ in 0..MAX_ITERATIONS {
        if residual < tol {
            return Ok(T::one() / (x * x));
        }
        let mut next = map(x);
        let mut next_residual = (next - map(next)).abs();
        // The map is a strong contraction here; halve the step if it is not.
        if next_residual > residual {
            next = (x + next) / lit(2.0);
            next_residual = (next - map(next)).abs();
        }
        x = next;
        residual = next_residual;
    }
    if residual < tol {
        return Ok(T::one() / (x * x));
    }
    Err(Error::NonConvergence {
        what: "Colebrook-White fixed point",
        iterations: MAX_ITERATIONS,
        residual: as_f64(residual),
    })
}

/// Effective friction factor f_e = f/η², or the marker telling the damping
/// path to use the closed-form laminar coefficient at rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectiveFriction<T: Scalar> {
    /// f/η² at the given flow.
    Factor(T),
    /// Zero flow: 64/Re is singular, use [`laminar_damping`] instead.
    LaminarClosedForm,
}

/// Effective friction factor of a standard flow magnitude. The turbulent
/// branch uses Hofer's formula; Colebrook-White serves as the test oracle.
pub fn effective_friction<T: Scalar>(
    standard_flow_abs: T,
    geometry: &PipeGeometry<T>,
    gas_state: &FrozenGasState<T>,
    gas: &GasProperties<T>,
) -> Result<EffectiveFriction<T>> {
    let re = reynolds(standard_flow_abs, geometry, gas_state, gas)?;
    if re == T::zero() {
        return Ok(EffectiveFriction::LaminarClosedForm);
    }
    let eta_sq = geometry.efficiency * geometry.efficiency;
    let f = if re < lit(LAMINAR_TURBULENT_REYNOLDS) {
        friction_laminar(re)?
    } else {
        friction_turbulent_hofer(re, geometry)?
    };
    Ok(EffectiveFriction::Factor(f / eta_sq))
}

/// Closed-form laminar resistive coefficient of a pipe,
/// R = 32·μ·ρn·c²·L / (η²·D²·A·pM) [Pa·s/m³].
///
/// This is the qn → 0 limit of the general resistive entry under f = 64/Re,
/// finite and independent of the flow; it also serves as the output-feedback
/// passivity index of the flow dynamics.
pub fn laminar_damping<T: Scalar>(
    geometry: &PipeGeometry<T>,
    gas_state: &FrozenGasState<T>,
    gas: &GasProperties<T>,
    mean_pressure: T,
) -> Result<T> {
    if !(mean_pressure > T::zero()) {
        return Err(Error::NonPositivePressure {
            location: "laminar_damping".into(),
            value: as_f64(mean_pressure),
        });
    }
    let eta_sq = geometry.efficiency * geometry.efficiency;
    Ok(
        lit::<T>(32.0) * gas.dynamic_viscosity * gas_state.standard_density
            * gas_state.speed_of_sound_sq
            * geometry.length
            / (eta_sq
                * geometry.diameter
                * geometry.diameter
                * geometry.cross_section
                * mean_pressure),
    )
}
