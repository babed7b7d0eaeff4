//! Gas property closures: real gas law, Papay compressibility, speed of
//! sound and standard-condition flow conversions.
//!
//! All quantities are SI (Pa, K, kg, m, s). Unit conversions belong at the
//! I/O boundary, not here.

use crate::error::{Error, Result};
use crate::scalar::{as_f64, lit, Scalar};

/// Constants of the working gas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasProperties<T: Scalar> {
    /// Specific gas constant R [J/(kg·K)].
    pub specific_gas_constant: T,
    /// Dynamic viscosity μ [kg/(m·s)].
    pub dynamic_viscosity: T,
    /// Critical pressure [Pa].
    pub critical_pressure: T,
    /// Critical temperature [K].
    pub critical_temperature: T,
    /// Standard (normal) pressure [Pa].
    pub standard_pressure: T,
    /// Standard (normal) temperature [K].
    pub standard_temperature: T,
    /// Operating temperature of the isothermal model [K].
    pub temperature: T,
}

impl<T: Scalar> GasProperties<T> {
    /// Validates and builds a gas description.
    ///
    /// The operating temperature is restricted to [200, 400] K, the range in
    /// which the isothermal closures are meaningful.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        specific_gas_constant: T,
        dynamic_viscosity: T,
        critical_pressure: T,
        critical_temperature: T,
        standard_pressure: T,
        standard_temperature: T,
        temperature: T,
    ) -> Result<Self> {
        let positive = [
            ("specific_gas_constant", specific_gas_constant),
            ("dynamic_viscosity", dynamic_viscosity),
            ("critical_pressure", critical_pressure),
            ("critical_temperature", critical_temperature),
            ("standard_pressure", standard_pressure),
            ("standard_temperature", standard_temperature),
            ("temperature", temperature),
        ];
        for (name, value) in positive {
            if !(value > T::zero()) {
                return Err(Error::InvalidParameter {
                    name,
                    requirement: "strictly positive",
                    value: as_f64(value),
                });
            }
        }
        if temperature < lit(200.0) || temperature > lit(400.0) {
            return Err(Error::InvalidParameter {
                name: "temperature",
                requirement: "within [200, 400] K",
                value: as_f64(temperature),
            });
        }
        Ok(Self {
            specific_gas_constant,
            dynamic_viscosity,
            critical_pressure,
            critical_temperature,
            standard_pressure,
            standard_temperature,
            temperature,
        })
    }

    /// Natural gas as used by the bundled benchmark scenario.
    pub fn natural_gas() -> Self {
        Self::new(
            lit(518.28),
            lit(1.0e-5),
            lit(46.5e5),
            lit(190.55),
            lit(1.01325e5),
            lit(273.15),
            lit(278.0),
        )
        .expect("default gas constants are valid")
    }
}

/// Gas state frozen for one scenario: constant compressibility and speed of
/// sound, plus the standard density used by flow conversions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenGasState<T: Scalar> {
    /// Compressibility factor Z [-] evaluated at `reference_pressure`.
    pub compressibility: T,
    /// Squared isothermal speed of sound c² = Z·R·T [m²/s²].
    pub speed_of_sound_sq: T,
    /// Standard density ρn = pn / (Z(pn, Tn)·R·Tn) [kg/m³].
    pub standard_density: T,
    /// Pressure at which Z was frozen [Pa].
    pub reference_pressure: T,
}

impl<T: Scalar> FrozenGasState<T> {
    /// Speed of sound c [m/s].
    pub fn speed_of_sound(&self) -> T {
        self.speed_of_sound_sq.sqrt()
    }

    /// Density at a given pressure through the frozen real gas law ρ = p/c².
    pub fn density_at(&self, pressure: T) -> Result<T> {
        if !(pressure > T::zero()) {
            return Err(Error::NonPositivePressure {
                location: "density_at".into(),
                value: as_f64(pressure),
            });
        }
        Ok(pressure / self.speed_of_sound_sq)
    }

    /// Mass flow rate M = ρn·qn [kg/s] from a standard volumetric rate.
    pub fn mass_flow_from_standard(&self, standard_flow: T) -> T {
        self.standard_density * standard_flow
    }

    /// Standard volumetric rate qn = M/ρn [m³/s] from a mass flow rate.
    pub fn standard_flow_from_mass(&self, mass_flow: T) -> T {
        mass_flow / self.standard_density
    }

    /// Ideal-gas state (Z ≡ 1 at every condition), intended for tests and
    /// cross-checks where the compressibility correction must vanish.
    pub fn ideal_gas(gas: &GasProperties<T>) -> Self {
        Self {
            compressibility: T::one(),
            speed_of_sound_sq: gas.specific_gas_constant * gas.temperature,
            standard_density: gas.standard_pressure
                / (gas.specific_gas_constant * gas.standard_temperature),
            reference_pressure: gas.standard_pressure,
        }
    }
}

/// Papay approximation of the compressibility factor,
/// Z = 1 − 3.52·(p/pc)·e^(−2.26·T/Tc) + 0.274·(p/pc)²·e^(−1.878·T/Tc).
///
/// Valid for natural gas up to roughly 150 bar; a non-positive result is
/// reported as a range violation.
pub fn papay_compressibility<T: Scalar>(
    pressure: T,
    temperature: T,
    gas: &GasProperties<T>,
) -> Result<T> {
    if pressure < T::zero() {
        return Err(Error::InvalidParameter {
            name: "pressure",
            requirement: "non-negative",
            value: as_f64(pressure),
        });
    }
    if !(temperature > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "temperature",
            requirement: "strictly positive",
            value: as_f64(temperature),
        });
    }
    let reduced_p = pressure / gas.critical_pressure;
    let reduced_t = temperature / gas.critical_temperature;
    let z = T::one() - lit::<T>(3.52) * reduced_p * (lit::<T>(-2.26) * reduced_t).exp()
        + lit::<T>(0.274) * reduced_p * reduced_p * (lit::<T>(-1.878) * reduced_t).exp();
    if !(z > T::zero()) {
        return Err(Error::CompressibilityOutOfRange {
            pressure: as_f64(pressure),
            compressibility: as_f64(z),
        });
    }
    Ok(z)
}

/// Freezes Z, c² and ρn for a scenario at the reference pressure.
///
/// Z is evaluated at the operating temperature; the standard density uses Z
/// at standard conditions, since it is a property of those conditions.
pub fn freeze_gas_state<T: Scalar>(gas: &GasProperties<T>, p_ref: T) -> Result<FrozenGasState<T>> {
    if !(p_ref > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "p_ref",
            requirement: "strictly positive",
            value: as_f64(p_ref),
        });
    }
    let z = papay_compressibility(p_ref, gas.temperature, gas)?;
    if z > lit(1.2) {
        return Err(Error::CompressibilityOutOfRange {
            pressure: as_f64(p_ref),
            compressibility: as_f64(z),
        });
    }
    let z_standard = papay_compressibility(gas.standard_pressure, gas.standard_temperature, gas)?;
    let speed_of_sound_sq = z * gas.specific_gas_constant * gas.temperature;
    let standard_density = gas.standard_pressure
        / (z_standard * gas.specific_gas_constant * gas.standard_temperature);
    Ok(FrozenGasState {
        compressibility: z,
        speed_of_sound_sq,
        standard_density,
        reference_pressure: p_ref,
    })
}

/// One flow expressed in all three equivalent rates, M = ρ·q = ρn·qn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRates<T: Scalar> {
    /// Mass flow rate M [kg/s].
    pub mass: T,
    /// Volumetric rate q at the local (ρ) condition [m³/s].
    pub volumetric: T,
    /// Volumetric rate qn at standard conditions [m³/s].
    pub standard: T,
}

fn check_density<T: Scalar>(rho: T) -> Result<()> {
    if !(rho > T::zero()) {
        return Err(Error::NonPositiveDensity { value: as_f64(rho) });
    }
    Ok(())
}

/// All representations of a flow given its standard volumetric rate.
pub fn flow_from_standard<T: Scalar>(standard: T, rho: T, rho_n: T) -> Result<FlowRates<T>> {
    check_density(rho)?;
    check_density(rho_n)?;
    let mass = rho_n * standard;
    Ok(FlowRates {
        mass,
        volumetric: mass / rho,
        standard,
    })
}

/// All representations of a flow given its mass rate.
pub fn flow_from_mass<T: Scalar>(mass: T, rho: T, rho_n: T) -> Result<FlowRates<T>> {
    check_density(rho)?;
    check_density(rho_n)?;
    Ok(FlowRates {
        mass,
        volumetric: mass / rho,
        standard: mass / rho_n,
    })
}

/// All representations of a flow given its local volumetric rate.
pub fn flow_from_volumetric<T: Scalar>(volumetric: T, rho: T, rho_n: T) -> Result<FlowRates<T>> {
    check_density(rho)?;
    check_density(rho_n)?;
    let mass = rho * volumetric;
    Ok(FlowRates {
        mass,
        volumetric,
        standard: mass / rho_n,
    })
}
