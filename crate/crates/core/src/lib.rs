//! Port-Hamiltonian models of gas pipelines and pipeline networks.
//!
//! The crate builds finite-dimensional port-Hamiltonian systems for single
//! pipes and for whole networks from isothermal lumped-parameter gas
//! dynamics, integrates them under time-varying loads, and provides the
//! structural diagnostics (passivity, energy balance, damping bounds,
//! stability of the variable-mean-pressure feedback) that make these models
//! useful for analysis and control work.
//!
//! All numerics are generic over the scalar type through [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the common `f64` instantiations.

pub mod analysis;
pub mod error;
pub mod friction;
pub mod gas;
pub mod network;
pub mod ode;
pub mod pipeline;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use network::ModelVariant;
pub use ode::Method;
pub use scalar::{Scalar, LAMINAR_TURBULENT_REYNOLDS, STANDARD_GRAVITY};

/// `f64` instantiations of the main model types.
pub type GasProperties = gas::GasProperties<f64>;
pub type FrozenGasState = gas::FrozenGasState<f64>;
pub type PipeGeometry = friction::PipeGeometry<f64>;
pub type PipeParams = pipeline::PipeParams<f64>;
pub type PipelineState = pipeline::PipelineState<f64>;
pub type PipelinePhs = pipeline::PipelinePhs<f64>;
pub type NetworkTopology = network::NetworkTopology<f64>;
pub type NetworkPhs = network::NetworkPhs<f64>;
pub type Scenario = sim::Scenario<f64>;
pub type Trajectory = sim::Trajectory<f64>;
pub type NetworkModel = sim::NetworkModel<f64>;
pub type EnergyReport = analysis::EnergyReport<f64>;
pub type StabilityReport = analysis::StabilityReport<f64>;
