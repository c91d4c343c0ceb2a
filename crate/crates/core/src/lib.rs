//! Energy-preserving implementations of unitary gates powered by a quantum
//! battery: sine battery states, energy-sector dilations, worst-case fidelity,
//! resource bounds and battery recycling across circuits.
//!
//! Everything numeric is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the precision for the common cases.

pub mod bounds;
pub mod circuits;
pub mod dilation;
pub mod error;
pub mod fidelity;
pub mod gates;
pub mod io;
pub mod linalg;
pub mod scalar;
pub mod spectra;

pub use error::{Error, Result};

pub type Battery = spectra::BatterySim<f64>;
pub type Battery32 = spectra::BatterySim<f32>;
pub type Unitary = gates::Gate<f64>;
pub type Unitary32 = gates::Gate<f32>;
pub type Dilation = dilation::SectorDilation<f64>;
pub type Dilation32 = dilation::SectorDilation<f32>;
pub type Channel = dilation::KrausChannel<f64>;
pub type Channel32 = dilation::KrausChannel<f32>;
pub type Joint = dilation::JointState<f64>;
pub type Joint32 = dilation::JointState<f32>;
pub type Fidelity = fidelity::FidelityResult<f64>;
pub type Fidelity32 = fidelity::FidelityResult<f32>;
pub type Circuit = circuits::CircuitSpec<f64>;
pub type Circuit32 = circuits::CircuitSpec<f32>;
