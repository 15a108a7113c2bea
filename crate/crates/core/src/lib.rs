//! Complex-valued sliding mode control (cSMC) of a three-phase voltage
//! source inverter.
//!
//! The crate covers the control law itself ([`smc`]), the three sampled
//! switching implementations that turn the continuous complex control
//! action into bridge states ([`modulation`]), an exact switched-linear
//! model of the inverter with LC filter ([`plant`]), the sampled closed loop
//! ([`sim`]) and post-run metrics ([`analysis`]).

pub mod analysis;
pub mod modulation;
pub mod plant;
pub mod sim;
pub mod smc;
pub mod transform;

mod error;

pub use error::Error;
pub use transform::{ComplexSignal, ThreePhaseSample, TransformScale};
