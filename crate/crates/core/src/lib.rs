//! Analytical global placement for heterogeneous FPGAs.
//!
//! Each resource type (LUTL, LUTM-AL, FF, CARRY, DSP, BRAM) is an independent
//! electrostatic field; instances are charges whose potential energy measures
//! density overflow. A nested augmented-Lagrangian loop trades that energy off
//! against timing-weighted wirelength, a clock-region attraction term and
//! carry-chain alignment.

pub mod arch;
pub mod chains;
pub mod clockplan;
pub mod engine;
pub mod error;
pub mod fields;
pub mod legalize;
pub mod timing;
pub mod wirelen;

pub use error::{Error, Result};
