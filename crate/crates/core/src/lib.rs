//! Simulator for three-step NOON-state preparation in two microwave cavities
//! coupled to a five-level qudit.
//!
//! Internal units are µs and rad/µs. Configuration values in MHz/GHz are
//! converted once through [`units`].

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod hamiltonians;
pub mod hilbert;
pub mod linalg;
pub mod protocol;
pub mod pulses;
pub mod sweeps;
pub mod units;

pub use error::{Error, Result};
