//! Time-bin matrix product state simulator for a pulsed two-level emitter in
//! front of a mirror (coherent time-delayed quantum feedback), with photon
//! counting statistics `p(0)..p(3)` of the emitted field.

pub mod error;
pub mod evolve;
pub mod model;
pub mod mps;
pub mod observables;
pub mod oracles;
mod par;
pub mod sweep;

pub use error::{Error, Result};
