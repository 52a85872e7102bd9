#![allow(clippy::needless_range_loop)]

//! Contact and cosymplectic phase-space structures for a relativistic test
//! particle, Killing multivectors and the hidden symmetries they generate.

pub mod dynamics;
pub mod electromagnetic;
pub mod error;
pub mod geometry;
pub mod multivector;
pub mod phase;
pub mod report;
pub mod spacetime;
pub mod suite;
pub mod symmetry;

pub use error::{Error, Result};
