//! Simulation and verification engine for priority constructions of c.e. sets.
//!
//! The crate executes three tree/finite-injury constructions against scripted
//! opponents and checks their injury, quota and mind-change bounds on the
//! resulting event traces.

pub mod approx;
pub mod bounds;
pub mod campaign;
pub mod collapse;
pub mod functional;
pub mod low_alpha;
pub mod ordinal;
pub mod rng;
pub mod scenario;
pub mod trace;
pub mod tree;
pub mod tree_construction;
pub mod verify;

pub use ordinal::{CnfOrdinal, OrderType};
