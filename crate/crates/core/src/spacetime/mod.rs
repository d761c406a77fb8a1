//! The tower TM -> M x M -> M.

pub mod family;
pub mod geometry;

pub use family::{FiberedProductFamily, PairFn, TmFn, TmFunction, TowerConfig};
pub use geometry::{phi, phi_inverse, BaseGeometry, Flat, HyperbolicDisk, UserGeometry};
