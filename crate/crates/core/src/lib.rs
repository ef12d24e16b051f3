//! Preconditioned online gradient descent for iterative learning control
//! under multiplicative model mismatch, with dynamic, static and
//! iteration-invariant regret accounting.

pub mod controller;
pub mod cost;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod regret;
pub mod rng;

pub use error::{Error, Result};
