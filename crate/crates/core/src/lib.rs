//! Exact finite-model workbench for conditional expectations, lower
//! densities and liftings on skew products.
//!
//! Every space is a finite ground set whose points are indices. A
//! σ-algebra is stored as its atom partition, measures are exact rational
//! point weights, and densities and liftings are stored as the filter
//! class each point selects. All identities are checked with exact
//! arithmetic, so a failed check is a genuine counterexample.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod condexp;
pub mod densities;
pub mod error;
pub mod finspace;
pub mod generate;
pub mod process;
pub mod prodlift;
pub mod product;
pub mod rational;
pub mod set;

pub use error::{Error, Result};
pub use finspace::{CompleteSpace, EnvelopeRule, FinMeasure, SigmaAlg};
pub use rational::Rational;
pub use set::{GroundSet, MSet};
