//! Differentiable forward model for 3D photoelasticity.
//!
//! The crate renders stress-induced birefringence through a simulated
//! multi-axis polariscope and provides hand-written adjoints so that a
//! stress tensor field can be recovered from intensity images by gradient
//! descent. Everything here is pure computation: no IO, no threads. File
//! formats, parallel execution and the command line live in the
//! `stresstomo` crate.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled; transcendental functions then come from `libm`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adjoint;
pub mod error;
pub mod estimation;
pub mod exec;
pub mod math;
pub mod polarization;
pub mod renderer;
pub mod rng;
pub mod stress;
pub mod tomo;

pub use error::{Error, Result};
pub use math::{Mat3, Vec3};
