//! Information erasure by spontaneous symmetry breaking on a 2D Ising
//! register.
//!
//! The crate simulates the classical (commuting) and quantum
//! (transverse-field) erasure cycles on a square lattice, provides an exact
//! open-system oracle for tiny registers, and turns trajectory ensembles into
//! magnetisation statistics, switching times, work ledgers and erasure
//! actions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod estimators;
pub mod glauber;
pub mod lattice;
pub mod oracle;
pub mod runner;
pub mod schedule;
pub mod seeding;
pub mod sqa;
pub mod thermo;
pub mod units;

pub use error::{Error, Result};
