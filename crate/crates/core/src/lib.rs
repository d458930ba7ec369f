//! Critical sets of `F(u) = -u'' + f(u)` with Dirichlet conditions on
//! `[0, pi]`, located and certified through Prüfer angles.
//!
//! A function `u` is critical when the linearization `-v'' + f'(u) v` has a
//! kernel; the component `C_m` collects those whose kernel function has `m`
//! half-oscillations, i.e. `omega_m(u, pi) = m pi`.

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contraction;
pub mod critical;
pub mod error;
pub mod funcspace;
pub mod nonlinearity;
pub mod pruefer;
pub mod solder;

pub use contraction::{
    build_anchor, build_loop, contract, ContractionFailure, ContractionParams, HomotopyTrace,
    LoopFamily, LoopOptions,
};
pub use critical::{
    find_in_cm, membership, project, project_with_step, residual, MembershipResult,
};
pub use error::{Error, Result};
pub use funcspace::{Grid, GridFunction, NormKind};
pub use nonlinearity::{analyze, critical_abscissa, parse, Nonlinearity, TamenessReport};
pub use pruefer::{d_omega, omega_local, omega_m, shoot, zero_count, AngleTrajectory, Direction};
pub use solder::{reconstruct_u, xi_solder, AngleProfile, Segment, SolderSpec};
