//! Numerical laboratory for `u_t − Δu + f(u) = 0` with measure initial data.
//!
//! Modules follow the pipeline: classify the absorption term, build scalar flows
//! and radial profiles, run radial parabolic solves, and post-process the
//! resulting fields for their initial trace.

pub mod classifier;
pub mod error;
pub mod expr;
pub mod harness;
pub mod nonlinearity;
pub mod parabolic;
pub mod quadrature;
pub mod radial_profiles;
pub mod scalar_flow;
pub mod tail_table;
pub mod trace;

pub use error::{LabError, Result};
pub use nonlinearity::{parse_nonlinearity, Nonlinearity};
