//! Signed decompositions for the polyharmonic Dirichlet problem on grid domains.

pub mod ball;
pub mod discretization;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod green;
pub mod linalg;
pub mod norms;
pub mod pipeline;
pub mod report;
pub mod signed;
pub mod verify;

pub use error::{Error, Result};
