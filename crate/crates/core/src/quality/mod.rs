//! Measured quality of a finished run against the closed-form limits.

pub mod bounds;
pub mod distance;
pub mod report;
pub mod shape;
pub mod topology;

use thiserror::Error;

pub use bounds::Bounds;
pub use report::{evaluate, Check, EvalInput, EvalOptions, QualityReport};
pub use shape::CellShape;
pub use topology::SurfaceTopology;

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("cell {0} has no interior")]
    DegenerateCell(usize),
    #[error("inradius program failed: {0}")]
    Lp(String),
}
