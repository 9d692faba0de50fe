//! Outlier detection in contingency tables through minimal patterns.
//!
//! Cells of a table are Poisson counts under a loglinear model. Detectors fit
//! the model on *minimal patterns* (smallest majority subsets of cells whose
//! design submatrix has full rank) and flag cells that fall into exact Poisson
//! α-outlier regions of the fitted means.

pub mod casestudy;
pub mod detect;
pub mod error;
pub mod estimate;
pub mod lad;
pub mod model;
pub mod patterns;
pub mod region;
pub mod rng;
pub mod simulate;
pub mod table;

pub use crate::detect::{DetectionReport, Method};
pub use crate::error::{Error, Result};
pub use crate::estimate::{Estimator, FitResult, TrimSpec, TrimVariant};
pub use crate::model::{build_design, Coding, DesignMatrix, ModelSpec};
pub use crate::patterns::{CellSet, PatternCatalog};
pub use crate::region::{outlier_region, OutlierRegion};
pub use crate::table::{ContingencyTable, TableFormat};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
