//! Exact discrete optimal transport and disintegration of measures.
//!
//! Masses are exact rationals throughout; geometry is `f64`. The crate
//! covers Kantorovich plans and Wasserstein distances on finite metric
//! spaces, disintegration of plans into conditional families, transport
//! classes and the class-constrained transport problem, displacement
//! interpolation on Euclidean clouds, and metric measure foliation checks.

pub mod disintegration;
pub mod error;
pub mod foliation;
pub mod interpolation;
pub mod mass;
pub mod measures;
pub mod metric_space;
pub mod parallel;
pub mod solver;
pub mod transport_class;

pub use error::{OtError, Result};
pub use mass::Mass;
pub use measures::{DiscreteMeasure, MeasureOverMeasures, PointMap};
pub use metric_space::{Exponent, FiniteMetricSpace, PointedEuclideanCloud, QuotientSpace, Space};
pub use parallel::Execution;
pub use solver::{CostMatrix, SolveReport, TransportPlan};
