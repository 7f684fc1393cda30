//! Benchmark instances and their solution-quality metrics.

pub mod circle;
pub mod ocp;
pub mod quadrature;
pub mod reference;

pub use circle::{circle_metrics, make_circle, Circle, CircleMetrics, CircleParams, CIRCLE_X0, X_A, X_B};
pub use ocp::{make_ocp, ocp_metrics, Ocp, OcpMesh, OcpMetrics, TrajectorySample};
pub use reference::{cached_reference_objective, reference_objective, ReferenceError, ReferenceObjective, ReferenceStamp};
