//! Retraction-based random walks on sub-Riemannian manifolds in a single chart.
//!
//! Structures are described by an orthonormal horizontal frame plus a complement
//! frame ([`srgeom`]). On top of that sit affine connections and their
//! predicates ([`connections`]), geodesic and transport integrators
//! ([`geodesics`]), explicit second-order retractions ([`retractions`]) and the
//! stochastic engine ([`walker`]). [`models`] holds the built-in geometries.

pub mod connections;
pub mod domain;
pub mod error;
pub mod field;
pub mod geodesics;
pub mod linalg;
pub mod models;
pub mod retractions;
pub mod srgeom;
pub mod tensor;
pub mod walker;

use nalgebra::DVector;

/// Chart coordinates.
pub type Point = DVector<f64>;
/// Tangent vector in coordinate components.
pub type Tangent = DVector<f64>;

pub use connections::{AffineConnection, PredicateReport, RiemannianMetric};
pub use domain::Domain;
pub use error::{Error, Result};
pub use field::{ScalarField, VectorField};
pub use retractions::Retraction;
pub use srgeom::{Covector, SubRiemannianStructure};
pub use tensor::Tensor3;
