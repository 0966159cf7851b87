//! Finite-dimensional reduction toolkit for the prescribed scalar curvature
//! problem on the half-sphere with Neumann boundary condition.

pub mod bubbles;
pub mod census;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod landscape;
pub mod quadrature;
pub mod reduced;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{
    field_min_max, geodesic_distance, stereographic_to_halfspace, BoundarySpherePoint, FieldSpec, FieldTerm,
    HalfSpacePoint, ScalarField, SpherePoint,
};
