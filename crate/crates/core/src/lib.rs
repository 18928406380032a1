//! Reduced-order modeling of 2D incompressible flow.
//!
//! A grad-div stabilized Taylor-Hood discretization produces snapshots,
//! proper orthogonal decomposition compresses them, a Galerkin ROM advances
//! the velocity and two reduced systems recover the pressure.

pub mod config;
pub mod container;
pub mod element;
pub mod error;
pub mod fe_space;
pub mod fom;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod pod;
pub mod problems;
pub mod quadrature;
pub mod rom;
pub mod scalar;
pub mod sparse;

pub use error::{Error, Result};
pub use scalar::Real;

pub type MeshF64 = mesh::Mesh<f64>;
pub type MeshF32 = mesh::Mesh<f32>;
pub type QuadRuleF64 = quadrature::TriangleRule<f64>;
