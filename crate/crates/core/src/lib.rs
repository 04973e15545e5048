//! Fast directional multi-level approximation of Helmholtz-kernel
//! matrix-vector products on 3D point sets.
//!
//! The pipeline is: [`cluster::ClusterTree`] over target and source points,
//! [`directions::DirectionTable`], [`block::BlockTree`], then
//! [`engine::Operator::setup`] followed by [`engine::Operator::matvec`].
//! [`oracle`] provides dense reference evaluation.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`.

pub mod error;
pub mod scalar;
pub mod geometry;
pub mod cluster;
pub mod directions;
pub mod block;
pub mod interpolation;
pub mod coupling;
pub mod engine;
pub mod oracle;
pub mod io;
pub mod bench;

pub use error::{Error, Result};
pub use scalar::Real;
pub use num_complex::Complex;

pub type Point3d = geometry::Point3<f64>;
pub type Point3f = geometry::Point3<f32>;
pub type AxisBoxd = geometry::AxisBox<f64>;
pub type C64 = Complex<f64>;
pub type C32 = Complex<f32>;
pub type ClusterTreed = cluster::ClusterTree<f64>;
pub type DirectionTabled = directions::DirectionTable<f64>;
pub use block::BlockTree;
pub type Operatord = engine::Operator<f64>;
