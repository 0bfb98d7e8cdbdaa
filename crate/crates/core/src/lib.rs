//! Geometry backbone for two-stage textured 3D asset generation.

pub mod cli;
pub mod kernels;
pub mod lowpoly;
pub mod mesh;
pub mod rng;
pub mod sampling;
pub mod sdf;
pub mod texture;
pub mod views;
