//! Mass-lumped tetrahedral finite elements with dedicated stiffness quadrature.

pub mod cli;
pub mod dispersion;
pub mod element_id;
pub mod kernels;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod poly;
pub mod quadrature;
pub mod refelement;
pub mod refgeom;
pub mod solver;

pub use element_id::ElementId;
pub use error::{Error, Result};
