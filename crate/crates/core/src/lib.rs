pub mod acceptance;
pub mod analysis;
pub mod cg;
pub mod cholesky;
pub mod electrostatics;
pub mod error;
pub mod fem;
pub mod forward;
pub mod field;
pub mod grid;
pub mod io;
pub mod lab;
pub mod mesh;
pub mod recon_power;
pub mod recon_sigma;
pub mod sampler;
pub mod sparse;
pub mod uq;
pub mod wave;

pub use error::{AetError, Result};
pub use field::NodalField;
pub use mesh::{generate_disk_mesh, TriangleMesh};
pub use sparse::SparseSymmetricMatrix;
