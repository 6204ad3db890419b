pub mod error;
pub mod field;
pub mod harness;
pub mod hilbert;
pub mod mesh;
pub mod operators;
pub mod projection;
pub mod quadrature;
pub mod solutions;
pub mod stability;
pub mod time;

pub use error::{Error, Result};
pub use field::Field;
pub use mesh::{DgSpace, Mesh, Side};
