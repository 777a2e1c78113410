pub mod error;
pub mod field;
pub mod filter;
pub mod huber;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod ops;
pub mod sparse;

pub use error::{Error, Result};
pub use field::{HuberField, ScalarField, TensorField, VectorField, GAMMA_MIN};
pub use ops::Order;
