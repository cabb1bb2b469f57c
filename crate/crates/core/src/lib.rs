pub mod error;
pub mod estimation;
pub mod inference;
pub mod io;
pub mod models;
pub mod ode;
pub mod surrogate;

pub use error::{Error, ErrorKind, Result};
