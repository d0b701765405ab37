pub mod back;
pub mod bulge;
pub mod cli;
pub mod error;
pub mod io;
pub mod matgen;
pub mod matrix;
pub mod pipeline;
pub mod sbr;
pub mod tridiag;
pub mod verify;

pub use error::{EvdError, Result};
