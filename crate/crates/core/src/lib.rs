pub mod cli;
pub mod error;
pub mod filter;
pub mod harmonics;
pub mod identify;
pub mod io;
pub mod kalman;
pub mod linalg;
pub mod lsce;
pub mod signal;
pub mod sim;
pub mod stabilize;

pub use error::{Error, Result};
