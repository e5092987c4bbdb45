pub mod basis;
pub mod cli;
pub mod deploy;
pub mod error;
pub mod gamm;
pub mod ingest;
pub mod linalg;
pub mod raster;
pub mod synthetic;
pub mod validation;

pub use error::{Error, Result};
