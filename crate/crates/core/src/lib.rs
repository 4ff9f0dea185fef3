pub mod error;
pub mod config;
pub mod cylinder;
pub mod development;
pub mod exec;
pub mod functional;
pub mod harness;
pub mod heat_kernel;
pub mod limit;
pub mod manifold;
pub mod partition;
pub mod pathfile;
pub mod plot;
pub mod quadrature;
pub mod report;
pub mod stratonovich;

pub use error::{Error, Result};
