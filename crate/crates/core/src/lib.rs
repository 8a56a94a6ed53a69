pub mod cli;
pub mod error;
pub mod field;
pub mod geom;
pub mod seed;
pub mod nodal;
pub mod oracle;
pub mod spectral;
pub mod stats;
pub mod tangency;

pub use error::{Error, Result};
