pub mod corpus;
pub mod decoder;
pub mod digest;
pub mod dimension;
pub mod error;
pub mod gkm;
pub mod linalg;
pub mod mapfile;
pub mod som;
pub mod synth;

pub use error::{Error, Result};
