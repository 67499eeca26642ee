pub mod attention;
pub mod bench;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod linalg;
pub mod model;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
