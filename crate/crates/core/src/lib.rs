pub mod boundary;
pub mod correction;
pub mod error;
pub mod matching;
pub mod pipeline;
pub mod rotation;
pub mod separation;
pub mod synthgen;
pub mod volume;

pub use error::{Result, SvlError};
