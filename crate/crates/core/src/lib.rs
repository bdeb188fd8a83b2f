pub mod elliptic;
pub mod error;
pub mod export;
pub mod isograph;
pub mod limitshape;
pub mod weights;
pub mod green;
pub mod sandpile;
mod quad;

pub use error::{Error, Result};
