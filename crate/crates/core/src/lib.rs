pub mod arch;
pub mod bench;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod nncore;
pub mod objectives;

pub use error::{Error, Result};
