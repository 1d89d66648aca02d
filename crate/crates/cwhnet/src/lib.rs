//! Scenario files, output formats, parallel drivers and the `cwhnet` command line
//! on top of `cwhnet-core`.

pub mod cli;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod scenario;
pub mod verify;

pub use error::{exit, AppError, AppResult};
pub use scenario::Scenario;
