//! Library half of the `bkd` command: point files, verification against the
//! linear scan, benchmark tables and divergence comparisons.

pub mod bench;
pub mod compare;
pub mod error;
pub mod pointfile;
pub mod prep;
pub mod verify;

pub use error::{CliError, Result};
