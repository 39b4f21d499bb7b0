//! Command-line driver and orchestration layer for the Helmholtz
//! verification toolkit: configuration parsing, coefficient-family
//! construction, file formats, and the end-to-end experiment harness.

pub mod config;
pub mod families;
pub mod harness;
pub mod io;
pub mod run;

pub use config::{parse_config, Command, RunConfig};
pub use run::{run, RunError};
