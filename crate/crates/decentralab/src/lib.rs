//! File formats, artifact writing, reports and the command-line front end for
//! [`decentralab_core`].

pub mod artifact;
pub mod cli;
pub mod error;
pub mod io;
pub mod report;

pub use cli::run;
pub use error::CliError;
