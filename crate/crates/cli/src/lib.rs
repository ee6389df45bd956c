//! Command-line front end for the `mpo` solvers: curve set documents,
//! trade instruction tables and the subcommands built on them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod document;
pub mod instructions;
pub mod table;

pub use commands::{run, Cli, CliError};
pub use document::{CurveSetDocument, DocumentError};
pub use instructions::InstructionsDocument;
