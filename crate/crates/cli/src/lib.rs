//! Library side of the `nmqsd` binary: configuration, subcommands and CSV
//! output. Exposed so tests can drive the pipeline without a subprocess.

pub mod commands;
pub mod config;
pub mod output;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
