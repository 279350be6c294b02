//! Benchmark harness for the PR-MISO alignment laboratory: the `prmiso`
//! binary plus the file formats ([`io`]) and the common-random-number sweep
//! engine ([`sweep`]) it is built from.

pub mod cli;
pub mod io;
pub mod sweep;

pub use cli::cli_main;
