//! Library side of the `pack` command line tool.

pub mod filter;
