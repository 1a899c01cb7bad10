//! Library side of the `confx` command-line tool: configuration, corpus
//! manifests and the benchmark harness.

pub mod bench;
pub mod config;
pub mod manifest;
