//! File formats, run manifests, verification suites and the command-line driver for
//! [`mkv_core`].

pub mod cli;
pub mod formats;
pub mod json;
pub mod manifest;
pub mod suites;
