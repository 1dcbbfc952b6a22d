//! Configuration parsing and record serialization for the `svcl` binary.

pub mod config;
pub mod records;
