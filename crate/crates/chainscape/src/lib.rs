//! Std companion to `chainscape-core`: preset catalogue, JSON spec
//! ingestion, DOT/JSON/CSV artifacts, a deterministic parallel graph
//! driver, and the command-line front end.

pub mod cli;
pub mod driver;
pub mod export;
pub mod presets;
pub mod specfile;
