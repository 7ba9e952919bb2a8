pub mod ingest;
pub mod model;
pub mod vulnscan;
pub mod archive;
pub mod dockerlint;
pub mod iaclint;
pub mod typosquat;
pub mod report;
pub mod cli;
