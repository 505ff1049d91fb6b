//! File formats, experiment configuration and the command line around
//! `roilink-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod ingest;
pub mod report;
pub mod runlog;
