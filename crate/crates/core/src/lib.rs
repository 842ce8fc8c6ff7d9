#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assign;
pub mod cli;
pub mod cluster;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod partition;
pub mod pipeline;
pub mod preprocess;
pub mod synth;
pub mod unmix;
