#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons also reject NaN

pub mod datagen;
pub mod dmd;
pub mod error;
pub mod exec;
pub mod grassmann;
pub mod ingest;
pub mod metric;
pub mod numerics;
pub mod seed;
pub mod transport;
