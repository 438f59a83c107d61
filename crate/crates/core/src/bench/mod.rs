//! Cost accounting and measurement.
//!
//! [`flops`] is the symbolic side: exact FLOP counts per layer under one
//! documented convention, exposed per encoder stage and per whole forward.
//! The scan-based encoder costs a fixed amount per pixel; swapping the
//! scans for single-head attention adds terms quadratic in the pixel
//! count, and the counts make that visible as a ratio between image sizes.
//!
//! [`runner`] is the empirical side: it executes real forwards of both
//! cores on random weights, pairs median wall times with the modeled
//! numbers, and renders the `variant,H,W,L,gflops_model,seconds` table.

pub mod flops;
pub mod runner;

pub use flops::{
    flops_attention_mixer, flops_encoder_block, flops_model, flops_selective_mixer,
    SequenceCore, FLOPS_PER_MAC, FLOPS_PER_TRANSCENDENTAL,
};
pub use runner::{
    attention_forward, bench_forward, rows_to_csv, AttentionParams, BenchRow,
    ATTENTION_SIDE_CAP,
};
