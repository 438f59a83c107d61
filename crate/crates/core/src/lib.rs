//! Whole-image hyperspectral classification with selective state-space blocks.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`] is a small float32 tensor library with reverse-mode
//!   differentiation and an Adam optimizer. Everything above it is built from
//!   these ops.
//! * [`ssm`] holds the sequence core: time-invariant diagonal state-space
//!   models with zero-order-hold discretization (recurrent and convolutional
//!   forms), the input-dependent selective scan, and the full gated block
//!   around it.
//! * [`model`] composes the scan into spatial and spectral token mixers with
//!   residual connections, fuses them with learned scalar weights, and trains
//!   the whole stack on every labeled pixel of one image at once.
//! * [`data`] covers scene containers, the `HSC1` binary format, seeded
//!   per-class splits, synthetic scene generation, and PPM rendering.
//! * [`metrics`] computes confusion-matrix scores (overall accuracy, average
//!   accuracy, Cohen's kappa) and aggregates them over repeated runs.
//! * [`bench`] is an analytical FLOP model plus a wall-clock harness that
//!   contrasts the linear-time scan blocks with quadratic self-attention.
//!
//! Determinism is a design requirement, not an accident: given a seed, every
//! training run produces bit-identical checkpoints, logs and renderings. All
//! reductions run in a fixed order and every random draw comes from an
//! explicitly seeded generator.

pub mod bench;
pub mod data;
pub mod metrics;
pub mod model;
pub mod ssm;
pub mod tensor;
