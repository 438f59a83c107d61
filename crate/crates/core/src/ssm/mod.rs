//! State-space sequence cores.
//!
//! [`lti`] holds the time-invariant preliminaries: a diagonal continuous
//! system `h'(t) = A h(t) + B x(t)`, `y(t) = C h(t)` discretized by
//! zero-order hold, runnable either as a step-by-step recurrence or as a
//! single causal convolution with the unrolled kernel. The two forms agree,
//! which the tests pin down.
//!
//! [`selective`] is the input-dependent version used by the network: the
//! step size and the B/C projections are functions of each token, which
//! breaks the convolutional form and leaves a scan. The scan runs either
//! sequentially or as a balanced-tree prefix composition; both orders are
//! deterministic and agree to float precision.

pub mod lti;
pub mod selective;

pub use lti::{scan_convolutional, scan_recurrent, zoh_discretize, DiscreteLti, LtiSsm, SsmError};
pub use selective::{
    mamba_block_forward, scan_ssm, selective_scan, ScanMode, SelectiveSsmParams, SsmDims,
};
