//! Diagonal linear time-invariant state-space models.
//!
//! The continuous system over an N-dimensional state with scalar input and
//! output is
//!
//! ```text
//! h'(t) = A h(t) + B x(t)        y(t) = C h(t)
//! ```
//!
//! with `A` diagonal. Sampling with step `delta` under a zero-order hold
//! gives the exact discrete pair
//!
//! ```text
//! Abar = exp(delta A)            Bbar = (delta A)^-1 (exp(delta A) - I) delta B
//! ```
//!
//! which per diagonal entry reduces to `expm1(delta a) / a * b`, evaluated in
//! that form so the small-step limit `delta * b` comes out right.

use std::fmt;

/// Errors from constructing a time-invariant system.
#[derive(Debug, Clone, PartialEq)]
pub enum SsmError {
    /// The sample step must be strictly positive.
    NonPositiveDelta(f32),
    /// A coefficient vector had the wrong length or a non-finite entry.
    BadCoefficients(String),
}

impl fmt::Display for SsmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SsmError::NonPositiveDelta(d) => {
                write!(f, "sample step must be positive, got {d}")
            }
            SsmError::BadCoefficients(msg) => write!(f, "bad coefficients: {msg}"),
        }
    }
}

impl std::error::Error for SsmError {}

/// Continuous-time diagonal system with a fixed sample step.
#[derive(Debug, Clone)]
pub struct LtiSsm {
    /// Diagonal of `A`; stable systems keep every entry negative.
    pub a: Vec<f32>,
    /// Input projection, one entry per state.
    pub b: Vec<f32>,
    /// Output projection, one entry per state.
    pub c: Vec<f32>,
    /// Sample step, strictly positive.
    pub delta: f32,
}

impl LtiSsm {
    pub fn new(a: Vec<f32>, b: Vec<f32>, c: Vec<f32>, delta: f32) -> Result<LtiSsm, SsmError> {
        if !delta.is_finite() || delta <= 0.0 {
            return Err(SsmError::NonPositiveDelta(delta));
        }
        if a.len() != b.len() || a.len() != c.len() || a.is_empty() {
            return Err(SsmError::BadCoefficients(format!(
                "state sizes differ or are empty: |a|={}, |b|={}, |c|={}",
                a.len(),
                b.len(),
                c.len()
            )));
        }
        for (name, v) in [("a", &a), ("b", &b), ("c", &c)] {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(SsmError::BadCoefficients(format!(
                    "{name}[{i}] = {} is not finite",
                    v[i]
                )));
            }
        }
        Ok(LtiSsm { a, b, c, delta })
    }

    pub fn state_size(&self) -> usize {
        self.a.len()
    }
}

/// Discretized system ready to scan.
#[derive(Debug, Clone)]
pub struct DiscreteLti {
    pub abar: Vec<f32>,
    pub bbar: Vec<f32>,
    pub c: Vec<f32>,
}

/// Exact zero-order-hold discretization.
pub fn zoh_discretize(ssm: &LtiSsm) -> DiscreteLti {
    assert!(ssm.delta > 0.0, "zoh_discretize: non-positive step {}", ssm.delta);
    let n = ssm.state_size();
    let mut abar = vec![0.0f32; n];
    let mut bbar = vec![0.0f32; n];
    for i in 0..n {
        let da = ssm.delta * ssm.a[i];
        abar[i] = da.exp();
        bbar[i] = if ssm.a[i] == 0.0 {
            // Limit of expm1(delta a)/a as a goes to zero.
            ssm.delta * ssm.b[i]
        } else {
            da.exp_m1() / ssm.a[i] * ssm.b[i]
        };
    }
    DiscreteLti { abar, bbar, c: ssm.c.to_vec() }
}

/// Steps the recurrence `h_t = Abar h_{t-1} + Bbar x_t`, `y_t = C h_t` over
/// the input sequence. `h0` defaults to the zero state.
pub fn scan_recurrent(d: &DiscreteLti, x: &[f32], h0: Option<&[f32]>) -> Vec<f32> {
    let n = d.abar.len();
    let mut h = match h0 {
        Some(init) => {
            assert!(init.len() == n, "scan_recurrent: h0 has {} entries for {n} states", init.len());
            init.to_vec()
        }
        None => vec![0.0f32; n],
    };
    let mut y = Vec::with_capacity(x.len());
    for &xt in x {
        let mut out = 0.0f32;
        for (i, hi) in h.iter_mut().enumerate() {
            *hi = d.abar[i] * *hi + d.bbar[i] * xt;
            out += d.c[i] * *hi;
        }
        y.push(out);
    }
    y
}

/// Runs the same system as one causal convolution: unrolls the kernel
/// `k_j = C Abar^j Bbar` to the input length and convolves. Starts from the
/// zero state by construction. Only a time-invariant system has this form;
/// the input-dependent scan in [`super::selective`] cannot be expressed here,
/// which the type makes impossible to get wrong.
pub fn scan_convolutional(d: &DiscreteLti, x: &[f32]) -> Vec<f32> {
    let l = x.len();
    let mut kernel = vec![0.0f32; l];
    let mut powers = d.bbar.clone();
    for k in kernel.iter_mut() {
        let mut acc = 0.0f32;
        for (&ci, &pi) in d.c.iter().zip(&powers) {
            acc += ci * pi;
        }
        *k = acc;
        for (pi, &ai) in powers.iter_mut().zip(&d.abar) {
            *pi *= ai;
        }
    }
    let mut y = vec![0.0f32; l];
    for (t, o) in y.iter_mut().enumerate() {
        let mut acc = 0.0f32;
        for j in 0..=t {
            acc += kernel[j] * x[t - j];
        }
        *o = acc;
    }
    y
}
