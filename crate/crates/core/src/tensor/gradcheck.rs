//! Central-difference gradient verification.

use super::{no_grad, Tensor};

/// Compares the analytic gradient of `f` at `x` against central finite
/// differences and returns the worst relative error
/// `|analytic - numeric| / (|numeric| + 1e-8)` over all entries.
///
/// `f` must be deterministic and scalar-valued. The numeric side perturbs one
/// entry at a time by `step` in both directions and differences the two f32
/// evaluations in f64. Power-of-two steps (such as `2^-10`, close to 1e-3)
/// keep the perturbed inputs exactly representable, which removes one source
/// of float32 noise; what remains is rounding inside `f` itself, so
/// well-scaled test functions should keep gradients of order one.
pub fn finite_diff_check<F>(f: F, x: &Tensor, step: f32) -> f32
where
    F: Fn(&Tensor) -> Tensor,
{
    assert!(step > 0.0 && step.is_finite(), "finite_diff_check: bad step {step}");
    let probe = Tensor::param(x.to_vec(), x.shape());
    let loss = f(&probe);
    assert!(
        loss.numel() == 1,
        "finite_diff_check: f returned shape {:?}, expected a scalar",
        loss.shape()
    );
    loss.backward();
    let analytic = probe
        .grad()
        .expect("finite_diff_check: f ignored its argument, no gradient reached x");

    let base = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let eval = |v: f32| -> f64 {
            let mut nudged = base.clone();
            nudged[i] = v;
            no_grad(|| f(&Tensor::from_vec(nudged, x.shape())).item()) as f64
        };
        let numeric = (eval(base[i] + step) - eval(base[i] - step)) / (2.0 * step as f64);
        let rel = (analytic[i] as f64 - numeric).abs() / (numeric.abs() + 1e-8);
        if rel > worst {
            worst = rel;
        }
    }
    worst as f32
}
