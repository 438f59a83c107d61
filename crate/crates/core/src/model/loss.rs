//! Masked pixel loss and class prediction.

use crate::tensor::Tensor;
use std::fmt;

/// Errors from scoring logits against a labeled mask.
#[derive(Debug, PartialEq, Eq)]
pub enum LossError {
    /// The mask selects no pixels.
    EmptyMask,
    /// A masked pixel's label is unusable; coordinates are x right, y down.
    LabelOutOfRange { x: usize, y: usize, label: u16, class_count: usize },
}

impl fmt::Display for LossError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossError::EmptyMask => write!(f, "loss mask selects no pixels"),
            LossError::LabelOutOfRange { x, y, label, class_count } => write!(
                f,
                "pixel ({x}, {y}): label {label} outside 1..={class_count}"
            ),
        }
    }
}

impl std::error::Error for LossError {}

/// Mean negative log-likelihood of the true class over masked pixels.
///
/// `logits` is `[1,H,W,K]`; `labels` and `mask` are row-major `H*W`.
/// Unmasked pixels contribute nothing to the value or the gradient; the
/// masked rows are gathered out of the graph before the softmax, so the
/// gradient at every unmasked logit is exactly zero.
pub fn masked_cross_entropy(
    logits: &Tensor,
    labels: &[u16],
    mask: &[bool],
) -> Result<Tensor, LossError> {
    assert!(
        logits.rank() == 4 && logits.shape()[0] == 1,
        "masked_cross_entropy: expected [1,H,W,K] logits, got {:?}",
        logits.shape()
    );
    let (h, w, k) = (logits.shape()[1], logits.shape()[2], logits.shape()[3]);
    assert!(
        labels.len() == h * w && mask.len() == h * w,
        "masked_cross_entropy: {}x{} logits need {} labels/mask entries, got {}/{}",
        h,
        w,
        h * w,
        labels.len(),
        mask.len()
    );
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for i in 0..h * w {
        if !mask[i] {
            continue;
        }
        let label = labels[i];
        if label == 0 || label as usize > k {
            return Err(LossError::LabelOutOfRange {
                x: i % w,
                y: i / w,
                label,
                class_count: k,
            });
        }
        rows.push(i);
        cols.push(label as usize - 1);
    }
    if rows.is_empty() {
        return Err(LossError::EmptyMask);
    }
    let picked = logits.reshape(&[h * w, k]).gather_rows(&rows);
    Ok(picked.log_softmax(1).take_per_row(&cols).mean().neg())
}

/// Per-pixel class raster from `[1,H,W,K]` logits, row-major.
///
/// Returns 1-indexed classes (the label convention); ties take the lowest
/// class, and adding any constant to a pixel's logits cannot change its
/// prediction.
pub fn predict_classes(logits: &Tensor) -> Vec<u16> {
    assert!(
        logits.rank() == 4 && logits.shape()[0] == 1,
        "predict_classes: expected [1,H,W,K] logits, got {:?}",
        logits.shape()
    );
    let k = logits.shape()[3];
    logits.with_data(|data| {
        data.chunks_exact(k)
            .map(|row| {
                let mut best = 0usize;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                (best + 1) as u16
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_diff_check;

    fn logits_1x1(values: &[f32]) -> Tensor {
        Tensor::from_vec(values.to_vec(), &[1, 1, 1, values.len()])
    }

    #[test]
    fn uniform_logits_cost_ln_k() {
        for k in [2usize, 3, 7] {
            let logits = Tensor::from_vec(vec![0.4; 2 * k], &[1, 1, 2, k]);
            let loss = masked_cross_entropy(&logits, &vec![1, 2], &[true, true]).unwrap();
            assert!(
                (loss.item() - (k as f32).ln()).abs() < 1e-5,
                "k={k}: {} vs {}",
                loss.item(),
                (k as f32).ln()
            );
        }
    }

    #[test]
    fn confident_true_logit_drives_loss_to_zero() {
        let loss = masked_cross_entropy(&logits_1x1(&[20.0, 0.0, 0.0]), &[1], &[true]).unwrap();
        assert!(loss.item() < 1e-6, "got {}", loss.item());
    }

    #[test]
    fn hand_worked_single_pixel() {
        // -log softmax([1, 2])[class 1] = log(e + e^2) - 1 = log(1 + e).
        let loss = masked_cross_entropy(&logits_1x1(&[1.0, 2.0]), &[1], &[true]).unwrap();
        let want = (1.0f32 + std::f32::consts::E).ln();
        assert!((loss.item() - want).abs() < 1e-6, "{} vs {want}", loss.item());
    }

    #[test]
    fn unmasked_pixels_have_exactly_zero_gradient() {
        let logits = Tensor::param(
            vec![0.3, -0.2, 0.8, 0.1, -0.4, 0.6, 0.0, 0.2],
            &[1, 2, 2, 2],
        );
        let loss = masked_cross_entropy(&logits, &[1, 2, 0, 1], &[true, true, false, false])
            .unwrap();
        loss.backward();
        let grad = logits.grad().unwrap();
        assert!(grad[0..4].iter().any(|&g| g != 0.0), "masked rows must train");
        assert!(grad[4..8].iter().all(|&g| g == 0.0), "unmasked rows must not");
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let logits = Tensor::param(
            vec![0.3, -0.2, 0.8, 0.1, -0.4, 0.6, 0.0, 0.2, 0.5, -0.1, 0.9, -0.7],
            &[1, 2, 2, 3],
        );
        let labels = [1u16, 3, 0, 2];
        let mask = [true, true, false, true];
        let err = finite_diff_check(
            |x| masked_cross_entropy(x, &labels, &mask).unwrap(),
            &logits,
            0.0009765625,
        );
        assert!(err < 1e-3, "relative error {err}");
    }

    #[test]
    fn bad_masks_and_labels_are_rejected() {
        let logits = Tensor::from_vec(vec![0.0; 4], &[1, 1, 2, 2]);
        assert_eq!(
            masked_cross_entropy(&logits, &[1, 1], &[false, false]).unwrap_err(),
            LossError::EmptyMask
        );
        assert_eq!(
            masked_cross_entropy(&logits, &[1, 3], &[false, true]).unwrap_err(),
            LossError::LabelOutOfRange { x: 1, y: 0, label: 3, class_count: 2 }
        );
        assert_eq!(
            masked_cross_entropy(&logits, &[0, 1], &[true, true]).unwrap_err(),
            LossError::LabelOutOfRange { x: 0, y: 0, label: 0, class_count: 2 }
        );
    }

    #[test]
    fn predict_takes_argmax_one_indexed() {
        let logits = Tensor::from_vec(vec![0.1, 0.9, 0.3, 2.0, -1.0, 0.0], &[1, 1, 2, 3]);
        assert_eq!(predict_classes(&logits), vec![2, 1]);
    }

    #[test]
    fn predict_breaks_ties_toward_the_lowest_class() {
        let logits = Tensor::from_vec(vec![1.0, 1.0, 0.5, 0.5, 0.5, 0.5], &[1, 1, 2, 3]);
        assert_eq!(predict_classes(&logits), vec![1, 1]);
    }

    #[test]
    fn predict_is_shift_invariant() {
        let base = vec![0.2f32, -0.7, 1.1, 0.4, 0.4, -0.2];
        let shifted: Vec<f32> = base
            .iter()
            .enumerate()
            .map(|(i, v)| if i < 3 { v + 100.0 } else { v - 3.0 })
            .collect();
        let a = predict_classes(&Tensor::from_vec(base, &[1, 2, 1, 3]));
        let b = predict_classes(&Tensor::from_vec(shifted, &[1, 2, 1, 3]));
        assert_eq!(a, b);
    }
}
