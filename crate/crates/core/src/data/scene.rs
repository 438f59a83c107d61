//! In-memory hyperspectral scene.

use super::DataError;
use crate::tensor::Tensor;

/// One georegistered cube with per-pixel labels and split masks.
///
/// Layout conventions, shared with the on-disk format:
/// * `cube` is row-major `[height][width][channels]`, band varying fastest.
/// * `labels` are `0` for unlabeled, `1..=class_count` otherwise.
/// * The three masks mark training, validation and test pixels; they may
///   only cover labeled pixels and never overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiScene {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub class_count: usize,
    pub cube: Vec<f32>,
    pub labels: Vec<u16>,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl HsiScene {
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Checks the structural invariants; every load and save goes through
    /// this, so a scene in the wild is either valid or was never written by
    /// this crate.
    pub fn validate(&self) -> Result<(), DataError> {
        let hw = self.pixel_count();
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(DataError::Invalid(format!(
                "degenerate scene dimensions {}x{}x{}",
                self.height, self.width, self.channels
            )));
        }
        if self.cube.len() != hw * self.channels {
            return Err(DataError::Invalid(format!(
                "cube holds {} values, dimensions imply {}",
                self.cube.len(),
                hw * self.channels
            )));
        }
        for (name, mask) in [
            ("labels", self.labels.len()),
            ("train mask", self.train_mask.len()),
            ("val mask", self.val_mask.len()),
            ("test mask", self.test_mask.len()),
        ] {
            if mask != hw {
                return Err(DataError::Invalid(format!(
                    "{name} covers {mask} pixels, scene has {hw}"
                )));
            }
        }
        for (i, &label) in self.labels.iter().enumerate() {
            if label as usize > self.class_count {
                return Err(DataError::Invalid(format!(
                    "label {label} at pixel ({}, {}) exceeds class count {}",
                    i % self.width,
                    i / self.width,
                    self.class_count
                )));
            }
        }
        for i in 0..hw {
            let marked = [self.train_mask[i], self.val_mask[i], self.test_mask[i]];
            let uses = marked.iter().filter(|&&m| m).count();
            if uses > 0 && self.labels[i] == 0 {
                return Err(DataError::Invalid(format!(
                    "mask covers unlabeled pixel ({}, {})",
                    i % self.width,
                    i / self.width
                )));
            }
            if uses > 1 {
                return Err(DataError::Invalid(format!(
                    "pixel ({}, {}) appears in more than one split",
                    i % self.width,
                    i / self.width
                )));
            }
        }
        Ok(())
    }

    /// The cube as a `[1, height, width, channels]` input tensor.
    pub fn to_image_tensor(&self) -> Tensor {
        Tensor::from_vec(self.cube.clone(), &[1, self.height, self.width, self.channels])
    }

    /// Pixels carrying any label.
    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }

    /// Pixels marked in each split, in (train, val, test) order.
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let count = |m: &[bool]| m.iter().filter(|&&v| v).count();
        (count(&self.train_mask), count(&self.val_mask), count(&self.test_mask))
    }
}
