//! Seeded per-class train/val/test splits.

use super::{DataError, Xorshift64Star};

/// One boolean mask per pixel for each of train, val, and test.
pub type SplitMasks = (Vec<bool>, Vec<bool>, Vec<bool>);

/// Draws `n_train` training and `n_val` validation pixels per class, leaving
/// the rest of the labeled pixels for test. Returns (train, val, test) masks.
///
/// Classes are processed in ascending order over one generator stream, so a
/// given `(labels, n_train, n_val, seed)` always produces the same masks.
/// Classes run `1..=max(labels)` and each must occur at least once.
///
/// A class with fewer than `n_train + n_val + 1` pixels logs a warning and
/// falls back to a proportional allocation that always reserves one test
/// pixel: of the remaining `p - 1`, train takes
/// `floor((p-1) * n_train / (n_train + n_val))` and validation the rest.
/// With `n_train = n_val = 0` every labeled pixel lands in test.
pub fn split_per_class(
    labels: &[u16],
    n_train: usize,
    n_val: usize,
    seed: u64,
) -> Result<SplitMasks, DataError> {
    let class_count = labels.iter().copied().max().unwrap_or(0) as usize;
    if class_count == 0 {
        return Err(DataError::Invalid("no labeled pixels to split".into()));
    }
    let mut train = vec![false; labels.len()];
    let mut val = vec![false; labels.len()];
    let mut test = vec![false; labels.len()];
    let mut rng = Xorshift64Star::new(seed);
    for class in 1..=class_count {
        let mut pixels: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l as usize == class).then_some(i))
            .collect();
        if pixels.is_empty() {
            return Err(DataError::Invalid(format!(
                "class {class} has no pixels; labels must cover 1..={class_count}"
            )));
        }
        rng.shuffle(&mut pixels);
        let budget = n_train + n_val;
        let (take_train, take_val) = if budget == 0 {
            (0, 0)
        } else if pixels.len() > budget {
            (n_train, n_val)
        } else {
            let avail = pixels.len() - 1;
            let t = avail * n_train / budget;
            log::warn!(
                "class {class} has only {} pixels for a {n_train}+{n_val} split; using {t} train, {} val, 1 test",
                pixels.len(),
                avail - t
            );
            (t, avail - t)
        };
        for (rank, &p) in pixels.iter().enumerate() {
            if rank < take_train {
                train[p] = true;
            } else if rank < take_train + take_val {
                val[p] = true;
            } else {
                test[p] = true;
            }
        }
    }
    Ok((train, val, test))
}
