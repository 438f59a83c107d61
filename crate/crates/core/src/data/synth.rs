//! Synthetic scenes with known structure.
//!
//! The generator plants one site per class and labels every pixel by its
//! nearest site, so classes form convex (Voronoi) regions: spatial context
//! carries real signal. Each class gets a Gaussian bump spectrum centered at
//! a class-specific band, which keeps classes separable from spectra alone,
//! and white noise on top controls how hard the problem is.

use super::{DataError, HsiScene, Xorshift64Star};

/// Largest class count the generator supports; keeps regions big enough to
/// matter at desk scale.
pub const MAX_SYNTH_CLASSES: usize = 8;

/// Builds a fully labeled scene with empty split masks.
///
/// Per class `k` (zero-based) the clean spectrum is
/// `exp(-(band - floor(k*channels/classes))^2 / (2 w^2))` with bump width
/// `w = max(1, channels / (2*classes))`, and each pixel adds
/// `noise_sigma`-scaled Gaussian noise independently per band. Identical
/// seeds give identical scenes.
pub fn synth_scene(
    height: usize,
    width: usize,
    channels: usize,
    classes: usize,
    noise_sigma: f32,
    seed: u64,
) -> Result<HsiScene, DataError> {
    if height == 0 || width == 0 {
        return Err(DataError::Invalid(format!("empty scene {height}x{width}")));
    }
    if classes == 0 || classes > MAX_SYNTH_CLASSES {
        return Err(DataError::Invalid(format!(
            "class count {classes} outside 1..={MAX_SYNTH_CLASSES}"
        )));
    }
    if channels < classes {
        return Err(DataError::Invalid(format!(
            "{channels} channels cannot separate {classes} classes; need at least one band per class"
        )));
    }
    if height * width < classes {
        return Err(DataError::Invalid(format!(
            "{}x{} scene is too small for {classes} distinct sites",
            height, width
        )));
    }
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(DataError::Invalid(format!("noise sigma {noise_sigma} must be >= 0")));
    }

    let mut rng = Xorshift64Star::new(seed);

    // Distinct class sites by rejection; the size check above guarantees
    // termination.
    let mut sites: Vec<(usize, usize)> = Vec::with_capacity(classes);
    while sites.len() < classes {
        let y = rng.next_below(height as u64) as usize;
        let x = rng.next_below(width as u64) as usize;
        if !sites.contains(&(y, x)) {
            sites.push((y, x));
        }
    }

    // Nearest site wins; ties go to the lowest class index.
    let hw = height * width;
    let mut labels = Vec::with_capacity(hw);
    for y in 0..height {
        for x in 0..width {
            let mut best = 0usize;
            let mut best_d = usize::MAX;
            for (k, &(sy, sx)) in sites.iter().enumerate() {
                let dy = sy.abs_diff(y);
                let dx = sx.abs_diff(x);
                let d = dy * dy + dx * dx;
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            labels.push(best as u16 + 1);
        }
    }

    // Clean per-class spectra.
    let bump_width = (channels as f64 / (2.0 * classes as f64)).max(1.0);
    let mut spectra = vec![0.0f64; classes * channels];
    for k in 0..classes {
        let center = (k * channels / classes) as f64;
        for band in 0..channels {
            let d = band as f64 - center;
            spectra[k * channels + band] = (-d * d / (2.0 * bump_width * bump_width)).exp();
        }
    }

    let mut cube = Vec::with_capacity(hw * channels);
    for &label in &labels {
        let base = (label as usize - 1) * channels;
        for band in 0..channels {
            let noise = noise_sigma as f64 * rng.next_gaussian();
            cube.push((spectra[base + band] + noise) as f32);
        }
    }

    let scene = HsiScene {
        height,
        width,
        channels,
        class_count: classes,
        cube,
        labels,
        train_mask: vec![false; hw],
        val_mask: vec![false; hw],
        test_mask: vec![false; hw],
    };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_pixels_of_one_class_are_identical() {
        let scene = synth_scene(8, 8, 12, 3, 0.0, 5).unwrap();
        let c = scene.channels;
        let mut reference: Vec<Option<Vec<f32>>> = vec![None; 4];
        for (i, &label) in scene.labels.iter().enumerate() {
            let spectrum = scene.cube[i * c..(i + 1) * c].to_vec();
            match &reference[label as usize] {
                Some(r) => assert_eq!(r, &spectrum, "pixel {i} of class {label} differs"),
                None => reference[label as usize] = Some(spectrum),
            }
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let a = synth_scene(10, 7, 16, 4, 0.05, 42).unwrap();
        let b = synth_scene(10, 7, 16, 4, 0.05, 42).unwrap();
        assert_eq!(a, b);
        let c = synth_scene(10, 7, 16, 4, 0.05, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn nearest_clean_spectrum_recovers_almost_all_labels() {
        // At sigma 0.05 the per-class bumps are far apart relative to the
        // noise, so a nearest-centroid rule should be nearly perfect.
        let scene = synth_scene(32, 32, 16, 3, 0.05, 1).unwrap();
        let clean = synth_scene(32, 32, 16, 3, 0.0, 1).unwrap();
        let c = scene.channels;
        let mut centroids: Vec<Vec<f32>> = vec![Vec::new(); 3];
        for (i, &label) in clean.labels.iter().enumerate() {
            if centroids[label as usize - 1].is_empty() {
                centroids[label as usize - 1] = clean.cube[i * c..(i + 1) * c].to_vec();
            }
        }
        let mut hits = 0usize;
        for (i, &label) in scene.labels.iter().enumerate() {
            let pixel = &scene.cube[i * c..(i + 1) * c];
            let mut best = 0;
            let mut best_d = f32::INFINITY;
            for (k, cent) in centroids.iter().enumerate() {
                let d: f32 = pixel.iter().zip(cent).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            hits += (best as u16 + 1 == label) as usize;
        }
        let acc = hits as f64 / scene.pixel_count() as f64;
        assert!(acc >= 0.99, "nearest-centroid accuracy {acc}");
    }

    #[test]
    fn class_regions_are_spatially_connected() {
        // Voronoi cells are convex, so each class should be one 4-connected
        // component on the grid.
        let scene = synth_scene(24, 24, 8, 4, 0.0, 11).unwrap();
        let (h, w) = (scene.height, scene.width);
        for class in 1..=4u16 {
            let members: Vec<usize> = (0..h * w).filter(|&i| scene.labels[i] == class).collect();
            assert!(!members.is_empty());
            let mut seen = vec![false; h * w];
            let mut queue = vec![members[0]];
            seen[members[0]] = true;
            let mut reached = 0usize;
            while let Some(i) = queue.pop() {
                reached += 1;
                let (y, x) = (i / w, i % w);
                let mut push = |j: usize| {
                    if !seen[j] && scene.labels[j] == class {
                        seen[j] = true;
                        queue.push(j);
                    }
                };
                if y > 0 {
                    push(i - w);
                }
                if y + 1 < h {
                    push(i + w);
                }
                if x > 0 {
                    push(i - 1);
                }
                if x + 1 < w {
                    push(i + 1);
                }
            }
            assert_eq!(reached, members.len(), "class {class} splits into pieces");
        }
    }

    #[test]
    fn class_count_limits_are_enforced() {
        assert!(synth_scene(8, 8, 16, 9, 0.05, 1).is_err());
        assert!(synth_scene(8, 8, 16, 0, 0.05, 1).is_err());
        let err = synth_scene(8, 8, 3, 4, 0.05, 1).unwrap_err().to_string();
        assert!(err.contains("3 channels cannot separate 4 classes"), "got: {err}");
    }

    #[test]
    fn one_class_one_pixel_is_fine() {
        let scene = synth_scene(1, 1, 2, 1, 0.0, 1).unwrap();
        assert_eq!(scene.labels, vec![1]);
    }
}
