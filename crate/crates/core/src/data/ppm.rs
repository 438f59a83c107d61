//! Class-map rendering to binary PPM (P6).

use super::{atomic_write, DataError};
use std::path::Path;

/// Twenty-two visually distinct colors; index 0 colors class 1. Unlabeled
/// pixels (class 0) always render black, which no palette entry uses.
const BUILTIN: [[u8; 3]; 22] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
    [174, 199, 232],
    [255, 187, 120],
    [152, 223, 138],
    [255, 152, 150],
    [197, 176, 213],
    [196, 156, 148],
    [247, 182, 210],
    [199, 199, 199],
    [219, 219, 141],
    [158, 218, 229],
    [255, 255, 0],
    [0, 255, 255],
];

/// Color table for rendered class maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Palette {
    colors: Vec<[u8; 3]>,
}

impl Palette {
    /// First `classes` entries of the built-in table.
    pub fn default_colors(classes: usize) -> Result<Palette, DataError> {
        if classes == 0 || classes > BUILTIN.len() {
            return Err(DataError::Invalid(format!(
                "built-in palette covers 1..={} classes, {classes} requested",
                BUILTIN.len()
            )));
        }
        Ok(Palette { colors: BUILTIN[..classes].to_vec() })
    }

    /// Loads one `r g b` line per class (decimal, 0..=255).
    pub fn from_file(path: &Path) -> Result<Palette, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let mut colors = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(DataError::Invalid(format!(
                    "palette line {}: expected `r g b`, got {line:?}",
                    lineno + 1
                )));
            }
            let mut rgb = [0u8; 3];
            for (slot, part) in rgb.iter_mut().zip(&parts) {
                *slot = part.parse().map_err(|_| {
                    DataError::Invalid(format!(
                        "palette line {}: {part:?} is not a byte value",
                        lineno + 1
                    ))
                })?;
            }
            colors.push(rgb);
        }
        if colors.is_empty() {
            return Err(DataError::Invalid(format!(
                "palette {} defines no colors",
                path.display()
            )));
        }
        Ok(Palette { colors })
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn color(&self, class: u16) -> Option<[u8; 3]> {
        if class == 0 {
            Some([0, 0, 0])
        } else {
            self.colors.get(class as usize - 1).copied()
        }
    }
}

/// Renders a class map to a binary PPM file, atomically.
pub fn render_class_map(
    classes: &[u16],
    width: usize,
    height: usize,
    palette: &Palette,
    path: &Path,
) -> Result<(), DataError> {
    if classes.len() != width * height {
        return Err(DataError::Invalid(format!(
            "class map holds {} entries, {width}x{height} needs {}",
            classes.len(),
            width * height
        )));
    }
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.reserve(classes.len() * 3);
    for (i, &class) in classes.iter().enumerate() {
        let rgb = palette.color(class).ok_or_else(|| {
            DataError::Invalid(format!(
                "class {class} at pixel ({}, {}) exceeds the {}-color palette",
                i % width,
                i / width,
                palette.len()
            ))
        })?;
        bytes.extend_from_slice(&rgb);
    }
    atomic_write(path, &bytes)
}
