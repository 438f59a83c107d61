//! The `HSC1` scene container.
//!
//! Little-endian throughout:
//!
//! ```text
//! offset 0   magic "HSC1"
//!        4   u32 height, u32 width, u32 channels, u32 class_count
//!        20  f32 cube   [height*width*channels]   band varies fastest
//!        ..  u16 labels [height*width]
//!        ..  u8 train mask, u8 val mask, u8 test mask  (one byte per pixel, 0 or 1)
//! ```
//!
//! Saving validates the scene and writes atomically; loading checks the
//! exact file length up front and re-validates, reporting the first bad byte
//! offset for structural problems. Save then load reproduces every field
//! bit for bit, including NaN payloads in the cube.

use super::{atomic_write, DataError, HsiScene};
use std::path::Path;

const MAGIC: &[u8; 4] = b"HSC1";
const HEADER_LEN: u64 = 20;

/// Serializes and writes a validated scene.
pub fn save_scene(scene: &HsiScene, path: &Path) -> Result<(), DataError> {
    scene.validate()?;
    let hw = scene.pixel_count();
    let mut bytes = Vec::with_capacity(HEADER_LEN as usize + scene.cube.len() * 4 + hw * 5);
    bytes.extend_from_slice(MAGIC);
    for dim in [scene.height, scene.width, scene.channels, scene.class_count] {
        let v = u32::try_from(dim).map_err(|_| {
            DataError::Invalid(format!("dimension {dim} does not fit the container"))
        })?;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in &scene.cube {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for l in &scene.labels {
        bytes.extend_from_slice(&l.to_le_bytes());
    }
    for mask in [&scene.train_mask, &scene.val_mask, &scene.test_mask] {
        bytes.extend(mask.iter().map(|&m| m as u8));
    }
    atomic_write(path, &bytes)
}

/// Reads and validates a scene.
pub fn load_scene(path: &Path) -> Result<HsiScene, DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    if bytes.len() < HEADER_LEN as usize {
        return Err(DataError::Format {
            offset: bytes.len() as u64,
            message: format!("file ends inside the {HEADER_LEN}-byte header"),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(DataError::Format {
            offset: 0,
            message: format!("bad magic {:?}, expected \"HSC1\"", &bytes[..4]),
        });
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let (height, width, channels, class_count) = (u32_at(4), u32_at(8), u32_at(12), u32_at(16));
    let hw = (height as u64) * (width as u64);
    let expected = HEADER_LEN + hw * (channels as u64) * 4 + hw * 2 + hw * 3;
    if bytes.len() as u64 != expected {
        return Err(DataError::Format {
            offset: bytes.len().min(expected as usize) as u64,
            message: format!(
                "header implies {expected} bytes, file has {}",
                bytes.len()
            ),
        });
    }
    let hw = hw as usize;
    let mut off = HEADER_LEN as usize;
    let mut cube = Vec::with_capacity(hw * channels);
    for _ in 0..hw * channels {
        cube.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
        off += 4;
    }
    let mut labels = Vec::with_capacity(hw);
    for _ in 0..hw {
        labels.push(u16::from_le_bytes(bytes[off..off + 2].try_into().unwrap()));
        off += 2;
    }
    let mut masks = Vec::with_capacity(3);
    for name in ["train", "val", "test"] {
        let mut mask = Vec::with_capacity(hw);
        for i in 0..hw {
            match bytes[off + i] {
                0 => mask.push(false),
                1 => mask.push(true),
                other => {
                    return Err(DataError::Format {
                        offset: (off + i) as u64,
                        message: format!(
                            "{name} mask byte {other} at pixel ({}, {}) is not 0 or 1",
                            i % width.max(1),
                            i / width.max(1)
                        ),
                    })
                }
            }
        }
        off += hw;
        masks.push(mask);
    }
    let test_mask = masks.pop().unwrap();
    let val_mask = masks.pop().unwrap();
    let train_mask = masks.pop().unwrap();
    let scene = HsiScene {
        height,
        width,
        channels,
        class_count,
        cube,
        labels,
        train_mask,
        val_mask,
        test_mask,
    };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Xorshift64Star;
    use std::path::PathBuf;

    fn temp_file(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("mambaseg-fmt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn random_scene(rng: &mut Xorshift64Star) -> HsiScene {
        let height = 1 + rng.next_below(6) as usize;
        let width = 1 + rng.next_below(6) as usize;
        let channels = 1 + rng.next_below(5) as usize;
        let class_count = 1 + rng.next_below(4) as usize;
        let hw = height * width;
        let cube = (0..hw * channels).map(|_| rng.next_f64() as f32 * 4.0 - 2.0).collect();
        let labels: Vec<u16> =
            (0..hw).map(|_| rng.next_below(class_count as u64 + 1) as u16).collect();
        let mut train_mask = vec![false; hw];
        let mut val_mask = vec![false; hw];
        let mut test_mask = vec![false; hw];
        for i in 0..hw {
            if labels[i] == 0 {
                continue;
            }
            match rng.next_below(4) {
                0 => train_mask[i] = true,
                1 => val_mask[i] = true,
                2 => test_mask[i] = true,
                _ => {}
            }
        }
        HsiScene { height, width, channels, class_count, cube, labels, train_mask, val_mask, test_mask }
    }

    #[test]
    fn round_trip_preserves_every_field() {
        let mut rng = Xorshift64Star::new(77);
        let path = temp_file("roundtrip.hsc");
        for _ in 0..25 {
            let scene = random_scene(&mut rng);
            save_scene(&scene, &path).unwrap();
            let back = load_scene(&path).unwrap();
            assert_eq!(scene, back);
            // Writing the loaded scene again must give identical bytes.
            let first = std::fs::read(&path).unwrap();
            save_scene(&back, &path).unwrap();
            assert_eq!(first, std::fs::read(&path).unwrap());
        }
    }

    #[test]
    fn bad_magic_is_reported_at_offset_zero() {
        let path = temp_file("magic.hsc");
        std::fs::write(&path, b"NOPE----------------------").unwrap();
        match load_scene(&path).unwrap_err() {
            DataError::Format { offset, message } => {
                assert_eq!(offset, 0);
                assert!(message.contains("magic"), "got: {message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_file_reports_length_mismatch() {
        let mut rng = Xorshift64Star::new(3);
        let scene = random_scene(&mut rng);
        let path = temp_file("trunc.hsc");
        save_scene(&scene, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        match load_scene(&path).unwrap_err() {
            DataError::Format { message, .. } => {
                assert!(message.contains("header implies"), "got: {message}")
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn corrupt_mask_byte_names_pixel_and_offset() {
        let mut rng = Xorshift64Star::new(4);
        let scene = random_scene(&mut rng);
        let path = temp_file("mask.hsc");
        save_scene(&scene, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let hw = scene.pixel_count();
        let mask_start = bytes.len() - 3 * hw;
        bytes[mask_start] = 7;
        std::fs::write(&path, &bytes).unwrap();
        match load_scene(&path).unwrap_err() {
            DataError::Format { offset, message } => {
                assert_eq!(offset as usize, mask_start);
                assert!(message.contains("train mask byte 7"), "got: {message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_scene(Path::new("/nonexistent/nowhere.hsc")).unwrap_err().to_string();
        assert!(err.contains("/nonexistent/nowhere.hsc"), "got: {err}");
    }

    #[test]
    fn nan_cube_payloads_survive_the_trip() {
        let mut rng = Xorshift64Star::new(9);
        let mut scene = random_scene(&mut rng);
        scene.cube[0] = f32::NAN;
        scene.cube[1] = f32::NEG_INFINITY;
        let path = temp_file("nan.hsc");
        save_scene(&scene, &path).unwrap();
        let back = load_scene(&path).unwrap();
        assert!(back.cube[0].is_nan());
        assert_eq!(back.cube[1], f32::NEG_INFINITY);
    }
}
