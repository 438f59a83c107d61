//! Binary parameter checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "MHSW" | version u32 = 1 | config block | parameter records until EOF
//! config block:
//!   spectral_channels, class_count, embed_dim, spectral_groups,
//!   encoder_depth, state_size, expand, conv_width, dt_rank,
//!   gn_groups                                   u32 each
//!   variant                                     u8
//!   lr                                          f32
//!   epochs                                      u32
//!   seed                                        u64
//! record: name_len u16 | name (UTF-8) | rank u8 | extents u32 x rank
//!         | payload f32 x product(extents)
//! ```
//!
//! Loading rebuilds the network from the stored config and then overwrites
//! every parameter; a file must cover each parameter exactly once, so a
//! checkpoint can never half-load. Saving walks parameters in registration
//! order, which makes equal models produce byte-identical files.

use super::config::{EncoderVariant, ModelConfig};
use super::net::Model;
use crate::data::{atomic_write, DataError};
use std::collections::HashMap;
use std::path::Path;

const MAGIC: &[u8; 4] = b"MHSW";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), DataError> {
    let cfg = &model.config;
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    for field in [
        cfg.spectral_channels,
        cfg.class_count,
        cfg.embed_dim,
        cfg.spectral_groups,
        cfg.encoder_depth,
        cfg.state_size,
        cfg.expand,
        cfg.conv_width,
        cfg.dt_rank,
        cfg.gn_groups,
    ] {
        bytes.extend_from_slice(&(field as u32).to_le_bytes());
    }
    bytes.push(cfg.variant.tag());
    bytes.extend_from_slice(&cfg.lr.to_le_bytes());
    bytes.extend_from_slice(&(cfg.epochs as u32).to_le_bytes());
    bytes.extend_from_slice(&cfg.seed.to_le_bytes());

    for (name, tensor) in model.named_params() {
        assert!(name.len() <= u16::MAX as usize, "parameter name too long: {name}");
        assert!(tensor.rank() <= u8::MAX as usize, "parameter rank too large: {name}");
        bytes.extend_from_slice(&(name.len() as u16).to_le_bytes());
        bytes.extend_from_slice(name.as_bytes());
        bytes.push(tensor.rank() as u8);
        for &extent in tensor.shape() {
            bytes.extend_from_slice(&(extent as u32).to_le_bytes());
        }
        tensor.with_data(|data| {
            for value in data {
                bytes.extend_from_slice(&value.to_le_bytes());
            }
        });
    }
    atomic_write(path, &bytes)
}

/// Byte cursor that reports the offset of whatever is missing or malformed.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DataError> {
        if self.pos + n > self.bytes.len() {
            return Err(DataError::Format {
                offset: self.pos as u64,
                message: format!(
                    "checkpoint truncated reading {what}: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self, what: &str) -> Result<u16, DataError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8, DataError> {
        Ok(self.take(1, what)?[0])
    }

    fn f32(&mut self, what: &str) -> Result<f32, DataError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Model, DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };

    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(DataError::Format {
            offset: 0,
            message: format!("bad magic {magic:?}, expected \"MHSW\""),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(DataError::Format {
            offset: 4,
            message: format!("unsupported checkpoint version {version}, expected {VERSION}"),
        });
    }

    let mut fields = [0usize; 10];
    for slot in fields.iter_mut() {
        *slot = r.u32("config block")? as usize;
    }
    let variant_offset = r.pos as u64;
    let variant_tag = r.u8("variant")?;
    let variant = EncoderVariant::from_tag(variant_tag).ok_or_else(|| DataError::Format {
        offset: variant_offset,
        message: format!("unknown encoder variant tag {variant_tag}"),
    })?;
    let config = ModelConfig {
        spectral_channels: fields[0],
        class_count: fields[1],
        embed_dim: fields[2],
        spectral_groups: fields[3],
        encoder_depth: fields[4],
        state_size: fields[5],
        expand: fields[6],
        conv_width: fields[7],
        dt_rank: fields[8],
        gn_groups: fields[9],
        variant,
        lr: r.f32("lr")?,
        epochs: r.u32("epochs")? as usize,
        seed: r.u64("seed")?,
    };
    let model = Model::new(&config)
        .map_err(|e| DataError::Invalid(format!("checkpoint config rejected: {e}")))?;

    let mut remaining: HashMap<String, crate::tensor::Tensor> =
        model.named_params().into_iter().collect();
    while !r.done() {
        let name_offset = r.pos as u64;
        let name_len = r.u16("parameter name length")? as usize;
        let name_bytes = r.take(name_len, "parameter name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| DataError::Format {
                offset: name_offset,
                message: "parameter name is not UTF-8".to_string(),
            })?
            .to_string();
        let rank = r.u8("parameter rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("parameter extent")? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut values = Vec::with_capacity(numel);
        for _ in 0..numel {
            values.push(r.f32("parameter payload")?);
        }
        let tensor = remaining.remove(&name).ok_or_else(|| {
            DataError::Invalid(format!(
                "checkpoint names parameter `{name}` which this config does not have \
                 (or names it twice)"
            ))
        })?;
        if tensor.shape() != shape.as_slice() {
            return Err(DataError::Invalid(format!(
                "parameter `{name}` has shape {:?} in the file, model expects {:?}",
                shape,
                tensor.shape()
            )));
        }
        tensor.set_data(&values);
    }
    if !remaining.is_empty() {
        let mut missing: Vec<&str> = remaining.keys().map(|s| s.as_str()).collect();
        missing.sort_unstable();
        return Err(DataError::Invalid(format!(
            "checkpoint is missing {} parameter(s), e.g. `{}`",
            missing.len(),
            missing[0]
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::ScanMode;
    use crate::tensor::Tensor;
    use std::path::PathBuf;

    fn temp_file(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("mambaseg-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn small_model() -> Model {
        let mut cfg = ModelConfig::new(5, 3);
        cfg.embed_dim = 16;
        cfg.spectral_groups = 4;
        cfg.gn_groups = 2;
        cfg.state_size = 4;
        cfg.conv_width = 3;
        cfg.seed = 21;
        Model::new(&cfg).unwrap()
    }

    #[test]
    fn round_trip_preserves_config_weights_and_predictions() {
        let model = small_model();
        let path = temp_file("rt.mhsw");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        for ((name, a), (_, b)) in model.named_params().iter().zip(loaded.named_params()) {
            assert_eq!(a.to_vec(), b.to_vec(), "{name} not preserved");
        }
        let image = Tensor::from_vec(
            (0..2 * 2 * 5).map(|i| (i as f32).sin()).collect(),
            &[1, 2, 2, 5],
        );
        assert_eq!(
            model.forward(&image, ScanMode::Sequential).to_vec(),
            loaded.forward(&image, ScanMode::Sequential).to_vec()
        );
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let model = small_model();
        let a = temp_file("a.mhsw");
        let b = temp_file("b.mhsw");
        save_checkpoint(&model, &a).unwrap();
        save_checkpoint(&model, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn corrupt_magic_is_rejected_at_offset_zero() {
        let path = temp_file("magic.mhsw");
        let model = small_model();
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path) {
            Err(DataError::Format { offset: 0, message }) => {
                assert!(message.contains("magic"), "got: {message}")
            }
            Err(other) => panic!("expected a format error at offset 0, got {other:?}"),
            Ok(_) => panic!("expected a format error, load succeeded"),
        }
    }

    #[test]
    fn future_version_is_rejected_by_number() {
        let path = temp_file("version.mhsw");
        save_checkpoint(&small_model(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("version 2"), "got: {err}");
    }

    #[test]
    fn truncation_reports_the_offset() {
        let path = temp_file("trunc.mhsw");
        save_checkpoint(&small_model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        match load_checkpoint(&path) {
            Err(DataError::Format { offset, message }) => {
                assert!(offset > 0);
                assert!(message.contains("truncated"), "got: {message}");
            }
            Err(other) => panic!("expected a truncation error, got {other:?}"),
            Ok(_) => panic!("expected a truncation error, load succeeded"),
        }
    }

    #[test]
    fn missing_parameters_fail_the_load() {
        let path = temp_file("missing.mhsw");
        let model = small_model();
        save_checkpoint(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // Drop the final record: head.bias, 2-byte len + 9-byte name +
        // 1-byte rank + 4-byte extent + 3 floats.
        let record_len = 2 + "head.bias".len() + 1 + 4 + 3 * 4;
        std::fs::write(&path, &bytes[..bytes.len() - record_len]).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("missing 1 parameter"), "got: {err}");
        assert!(err.contains("head.bias"), "got: {err}");
    }

    #[test]
    fn unknown_parameter_names_fail_the_load() {
        let path = temp_file("unknown.mhsw");
        let model = small_model();
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // Rename head.bias to head.bics in place.
        let needle = b"head.bias";
        let at = bytes
            .windows(needle.len())
            .position(|w| w == needle)
            .expect("name present");
        bytes[at + 7] = b'c';
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("head.bics"), "got: {err}");
    }
}
