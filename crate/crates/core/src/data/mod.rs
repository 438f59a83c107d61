//! Scene containers, file formats, splits and synthetic data.

mod format;
mod ppm;
mod rng;
mod scene;
mod split;
mod synth;

pub use format::{load_scene, save_scene};
pub use ppm::{render_class_map, Palette};
pub use rng::Xorshift64Star;
pub use scene::HsiScene;
pub use split::{split_per_class, SplitMasks};
pub use synth::synth_scene;

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

/// Errors from reading, writing or validating scene data.
#[derive(Debug)]
pub enum DataError {
    /// Filesystem failure, with the path it happened on.
    Io { path: String, source: io::Error },
    /// Structurally broken file; `offset` is the first offending byte.
    Format { offset: u64, message: String },
    /// Structurally sound but semantically invalid content.
    Invalid(String),
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Io { path, source } => write!(f, "{path}: {source}"),
            DataError::Format { offset, message } => {
                write!(f, "{message} (byte offset {offset})")
            }
            DataError::Invalid(message) => write!(f, "{message}"),
        }
    }
}

impl std::error::Error for DataError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            DataError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl DataError {
    pub(crate) fn io(path: &Path, source: io::Error) -> DataError {
        DataError::Io { path: path.display().to_string(), source }
    }
}

/// Writes a file through a temporary sibling plus rename, so readers never
/// observe a half-written file and a crash leaves the old content intact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp.{}", std::process::id()));
    let tmp_path = Path::new(&tmp);
    fs::write(tmp_path, bytes).map_err(|e| DataError::io(tmp_path, e))?;
    fs::rename(tmp_path, path).map_err(|e| {
        let _ = fs::remove_file(tmp_path);
        DataError::io(path, e)
    })
}
