//! File formats: images, checkpoints, run configuration and CSV tables.

mod checkpoint;
mod config;
mod csv_out;
mod image;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use checkpoint::{
    load_checkpoint, save_checkpoint, AnyTensor, Checkpoint, TrainedState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::RunConfig;
pub use csv_out::{csv_string, fmt_f64, write_csv, CsvTable};
pub use image::{decode_png, decode_ppm, encode_ppm, load_image, save_image};

/// Writes via a sibling temp file and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
