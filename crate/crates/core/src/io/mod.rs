//! Interchange formats: PLY 1.0 (ascii / binary little-endian) and plain
//! XYZ text.

pub mod ply;
pub mod xyz;

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::PointCloud;

pub use ply::{read_ply, read_ply_with_info, write_ply, PlyFormat, PlyHeaderInfo};
pub use xyz::{read_xyz, write_xyz};

/// Reads a cloud from a file, picking the format by extension
/// (`.xyz` is plain text, everything else is treated as PLY).
pub fn read_cloud_file(path: &Path) -> Result<PointCloud> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xyz")) {
        let text = String::from_utf8(bytes).map_err(|_| Error::XyzParse {
            line: 0,
            message: "file is not valid UTF-8".into(),
        })?;
        read_xyz(&text)
    } else {
        read_ply(&bytes)
    }
}

/// Writes a cloud to a PLY file.
pub fn write_ply_file(
    path: &Path,
    cloud: &PointCloud,
    labels: Option<&[crate::diff::PointLabel]>,
    format: PlyFormat,
) -> Result<()> {
    let bytes = write_ply(cloud, labels, format)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}
