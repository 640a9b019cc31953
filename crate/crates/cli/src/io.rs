//! File helpers. Every output goes through [`write_atomic`].

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use ksgdiffuse::kspace::format::{read_cim, read_mask, write_cim, write_mask, Cim, Domain};
use ksgdiffuse::{ComplexImage, Mask, RealMap};
use serde::{Deserialize, Serialize};

use crate::error::{CliResult, Failure, FailureKind};

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(FailureKind::Io, format!("{}: {e}", path.display()))
}

/// Writes to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut File) -> CliResult<()>) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".ksgdiffuse-")
        .tempfile_in(&dir)
        .map_err(|e| io_failure(&dir, e))?;
    write(tmp.as_file_mut())?;
    tmp.as_file_mut().flush().map_err(|e| io_failure(path, e))?;
    tmp.persist(path).map_err(|e| io_failure(path, e.error))?;
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    write_atomic(path, |f| f.write_all(bytes).map_err(|e| io_failure(path, e)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_cim_file(path: &Path) -> CliResult<Cim> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    read_cim(BufReader::new(file)).map_err(|e| Failure::from(e).context(path.display()))
}

/// Reads a CIM1 file that must hold an image-domain grid.
pub fn read_image_file(path: &Path) -> CliResult<ComplexImage> {
    match read_cim_file(path)? {
        Cim::Image(img) => Ok(img),
        Cim::KSpace(_) => Err(Failure::new(
            FailureKind::Io,
            format!("{}: expected an image-domain CIM1 file, found k-space", path.display()),
        )),
    }
}

pub fn write_cim_file(path: &Path, grid: &ComplexImage, domain: Domain) -> CliResult<()> {
    let mut bytes = Vec::new();
    write_cim(&mut bytes, grid, domain)?;
    write_bytes(path, &bytes)
}

pub fn read_mask_file(path: &Path) -> CliResult<Mask> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    read_mask(BufReader::new(file)).map_err(|e| Failure::from(e).context(path.display()))
}

pub fn write_mask_file(path: &Path, mask: &Mask) -> CliResult<()> {
    let mut bytes = Vec::new();
    write_mask(&mut bytes, mask)?;
    write_bytes(path, &bytes)
}

/// Shape description stored next to a raw `f32` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub height: usize,
    pub width: usize,
    pub dtype: String,
    pub order: String,
    pub quantity: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Raw little-endian `f32`, row-major, plus a JSON sidecar with the shape.
pub fn write_f32_grid(path: &Path, map: &RealMap, quantity: &str) -> CliResult<()> {
    let bytes: Vec<u8> = map
        .data()
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    write_bytes(path, &bytes)?;
    write_json(
        &sidecar_path(path),
        &GridSidecar {
            height: map.height(),
            width: map.width(),
            dtype: "f32le".into(),
            order: "row-major".into(),
            quantity: quantity.into(),
        },
    )
}

pub fn read_f32_grid(path: &Path) -> CliResult<RealMap> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| io_failure(&side, e))?;
    let meta: GridSidecar = serde_json::from_str(&text)
        .map_err(|e| Failure::new(FailureKind::Io, format!("{}: {e}", side.display())))?;
    if meta.dtype != "f32le" {
        return Err(io_failure(&side, format!("unsupported dtype {}", meta.dtype)));
    }
    let bytes = fs::read(path).map_err(|e| io_failure(path, e))?;
    if bytes.len() != meta.height * meta.width * 4 {
        return Err(io_failure(
            path,
            format!("{} bytes do not hold a {}x{} f32 grid", bytes.len(), meta.height, meta.width),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    RealMap::new(meta.height, meta.width, data).map_err(|e| Failure::from(e).context(path.display()))
}

/// 8-bit grayscale, min-max normalized. For viewing only.
pub fn write_png(path: &Path, map: &RealMap) -> CliResult<()> {
    let (lo, hi) = map
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = map
        .data()
        .iter()
        .map(|&v| (255.0 * (v - lo) / span).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(map.width() as u32, map.height() as u32, pixels)
        .expect("buffer matches dimensions");
    let mut encoded = std::io::Cursor::new(Vec::new());
    img.write_to(&mut encoded, image::ImageFormat::Png)
        .map_err(|e| io_failure(path, e))?;
    write_bytes(path, encoded.get_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn grid_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.f32");
        let map = RealMap::new(2, 3, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5]).unwrap();
        write_f32_grid(&path, &map, "test").unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 24);
        assert_eq!(read_f32_grid(&path).unwrap(), map);
        let meta: GridSidecar =
            serde_json::from_str(&fs::read_to_string(dir.path().join("v.json")).unwrap()).unwrap();
        assert_eq!((meta.height, meta.width), (2, 3));
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.cim");
        let img = ComplexImage::from_fn(2, 2, |r, c| Complex64::new(r as f64, c as f64)).unwrap();
        write_cim_file(&path, &img, Domain::Image).unwrap();
        write_cim_file(&path, &img, Domain::Image).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path().join("nested")).unwrap().collect();
        assert_eq!(names.len(), 1);
        assert_eq!(read_image_file(&path).unwrap(), img);
    }

    #[test]
    fn failed_write_keeps_previous_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        write_bytes(&path, b"old").unwrap();
        let err = write_atomic(&path, |f| {
            f.write_all(b"partial").unwrap();
            Err(Failure::invalid("boom"))
        });
        assert!(err.is_err());
        assert_eq!(fs::read(&path).unwrap(), b"old");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn wrong_domain_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.cim");
        write_cim_file(&path, &ComplexImage::zeros(2, 2), Domain::KSpace).unwrap();
        assert_eq!(read_image_file(&path).unwrap_err().exit_code(), 3);
        assert_eq!(read_mask_file(&dir.path().join("none")).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn png_has_signature() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        write_png(&path, &RealMap::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(&fs::read(&path).unwrap()[..8], b"\x89PNG\r\n\x1a\n");
    }
}
