//! IDX files: big-endian `u32` magic, big-endian `u32` dimensions, raw `u8` payload.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::plant::LabeledSet;
use crate::scalar::Scalar;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_CLASSES: usize = 10;

struct Idx<'a> {
    dims: Vec<usize>,
    payload: &'a [u8],
}

fn parse<'a>(bytes: &'a [u8], magic: u32, path: &Path) -> Result<Idx<'a>> {
    let err = |reason: String| Error::Idx {
        path: path.to_path_buf(),
        reason,
    };
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| err("truncated header".into()))
    };
    let found = word(0)?;
    if found != magic {
        return Err(err(format!("bad magic 0x{found:08x}, expected 0x{magic:08x}")));
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (1..=ndims)
        .map(|i| word(i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 * (ndims + 1);
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(err(format!("truncated payload: {} of {expected} bytes", payload.len())));
    }
    Ok(Idx {
        dims,
        payload: &payload[..expected],
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an image/label IDX pair. Pixels are scaled to `[0, 1]` and flattened row-major.
pub fn load_idx<T: Scalar>(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledSet<T>> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = read(images_path)?;
    let label_bytes = read(labels_path)?;
    let images = parse(&image_bytes, IMAGES_MAGIC, images_path)?;
    let labels = parse(&label_bytes, LABELS_MAGIC, labels_path)?;

    let count = images.dims[0];
    if labels.dims[0] != count {
        return Err(Error::Data(format!("{count} images but {} labels", labels.dims[0])));
    }
    let dim = images.dims[1] * images.dims[2];
    let scale = T::lit(255.0);
    let features = Array2::from_shape_fn((count, dim), |(i, j)| {
        T::from_u8(images.payload[i * dim + j]).unwrap() / scale
    });
    let classes = labels.payload.iter().map(|&b| b as usize).collect::<Vec<_>>();
    if let Some(&bad) = classes.iter().find(|&&c| c >= IDX_CLASSES) {
        return Err(Error::Idx {
            path: labels_path.to_path_buf(),
            reason: format!("label {bad} outside 0..{IDX_CLASSES}"),
        });
    }
    LabeledSet::new(features, classes, IDX_CLASSES)
}

pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let per = rows * cols;
    if per == 0 || !pixels.len().is_multiple_of(per) {
        return Err(Error::Data(format!(
            "{} pixels do not tile {rows}x{cols} images",
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for w in [IMAGES_MAGIC, (pixels.len() / per) as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&w.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

/// Writes the two-image 2×2 fixture pair into `dir`; returns `(images, labels)` paths.
pub fn write_fixture(dir: impl AsRef<Path>) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let images = dir.join("fixture-images-idx3-ubyte");
    let labels = dir.join("fixture-labels-idx1-ubyte");
    write_idx_images(&images, 2, 2, &[0, 51, 102, 255, 255, 204, 153, 0])?;
    write_idx_labels(&labels, &[3, 7])?;
    Ok((images, labels))
}
