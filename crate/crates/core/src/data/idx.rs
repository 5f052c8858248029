//! IDX binary format (the MNIST container).
//!
//! Big-endian throughout. Images: magic `0x00000803`, dims `[count, rows,
//! cols]`, then `count*rows*cols` unsigned bytes. Labels: magic
//! `0x00000801`, dim `[count]`, then `count` unsigned bytes.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| Error::Truncated {
            path: self.path.to_path_buf(),
            detail: format!("file ends before {what}"),
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
    }

    fn bytes(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n);
        let chunk = end
            .and_then(|end| self.bytes.get(self.pos..end))
            .ok_or_else(|| Error::Truncated {
                path: self.path.to_path_buf(),
                detail: format!(
                    "{what} needs {n} bytes, only {} remain",
                    self.bytes.len().saturating_sub(self.pos)
                ),
            })?;
        self.pos += n;
        Ok(chunk)
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn expect_magic(cur: &mut Cursor<'_>, expected: u32) -> Result<()> {
    let found = cur.u32("magic number")?;
    if found != expected {
        return Err(Error::BadMagic {
            path: cur.path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Load an IDX image/label pair. Pixels are scaled to `[0, 1]` by `/255`;
/// the class count is `max(label) + 1`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let image_bytes = read(images_path)?;
    let label_bytes = read(labels_path)?;

    let mut cur = Cursor {
        bytes: &image_bytes,
        pos: 0,
        path: images_path,
    };
    expect_magic(&mut cur, IMAGES_MAGIC)?;
    let count = cur.u32("image count")? as usize;
    let rows = cur.u32("row count")? as usize;
    let cols = cur.u32("column count")? as usize;
    let pixels = cur.bytes(count * rows * cols, "pixel data")?;

    let mut lcur = Cursor {
        bytes: &label_bytes,
        pos: 0,
        path: labels_path,
    };
    expect_magic(&mut lcur, LABELS_MAGIC)?;
    let label_count = lcur.u32("label count")? as usize;
    if label_count != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let raw_labels = lcur.bytes(label_count, "label data")?;

    let features = Matrix::from_vec(
        count,
        rows * cols,
        pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
    )?;
    let labels: Vec<usize> = raw_labels.iter().map(|&y| usize::from(y)).collect();
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(features, labels, num_classes, name)
}

/// Encode a dataset back into IDX image and label byte streams. Features
/// must be multiples of 1/255 (as produced by [`load_idx`]) and `rows *
/// cols` must equal the feature width.
pub fn encode_idx(data: &Dataset, rows: u32, cols: u32) -> Result<(Vec<u8>, Vec<u8>)> {
    if (rows as usize) * (cols as usize) != data.num_features() {
        return Err(Error::shape(format!(
            "{rows}x{cols} images need {} features, dataset has {}",
            rows * cols,
            data.num_features()
        )));
    }
    let count = u32::try_from(data.len()).map_err(|_| Error::invalid("too many samples"))?;
    let mut images = Vec::with_capacity(16 + data.features().as_slice().len());
    images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&count.to_be_bytes());
    images.extend_from_slice(&rows.to_be_bytes());
    images.extend_from_slice(&cols.to_be_bytes());
    for &v in data.features().as_slice() {
        images.push((v * 255.0).round() as u8);
    }

    let mut labels = Vec::with_capacity(8 + data.len());
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&count.to_be_bytes());
    for &y in data.labels() {
        labels.push(u8::try_from(y).map_err(|_| Error::invalid(format!("label {y} exceeds 255")))?);
    }
    Ok((images, labels))
}

pub fn write_idx(
    data: &Dataset,
    rows: u32,
    cols: u32,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let (images, labels) = encode_idx(data, rows, cols)?;
    fs::write(images_path.as_ref(), images).map_err(|e| Error::io(images_path.as_ref(), e))?;
    fs::write(labels_path.as_ref(), labels).map_err(|e| Error::io(labels_path.as_ref(), e))?;
    Ok(())
}
