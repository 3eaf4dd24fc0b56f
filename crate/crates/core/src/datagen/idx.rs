//! IDX files: big-endian `u32` magic and dimensions followed by raw `u8`s.
//!
//! Images: magic `0x00000803`, then count, rows, cols, then
//! `count * rows * cols` pixel bytes row-major. Labels: magic `0x00000801`,
//! then count, then `count` label bytes.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{argmax, ClassificationDataset};
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxLabels {
    pub labels: Vec<u8>,
}

/// Header summary for `idx-inspect`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub count: usize,
    pub dims: Vec<usize>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let slice = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| Error::IdxTruncated {
            path: path.to_path_buf(),
            needed: offset + 4,
            have: bytes.len(),
        })?;
    Ok(u32::from_be_bytes(slice.try_into().expect("4 bytes")))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::IdxMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_len(bytes: &[u8], needed: usize, path: &Path) -> Result<()> {
    if bytes.len() < needed {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            needed,
            have: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(Error::IdxTrailing {
            path: path.to_path_buf(),
            extra: bytes.len() - needed,
        });
    }
    Ok(())
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    check_magic(&bytes, IDX_IMAGES_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let body = count * rows * cols;
    check_len(&bytes, 16 + body, path)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<IdxLabels> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    check_magic(&bytes, IDX_LABELS_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    check_len(&bytes, 8 + count, path)?;
    Ok(IdxLabels {
        labels: bytes[8..].to_vec(),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_idx_images(path: impl AsRef<Path>, images: &IdxImages) -> Result<()> {
    let expected = images.count * images.rows * images.cols;
    if images.pixels.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: images.pixels.len(),
            context: "IDX pixel buffer",
        });
    }
    let mut out = Vec::with_capacity(16 + expected);
    for word in [
        IDX_IMAGES_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    write_file(path.as_ref(), &out)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &IdxLabels) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.labels.len() as u32).to_be_bytes());
    out.extend_from_slice(&labels.labels);
    write_file(path.as_ref(), &out)
}

/// Loads an image/label pair as a one-hot dataset with pixels scaled by
/// 1/255. Without an explicit `class_count` the count is
/// `max(10, largest label + 1)`.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    class_count: Option<usize>,
) -> Result<(ClassificationDataset, (usize, usize))> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if images.count != labels.labels.len() {
        return Err(Error::IdxCountMismatch {
            images: images.count,
            labels: labels.labels.len(),
        });
    }
    let c = class_count.unwrap_or_else(|| {
        let max = labels.labels.iter().copied().max().unwrap_or(0) as usize;
        (max + 1).max(10)
    });
    let width = images.rows * images.cols;
    let features = Array2::from_shape_vec(
        (images.count, width),
        images.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )
    .expect("pixel buffer shape checked on read");
    let labels: Vec<usize> = labels.labels.iter().map(|&l| l as usize).collect();
    let ds = ClassificationDataset::from_labels(features, &labels, c)?;
    Ok((ds, (images.rows, images.cols)))
}

/// Writes a dataset back out as an IDX pair: pixels `round(255 x)` clamped to
/// `0..=255`, labels by argmax.
pub fn write_idx(
    ds: &ClassificationDataset,
    image_shape: (usize, usize),
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let (rows, cols) = image_shape;
    if rows * cols != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: rows * cols,
            context: "IDX image shape",
        });
    }
    let mut labels = Vec::with_capacity(ds.len());
    for row in ds.targets.rows() {
        let l = argmax(row);
        if l > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "label {l} does not fit in a byte"
            )));
        }
        labels.push(l as u8);
    }
    let images = IdxImages {
        count: ds.len(),
        rows,
        cols,
        pixels: ds
            .features
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect(),
    };
    write_idx_images(images_path, &images)?;
    write_idx_labels(labels_path, &IdxLabels { labels })
}

/// Reads only what is needed to describe a file of either kind.
pub fn inspect_idx(path: impl AsRef<Path>) -> Result<IdxHeader> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    match magic {
        IDX_IMAGES_MAGIC => {
            let img = read_idx_images(path)?;
            Ok(IdxHeader {
                magic,
                count: img.count,
                dims: vec![img.rows, img.cols],
            })
        }
        IDX_LABELS_MAGIC => {
            let lab = read_idx_labels(path)?;
            Ok(IdxHeader {
                magic,
                count: lab.labels.len(),
                dims: vec![],
            })
        }
        found => Err(Error::IdxMagic {
            path: path.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            found,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_pair(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let img = dir.join("img.idx");
        let lab = dir.join("lab.idx");
        write_idx_images(
            &img,
            &IdxImages {
                count: 2,
                rows: 2,
                cols: 2,
                pixels: vec![0, 255, 51, 102, 255, 0, 0, 255],
            },
        )
        .unwrap();
        write_idx_labels(&lab, &IdxLabels { labels: vec![7, 2] }).unwrap();
        (img, lab)
    }

    #[test]
    fn scaling_and_one_hot() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = sample_pair(dir.path());
        let (ds, shape) = load_idx(&img, &lab, None).unwrap();
        assert_eq!(shape, (2, 2));
        assert_eq!(ds.class_count(), 10);
        assert_eq!(ds.features.row(0).to_vec(), vec![0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.targets[[0, 7]], 1.0);
        assert_eq!(ds.targets.row(0).sum(), 1.0);
        assert_eq!(ds.labels(), vec![7, 2]);
    }

    #[test]
    fn byte_exact_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = sample_pair(dir.path());
        let (ds, shape) = load_idx(&img, &lab, None).unwrap();
        let img2 = dir.path().join("img2.idx");
        let lab2 = dir.path().join("lab2.idx");
        write_idx(&ds, shape, &img2, &lab2).unwrap();
        assert_eq!(fs::read(&img).unwrap(), fs::read(&img2).unwrap());
        assert_eq!(fs::read(&lab).unwrap(), fs::read(&lab2).unwrap());
    }

    #[test]
    fn header_layout_is_big_endian() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = sample_pair(dir.path());
        let bytes = fs::read(&img).unwrap();
        assert_eq!(
            &bytes[..16],
            &[0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2]
        );
        let bytes = fs::read(&lab).unwrap();
        assert_eq!(&bytes[..8], &[0, 0, 8, 1, 0, 0, 0, 2]);
    }

    #[test]
    fn error_variants_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = sample_pair(dir.path());
        assert!(matches!(
            load_idx(&lab, &lab, None),
            Err(Error::IdxMagic { .. })
        ));

        let mut bytes = fs::read(&img).unwrap();
        bytes.truncate(bytes.len() - 1);
        let short = dir.path().join("short.idx");
        fs::write(&short, &bytes).unwrap();
        assert!(matches!(
            load_idx(&short, &lab, None),
            Err(Error::IdxTruncated { .. })
        ));

        let lab3 = dir.path().join("lab3.idx");
        write_idx_labels(
            &lab3,
            &IdxLabels {
                labels: vec![1, 2, 3],
            },
        )
        .unwrap();
        assert!(matches!(
            load_idx(&img, &lab3, None),
            Err(Error::IdxCountMismatch {
                images: 2,
                labels: 3
            })
        ));
    }

    #[test]
    fn inspect_reports_dims() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = sample_pair(dir.path());
        let h = inspect_idx(&img).unwrap();
        assert_eq!(h.magic, IDX_IMAGES_MAGIC);
        assert_eq!(h.count, 2);
        assert_eq!(h.dims, vec![2, 2]);
        assert_eq!(inspect_idx(&lab).unwrap().count, 2);
    }
}
