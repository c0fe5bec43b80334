use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{PatError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct MnistSet {
    /// One image per row, 784 values in [0, 1].
    pub images: Array2<f64>,
    pub labels: Vec<usize>,
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| truncated(path, "header"))
}

fn truncated(path: &Path, what: &str) -> PatError {
    PatError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("truncated IDX file ({what})"),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| PatError::io(path, e))
}

pub(crate) fn parse_images(bytes: &[u8], path: &Path, limit: Option<usize>) -> Result<(Array2<f64>, usize, usize)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(PatError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("bad image magic {magic:#010x}"),
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let n = limit.map_or(n, |l| l.min(n));
    let px = rows * cols;
    let body = bytes.get(16..16 + n * px).ok_or_else(|| truncated(path, "pixels"))?;
    let images = Array2::from_shape_fn((n, px), |(i, j)| body[i * px + j] as f64 / 255.0);
    Ok((images, rows, cols))
}

pub(crate) fn parse_labels(bytes: &[u8], path: &Path, limit: Option<usize>) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(PatError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("bad label magic {magic:#010x}"),
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let n = limit.map_or(n, |l| l.min(n));
    let body = bytes.get(8..8 + n).ok_or_else(|| truncated(path, "labels"))?;
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Reads an IDX image/label pair, keeping at most `limit` examples.
pub fn load_mnist_idx(images: &Path, labels: &Path, limit: Option<usize>) -> Result<MnistSet> {
    let (x, rows, cols) = parse_images(&read(images)?, images, limit)?;
    if (rows, cols) != (28, 28) {
        return Err(PatError::Parse {
            path: images.to_path_buf(),
            line: 0,
            message: format!("expected 28×28 images, found {rows}×{cols}"),
        });
    }
    let y = parse_labels(&read(labels)?, labels, limit)?;
    crate::error::check_len("mnist labels", x.nrows(), y.len())?;
    if let Some(&bad) = y.iter().find(|&&l| l > 9) {
        return Err(PatError::InvalidClass { index: bad, classes: 10 });
    }
    Ok(MnistSet { images: x, labels: y })
}

/// 2×2 mean pooling of a row-major 28×28 image into 196 values.
pub fn avg_pool_2x2(image: ArrayView1<f64>) -> Result<Vec<f64>> {
    crate::error::check_len("avg_pool_2x2 input", 784, image.len())?;
    let mut out = Vec::with_capacity(196);
    for r in 0..14 {
        for c in 0..14 {
            let at = |dr: usize, dc: usize| image[(2 * r + dr) * 28 + 2 * c + dc];
            out.push((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0);
        }
    }
    Ok(out)
}

/// Pools every row of `images`.
pub fn pool_images(images: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((images.nrows(), 196));
    for (i, row) in images.rows().into_iter().enumerate() {
        let p = avg_pool_2x2(row)?;
        out.row_mut(i).assign(&ArrayView1::from(&p[..]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn idx_images(pixels: &[Vec<u8>]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend(IMAGE_MAGIC.to_be_bytes());
        b.extend((pixels.len() as u32).to_be_bytes());
        b.extend(28u32.to_be_bytes());
        b.extend(28u32.to_be_bytes());
        for p in pixels {
            b.extend(p);
        }
        b
    }

    #[test]
    fn zero_and_full_bytes() {
        let bytes = idx_images(&[vec![0; 784], vec![255; 784]]);
        let (x, _, _) = parse_images(&bytes, Path::new("i"), None).unwrap();
        assert!(x.row(0).iter().all(|&v| v == 0.0));
        assert!(x.row(1).iter().all(|&v| v == 1.0));
        let (x, _, _) = parse_images(&bytes, Path::new("i"), Some(1)).unwrap();
        assert_eq!(x.nrows(), 1);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut bytes = idx_images(&[vec![0; 784]]);
        assert!(parse_labels(&bytes, Path::new("i"), None).is_err());
        bytes.truncate(500);
        assert!(parse_images(&bytes, Path::new("i"), None).is_err());
    }

    #[test]
    fn pooling() {
        let c = Array1::from_elem(784, 0.3);
        assert!(avg_pool_2x2(c.view()).unwrap().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        let mut img = Array1::zeros(784);
        img[29] = 4.0;
        let p = avg_pool_2x2(img.view()).unwrap();
        assert_eq!(p[0], 1.0);
        assert_eq!(4.0 * p.iter().sum::<f64>(), img.sum());
        assert!(avg_pool_2x2(Array1::zeros(100).view()).is_err());
    }
}
