//! IDX tensors (MNIST-style files), optionally gzip-compressed.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use landscape_core::data::{parity_labels, pixel_moments};
use landscape_core::{Dataset, Task};
use ndarray::Array2;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad IDX magic {0:#010x}")]
    BadMagic(u32),
    #[error("truncated IDX data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("IDX dimensions {0:?} overflow the addressable size")]
    DimensionOverflow(Vec<u32>),
    #[error("{0}")]
    Mismatch(String),
}

/// Unsigned-byte tensor with its dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn labels(data: Vec<u8>) -> Self {
        Self {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn images(count: usize, rows: usize, cols: usize, data: Vec<u8>) -> Self {
        Self {
            dims: vec![count, rows, cols],
            data,
        }
    }

    pub fn magic(&self) -> u32 {
        0x0000_0800 | self.dims.len() as u32
    }

    /// Size of one item (product of all but the first dimension).
    pub fn item_len(&self) -> usize {
        self.dims[1..].iter().product()
    }
}

/// Parses an uncompressed IDX byte stream.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor, IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::Truncated {
            expected: 4,
            found: bytes.len(),
        });
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    let ndims = match magic {
        IMAGES_MAGIC => 3,
        LABELS_MAGIC => 1,
        other => return Err(IdxError::BadMagic(other)),
    };
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(IdxError::Truncated {
            expected: header,
            found: bytes.len(),
        });
    }
    let raw: Vec<u32> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
        .collect();
    let total = raw
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|n| n.checked_add(header).map(|_| n))
        .ok_or_else(|| IdxError::DimensionOverflow(raw.clone()))?;
    let payload = &bytes[header..];
    if payload.len() < total {
        return Err(IdxError::Truncated {
            expected: total,
            found: payload.len(),
        });
    }
    Ok(IdxTensor {
        dims: raw.iter().map(|&d| d as usize).collect(),
        data: payload[..total].to_vec(),
    })
}

/// Serializes a tensor with one (labels) or three (images) dimensions.
pub fn encode_idx(tensor: &IdxTensor) -> Result<Vec<u8>, IdxError> {
    if tensor.dims.len() != 1 && tensor.dims.len() != 3 {
        return Err(IdxError::Mismatch(format!(
            "IDX tensors here have 1 or 3 dimensions, got {}",
            tensor.dims.len()
        )));
    }
    let expected: usize = tensor.dims.iter().product();
    if expected != tensor.data.len() {
        return Err(IdxError::Mismatch(format!(
            "dimensions {:?} need {expected} bytes, tensor holds {}",
            tensor.dims,
            tensor.data.len()
        )));
    }
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + expected);
    out.extend_from_slice(&tensor.magic().to_be_bytes());
    for &d in &tensor.dims {
        let d = u32::try_from(d).map_err(|_| IdxError::DimensionOverflow(vec![u32::MAX]))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    Ok(out)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IdxError + '_ {
    move |source| IdxError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads an IDX file; gzip input is recognized by its magic bytes.
pub fn read_idx(path: &Path) -> Result<IdxTensor, IdxError> {
    let raw = fs::read(path).map_err(io_err(path))?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut bytes = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut bytes)
            .map_err(io_err(path))?;
        parse_idx(&bytes)
    } else {
        parse_idx(&raw)
    }
}

pub fn write_idx(path: &Path, tensor: &IdxTensor, gzip: bool) -> Result<(), IdxError> {
    let bytes = encode_idx(tensor)?;
    let out = if gzip {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes).map_err(io_err(path))?;
        enc.finish().map_err(io_err(path))?
    } else {
        bytes
    };
    fs::write(path, out).map_err(io_err(path))
}

/// How digit labels become dataset labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMap {
    /// Even digit → +1, odd → −1.
    Parity,
    /// Ten-class digits.
    Digits,
}

/// Image/label pair loaded into a dataset, first `limit` items only.
/// Pixels are scaled to `[0, 1]`; standardization is left to the caller.
pub fn load_idx_dataset(
    images: &Path,
    labels: &Path,
    limit: Option<usize>,
    map: LabelMap,
) -> Result<Dataset, IdxError> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    if img.dims.len() != 3 || lab.dims.len() != 1 {
        return Err(IdxError::Mismatch("expected a 3-D image file and a 1-D label file".into()));
    }
    if img.dims[0] != lab.dims[0] {
        return Err(IdxError::Mismatch(format!(
            "{} images but {} labels",
            img.dims[0], lab.dims[0]
        )));
    }
    let n = limit.map_or(img.dims[0], |l| l.min(img.dims[0]));
    let width = img.item_len();
    let pixels: Vec<f32> = img.data[..n * width].iter().map(|&p| p as f32 / 255.0).collect();
    let inputs = Array2::from_shape_vec((n, width), pixels).expect("shape checked above");
    let digits = &lab.data[..n];
    let (labels, task) = match map {
        LabelMap::Parity => (
            parity_labels(digits).map_err(|e| IdxError::Mismatch(e.to_string()))?,
            Task::Binary,
        ),
        LabelMap::Digits => {
            if let Some(d) = digits.iter().find(|&&d| d > 9) {
                return Err(IdxError::Mismatch(format!("digit label {d} is outside 0..=9")));
            }
            (digits.iter().map(|&d| d as i32).collect(), Task::Classes(10))
        }
    };
    Dataset::new(inputs, labels, task).map_err(|e| IdxError::Mismatch(e.to_string()))
}

/// Standardizes `train` globally and applies the same affine map to `test`.
pub fn standardize_pair(train: &mut Dataset, test: &mut Dataset) -> Result<(), IdxError> {
    let (mean, var) = pixel_moments(&train.inputs);
    if !(var > 0.0) {
        return Err(IdxError::Mismatch("training images have zero variance".into()));
    }
    let inv = 1.0 / var.sqrt();
    for d in [train, test] {
        d.inputs.mapv_inplace(|p| ((p as f64 - mean) * inv) as f32);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_file_layout() {
        let bytes = encode_idx(&IdxTensor::labels(vec![3, 1, 4, 1])).unwrap();
        assert_eq!(&bytes[..4], &[0, 0, 8, 1]);
        assert_eq!(&bytes[4..8], &[0, 0, 0, 4]);
        assert_eq!(&bytes[8..], &[3, 1, 4, 1]);
        assert_eq!(bytes.len(), 12);
    }

    #[test]
    fn errors_are_distinct() {
        let good = encode_idx(&IdxTensor::images(2, 2, 2, (0..8).collect())).unwrap();
        assert!(matches!(parse_idx(&good[..good.len() - 1]), Err(IdxError::Truncated { expected: 8, found: 7 })));
        let mut bad = good.clone();
        bad[3] = 2;
        assert!(matches!(parse_idx(&bad), Err(IdxError::BadMagic(0x802))));
        let mut huge = vec![0, 0, 8, 3];
        for _ in 0..3 {
            huge.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        if usize::BITS == 64 {
            assert!(matches!(parse_idx(&huge), Err(IdxError::DimensionOverflow(_))));
        }
        assert!(matches!(parse_idx(&[0, 0]), Err(IdxError::Truncated { .. })));
    }
}
