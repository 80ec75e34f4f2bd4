//! Dataset files: TOML manifest, marker line, then the inputs as
//! little-endian `f32` (row-major) followed by the labels as little-endian
//! `i32`.

use std::fs;
use std::path::Path;

use landscape_core::{Dataset, Task};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{hex_digest, split_manifest, PAYLOAD_MARKER};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DatasetFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset manifest: {0}")]
    Manifest(String),
    #[error("dataset schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("payload has {found} bytes, manifest declares {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("payload checksum mismatch")]
    Checksum,
    #[error(transparent)]
    Data(#[from] landscape_core::NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetManifest {
    schema_version: u32,
    rows: usize,
    cols: usize,
    /// 0 for a single-output ±1 task, otherwise the class count.
    classes: usize,
    checksum: String,
    #[serde(default)]
    description: String,
}

pub fn encode_dataset(data: &Dataset, description: &str) -> Vec<u8> {
    let mut payload = Vec::with_capacity(4 * (data.inputs.len() + data.len()));
    for v in data.inputs.iter() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    for l in &data.labels {
        payload.extend_from_slice(&l.to_le_bytes());
    }
    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        rows: data.len(),
        cols: data.dim(),
        classes: match data.task {
            Task::Binary => 0,
            Task::Classes(k) => k,
        },
        checksum: hex_digest(&payload),
        description: description.to_string(),
    };
    let mut out = b"# landscape dataset\n".to_vec();
    out.extend(toml::to_string(&manifest).expect("manifest serializes").into_bytes());
    out.extend_from_slice(PAYLOAD_MARKER);
    out.extend(payload);
    out
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset, DatasetFileError> {
    let (text, payload) = split_manifest(bytes).map_err(DatasetFileError::Manifest)?;
    let table: toml::Table = toml::from_str(text).map_err(|e| DatasetFileError::Manifest(e.to_string()))?;
    match table.get("schema_version").and_then(|v| v.as_integer()) {
        Some(v) if v == DATASET_SCHEMA_VERSION as i64 => {}
        Some(v) => {
            return Err(DatasetFileError::SchemaVersion {
                found: v.clamp(0, u32::MAX as i64) as u32,
                expected: DATASET_SCHEMA_VERSION,
            })
        }
        None => return Err(DatasetFileError::Manifest("missing schema_version".into())),
    }
    let m: DatasetManifest = toml::from_str(text).map_err(|e| DatasetFileError::Manifest(e.to_string()))?;
    let cells = m
        .rows
        .checked_mul(m.cols)
        .and_then(|c| c.checked_add(m.rows))
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| DatasetFileError::Manifest("dimensions overflow".into()))?;
    if payload.len() != cells {
        return Err(DatasetFileError::PayloadLength {
            expected: cells,
            found: payload.len(),
        });
    }
    if hex_digest(payload) != m.checksum {
        return Err(DatasetFileError::Checksum);
    }
    let (xs, ys) = payload.split_at(4 * m.rows * m.cols);
    let inputs: Vec<f32> = xs
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels: Vec<i32> = ys
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let task = if m.classes == 0 {
        Task::Binary
    } else {
        Task::Classes(m.classes)
    };
    let inputs = Array2::from_shape_vec((m.rows, m.cols), inputs).expect("length checked");
    Ok(Dataset::new(inputs, labels, task)?)
}

pub fn save_dataset(data: &Dataset, description: &str, path: &Path) -> Result<(), DatasetFileError> {
    fs::write(path, encode_dataset(data, description)).map_err(|source| DatasetFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetFileError> {
    let bytes = fs::read(path).map_err(|source| DatasetFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_dataset(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip() {
        let d = Dataset::new(array![[1.0f32, -1.0], [0.5, 2.0], [0.0, -0.25]], vec![2, 0, 1], Task::Classes(3)).unwrap();
        assert_eq!(decode_dataset(&encode_dataset(&d, "toy")).unwrap(), d);
        let b = Dataset::new(array![[1.0f32], [-1.0]], vec![1, -1], Task::Binary).unwrap();
        assert_eq!(decode_dataset(&encode_dataset(&b, "")).unwrap(), b);
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let d = Dataset::new(array![[1.0f32, -1.0]], vec![1], Task::Binary).unwrap();
        let mut bytes = encode_dataset(&d, "");
        let n = bytes.len();
        bytes[n - 5] ^= 0x40;
        assert!(matches!(decode_dataset(&bytes), Err(DatasetFileError::Checksum)));
        assert!(matches!(decode_dataset(&bytes[..n - 1]), Err(DatasetFileError::PayloadLength { .. })));
    }
}
