//! Network checkpoints: a TOML manifest, a marker line, then the raw
//! little-endian `f32` parameters (per layer: weights row-major, then bias;
//! binary layers store their latent weights).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use landscape_core::{Activation, LayerSpec, Network};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

/// Separates the manifest from the payload.
pub(crate) const PAYLOAD_MARKER: &[u8] = b"\n%%payload%%\n";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("manifest architecture holds {architecture} parameters but declares a payload of {declared}")]
    Architecture { architecture: usize, declared: usize },
    #[error("payload has {found} bytes, manifest declares {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("payload checksum mismatch")]
    Checksum,
    #[error(transparent)]
    Network(#[from] landscape_core::NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationName {
    Relu,
    Sign,
    Linear,
}

impl From<Activation> for ActivationName {
    fn from(a: Activation) -> Self {
        match a {
            Activation::Relu => ActivationName::Relu,
            Activation::Sign => ActivationName::Sign,
            Activation::Linear => ActivationName::Linear,
        }
    }
}

impl From<ActivationName> for Activation {
    fn from(a: ActivationName) -> Self {
        match a {
            ActivationName::Relu => Activation::Relu,
            ActivationName::Sign => Activation::Sign,
            ActivationName::Linear => Activation::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: ActivationName,
    pub bias: bool,
    pub binary: bool,
    #[serde(default)]
    pub frozen: bool,
}

impl From<&LayerSpec> for LayerEntry {
    fn from(s: &LayerSpec) -> Self {
        Self {
            fan_in: s.fan_in,
            fan_out: s.fan_out,
            activation: s.activation.into(),
            bias: s.has_bias,
            binary: s.weights_binary,
            frozen: s.frozen,
        }
    }
}

impl LayerEntry {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            fan_in: self.fan_in,
            fan_out: self.fan_out,
            activation: self.activation.into(),
            has_bias: self.bias,
            weights_binary: self.binary,
            frozen: self.frozen,
        }
    }
}

/// Where a network came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lineage {
    /// Master seed of the run.
    pub seed: Option<u64>,
    /// Seed actually used for this network.
    pub derived_seed: Option<u64>,
    pub algorithm: Option<String>,
    /// Free-form path of stage names leading to this network.
    #[serde(default)]
    pub stages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub payload_floats: usize,
    /// Lower-case hex SHA-256 of the payload bytes.
    pub checksum: String,
    #[serde(default)]
    pub lineage: Lineage,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub layers: Vec<LayerEntry>,
}

/// Network plus the provenance stored next to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub lineage: Lineage,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(network: Network) -> Self {
        Self {
            network,
            lineage: Lineage::default(),
            metadata: BTreeMap::new(),
        }
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let params = ck.network.params();
    let mut payload = Vec::with_capacity(4 * params.len());
    for p in &params {
        payload.extend_from_slice(&p.to_le_bytes());
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        payload_floats: params.len(),
        checksum: hex_digest(&payload),
        lineage: ck.lineage.clone(),
        metadata: ck.metadata.clone(),
        layers: ck.network.layers().iter().map(|l| LayerEntry::from(&l.spec)).collect(),
    };
    let mut out = b"# landscape checkpoint\n".to_vec();
    out.extend(toml::to_string(&manifest).expect("manifest serializes").into_bytes());
    out.extend_from_slice(PAYLOAD_MARKER);
    out.extend(payload);
    out
}

/// Splits a file into its manifest text and payload bytes.
pub(crate) fn split_manifest(bytes: &[u8]) -> Result<(&str, &[u8]), String> {
    let pos = bytes
        .windows(PAYLOAD_MARKER.len())
        .position(|w| w == PAYLOAD_MARKER)
        .ok_or("payload marker not found")?;
    let text = std::str::from_utf8(&bytes[..pos]).map_err(|e| e.to_string())?;
    Ok((text, &bytes[pos + PAYLOAD_MARKER.len()..]))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let (text, payload) = split_manifest(bytes).map_err(CheckpointError::Manifest)?;
    // Check the version before the full schema so that future manifests
    // report the version rather than a field error.
    let table: toml::Table = toml::from_str(text).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    match table.get("schema_version").and_then(|v| v.as_integer()) {
        Some(v) if v == SCHEMA_VERSION as i64 => {}
        Some(v) => {
            return Err(CheckpointError::SchemaVersion {
                found: v.clamp(0, u32::MAX as i64) as u32,
                expected: SCHEMA_VERSION,
            })
        }
        None => return Err(CheckpointError::Manifest("missing schema_version".into())),
    }
    let manifest: Manifest = toml::from_str(text).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    let specs: Vec<LayerSpec> = manifest.layers.iter().map(LayerEntry::spec).collect();
    let architecture: usize = specs.iter().map(LayerSpec::num_params).sum();
    if architecture != manifest.payload_floats {
        return Err(CheckpointError::Architecture {
            architecture,
            declared: manifest.payload_floats,
        });
    }
    let expected = 4 * manifest.payload_floats;
    if payload.len() != expected {
        return Err(CheckpointError::PayloadLength {
            expected,
            found: payload.len(),
        });
    }
    if hex_digest(payload) != manifest.checksum {
        return Err(CheckpointError::Checksum);
    }
    let params: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let template = Network::init(&specs, &mut landscape_core::rng::rng(0))?;
    Ok(Checkpoint {
        network: template.with_params(&params)?,
        lineage: manifest.lineage,
        metadata: manifest.metadata,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, encode_checkpoint(ck)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_checkpoint(&bytes)
}

/// Saves a bare network.
pub fn save_network(net: &Network, path: &Path) -> Result<(), CheckpointError> {
    save_checkpoint(&Checkpoint::new(net.clone()), path)
}

pub fn load_network(path: &Path) -> Result<Network, CheckpointError> {
    Ok(load_checkpoint(path)?.network)
}
