//! Binary model checkpoints.
//!
//! Layout, little-endian: `b"MRDC"`, `u32` format version, `u64` header
//! length, UTF-8 JSON header, then every parameter in declaration order as
//! `f32` or `f64` according to the header's precision.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeConfig, CascadeModel, Variant};
use crate::dc::DEFAULT_INITIAL_LAMBDA;
use crate::denoiser::SubnetConfig;
use crate::error::{Error, Result};

use super::Precision;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MRDC";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREAMBLE: usize = 4 + 4 + 8;
const CONTEXT: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub variant: String,
    pub n_c: usize,
    pub n_d: usize,
    pub n_filters: usize,
    pub n_coil: usize,
    pub dims: [usize; 2],
    pub precision: String,
    pub epoch: usize,
    pub seed: u64,
    pub dilation: usize,
    pub kernel_size: usize,
    pub shared_lambda: bool,
    #[serde(default = "default_true")]
    pub lambda_trainable: bool,
}

fn default_true() -> bool {
    true
}

impl CheckpointHeader {
    pub fn of(model: &CascadeModel, precision: Precision, epoch: usize, seed: u64) -> Self {
        let c = &model.config;
        Self {
            variant: c.variant.name().to_string(),
            n_c: c.n_c,
            n_d: c.n_d,
            n_filters: c.n_filters,
            n_coil: c.n_coil,
            dims: [c.height, c.width],
            precision: precision.name().to_string(),
            epoch,
            seed,
            dilation: c.dilation,
            kernel_size: c.kernel_size,
            shared_lambda: c.shared_lambda,
            lambda_trainable: model.dc_params.iter().all(|p| p.trainable),
        }
    }

    pub fn config(&self) -> Result<CascadeConfig> {
        let variant: Variant = self.variant.parse().map_err(|_| malformed(format!("variant {:?}", self.variant)))?;
        Ok(CascadeConfig {
            variant,
            n_c: self.n_c,
            n_d: self.n_d,
            n_filters: self.n_filters,
            dilation: self.dilation,
            kernel_size: self.kernel_size,
            n_coil: self.n_coil,
            height: self.dims[0],
            width: self.dims[1],
            shared_lambda: self.shared_lambda,
            initial_lambda: DEFAULT_INITIAL_LAMBDA,
        })
    }

    pub fn precision(&self) -> Result<Precision> {
        self.precision.parse().map_err(|_| malformed(format!("precision {:?}", self.precision)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: CascadeModel,
}

fn malformed(reason: String) -> Error {
    Error::MalformedHeader {
        context: CONTEXT.into(),
        reason,
    }
}

/// Parameter count implied by `config`, or `None` on overflow.
fn expected_params(config: &CascadeConfig) -> Option<usize> {
    let n_img = match config.variant {
        Variant::DPocsense => 1,
        Variant::DcCnn => config.n_coil,
    };
    let sub = SubnetConfig {
        n_d: config.n_d,
        n_filters: config.n_filters,
        n_img,
        dilation: config.dilation,
        kernel_size: config.kernel_size,
    };
    if config.n_d == 0 || config.n_d > 4096 {
        return None;
    }
    let io = n_img.checked_mul(2)?;
    let k2 = config.kernel_size.checked_mul(config.kernel_size)?;
    let mut per_subnet = 0usize;
    for l in 0..sub.n_d {
        let cin = if l == 0 { io } else { sub.n_filters };
        let cout = if l + 1 == sub.n_d { io } else { sub.n_filters };
        let layer = cin.checked_mul(cout)?.checked_mul(k2)?.checked_add(cout)?;
        per_subnet = per_subnet.checked_add(layer)?;
    }
    let lambdas = if config.shared_lambda { 1 } else { config.n_c };
    per_subnet.checked_mul(config.n_c)?.checked_add(lambdas)
}

pub fn encode_checkpoint(model: &CascadeModel, precision: Precision, epoch: usize, seed: u64) -> Vec<u8> {
    let header = serde_json::to_vec(&CheckpointHeader::of(model, precision, epoch, seed)).expect("header serializes");
    let params = model.flat_params();
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + params.len() * precision.bytes());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for p in params {
        match precision {
            Precision::F32 => out.extend_from_slice(&(p as f32).to_le_bytes()),
            Precision::F64 => out.extend_from_slice(&p.to_le_bytes()),
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < PREAMBLE {
        if bytes.len() < 4 || bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: CHECKPOINT_MAGIC,
                found: bytes[..bytes.len().min(4)].to_vec(),
            });
        }
        return Err(Error::TruncatedPayload {
            context: CONTEXT.into(),
            expected: PREAMBLE,
            found: bytes.len(),
        });
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: bytes[..4].to_vec(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version as u64,
            expected: CHECKPOINT_VERSION as u64,
        });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let rest = &bytes[PREAMBLE..];
    let header_len = usize::try_from(header_len)
        .ok()
        .filter(|&n| n <= rest.len())
        .ok_or_else(|| Error::TruncatedPayload {
            context: "checkpoint header".into(),
            expected: usize::try_from(header_len).unwrap_or(usize::MAX),
            found: rest.len(),
        })?;
    let header: CheckpointHeader =
        serde_json::from_slice(&rest[..header_len]).map_err(|e| malformed(e.to_string()))?;
    let config = header.config()?;
    let precision = header.precision()?;
    let count = expected_params(&config).ok_or_else(|| malformed(format!("implausible model shape {config:?}")))?;
    let payload = &rest[header_len..];
    let expected = count
        .checked_mul(precision.bytes())
        .ok_or_else(|| malformed(format!("{count} parameters overflow")))?;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            context: "checkpoint parameters".into(),
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::TrailingBytes {
            context: "checkpoint parameters".into(),
            expected,
            found: payload.len(),
        });
    }
    let values: Vec<f64> = match precision {
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    let mut model = CascadeModel::new(config, 0).map_err(|e| malformed(e.to_string()))?;
    model.set_flat_params(&values)?;
    for p in &mut model.dc_params {
        p.trainable = header.lambda_trainable;
    }
    if !model.is_finite() {
        return Err(Error::NonFinite("checkpoint parameters".into()));
    }
    Ok(Checkpoint { header, model })
}

/// Writes through a temporary sibling and renames it into place.
pub fn save_checkpoint(path: &Path, model: &CascadeModel, precision: Precision, epoch: usize, seed: u64) -> Result<()> {
    let bytes = encode_checkpoint(model, precision, epoch, seed);
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
