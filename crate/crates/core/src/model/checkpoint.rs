//! Binary checkpoints: magic bytes, a little-endian `u64` header length, a JSON header,
//! then every tensor as row-major little-endian `f64` in header order.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NSPECCK1";
const FORMAT_VERSION: u32 = 1;

/// Trained parameters with the configuration and operator scale they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub lambda_max: f64,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: TrainConfig,
    feature_dim: usize,
    class_count: usize,
    lambda_max: f64,
    tensors: Vec<TensorInfo>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorInfo {
    name: String,
    shape: [usize; 2],
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let tensors = ckpt.params.weights.tensors();
    let header = Header {
        format_version: FORMAT_VERSION,
        config: ckpt.config.clone(),
        feature_dim: ckpt.params.feature_dim(),
        class_count: ckpt.params.class_count(),
        lambda_max: ckpt.lambda_max,
        tensors: tensors.iter().map(|(n, m)| TensorInfo { name: (*n).into(), shape: [m.nrows(), m.ncols()] }).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for (_, m) in &tensors {
        for v in m.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn schema<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Schema(msg.into()))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return schema(format!("{} is not a checkpoint", path.display()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let Some(json) = bytes.get(16..16 + len) else {
        return schema("truncated checkpoint header");
    };
    let header: Header = serde_json::from_slice(json).map_err(|e| Error::Schema(format!("checkpoint header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return schema(format!("unsupported checkpoint version {}", header.format_version));
    }
    let mut params = ModelParams::init(
        &header.config,
        header.feature_dim,
        header.class_count,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    let mut body = &bytes[16 + len..];
    {
        let tensors = params.weights.tensors_mut();
        if tensors.len() != header.tensors.len() {
            return schema("checkpoint tensor list does not match its configuration");
        }
        for ((name, t), info) in tensors.into_iter().zip(&header.tensors) {
            if name != info.name || [t.nrows(), t.ncols()] != info.shape {
                return schema(format!("unexpected tensor {} {:?}", info.name, info.shape));
            }
            let need = t.len() * 8;
            if body.len() < need {
                return schema(format!("truncated data for {name}"));
            }
            let data: Vec<f64> =
                body[..need].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            *t = Matrix::from_shape_vec(t.raw_dim(), data).expect("length checked");
            body = &body[need..];
        }
    }
    if !body.is_empty() {
        return schema("trailing bytes after checkpoint data");
    }
    Ok(Checkpoint { config: header.config, lambda_max: header.lambda_max, params })
}
