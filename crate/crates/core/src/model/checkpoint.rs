//! Binary checkpoint layout (all integers little-endian `u32`):
//!
//! ```text
//! "ESTM" | version | config length | config JSON (UTF-8)
//! | parameter count | per parameter, sorted by name:
//!     name length | name | rank | dims... | f32 values (LE, row-major)
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{FeatureConfig, FeatureStats};
use super::fusion::FusionState;
use super::network::Network;
use super::{ModelConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::trajectory::LabelMap;

pub const MAGIC: &[u8; 4] = b"ESTM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointConfig {
    model: ModelConfig,
    features: FeatureConfig,
    stats: FeatureStats,
    fusion: FusionState,
    label_map: LabelMap,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint(model: &TrainedModel) -> Result<Vec<u8>> {
    let config = CheckpointConfig {
        model: model.network.config.clone(),
        features: model.features.clone(),
        stats: model.stats,
        fusion: model.fusion,
        label_map: model.label_map.clone(),
    };
    let json = serde_json::to_vec(&config)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize)?;
    put_u32(&mut out, json.len())?;
    out.extend_from_slice(&json);

    let mut params: Vec<_> = model.network.params.params().iter().collect();
    params.sort_by(|a, b| a.name.cmp(&b.name));
    put_u32(&mut out, params.len())?;
    for p in params {
        put_u32(&mut out, p.name.len())?;
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, p.value.rank())?;
        for &d in p.value.shape() {
            put_u32(&mut out, d)?;
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainedModel> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = cur.u32()?;
    let config: CheckpointConfig =
        serde_json::from_slice(cur.take(len)?).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;

    // Fresh network for the layout; every value is overwritten below.
    let mut network = Network::new(config.model.clone(), 0)?;
    let count = cur.u32()?;
    if count != network.params.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameters, found {count}",
            network.params.len()
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..count {
        let name_len = cur.u32()?;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u32()?;
        let shape = (0..rank).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = cur.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("parameter too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let param = network
            .params
            .get_mut(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter {name:?}")))?;
        if param.value.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "parameter {name:?} has shape {shape:?}, model expects {:?}",
                param.value.shape()
            )));
        }
        param.value = Tensor::new(&shape, data)?;
        seen.insert(name);
    }
    if seen.len() != count {
        return Err(Error::Checkpoint("duplicate parameter names".into()));
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(TrainedModel {
        network,
        features: config.features,
        stats: config.stats,
        fusion: config.fusion,
        label_map: config.label_map,
    })
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
