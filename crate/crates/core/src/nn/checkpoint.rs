//! Checkpoint file layout:
//!
//! ```text
//! magic    8 bytes  "SYNCKPT1"
//! hlen     u32 LE   length of the JSON header
//! header   hlen bytes of JSON (schema, config, normalization, step, array table)
//! arrays   little-endian f64 values, in the order of the header's array table:
//!          params (tensor order given by `tensors`), bn.running, adam.m, adam.v
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, Model, ModelConfig, ParamLayout};
use crate::error::{Error, Result};
use crate::features::NormStats;

pub const CHECKPOINT_SCHEMA: u32 = 1;
const MAGIC: &[u8; 8] = b"SYNCKPT1";

#[derive(Serialize, Deserialize)]
struct Header {
    schema: u32,
    config: ModelConfig,
    norm_fingerprint: String,
    norm: NormStats,
    step: u64,
    adam: Adam,
    tensors: Vec<(String, usize, usize)>,
    arrays: Vec<(String, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: Adam,
    pub norm: NormStats,
}

impl Checkpoint {
    pub fn step(&self) -> u64 {
        self.adam.step
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let header = Header {
            schema: CHECKPOINT_SCHEMA,
            config: m.config.clone(),
            norm_fingerprint: self.norm.fingerprint(),
            norm: self.norm.clone(),
            step: self.adam.step,
            adam: self.adam.clone(),
            tensors: m.layout.named().into_iter().map(|(n, r)| (n, r.start, r.end)).collect(),
            arrays: vec![
                ("params".into(), m.params.len()),
                ("bn.running".into(), m.running.len()),
                ("adam.m".into(), self.adam.m.len()),
                ("adam.v".into(), self.adam.v.len()),
            ],
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + json.len() + 8 * (m.params.len() * 3 + m.running.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for arr in [&m.params, &m.running, &self.adam.m, &self.adam.v] {
            for v in arr.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        if header.schema != CHECKPOINT_SCHEMA {
            return Err(Error::Checkpoint(format!("unsupported checkpoint schema {}", header.schema)));
        }
        header.config.validate()?;
        let found = header.norm.fingerprint();
        if found != header.norm_fingerprint {
            return Err(Error::Fingerprint { what: "checkpoint normalization".into(), expected: header.norm_fingerprint, found });
        }
        let layout = ParamLayout::new(&header.config);
        let running_len = header.config.layers * 2 * header.config.hidden;
        let expected = [layout.len, running_len, layout.len, layout.len];
        let lens: Vec<usize> = header.arrays.iter().map(|a| a.1).collect();
        if lens != expected {
            return Err(Error::Checkpoint(format!("array lengths {lens:?} do not match config (expected {expected:?})")));
        }
        let mut data = &bytes[12 + hlen..];
        if data.len() != 8 * expected.iter().sum::<usize>() {
            return Err(bad("parameter section has the wrong size"));
        }
        let mut read = |n: usize| -> Vec<f64> {
            let (head, rest) = data.split_at(8 * n);
            data = rest;
            head.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
        };
        let params = read(layout.len);
        let running = read(running_len);
        let mut adam = header.adam;
        adam.m = read(layout.len);
        adam.v = read(layout.len);
        if params.iter().chain(&running).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("checkpoint contains non-finite parameters".into()));
        }
        Ok(Checkpoint { model: Model { config: header.config, layout, params, running }, adam, norm: header.norm })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Errors unless `norm` is the normalization this model was trained with.
    pub fn check_norm(&self, norm: &NormStats) -> Result<()> {
        let (expected, found) = (self.norm.fingerprint(), norm.fingerprint());
        if expected != found {
            return Err(Error::Fingerprint { what: "normalization statistics".into(), expected, found });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ColumnStats;

    fn norm() -> NormStats {
        let cs = |d: usize| ColumnStats { mean: vec![0.5; d], std: vec![2.0; d], constant: vec![false; d] };
        NormStats { schema: crate::features::NORM_SCHEMA, features: cs(5), labels: cs(2) }
    }

    fn ckpt() -> Checkpoint {
        let cfg = ModelConfig { hidden: 8, heads: 2, head_dim: 4, layers: 2, in_dim: 5, ..ModelConfig::default() };
        let model = Model::new(cfg).unwrap();
        let mut adam = Adam::new(0.01, model.param_count());
        adam.m[3] = 0.125;
        adam.step = 17;
        Checkpoint { model, adam, norm: norm() }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = ckpt();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.step(), 17);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = ckpt().to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]), Err(Error::Checkpoint(_))));
        assert!(Checkpoint::from_bytes(b"garbage!").is_err());
        let mut other = norm();
        other.labels.mean[0] = 9.0;
        assert!(matches!(ckpt().check_norm(&other), Err(Error::Fingerprint { .. })));
        ckpt().check_norm(&norm()).unwrap();
    }
}
