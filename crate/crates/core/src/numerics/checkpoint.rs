//! Parameter checkpoint files.
//!
//! A checkpoint is a single JSON document:
//!
//! ```text
//! {
//!   "format": "gdiffretro-checkpoint",
//!   "version": 1,
//!   "kind": "<model kind>",
//!   "meta": { "<key>": "<value>", ... },          // sorted keys
//!   "params": [ { "name": "...", "shape": [r, c], "values": [...] }, ... ]
//! }
//! ```
//!
//! Parameters appear in registration order. Values are written with the
//! shortest round-tripping decimal form, so load(save(x)) is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use super::{NumericsError, Result};

pub const FORMAT: &str = "gdiffretro-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct Record {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct File {
    format: String,
    version: u32,
    kind: String,
    meta: BTreeMap<String, String>,
    params: Vec<Record>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, params: ParamStore) -> Self {
        Self {
            kind: kind.into(),
            meta: BTreeMap::new(),
            params,
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta_str(key)?
            .parse()
            .map_err(|_| NumericsError::Checkpoint(format!("meta {key} is not an integer")))
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        self.meta_str(key)?
            .parse()
            .map_err(|_| NumericsError::Checkpoint(format!("meta {key} is not a number")))
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| NumericsError::Checkpoint(format!("missing meta {key}")))
    }

    pub fn to_json(&self) -> String {
        let file = File {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            params: self
                .params
                .names()
                .iter()
                .zip(self.params.values())
                .map(|(n, t)| Record {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: File =
            serde_json::from_str(text).map_err(|e| NumericsError::Checkpoint(e.to_string()))?;
        if file.format != FORMAT {
            return Err(NumericsError::Checkpoint(format!(
                "unknown format {}",
                file.format
            )));
        }
        if file.version != VERSION {
            return Err(NumericsError::Checkpoint(format!(
                "unsupported version {}",
                file.version
            )));
        }
        let mut params = ParamStore::new();
        for r in file.params {
            params.add(r.name, Tensor::new(&r.shape, r.values)?);
        }
        Ok(Self {
            kind: file.kind,
            meta: file.meta,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| NumericsError::Checkpoint(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| NumericsError::Checkpoint(e.to_string()))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = Rng::new(3);
        let mut store = ParamStore::new();
        store.add_glorot("layer.w", 5, 7, &mut rng);
        store.add(
            "odd",
            Tensor::row_vector(&[0.1, 1.0 / 3.0, -2.5e-300, f64::MAX]),
        );
        let ck = Checkpoint::new("test", store).with_meta("width", 7);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.params.values().iter().zip(ck.params.values()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(back.meta_usize("width").unwrap(), 7);
    }

    #[test]
    fn rejects_foreign_format() {
        let text = r#"{"format":"x","version":1,"kind":"k","meta":{},"params":[]}"#;
        assert!(Checkpoint::from_json(text).is_err());
    }
}
