//! Parameter checkpoint files.
//!
//! A checkpoint is a single JSON document:
//!
//! ```json
//! {
//!   "version": 1,
//!   "params": { "<name>": { "shape": [r, c], "data": [/* row-major f64 */] } },
//!   "meta":   { "<name>": /* arbitrary JSON payload */ }
//! }
//! ```
//!
//! Values are stored as `f64` regardless of the in-memory scalar type. Keys
//! are sorted, so identical stores serialize byte-identically.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::store::ParamStore;
use crate::tensor::{NumError, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct CkptTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize, Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub params: BTreeMap<String, CkptTensor>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn from_store<T: Scalar>(store: &ParamStore<T>) -> Self {
        let mut params = BTreeMap::new();
        for (name, entry) in store.iter() {
            params.insert(
                name.to_string(),
                CkptTensor {
                    shape: entry.value.shape().to_vec(),
                    data: entry.value.data().iter().map(|x| x.to_f64_lossy()).collect(),
                },
            );
        }
        Self {
            version: CHECKPOINT_VERSION,
            params,
            meta: BTreeMap::new(),
        }
    }

    pub fn into_store<T: Scalar>(&self) -> Result<ParamStore<T>, NumError> {
        let mut store = ParamStore::new();
        for (name, t) in &self.params {
            let tensor = Tensor::from_vec(
                t.shape.clone(),
                t.data.iter().map(|&x| T::from_f64_lossy(x)).collect(),
            )?;
            store.insert(name.clone(), tensor)?;
        }
        Ok(store)
    }

    pub fn with_meta(mut self, key: &str, value: serde_json::Value) -> Self {
        self.meta.insert(key.to_string(), value);
        self
    }

    pub fn save(&self, path: &Path) -> Result<(), NumError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(NumError::Invalid(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let body = serde_json::to_string(self)?;
        fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NumError> {
        let body = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&body)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(NumError::Invalid(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_disk() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store
            .insert("b.bias", Tensor::vector(vec![0.25, -1.5]))
            .unwrap();
        store
            .insert("a.weight", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let ckpt = Checkpoint::from_store(&store).with_meta(
            "ids",
            serde_json::json!(["t1", "t2"]),
        );
        let dir = std::env::temp_dir().join(format!("numcore-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("test.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(ckpt, loaded);
        let store2: ParamStore<f64> = loaded.into_store().unwrap();
        assert_eq!(store2.get("a.weight").unwrap(), store.get("a.weight").unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn identical_stores_serialize_identically() {
        let build = || {
            let mut store: ParamStore<f64> = ParamStore::new();
            store.insert("z", Tensor::scalar(0.125)).unwrap();
            store.insert("a", Tensor::vector(vec![1.0, 2.0])).unwrap();
            store
        };
        let a = serde_json::to_string(&Checkpoint::from_store(&build())).unwrap();
        let b = serde_json::to_string(&Checkpoint::from_store(&build())).unwrap();
        assert_eq!(a, b);
    }
}
