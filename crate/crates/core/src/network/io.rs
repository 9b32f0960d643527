//! Model file format.
//!
//! Layout (little-endian): 8-byte magic `DLBPMDL\0`, `u32` version, `u64`
//! header length, UTF-8 JSON header, then every tensor as raw `f64` in
//! [`Weights::tensors`] order. Shapes are implied by the architecture in the
//! header.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, ModelParams, Weights};
use crate::codec::{self, Reader, Writer};
use crate::dataset::Preprocessing;
use crate::distribution::WeibullMeanVariant;
use crate::error::{Error, Result};

const MODEL_MAGIC: &[u8; 8] = b"DLBPMDL\0";
const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    shared_sigma: Option<Vec<f64>>,
    preprocessing: Option<Preprocessing>,
    seed: u64,
    weibull_mean: WeibullMeanVariant,
    tensor_lengths: Vec<usize>,
}

/// A trained model together with the preprocessing needed to feed it raw traces.
#[derive(Clone, Debug, PartialEq)]
pub struct SavedModel {
    pub params: ModelParams,
    pub preprocessing: Option<Preprocessing>,
    pub seed: u64,
    pub weibull_mean: WeibullMeanVariant,
}

impl SavedModel {
    pub fn new(params: ModelParams, preprocessing: Option<Preprocessing>, seed: u64) -> Self {
        Self {
            params,
            preprocessing,
            seed,
            weibull_mean: WeibullMeanVariant::default(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.validate()?;
        if let Some(pre) = &self.preprocessing {
            if pre.channels() != self.params.arch.input_size {
                return Err(Error::Incompatible(format!(
                    "preprocessing keeps {} channels, model expects {}",
                    pre.channels(),
                    self.params.arch.input_size
                )));
            }
        }
        let tensors = self.params.weights.tensors();
        let header = Header {
            architecture: self.params.arch.clone(),
            shared_sigma: self.params.shared_sigma.clone(),
            preprocessing: self.preprocessing.clone(),
            seed: self.seed,
            weibull_mean: self.weibull_mean,
            tensor_lengths: tensors.iter().map(|t| t.len()).collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Config(format!("model header: {e}")))?;
        let mut w = Writer::new();
        w.bytes(MODEL_MAGIC);
        w.u32(MODEL_VERSION);
        w.u64(json.len() as u64);
        w.bytes(&json);
        for t in tensors {
            w.f64s(t);
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        if r.take(8)? != MODEL_MAGIC {
            return Err(r.error("not a model file"));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Incompatible(format!(
                "{}: model format version {version}, expected {MODEL_VERSION}",
                path.display()
            )));
        }
        let len = r.u64()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(len)?).map_err(|e| r.error(format!("model header: {e}")))?;
        header.architecture.validate()?;
        let mut weights = Weights::zeros(&header.architecture);
        let expected: Vec<usize> = weights.tensors().iter().map(|t| t.len()).collect();
        if expected != header.tensor_lengths {
            return Err(Error::Incompatible(format!(
                "{}: tensor sizes {:?} do not match the architecture ({:?})",
                path.display(),
                header.tensor_lengths,
                expected
            )));
        }
        for t in weights.tensors_mut() {
            let values = r.f64s(t.len())?;
            t.copy_from_slice(&values);
        }
        r.finish()?;
        let params = ModelParams {
            arch: header.architecture,
            weights,
            shared_sigma: header.shared_sigma,
        };
        params.validate()?;
        Ok(Self {
            params,
            preprocessing: header.preprocessing,
            seed: header.seed,
            weibull_mean: header.weibull_mean,
        })
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        codec::write_file(path, &bytes)?;
        Ok(codec::sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?, path)
    }
}
