//! Named parameter storage with seeded initialisation.
//!
//! The tensor backend has no seedable CPU generator, so initial values are
//! drawn here from a ChaCha stream in construction order.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Normal(f64),
    Uniform(f64),
    Const(f64),
}

enum Source {
    Fresh(ChaCha8Rng),
    Loaded {
        tensors: HashMap<String, Tensor>,
        fallback: Option<ChaCha8Rng>,
    },
}

fn sample(rng: &mut ChaCha8Rng, shape: &[usize], init: Init, dtype: DType) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = match init {
        Init::Const(c) => vec![c; n],
        Init::Normal(std) => {
            let d = Normal::new(0.0, std).expect("valid std");
            (0..n).map(|_| d.sample(rng)).collect()
        }
        Init::Uniform(bound) => {
            let d = Uniform::new_inclusive(-bound, bound).expect("valid bound");
            (0..n).map(|_| d.sample(rng)).collect()
        }
    };
    Ok(Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(dtype)?)
}

pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    source: Source,
}

impl ParamStore {
    pub fn fresh(seed: u64, dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
            source: Source::Fresh(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    /// Every requested parameter must be present in the file.
    pub fn from_file(path: &Path, dtype: DType) -> Result<Self> {
        Self::load(path, dtype, None)
    }

    /// Parameters present in the file are loaded; any others are freshly
    /// initialised from `seed`.
    pub fn warm_start(path: &Path, seed: u64, dtype: DType) -> Result<Self> {
        Self::load(path, dtype, Some(ChaCha8Rng::seed_from_u64(seed)))
    }

    fn load(path: &Path, dtype: DType, fallback: Option<ChaCha8Rng>) -> Result<Self> {
        if !path.exists() {
            return Err(Error::CheckpointNotFound(path.display().to_string()));
        }
        let tensors = candle_core::safetensors::load(path, &Device::Cpu)?;
        Ok(Self {
            vars: BTreeMap::new(),
            dtype,
            source: Source::Loaded { tensors, fallback },
        })
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Returns the parameter `name`, creating or loading it on first use.
    pub fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if let Some(v) = self.vars.get(name) {
            return Ok(v.as_tensor().clone());
        }
        let tensor = match &mut self.source {
            Source::Fresh(rng) => sample(rng, shape, init, self.dtype)?,
            Source::Loaded { tensors, fallback } => match (tensors.get(name), fallback) {
                (Some(t), _) => {
                    if t.dims() != shape {
                        return Err(Error::precondition(format!(
                            "parameter `{name}` has shape {:?}, expected {shape:?}",
                            t.dims()
                        )));
                    }
                    t.to_dtype(self.dtype)?
                }
                (None, Some(rng)) => sample(rng, shape, init, self.dtype)?,
                (None, None) => {
                    return Err(Error::CheckpointNotFound(format!(
                        "parameter `{name}` missing from checkpoint"
                    )))
                }
            },
        };
        let var = Var::from_tensor(&tensor)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_owned(), var);
        Ok(out)
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn num_params(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    /// SHA-256 over parameter names and values, in name order.
    pub fn checksum(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        for (name, var) in &self.vars {
            hasher.update(name.as_bytes());
            let values = var.as_tensor().to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
            for v in values {
                hasher.update(v.to_le_bytes());
            }
        }
        Ok(hex::encode(hasher.finalize()))
    }
}
