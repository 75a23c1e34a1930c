//! Named, seeded parameter storage shared by every network.
//!
//! Each parameter draws its initial values from an RNG seeded by the store
//! seed and the parameter's full name, so two graphs that share a layer name
//! start from bit-identical weights regardless of what else they contain.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{contract, Result};

/// Standard deviation of the zero-mean normal used for conv/linear weights.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone)]
struct Entry {
    var: Var,
    trainable: bool,
}

/// Ordered map of named parameters and non-trainable buffers.
#[derive(Clone)]
pub struct ParamStore {
    entries: BTreeMap<String, Entry>,
    dtype: DType,
    seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            entries: BTreeMap::new(),
            dtype,
            seed,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scope(&mut self, prefix: &str) -> Scope<'_> {
        Scope {
            store: self,
            prefix: prefix.to_string(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.entries.get(name).map(|e| &e.var)
    }

    /// Trainable parameters in name order.
    pub fn trainable(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.entries
            .iter()
            .filter(|(_, e)| e.trainable)
            .map(|(n, e)| (n.as_str(), &e.var))
    }

    /// Every tensor (parameters and buffers) in name order.
    pub fn all(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.entries.iter().map(|(n, e)| (n.as_str(), &e.var))
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.trainable().map(|(_, v)| v.elem_count()).sum()
    }

    /// Overwrite `name` with `value`; shapes must agree.
    pub fn assign(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .get(name)
            .ok_or_else(|| contract!("no parameter named `{name}`"))?;
        if var.dims() != value.dims() {
            return Err(contract!(
                "shape mismatch for `{name}`: store {:?}, value {:?}",
                var.dims(),
                value.dims()
            ));
        }
        var.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }

    /// Copy every tensor whose name and shape match one in `other`.
    /// Returns the number of tensors copied.
    pub fn copy_matching_from(&self, other: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        for (name, var) in self.all() {
            if let Some(src) = other.get(name) {
                if src.dims() == var.dims() {
                    var.set(&src.as_tensor().to_dtype(self.dtype)?)?;
                    copied += 1;
                }
            }
        }
        Ok(copied)
    }

    fn insert(&mut self, name: String, tensor: Tensor, trainable: bool) -> Result<Var> {
        if self.entries.contains_key(&name) {
            return Err(contract!("parameter `{name}` registered twice"));
        }
        let var = Var::from_tensor(&tensor)?;
        self.entries.insert(
            name,
            Entry {
                var: var.clone(),
                trainable,
            },
        );
        Ok(var)
    }

    fn rng_for(&self, name: &str) -> ChaCha8Rng {
        crate::rng::derived_rng(self.seed, name, 0)
    }
}

/// A name prefix into a [`ParamStore`], used while constructing layers.
pub struct Scope<'a> {
    store: &'a mut ParamStore,
    prefix: String,
}

impl Scope<'_> {
    pub fn pp(&mut self, name: &str) -> Scope<'_> {
        Scope {
            prefix: self.full(name),
            store: &mut *self.store,
        }
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype
    }

    fn full(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Var> {
        let full = self.full(name);
        let mut rng = self.store.rng_for(&full);
        let dist = Normal::new(0.0, std).map_err(|e| contract!("{e}"))?;
        let n: usize = shape.iter().product();
        let values: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let t = Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(self.store.dtype)?;
        self.store.insert(full, t, true)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let full = self.full(name);
        let t = (Tensor::ones(shape, self.store.dtype, &Device::Cpu)? * value)?;
        self.store.insert(full, t, true)
    }

    /// Non-trainable state (e.g. running statistics).
    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let full = self.full(name);
        let t = (Tensor::ones(shape, self.store.dtype, &Device::Cpu)? * value)?;
        self.store.insert(full, t, false)
    }
}
