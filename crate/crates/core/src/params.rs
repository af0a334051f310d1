//! Named trainable parameters and the binary checkpoint format.
//!
//! A checkpoint is the magic bytes `CSAM1` followed by one record per parameter in sorted-name
//! order. Each record is the name length, the UTF-8 name, the rank, the extents and finally the
//! values. Integers are `u64` little-endian and values are `f64` little-endian.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::labeled_rng;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"CSAM1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Allocated only while training.
    pub grad: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Param>,
    by_name: BTreeMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::invalid("param", format!("duplicate parameter name `{name}`")));
        }
        let id = self.params.len();
        self.by_name.insert(name.to_owned(), id);
        self.params.push(Param {
            name: name.to_owned(),
            value,
            grad: None,
        });
        Ok(ParamId(id))
    }

    /// Adds a parameter drawn from `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`, seeded by
    /// `(seed, name)`.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, seed: u64) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut rng = labeled_rng(seed, name);
        let value = Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))?;
        self.add(name, value)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::shape(
                "set_value",
                format!("`{}` is {:?}, got {:?}", p.name, p.value.shape(), value.shape()),
            ));
        }
        p.value = value;
        Ok(())
    }

    /// Allocates (or clears) gradient buffers for every parameter.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            match &mut p.grad {
                Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
                None => p.grad = Some(vec![0.0; p.value.len()]),
            }
        }
    }

    pub fn drop_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn has_grads(&self) -> bool {
        self.params.iter().all(|p| p.grad.is_some())
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &[f64]) {
        let p = &mut self.params[id.0];
        let g = p.grad.get_or_insert_with(|| vec![0.0; p.value.len()]);
        for (a, b) in g.iter_mut().zip(grad) {
            *a += b;
        }
    }

    /// Flattens every value in sorted-name order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.by_name
            .values()
            .flat_map(|&i| self.params[i].value.data().iter().copied())
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = CHECKPOINT_MAGIC.to_vec();
        for (name, &i) in &self.by_name {
            let value = &self.params[i].value;
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(value.rank() as u64).to_le_bytes());
            for &e in value.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for &v in value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a checkpoint into a fresh parameter set (records become parameters in file order).
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |detail: &str| Error::Format {
            kind: "checkpoint",
            path: path.to_path_buf(),
            detail: detail.to_owned(),
        };
        let rest = bytes
            .strip_prefix(CHECKPOINT_MAGIC.as_slice())
            .ok_or_else(|| bad("missing CSAM1 magic"))?;
        let mut reader = ByteReader { buf: rest, pos: 0 };
        let mut set = ParamSet::new();
        while !reader.done() {
            let name_len = reader.u64().ok_or_else(|| bad("truncated name length"))? as usize;
            let name = reader.take(name_len).ok_or_else(|| bad("truncated name"))?;
            let name = std::str::from_utf8(name).map_err(|_| bad("name is not UTF-8"))?.to_owned();
            let rank = reader.u64().ok_or_else(|| bad("truncated rank"))? as usize;
            let shape = (0..rank)
                .map(|_| reader.u64().map(|e| e as usize))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad("truncated extents"))?;
            let n: usize = shape.iter().product();
            let data = (0..n)
                .map(|_| reader.u64().map(f64::from_bits))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad("truncated values"))?;
            let value = Tensor::new(&shape, data).map_err(|e| bad(&e.to_string()))?;
            set.add(&name, value).map_err(|e| bad(&e.to_string()))?;
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Copies values from `other` into same-named parameters. Every parameter of `self` must
    /// be present in `other` with an identical shape, and `other` must have no extras.
    pub fn load_values_from(&mut self, other: &ParamSet) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::shape(
                "checkpoint",
                format!("expected {} parameters, checkpoint has {}", self.len(), other.len()),
            ));
        }
        for p in &mut self.params {
            let src = other
                .id(&p.name)
                .map(|id| other.value(id))
                .ok_or_else(|| Error::shape("checkpoint", format!("missing parameter `{}`", p.name)))?;
            if src.shape() != p.value.shape() {
                return Err(Error::shape(
                    "checkpoint",
                    format!("`{}` expected {:?}, checkpoint has {:?}", p.name, p.value.shape(), src.shape()),
                ));
            }
            p.value = src.clone();
        }
        Ok(())
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}
