//! Named parameter storage and the text checkpoint format.
//!
//! Checkpoint layout (UTF-8, version 1):
//!
//! ```text
//! deepgs-params v1
//! count <n>
//! param <name> <ndim> <d0> <d1> ...
//! <values separated by single spaces>
//! ... (one `param` header and one value line per parameter)
//! ```
//!
//! Values use the shortest decimal form that round-trips to the same `f64`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use super::{NnError, Tensor};
use crate::rng;

const MAGIC: &str = "deepgs-params v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Panics on duplicate names, which indicate a wiring bug.
    pub fn add(&mut self, name: &str, tensor: Tensor) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter name `{name}`");
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.index.insert(name.to_string(), id);
        id
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, seeded by `(seed, name)`.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, seed: u64) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut rng = rng::stream(seed, &format!("init:{name}"));
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("shape product"))
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.ids()
            .map(move |id| (id, self.names[id.0].as_str(), &self.tensors[id.0]))
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Sets every value of every parameter to `v`.
    pub fn fill(&mut self, v: f64) {
        for t in &mut self.tensors {
            t.data_mut().fill(v);
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.total_values() * 20);
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "count {}", self.len());
        for (_, name, t) in self.iter() {
            let _ = write!(out, "param {name} {}", t.ndim());
            for d in t.shape() {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            let mut first = true;
            for v in t.data() {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NnError> {
        let bad = |line: usize, msg: &str| NnError::Checkpoint(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, MAGIC)) => {}
            Some((_, other)) => return Err(NnError::Checkpoint(format!("unsupported header `{other}`"))),
            None => return Err(NnError::Checkpoint("empty checkpoint".into())),
        }
        let (n, count_line) = lines.next().ok_or_else(|| bad(2, "missing count"))?;
        let count: usize = count_line
            .strip_prefix("count ")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| bad(n, "expected `count <n>`"))?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let (n, header) = lines.next().ok_or_else(|| bad(0, "truncated checkpoint"))?;
            let mut parts = header.split(' ');
            if parts.next() != Some("param") {
                return Err(bad(n, "expected `param` header"));
            }
            let name = parts.next().ok_or_else(|| bad(n, "missing name"))?;
            let ndim: usize = parts
                .next()
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| bad(n, "missing ndim"))?;
            let shape: Vec<usize> = parts
                .map(|d| d.parse().map_err(|_| bad(n, "invalid extent")))
                .collect::<Result<_, _>>()?;
            if shape.len() != ndim {
                return Err(bad(n, "ndim does not match extents"));
            }
            let (n, values) = lines.next().ok_or_else(|| bad(n + 1, "missing values"))?;
            let data: Vec<f64> = if values.is_empty() {
                Vec::new()
            } else {
                values
                    .split(' ')
                    .map(|v| v.parse().map_err(|_| bad(n, "invalid value")))
                    .collect::<Result<_, _>>()?
            };
            let t = Tensor::new(shape, data).map_err(|_| bad(n, "value count does not match shape"))?;
            if store.id(name).is_some() {
                return Err(bad(n, "duplicate parameter"));
            }
            store.add(name, t);
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        fs::write(path, self.to_text()).map_err(|e| NnError::Checkpoint(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let text = fs::read_to_string(path).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        Self::from_text(&text)
    }

    /// Copies values from `other` into parameters with matching names and shapes.
    /// Every parameter of `self` must be present in `other`.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<(), NnError> {
        for i in 0..self.tensors.len() {
            let name = &self.names[i];
            let src = other
                .by_name(name)
                .ok_or_else(|| NnError::Checkpoint(format!("missing parameter `{name}`")))?;
            if src.shape() != self.tensors[i].shape() {
                return Err(NnError::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    src.shape(),
                    self.tensors[i].shape()
                )));
            }
            self.tensors[i] = src.clone();
        }
        Ok(())
    }
}
