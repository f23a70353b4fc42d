use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Every learnable tensor of a model, each registered exactly once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor2>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a duplicate name: registration happens at model
    /// construction and a clash is a programming error.
    pub fn register(&mut self, name: impl Into<String>, value: Tensor2) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "parameter `{name}` registered twice"
        );
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        ParamId(id)
    }

    /// Glorot-uniform initialised matrix: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
    pub fn register_glorot(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
        self.register(name, Tensor2::new(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor2::len).sum()
    }

    /// Applies `theta -= lr * grad`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (v, g) in self.values.iter_mut().zip(&grads.data) {
            for (x, d) in v.data.iter_mut().zip(&g.data) {
                *x -= lr * d;
            }
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            params: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(n, t)| NamedTensor {
                    name: n.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    data: t.data.clone(),
                })
                .collect(),
        }
    }

    /// Overwrites values from a checkpoint with exactly matching names and
    /// shapes.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint version {}",
                ck.format_version
            )));
        }
        if ck.params.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} tensors, model has {}",
                ck.params.len(),
                self.values.len()
            )));
        }
        for nt in &ck.params {
            let id = self
                .id(&nt.name)
                .ok_or_else(|| Error::Shape(format!("unknown tensor `{}` in checkpoint", nt.name)))?;
            let slot = &mut self.values[id.0];
            if slot.shape() != (nt.rows, nt.cols) || nt.data.len() != nt.rows * nt.cols {
                return Err(Error::Shape(format!(
                    "tensor `{}` is {:?} in the model but {}x{} in the checkpoint",
                    nt.name,
                    slot.shape(),
                    nt.rows,
                    nt.cols
                )));
            }
            slot.data.copy_from_slice(&nt.data);
        }
        Ok(())
    }
}

/// Versioned JSON checkpoint of named tensors with shape headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Gradient buffers shaped like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub data: Vec<Tensor2>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            data: store
                .values
                .iter()
                .map(|t| Tensor2::zeros(t.rows, t.cols))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.data[id.0]
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor2) {
        self.data[id.0].add_assign(g);
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.data {
            t.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(Tensor2::sq_norm).sum::<f64>().sqrt()
    }

    /// Rescales to at most `max_norm` (global L2). Returns the pre-clip norm.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(Tensor2::all_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[should_panic(expected = "registered twice")]
    fn duplicate_registration_panics() {
        let mut s = ParamStore::new();
        s.register("w", Tensor2::zeros(1, 1));
        s.register("w", Tensor2::zeros(1, 1));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut s = ParamStore::new();
        s.register("a", Tensor2::new(1, 3, vec![0.1, 1.0 / 3.0, -2.5e-17]));
        s.register("b", Tensor2::new(2, 1, vec![std::f64::consts::PI, 1e300]));
        let text = serde_json::to_string(&s.to_checkpoint()).unwrap();
        let ck: Checkpoint = serde_json::from_str(&text).unwrap();
        let mut t = s.clone();
        t.get_mut(ParamId(0)).data.fill(0.0);
        t.load_checkpoint(&ck).unwrap();
        for id in s.ids() {
            let (x, y) = (s.get(id), t.get(id));
            assert!(x.data.iter().zip(&y.data).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut s = ParamStore::new();
        s.register("w", Tensor2::zeros(2, 1));
        let mut g = Gradients::zeros_like(&s);
        g.data[0].data = vec![30.0, 40.0];
        assert_eq!(g.clip_norm(5.0), 50.0);
        assert!((g.norm() - 5.0).abs() < 1e-12);
    }
}
