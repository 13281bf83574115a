//! Named parameter registry and the shared two-layer MLP building block.

use crate::diff::{Array, NodeId, Tape};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Ordered collection of named parameter arrays. Insertion order is the
/// canonical order used by checkpoints, the optimizer state, and gradient
/// reduction.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    names: Vec<String>,
    arrays: Vec<Array>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, array: Array) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter {name:?}")));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.arrays.push(array);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.arrays.iter().map(|a| a.len()).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn arrays(&self) -> &[Array] {
        &self.arrays
    }

    pub fn arrays_mut(&mut self) -> &mut [Array] {
        &mut self.arrays
    }

    pub fn get(&self, name: &str) -> Result<&Array> {
        self.index
            .get(name)
            .map(|&i| &self.arrays[i])
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))
    }

    pub fn set(&mut self, name: &str, array: Array) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))?;
        if self.arrays[i].shape() != array.shape() {
            return Err(Error::Dimension(format!(
                "parameter {name:?}: shape {:?} cannot replace {:?}",
                array.shape(),
                self.arrays[i].shape()
            )));
        }
        self.arrays[i] = array;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names.iter().map(|s| s.as_str()).zip(self.arrays.iter())
    }

    /// Register every parameter on a tape, preserving order.
    pub fn bind(&self, tape: &mut Tape) -> Result<BoundParams> {
        let mut ids = Vec::with_capacity(self.arrays.len());
        for a in &self.arrays {
            ids.push(tape.param(a.clone())?);
        }
        Ok(BoundParams {
            ids,
            index: self.index.clone(),
        })
    }
}

/// Tape node ids for one bound ParamSet.
pub struct BoundParams {
    ids: Vec<NodeId>,
    index: HashMap<String, usize>,
}

impl BoundParams {
    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.index
            .get(name)
            .map(|&i| self.ids[i])
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight initialization.
pub fn init_weight(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Array {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array::matrix(
        fan_in,
        fan_out,
        (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect(),
    )
    .unwrap()
}

/// Register a two-layer MLP `in -> hidden -> out` (ReLU between) under
/// `prefix.{w1,b1,w2,b2}`.
pub fn init_mlp2(
    params: &mut ParamSet,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    n_in: usize,
    hidden: usize,
    n_out: usize,
) -> Result<()> {
    params.add(&format!("{prefix}.w1"), init_weight(rng, n_in, hidden))?;
    params.add(&format!("{prefix}.b1"), Array::zeros(1, hidden))?;
    params.add(&format!("{prefix}.w2"), init_weight(rng, hidden, n_out))?;
    params.add(&format!("{prefix}.b2"), Array::zeros(1, n_out))?;
    Ok(())
}

/// Forward through a registered two-layer MLP.
pub fn mlp2(tape: &mut Tape, bound: &BoundParams, prefix: &str, x: NodeId) -> Result<NodeId> {
    let h = tape.matmul(x, bound.id(&format!("{prefix}.w1"))?)?;
    let h = tape.add_row_bias(h, bound.id(&format!("{prefix}.b1"))?)?;
    let h = tape.relu(h)?;
    let o = tape.matmul(h, bound.id(&format!("{prefix}.w2"))?)?;
    tape.add_row_bias(o, bound.id(&format!("{prefix}.b2"))?)
}
