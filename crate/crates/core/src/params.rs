//! Named parameter storage shared by the model and the optimizer.
//!
//! Parameters live outside any computation graph; each forward pass binds them
//! as trainable leaves in declaration order, which fixes the iteration order
//! everywhere (optimizer steps, checkpoints, gradient reads) and keeps runs
//! bitwise reproducible.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, TensorId};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub enum ParamError {
    Duplicate { name: String },
    DataLen {
        name: String,
        expected: usize,
        got: usize,
    },
    Missing { name: String },
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamError::Duplicate { name } => write!(f, "duplicate parameter {name:?}"),
            ParamError::DataLen {
                name,
                expected,
                got,
            } => write!(
                f,
                "parameter {name:?}: data length {got} does not match shape product {expected}"
            ),
            ParamError::Missing { name } => write!(f, "unknown parameter {name:?}"),
        }
    }
}

impl core::error::Error for ParamError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Parameter {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered, name-addressable set of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
    index: BTreeMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<f64>,
    ) -> Result<usize, ParamError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(ParamError::Duplicate { name });
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(ParamError::DataLen {
                name,
                expected,
                got: data.len(),
            });
        }
        let idx = self.params.len();
        self.index.insert(name.clone(), idx);
        self.params.push(Parameter { name, shape, data });
        Ok(idx)
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        let i = *self.index.get(name)?;
        Some(&mut self.params[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn at(&self, idx: usize) -> &Parameter {
        &self.params[idx]
    }

    pub fn at_mut(&mut self, idx: usize) -> &mut Parameter {
        &mut self.params[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    /// Total scalar count across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(Parameter::numel).sum()
    }

    /// Insert every parameter into `g` as a trainable leaf, in declaration
    /// order. The returned ids are aligned with parameter indices.
    pub fn bind(&self, g: &mut Graph) -> Vec<TensorId> {
        self.params
            .iter()
            .map(|p| {
                g.leaf(p.data.clone(), p.shape.clone(), true)
                    .expect("parameter shapes are validated at insertion")
            })
            .collect()
    }

    /// Gradients for a binding produced by [`ParamSet::bind`], zero-filled for
    /// parameters the loss never touched.
    pub fn read_grads(&self, g: &Graph, binding: &[TensorId]) -> Vec<Vec<f64>> {
        binding
            .iter()
            .enumerate()
            .map(|(i, &id)| match g.grad(id) {
                Some(grad) => grad.to_vec(),
                None => vec![0.0; self.params[i].numel()],
            })
            .collect()
    }
}

/// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_init(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / math::sqrt(fan_in.max(1) as f64);
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn add_rejects_duplicates_and_bad_lengths() {
        let mut ps = ParamSet::new();
        ps.add("w", vec![2, 2], vec![0.0; 4]).unwrap();
        assert!(matches!(
            ps.add("w", vec![1], vec![0.0]),
            Err(ParamError::Duplicate { .. })
        ));
        assert!(matches!(
            ps.add("b", vec![3], vec![0.0; 2]),
            Err(ParamError::DataLen { .. })
        ));
    }

    #[test]
    fn bind_preserves_declaration_order() {
        let mut ps = ParamSet::new();
        ps.add("z_last", vec![1], vec![1.0]).unwrap();
        ps.add("a_first", vec![1], vec![2.0]).unwrap();
        let mut g = Graph::new();
        let ids = ps.bind(&mut g);
        assert_eq!(g.data(ids[0]), &[1.0]);
        assert_eq!(g.data(ids[1]), &[2.0]);
    }

    #[test]
    fn uniform_init_is_seeded_and_bounded() {
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let a = uniform_init(&mut r1, 64, 16);
        let b = uniform_init(&mut r2, 64, 16);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() <= 0.25));
    }
}
