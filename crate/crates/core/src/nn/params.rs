use std::collections::HashMap;
use std::ops::{Index, IndexMut};

use crate::{Error, Result};

use super::{Scalar, Tensor};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ParamId(pub usize);

/// A list of tensors indexed by [`ParamId`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tensors<F>(Vec<Tensor<F>>);

impl<F> Tensors<F> {
    pub fn iter(&self) -> std::slice::Iter<'_, Tensor<F>> {
        self.0.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Tensor<F>> {
        self.0.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Several distinct entries mutably at once; panics on repeated ids.
    pub fn many_mut<const N: usize>(&mut self, ids: [ParamId; N]) -> [&mut Tensor<F>; N] {
        self.0
            .get_disjoint_mut(ids.map(|id| id.0))
            .expect("distinct, in-range parameter ids")
    }
}

impl<F> Index<ParamId> for Tensors<F> {
    type Output = Tensor<F>;

    fn index(&self, id: ParamId) -> &Tensor<F> {
        &self.0[id.0]
    }
}

impl<F> IndexMut<ParamId> for Tensors<F> {
    fn index_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.0[id.0]
    }
}

/// Named trainable parameters with a parallel gradient for each.
///
/// Insertion order is preserved and defines the on-disk order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<F = f32> {
    names: Vec<String>,
    lookup: HashMap<String, ParamId>,
    pub values: Tensors<F>,
    pub grads: Tensors<F>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            lookup: HashMap::new(),
            values: Tensors(Vec::new()),
            grads: Tensors(Vec::new()),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> Result<ParamId> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(Error::DuplicateParam(name));
        }
        let id = ParamId(self.names.len());
        self.grads.0.push(Tensor::zeros(value.shape()));
        self.values.0.push(value);
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.lookup
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor<F> {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.values[id]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<F> {
        &self.grads[id]
    }

    /// Replaces a value, keeping the shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<F>) -> Result<()> {
        if value.shape() != self.values[id].shape() {
            return Err(Error::ShapeMismatch(format!(
                "parameter `{}` has shape {:?}, got {:?}",
                self.names[id.0],
                self.values[id].shape(),
                value.shape()
            )));
        }
        self.values[id] = value;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.iter_mut() {
            g.fill(F::zero());
        }
    }

    pub fn scale_grads(&mut self, factor: F) {
        for g in self.grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Exact number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        ParamStore {
            names: self.names.clone(),
            lookup: self.lookup.clone(),
            values: Tensors(self.values.iter().map(Tensor::cast).collect()),
            grads: Tensors(self.grads.iter().map(Tensor::cast).collect()),
        }
    }

    /// Copies values from `other` by name; both stores must hold the same
    /// names and shapes.
    pub fn load_values(&mut self, other: &ParamStore<F>) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                self.len(),
                other.len()
            )));
        }
        for (i, name) in self.names.clone().iter().enumerate() {
            let src = other.id(name)?;
            self.set(ParamId(i), other.values[src].clone())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_basics() {
        let mut s = ParamStore::<f32>::new();
        let a = s.add("a", Tensor::zeros(&[2, 3])).unwrap();
        let b = s.add("b", Tensor::zeros(&[4])).unwrap();
        assert!(s.add("a", Tensor::zeros(&[1])).is_err());
        assert_eq!(s.param_count(), 10);
        assert_eq!(s.id("b").unwrap(), b);
        assert_eq!(s.grad(a).shape(), [2, 3]);
        assert!(s.set(a, Tensor::zeros(&[3, 2])).is_err());
        assert!(s.id("c").is_err());
    }
}
