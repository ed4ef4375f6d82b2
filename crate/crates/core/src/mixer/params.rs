use indexmap::IndexMap;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Named parameter arrays in a fixed insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: IndexMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Records every parameter as a gradient-tracking leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bindings {
        let vars = self.params.iter().map(|(k, v)| (k.clone(), tape.param(v.clone()))).collect();
        Bindings { vars }
    }

    /// Records every parameter as a constant (inference).
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Bindings {
        let vars = self.params.iter().map(|(k, v)| (k.clone(), tape.constant(v.clone()))).collect();
        Bindings { vars }
    }
}

/// Tape handles for one bound [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bindings {
    vars: IndexMap<String, Var>,
}

impl FromIterator<(String, Var)> for Bindings {
    /// Binds names to existing tape handles, e.g. inputs of a gradient check.
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        Bindings { vars: iter.into_iter().collect() }
    }
}

impl Bindings {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::Config(format!("model is missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Gradients after `backward`, in parameter order; zeros where none flowed.
    pub fn grads<T: Scalar>(&self, tape: &Tape<T>) -> Vec<Vec<T>> {
        self.vars
            .values()
            .map(|&v| tape.grad(v).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); tape.value(v).len()]))
            .collect()
    }
}
