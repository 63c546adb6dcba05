use std::collections::BTreeMap;

use super::{Array, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Entry<T> {
    name: String,
    value: Array<T>,
    grad: Array<T>,
    m: Array<T>,
    v: Array<T>,
}

/// Named trainable arrays with gradient accumulators and Adam moments.
///
/// Entries keep insertion order; that order fixes gradient accumulation and
/// checkpoint layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<Entry<T>>,
    index: BTreeMap<String, usize>,
    pub(crate) step: u64,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array<T>) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateParam(name));
        }
        let id = self.entries.len();
        let zeros = Array::zeros(value.shape());
        self.index.insert(name.clone(), id);
        self.entries.push(Entry {
            name,
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
        });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Array<T>> {
        Ok(&self.entries[self.id(name)?].value)
    }

    pub fn value(&self, id: usize) -> &Array<T> {
        &self.entries[id].value
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Array<T> {
        &mut self.entries[id].value
    }

    pub fn grad(&self, id: usize) -> &Array<T> {
        &self.entries[id].grad
    }

    pub fn name(&self, id: usize) -> &str {
        &self.entries[id].name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adam steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array<T>)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value))
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Adds `scale · grads` into the accumulators.
    pub fn accumulate(&mut self, grads: &ParamGrads<T>, scale: T) -> Result<()> {
        if grads.0.len() != self.entries.len() {
            return Err(Error::shape("accumulate", self.entries.len(), grads.0.len()));
        }
        for (e, g) in self.entries.iter_mut().zip(&grads.0) {
            if e.grad.shape() != g.shape() {
                return Err(Error::shape("accumulate", format!("{:?}", e.grad.shape()), format!("{:?}", g.shape())));
            }
            for (a, &b) in e.grad.data_mut().iter_mut().zip(g.data()) {
                *a += scale * b;
            }
        }
        Ok(())
    }

    /// Same names and values in another precision; optimizer state is reset.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for e in &self.entries {
            out.insert(e.name.clone(), e.value.cast()).expect("names are unique");
        }
        out
    }

    pub(crate) fn adam_parts(&mut self) -> impl Iterator<Item = (&mut Array<T>, &mut Array<T>, &mut Array<T>, &mut Array<T>)> {
        self.entries
            .iter_mut()
            .map(|e| (&mut e.value, &mut e.grad, &mut e.m, &mut e.v))
    }

    pub(crate) fn grads_finite(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| !e.grad.all_finite())
            .map(|e| e.name.as_str())
    }
}

/// Gradients aligned with the entries of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T>(pub Vec<Array<T>>);

impl<T: Scalar> ParamGrads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        ParamGrads(store.iter().map(|(_, v)| Array::zeros(v.shape())).collect())
    }

    pub fn get(&self, id: usize) -> &Array<T> {
        &self.0[id]
    }

    pub fn add_assign(&mut self, other: &ParamGrads<T>) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(Array::max_abs).fold(0.0, f64::max)
    }
}
