//! Named parameter storage and per-tape binding.
//!
//! Parameters persist across training steps in a [`ParamStore`]; each forward
//! pass leases them onto a fresh tape through a [`Bind`], and the collected
//! gradients are written back after `backward`.

use std::cell::RefCell;
use std::collections::BTreeMap;

use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::{NumError, Tensor};

pub struct ParamEntry<T> {
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
}

/// Name-keyed parameter set. BTreeMap keeps iteration (and checkpoints)
/// in a canonical order.
pub struct ParamStore<T: Scalar> {
    entries: BTreeMap<String, ParamEntry<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<(), NumError> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(NumError::DuplicateParam(name));
        }
        self.entries.insert(name, ParamEntry { value, grad: None });
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>, NumError> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>, NumError> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))
    }

    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<(), NumError> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))?;
        entry.value = value;
        Ok(())
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name).and_then(|e| e.grad.as_ref())
    }

    pub fn zero_grads(&mut self) {
        for entry in self.entries.values_mut() {
            entry.grad = None;
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor<T>) -> Result<(), NumError> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))?;
        entry.grad = Some(match entry.grad.take() {
            Some(g) => g.add(delta)?,
            None => delta.clone(),
        });
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar entries across all parameters.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }
}

/// Binds store parameters onto one tape, watching each at most once.
pub struct Bind<'a, T: Scalar> {
    tape: &'a Tape<T>,
    store: &'a ParamStore<T>,
    watched: RefCell<BTreeMap<String, usize>>,
    vars: RefCell<Vec<Var<'a, T>>>,
}

impl<'a, T: Scalar> Bind<'a, T> {
    pub fn new(tape: &'a Tape<T>, store: &'a ParamStore<T>) -> Self {
        Self {
            tape,
            store,
            watched: RefCell::new(BTreeMap::new()),
            vars: RefCell::new(Vec::new()),
        }
    }

    pub fn tape(&self) -> &'a Tape<T> {
        self.tape
    }

    /// Watch the named parameter as a trainable leaf (once per tape).
    /// Panics on unknown names: forward code and init code share the name set.
    pub fn p(&self, name: &str) -> Var<'a, T> {
        if let Some(&slot) = self.watched.borrow().get(name) {
            return self.vars.borrow()[slot];
        }
        let value = self
            .store
            .get(name)
            .unwrap_or_else(|e| panic!("bind: {e}"))
            .clone();
        let var = self.tape.trainable(value);
        let mut vars = self.vars.borrow_mut();
        vars.push(var);
        self.watched.borrow_mut().insert(name.to_string(), vars.len() - 1);
        var
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'a, T> {
        self.tape.constant(value)
    }

    /// Gradients of every watched parameter, for write-back into the store.
    pub fn collect_grads(self) -> Vec<(String, Tensor<T>)> {
        let watched = self.watched.into_inner();
        let vars = self.vars.into_inner();
        watched
            .into_iter()
            .filter_map(|(name, slot)| vars[slot].grad().map(|g| (name, g)))
            .collect()
    }
}
