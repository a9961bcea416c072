use std::collections::HashMap;

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// A named trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub gradient: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let gradient = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            gradient,
        }
    }

    pub fn zero_grad(&mut self) {
        self.gradient.fill(0.0);
    }
}

/// Index of a parameter within a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Flat registry of every trainable tensor in a model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn take_params(&mut self) -> Vec<Parameter> {
        std::mem::take(&mut self.params)
    }

    pub fn set_params(&mut self, params: &[Parameter]) {
        self.params = params.to_vec();
    }
}

/// Per-tape binding of store parameters to tape leaves, so gradients can
/// be harvested back after `backward`.
pub struct TapeBinding {
    bound: HashMap<ParamId, Var>,
}

impl TapeBinding {
    pub fn new() -> Self {
        TapeBinding {
            bound: HashMap::new(),
        }
    }

    /// Leaf the parameter's current value onto the tape (once per tape).
    pub fn bind(&mut self, tape: &mut Tape, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.bound.get(&id) {
            return *v;
        }
        let v = tape.leaf(store.get(id).value.clone());
        self.bound.insert(id, v);
        v
    }

    /// Accumulate tape gradients into the store after a backward sweep.
    pub fn harvest(&self, tape: &Tape, store: &mut ParamStore) {
        for (&id, &var) in &self.bound {
            store.get_mut(id).gradient.add_assign(tape.grad(var));
        }
    }
}

impl Default for TapeBinding {
    fn default() -> Self {
        TapeBinding::new()
    }
}
