use std::collections::BTreeMap;

use rand::Rng;

use super::{DenseArray, NumError};

/// One learnable tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: DenseArray,
    pub grad: DenseArray,
    pub m: DenseArray,
    pub v: DenseArray,
}

impl Param {
    pub fn new(value: DenseArray) -> Self {
        let z = DenseArray::zeros(value.shape());
        Param {
            grad: z.clone(),
            m: z.clone(),
            v: z,
            value,
        }
    }
}

/// Named parameters plus the optimizer step counter.
///
/// Iteration order is the lexicographic order of names, which keeps random
/// probing and serialization deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
    step_count: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub(crate) fn set_step_count(&mut self, t: u64) {
        self.step_count = t;
    }

    pub(crate) fn bump_step(&mut self) -> u64 {
        self.step_count += 1;
        self.step_count
    }

    pub fn insert(&mut self, name: impl Into<String>, value: DenseArray) {
        self.entries.insert(name.into(), Param::new(value));
    }

    pub(crate) fn insert_param(&mut self, name: impl Into<String>, p: Param) {
        self.entries.insert(name.into(), p);
    }

    /// Registers a parameter drawn uniformly from `[-1/√fan_in, 1/√fan_in]`.
    pub fn init_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut impl Rng) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.insert(name, DenseArray::from_vec(shape, data).expect("shape"));
    }

    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(name, DenseArray::zeros(shape));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param, NumError> {
        self.entries
            .get(name)
            .ok_or_else(|| NumError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param, NumError> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| NumError::MissingParam(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&DenseArray, NumError> {
        Ok(&self.get(name)?.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut DenseArray, NumError> {
        Ok(&mut self.get_mut(name)?.value)
    }

    pub fn grad_mut(&mut self, name: &str) -> Result<&mut DenseArray, NumError> {
        Ok(&mut self.get_mut(name)?.grad)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Copies every parameter whose name starts with `prefix` into a new
    /// store, keeping step count at zero.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            step_count: 0,
        }
    }
}
