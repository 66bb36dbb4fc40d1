use rand::Rng;

use super::{Element, Gradients, Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor<f32>,
    pub grad: Tensor<f32>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor<f32>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }
}

/// Named parameters of one model, in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, param: Parameter) -> Result<usize> {
        if self.index_of(&param.name).is_some() {
            return Err(Error::Invalid(format!("duplicate parameter name {:?}", param.name)));
        }
        self.params.push(param);
        Ok(self.params.len() - 1)
    }

    /// He-style uniform weights, `U(−√(6/fan_in), √(6/fan_in))`.
    pub fn insert_he_uniform<R: Rng + ?Sized>(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut R) -> Result<usize> {
        let bound = (6.0 / fan_in as f64).sqrt();
        let value = Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound) as f32);
        self.insert(Parameter::new(name, value))
    }

    pub fn insert_zeros(&mut self, name: &str, shape: &[usize]) -> Result<usize> {
        self.insert(Parameter::new(name, Tensor::zeros(shape)))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.index_of(name).map(|i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.index_of(name).map(move |i| &mut self.params[i])
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Adds every parameter to `graph` as a leaf, converted to `S`.
    pub fn bind<S: Element>(&self, graph: &mut Graph<S>) -> Vec<Var> {
        self.params.iter().map(|p| graph.leaf(p.value.cast())).collect()
    }

    /// Resets every gradient to zero.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = Tensor::zeros(p.value.shape());
        }
    }

    /// Overwrites each parameter's gradient; parameters the loss did not
    /// reach get zeros.
    pub fn store_grads<S: Element>(&mut self, grads: &Gradients<S>, vars: &[Var]) {
        for (p, &v) in self.params.iter_mut().zip(vars) {
            p.grad = match grads.get(v) {
                Some(g) => g.cast(),
                None => Tensor::zeros(p.value.shape()),
            };
        }
    }
}
