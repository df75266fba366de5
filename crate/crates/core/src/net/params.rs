use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{NetError, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            value: vec![F::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Named parameter tensors in a fixed order. Gradients live in a parallel [`Gradients`]
/// value with one slot per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<F> {
    pub tensors: Vec<Tensor<F>>,
    pub rng_seed: u64,
}

impl<F: Scalar> ParameterSet<F> {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            tensors: Vec::new(),
            rng_seed,
        }
    }

    /// Appends a tensor and returns its slot index.
    pub fn push(&mut self, tensor: Tensor<F>) -> usize {
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.tensors.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn cast<G: Scalar>(&self) -> ParameterSet<G> {
        ParameterSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    value: t
                        .value
                        .iter()
                        .map(|v| G::of(v.to_f64().expect("finite")))
                        .collect(),
                })
                .collect(),
            rng_seed: self.rng_seed,
        }
    }

    pub fn check_finite(&self) -> Result<(), NetError> {
        match self
            .tensors
            .iter()
            .find(|t| t.value.iter().any(|v| !v.is_finite()))
        {
            Some(t) => Err(NetError::NonFinite(t.name.clone())),
            None => Ok(()),
        }
    }

    /// Replaces values from another set with identical names and shapes.
    pub fn assign(&mut self, other: &ParameterSet<F>) -> Result<(), NetError> {
        if self.tensors.len() != other.tensors.len() {
            return Err(NetError::Shape(format!(
                "{} tensors vs {}",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if a.name != b.name || a.shape != b.shape {
                return Err(NetError::Shape(format!(
                    "tensor {} {:?} vs {} {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
            a.value.clone_from(&b.value);
        }
        Ok(())
    }
}

/// Gradient slots mirroring a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub slots: Vec<Vec<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(params: &ParameterSet<F>) -> Self {
        Self {
            slots: params
                .tensors
                .iter()
                .map(|t| vec![F::zero(); t.len()])
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<F>) {
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + *y;
            }
        }
    }

    pub fn scale(&mut self, factor: F) {
        for s in &mut self.slots {
            for x in s.iter_mut() {
                *x = *x * factor;
            }
        }
    }

    pub fn max_abs(&self) -> F {
        self.slots
            .iter()
            .flatten()
            .fold(F::zero(), |m, v| m.max(v.abs()))
    }
}

/// `n` draws from N(0, 2 / fan_in).
pub fn he_normal<F: Scalar, R: Rng + ?Sized>(rng: &mut R, fan_in: usize, n: usize) -> Vec<F> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("positive std");
    (0..n).map(|_| F::of(dist.sample(rng))).collect()
}
