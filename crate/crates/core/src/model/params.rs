use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, PolicySpec};

pub const INIT_SCALE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    /// Row-major.
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, dims: Vec<usize>) -> Tensor {
        let n = dims.iter().product();
        Tensor { name: name.into(), dims, data: vec![0.0; n] }
    }
}

/// Named parameter tensors for one policy, in the spec's canonical order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub spec: PolicySpec,
    pub tensors: Vec<Tensor>,
}

impl PolicyParams {
    pub fn zeros(spec: &PolicySpec) -> PolicyParams {
        let tensors = spec
            .tensor_layout()
            .into_iter()
            .map(|(name, dims)| Tensor::zeros(name, dims))
            .collect();
        PolicyParams { spec: spec.clone(), tensors }
    }

    /// Uniform in `[-scale, scale]`, drawn tensor by tensor in canonical order.
    pub fn init_uniform<R: Rng>(spec: &PolicySpec, scale: f64, rng: &mut R) -> PolicyParams {
        let mut p = Self::zeros(spec);
        for t in &mut p.tensors {
            for x in &mut t.data {
                *x = rng.gen_range(-scale..=scale);
            }
        }
        p
    }

    pub fn init<R: Rng>(spec: &PolicySpec, rng: &mut R) -> PolicyParams {
        Self::init_uniform(spec, INIT_SCALE, rng)
    }

    /// Rebuilds from tensors, checking names and shapes against the spec layout.
    pub fn from_tensors(spec: PolicySpec, tensors: Vec<Tensor>) -> Result<PolicyParams, ModelError> {
        spec.validate()?;
        let layout = spec.tensor_layout();
        if layout.len() != tensors.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} tensors, found {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, dims), t) in layout.iter().zip(&tensors) {
            if &t.name != name || &t.dims != dims || t.data.len() != dims.iter().product::<usize>() {
                return Err(ModelError::ShapeMismatch(format!(
                    "tensor {} {:?} does not match {name} {dims:?}",
                    t.name, t.dims
                )));
            }
        }
        Ok(PolicyParams { spec, tensors })
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn embedding(&self) -> &[f64] {
        &self.tensors[0].data
    }

    pub(crate) fn layer_weight(&self, i: usize) -> &[f64] {
        &self.tensors[1 + 2 * i].data
    }

    pub(crate) fn layer_bias(&self, i: usize) -> &[f64] {
        &self.tensors[2 + 2 * i].data
    }

    pub(crate) fn head_weight(&self) -> &[f64] {
        &self.tensors[self.tensors.len() - 2].data
    }

    pub(crate) fn head_bias(&self) -> &[f64] {
        &self.tensors[self.tensors.len() - 1].data
    }
}

/// Gradient (or any parameter-shaped) buffer matching a [`PolicyParams`] layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(params: &PolicyParams) -> Grads {
        Grads { data: params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect() }
    }

    pub fn add_scaled(&mut self, other: &Grads, scale: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|t| t.iter().all(|&x| x == 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn max_abs_diff(&self, other: &Grads) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn get(&self, tensor: usize, index: usize) -> f64 {
        self.data[tensor][index]
    }
}
