use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::domain::{PolicyShape, Strategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyRole {
    Planner,
    Reasoner,
}

impl std::fmt::Display for PolicyRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PolicyRole::Planner => "planner",
            PolicyRole::Reasoner => "reasoner",
        })
    }
}

/// Fixed-window encoder: embeddings of the last `context_window` tokens are
/// concatenated, passed through tanh layers, then a linear output head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub embed_dim: usize,
    pub context_window: usize,
    pub hidden_dims: Vec<usize>,
    pub vocab_size: usize,
    pub output_arity: usize,
}

impl PolicySpec {
    pub fn planner(shape: &PolicyShape, vocab_size: usize) -> PolicySpec {
        Self::from_shape(shape, vocab_size, Strategy::COUNT)
    }

    pub fn reasoner(shape: &PolicyShape, vocab_size: usize) -> PolicySpec {
        Self::from_shape(shape, vocab_size, vocab_size)
    }

    pub fn for_role(role: PolicyRole, shape: &PolicyShape, vocab_size: usize) -> PolicySpec {
        match role {
            PolicyRole::Planner => Self::planner(shape, vocab_size),
            PolicyRole::Reasoner => Self::reasoner(shape, vocab_size),
        }
    }

    fn from_shape(shape: &PolicyShape, vocab_size: usize, output_arity: usize) -> PolicySpec {
        PolicySpec {
            embed_dim: shape.embed_dim,
            context_window: shape.context_window,
            hidden_dims: shape.hidden_dims.clone(),
            vocab_size,
            output_arity,
        }
    }

    pub fn shape(&self) -> PolicyShape {
        PolicyShape {
            embed_dim: self.embed_dim,
            context_window: self.context_window,
            hidden_dims: self.hidden_dims.clone(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.embed_dim * self.context_window
    }

    /// Output arity must be 9 for a planner and |V| for a reasoner.
    pub fn validate_role(&self, role: PolicyRole) -> Result<(), ModelError> {
        self.validate()?;
        let want = match role {
            PolicyRole::Planner => Strategy::COUNT,
            PolicyRole::Reasoner => self.vocab_size,
        };
        if self.output_arity != want {
            return Err(ModelError::InvalidSpec(format!(
                "{role} output arity {} (expected {want})",
                self.output_arity
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embed_dim == 0 || self.context_window == 0 || self.vocab_size == 0 {
            return Err(ModelError::InvalidSpec("dimensions must be at least 1".into()));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(ModelError::InvalidSpec("need at least one hidden layer of width >= 1".into()));
        }
        if self.output_arity < 2 {
            return Err(ModelError::InvalidSpec("output arity must be at least 2".into()));
        }
        Ok(())
    }

    /// `(name, dims)` for every tensor, in canonical order: embedding, each
    /// hidden layer's weight then bias, head weight, head bias.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![("embedding".to_string(), vec![self.vocab_size, self.embed_dim])];
        let mut fan_in = self.input_dim();
        for (i, &h) in self.hidden_dims.iter().enumerate() {
            out.push((format!("layer{i}.weight"), vec![fan_in, h]));
            out.push((format!("layer{i}.bias"), vec![h]));
            fan_in = h;
        }
        out.push(("head.weight".to_string(), vec![fan_in, self.output_arity]));
        out.push(("head.bias".to_string(), vec![self.output_arity]));
        out
    }
}
