use std::io::{self, Write};

use super::{check_dim, LearnError, Model, ModelError, ModelParams};

/// Predicts one fixed class everywhere. Only used as an initial model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantModel {
    k: usize,
    dim: usize,
    class: usize,
}

impl ConstantModel {
    pub fn new(k: usize, dim: usize, class: usize) -> Result<Self, ModelError> {
        if k < 2 || class >= k || dim == 0 {
            return Err(ModelError::Invalid(format!(
                "constant model needs k >= 2, dim >= 1 and class < k (k={k}, dim={dim}, class={class})"
            )));
        }
        Ok(Self { k, dim, class })
    }

    pub(super) fn load(p: &ModelParams) -> Result<Box<dyn Model>, LearnError> {
        Ok(Box::new(ConstantModel::new(
            p.k,
            p.dim,
            p.scalar("class")?,
        )?))
    }
}

impl Model for ConstantModel {
    fn kind(&self) -> &'static str {
        "constant"
    }

    fn k(&self) -> usize {
        self.k
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, features: &[f64]) -> Result<usize, ModelError> {
        check_dim(self.dim, features)?;
        Ok(self.class)
    }

    fn write_params(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "class {}", self.class)
    }
}
