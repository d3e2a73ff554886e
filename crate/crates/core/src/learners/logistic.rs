use std::io::{self, Write};

use super::{
    argmax, check_dim, check_train, join_floats, parse_floats, LearnError, Learner, Model,
    ModelError, ModelParams,
};
use crate::datagen::Dataset;

/// Multinomial logistic regression fit by full-batch gradient descent on the
/// mean softmax cross-entropy plus `l2/2 * ||W||^2` (bias unpenalized),
/// starting from all-zero parameters.
#[derive(Debug, Clone, Copy)]
pub struct LogisticRegression {
    pub steps: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in logits.iter_mut() {
        *v /= total;
    }
}

impl Learner for LogisticRegression {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn fit(&self, train: &Dataset) -> Result<Box<dyn Model>, LearnError> {
        check_train(train)?;
        let (k, dim) = (train.k, train.dim);
        for e in &train.examples {
            check_dim(dim, &e.features)?;
        }
        let n = train.len() as f64;
        let mut model = LogisticModel {
            k,
            dim,
            weights: vec![0.0; k * dim],
            bias: vec![0.0; k],
        };
        let mut grad_w = vec![0.0; k * dim];
        let mut grad_b = vec![0.0; k];
        let mut probs = vec![0.0; k];

        for step in 0..self.steps {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for e in &train.examples {
                model.logits_into(&e.features, &mut probs);
                softmax_in_place(&mut probs);
                loss -= probs[e.label].max(f64::MIN_POSITIVE).ln();
                for c in 0..k {
                    let residual = probs[c] - if c == e.label { 1.0 } else { 0.0 };
                    grad_b[c] += residual;
                    let row = &mut grad_w[c * dim..(c + 1) * dim];
                    for (g, x) in row.iter_mut().zip(&e.features) {
                        *g += residual * x;
                    }
                }
            }
            let penalty: f64 = model.weights.iter().map(|w| w * w).sum::<f64>() * self.l2 / 2.0;
            let loss = loss / n + penalty;
            if !loss.is_finite() {
                return Err(LearnError::Diverged { step, loss });
            }
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= self.learning_rate * (g / n + self.l2 * *w);
            }
            for (b, g) in model.bias.iter_mut().zip(&grad_b) {
                *b -= self.learning_rate * g / n;
            }
            if model
                .weights
                .iter()
                .chain(&model.bias)
                .any(|v| !v.is_finite())
            {
                return Err(LearnError::Diverged {
                    step,
                    loss: f64::NAN,
                });
            }
        }
        Ok(Box::new(model))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    k: usize,
    dim: usize,
    /// Row-major `k x dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LogisticModel {
    pub fn new(
        k: usize,
        dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if k < 2 || dim == 0 || weights.len() != k * dim || bias.len() != k {
            return Err(ModelError::Invalid(
                "logistic parameter shapes do not match k x dim".into(),
            ));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(ModelError::Invalid("non-finite logistic parameter".into()));
        }
        Ok(Self {
            k,
            dim,
            weights,
            bias,
        })
    }

    pub fn zeros(k: usize, dim: usize) -> Result<Self, ModelError> {
        Self::new(k, dim, vec![0.0; k * dim], vec![0.0; k])
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weights[c * self.dim..(c + 1) * self.dim];
            *o = self.bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    pub(super) fn load(p: &ModelParams) -> Result<Box<dyn Model>, LearnError> {
        let bias = parse_floats(p.one("bias")?, p.k)?;
        let mut weights = Vec::with_capacity(p.k * p.dim);
        for row in p.indexed_rows("weights", p.k)? {
            weights.extend(parse_floats(&row, p.dim)?);
        }
        Ok(Box::new(LogisticModel::new(p.k, p.dim, weights, bias)?))
    }
}

impl Model for LogisticModel {
    fn kind(&self) -> &'static str {
        "logistic"
    }

    fn k(&self) -> usize {
        self.k
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, features: &[f64]) -> Result<usize, ModelError> {
        check_dim(self.dim, features)?;
        let mut logits = vec![0.0; self.k];
        self.logits_into(features, &mut logits);
        Ok(argmax(logits))
    }

    fn write_params(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "bias {}", join_floats(&self.bias))?;
        for c in 0..self.k {
            writeln!(
                out,
                "weights {c} {}",
                join_floats(&self.weights[c * self.dim..(c + 1) * self.dim])
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample, DataDistribution};
    use crate::learners::{empirical_error, NearestCentroid};

    /// Brute-force search over line directions and offsets for a separator.
    fn separable_by_grid(data: &Dataset) -> bool {
        (0..720).any(|step| {
            let theta = step as f64 * std::f64::consts::PI / 360.0;
            let (u, v) = (theta.cos(), theta.sin());
            let proj = |e: &crate::datagen::LabeledExample| u * e.features[0] + v * e.features[1];
            let max0 = data
                .iter_with(|e| e.label == 0)
                .map(proj)
                .fold(f64::NEG_INFINITY, f64::max);
            let min1 = data
                .iter_with(|e| e.label == 1)
                .map(proj)
                .fold(f64::INFINITY, f64::min);
            max0 < min1
        })
    }

    #[test]
    fn zero_weights_predict_class_zero() {
        let m = LogisticModel::zeros(3, 2).unwrap();
        for x in [[0.0, 0.0], [5.0, -3.0], [-1.0, 9.0]] {
            assert_eq!(m.predict(&x).unwrap(), 0);
        }
    }

    #[test]
    fn separable_two_class_data_is_fit_exactly() {
        let d = DataDistribution::new(vec![vec![2.0, 1.0], vec![-2.0, -1.0]], 0.4, vec![0.5, 0.5])
            .unwrap();
        let data = sample(&d, 400, 21).unwrap();
        assert!(separable_by_grid(&data));
        let centroid = NearestCentroid.fit(&data).unwrap();
        assert_eq!(
            empirical_error(centroid.as_ref(), &data, |_| true).unwrap(),
            0.0
        );
        let learner = LogisticRegression {
            steps: 500,
            learning_rate: 0.1,
            l2: 1e-4,
        };
        let m = learner.fit(&data).unwrap();
        assert_eq!(empirical_error(m.as_ref(), &data, |_| true).unwrap(), 0.0);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let d =
            DataDistribution::new(vec![vec![1e150], vec![-1e150]], 1.0, vec![0.5, 0.5]).unwrap();
        let data = sample(&d, 20, 1).unwrap();
        let learner = LogisticRegression {
            steps: 50,
            learning_rate: 1e10,
            l2: 1e-4,
        };
        assert!(matches!(
            learner.fit(&data),
            Err(LearnError::Diverged { .. })
        ));
    }

    #[test]
    fn fit_is_deterministic() {
        let d = DataDistribution::axis_aligned(4, 2, 2.0, 0.7).unwrap();
        let data = sample(&d, 300, 4).unwrap();
        let learner = LogisticRegression {
            steps: 100,
            learning_rate: 0.1,
            l2: 1e-3,
        };
        let a = super::super::model_to_string(learner.fit(&data).unwrap().as_ref());
        let b = super::super::model_to_string(learner.fit(&data).unwrap().as_ref());
        assert_eq!(a, b);
    }
}
