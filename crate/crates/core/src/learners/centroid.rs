use std::io::{self, Write};

use super::{
    check_dim, check_train, join_floats, parse_floats, LearnError, Learner, Model, ModelError,
    ModelParams,
};
use crate::datagen::Dataset;

/// Class means under the given labels; prediction is the nearest mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct NearestCentroid;

impl Learner for NearestCentroid {
    fn name(&self) -> &'static str {
        "nearest_centroid"
    }

    fn fit(&self, train: &Dataset) -> Result<Box<dyn Model>, LearnError> {
        check_train(train)?;
        let mut sums = vec![vec![0.0; train.dim]; train.k];
        let mut counts = vec![0usize; train.k];
        for e in &train.examples {
            check_dim(train.dim, &e.features)?;
            counts[e.label] += 1;
            for (s, x) in sums[e.label].iter_mut().zip(&e.features) {
                *s += x;
            }
        }
        let centroids = sums
            .into_iter()
            .zip(counts)
            .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
            .collect();
        Ok(Box::new(NearestCentroidModel::new(train.dim, centroids)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NearestCentroidModel {
    dim: usize,
    /// `None` for classes absent from the training labels; never predicted.
    centroids: Vec<Option<Vec<f64>>>,
}

impl NearestCentroidModel {
    pub fn new(dim: usize, centroids: Vec<Option<Vec<f64>>>) -> Result<Self, ModelError> {
        if centroids.len() < 2 {
            return Err(ModelError::Invalid("need at least 2 classes".into()));
        }
        if centroids.iter().all(Option::is_none) {
            return Err(ModelError::Invalid("no class has a centroid".into()));
        }
        if centroids
            .iter()
            .flatten()
            .any(|c| c.len() != dim || c.iter().any(|v| !v.is_finite()))
        {
            return Err(ModelError::Invalid(
                "centroid dimension mismatch or non-finite".into(),
            ));
        }
        Ok(Self { dim, centroids })
    }

    pub(super) fn load(p: &ModelParams) -> Result<Box<dyn Model>, LearnError> {
        let centroids = p
            .indexed_rows("centroid", p.k)?
            .iter()
            .map(|row| match row.as_slice() {
                [dash] if dash == "-" => Ok(None),
                _ => parse_floats(row, p.dim).map(Some),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Box::new(NearestCentroidModel::new(p.dim, centroids)?))
    }
}

impl Model for NearestCentroidModel {
    fn kind(&self) -> &'static str {
        "nearest_centroid"
    }

    fn k(&self) -> usize {
        self.centroids.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, features: &[f64]) -> Result<usize, ModelError> {
        check_dim(self.dim, features)?;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in self.centroids.iter().enumerate() {
            let Some(centroid) = centroid else { continue };
            let d: f64 = centroid
                .iter()
                .zip(features)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        Ok(best)
    }

    fn write_params(&self, out: &mut dyn Write) -> io::Result<()> {
        for (i, c) in self.centroids.iter().enumerate() {
            match c {
                Some(c) => writeln!(out, "centroid {i} {}", join_floats(c))?,
                None => writeln!(out, "centroid {i} -")?,
            }
        }
        Ok(())
    }
}
