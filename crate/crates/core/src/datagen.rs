//! Synthetic Gaussian-mixture data and the three label-corruption mechanisms:
//! pseudo-labels from a model, uniformly random labels (may hit the truth),
//! and mislabels (uniform over the wrong classes only).

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{Model, ModelError};
use crate::seed;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("count must be at least 1")]
    EmptyRequest,
    #[error("requested {requested} examples but the dataset holds {available}")]
    CountExceedsData { requested: usize, available: usize },
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("bayes-risk estimate needs at least 10000 samples, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Isotropic Gaussian mixture with one component per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDistribution {
    k: usize,
    dim: usize,
    centers: Vec<Vec<f64>>,
    spread: f64,
    priors: Vec<f64>,
}

impl DataDistribution {
    pub fn new(centers: Vec<Vec<f64>>, spread: f64, priors: Vec<f64>) -> Result<Self, DataError> {
        let bad = |msg: String| Err(DataError::InvalidDistribution(msg));
        let k = centers.len();
        if k < 2 {
            return bad(format!("need at least 2 class centers, got {k}"));
        }
        let dim = centers[0].len();
        if dim == 0 {
            return bad("feature dimension must be positive".into());
        }
        if centers
            .iter()
            .any(|c| c.len() != dim || c.iter().any(|v| !v.is_finite()))
        {
            return bad("centers must share one dimension and be finite".into());
        }
        for i in 0..k {
            for j in (i + 1)..k {
                if centers[i] == centers[j] {
                    return bad(format!("centers {i} and {j} coincide"));
                }
            }
        }
        if !(spread.is_finite() && spread > 0.0) {
            return bad(format!("spread must be positive, got {spread}"));
        }
        if priors.len() != k || priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("priors must be k non-negative values".into());
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("priors sum to {total}, not 1"));
        }
        Ok(Self {
            k,
            dim,
            centers,
            spread,
            priors,
        })
    }

    /// Equal-prior mixture with centers at `±separation` along the first
    /// `ceil(k/2)` axes. Requires `k <= 2 * dim`.
    pub fn axis_aligned(
        k: usize,
        dim: usize,
        separation: f64,
        spread: f64,
    ) -> Result<Self, DataError> {
        if k < 2 {
            return Err(DataError::TooFewClasses(k));
        }
        if k > 2 * dim {
            return Err(DataError::InvalidDistribution(format!(
                "axis-aligned layout fits at most 2*dim = {} classes, got {k}",
                2 * dim
            )));
        }
        let centers = (0..k)
            .map(|c| {
                let mut v = vec![0.0; dim];
                v[c / 2] = if c % 2 == 0 { separation } else { -separation };
                v
            })
            .collect();
        Self::new(centers, spread, vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn spread(&self) -> f64 {
        self.spread
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn id(&self) -> String {
        format!(
            "gauss-mixture(k={},dim={},spread={})",
            self.k, self.dim, self.spread
        )
    }

    /// Bayes-optimal class for `x`; ties go to the lowest index.
    pub fn bayes_class(&self, x: &[f64]) -> usize {
        let inv = 1.0 / (2.0 * self.spread * self.spread);
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (c, (center, prior)) in self.centers.iter().zip(&self.priors).enumerate() {
            let d2: f64 = center.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            let score = prior.ln() - d2 * inv;
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        best
    }

    fn draw<R: Rng>(&self, rng: &mut R, classes: &WeightedIndex<f64>) -> (Vec<f64>, usize) {
        let c = classes.sample(rng);
        let x = self.centers[c]
            .iter()
            .map(|mu| {
                let z: f64 = rng.sample(StandardNormal);
                mu + self.spread * z
            })
            .collect();
        (x, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Clean,
    PseudoCorrect,
    PseudoWrong,
    Randomized,
    Mislabeled,
}

impl Provenance {
    pub const ALL: [Provenance; 5] = [
        Provenance::Clean,
        Provenance::PseudoCorrect,
        Provenance::PseudoWrong,
        Provenance::Randomized,
        Provenance::Mislabeled,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Clean => "clean",
            Provenance::PseudoCorrect => "pseudo_correct",
            Provenance::PseudoWrong => "pseudo_wrong",
            Provenance::Randomized => "randomized",
            Provenance::Mislabeled => "mislabeled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
    pub true_label: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub k: usize,
    pub dim: usize,
    pub examples: Vec<LabeledExample>,
    pub origin_seed: u64,
    pub distribution_id: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.examples
            .iter()
            .filter(|e| e.provenance == provenance)
            .count()
    }

    pub fn iter_with<'a>(
        &'a self,
        filter: impl Fn(&LabeledExample) -> bool + 'a,
    ) -> impl Iterator<Item = &'a LabeledExample> + 'a {
        self.examples.iter().filter(move |e| filter(e))
    }

    /// Writes the dataset as CSV. A leading `#` comment carries `k`, `dim`,
    /// the seed and the distribution id; the header row is
    /// `x0,...,x{dim-1},label,true_label,provenance`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), DataError> {
        writeln!(
            out,
            "# k={} dim={} seed={} distribution={}",
            self.k, self.dim, self.origin_seed, self.distribution_id
        )?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        header.extend(["label", "true_label", "provenance"].map(String::from));
        w.write_record(&header)?;
        for e in &self.examples {
            let mut row: Vec<String> = e.features.iter().map(|v| v.to_string()).collect();
            row.push(e.label.to_string());
            row.push(e.true_label.to_string());
            row.push(e.provenance.as_str().to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, DataError> {
        let mut text = String::new();
        let mut input = input;
        input.read_to_string(&mut text)?;
        let (meta, body) = text
            .split_once('\n')
            .ok_or_else(|| DataError::Format("missing metadata line".into()))?;
        let meta = meta
            .strip_prefix("# ")
            .ok_or_else(|| DataError::Format("metadata line must start with '# '".into()))?;
        let (mut k, mut dim, mut origin_seed, mut distribution_id) = (None, None, None, None);
        for (i, field) in meta.splitn(4, ' ').enumerate() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| DataError::Format(format!("bad metadata field `{field}`")))?;
            let parse_err = |_| DataError::Format(format!("bad value for `{key}`"));
            match (i, key) {
                (0, "k") => k = Some(value.parse::<usize>().map_err(parse_err)?),
                (1, "dim") => dim = Some(value.parse::<usize>().map_err(parse_err)?),
                (2, "seed") => origin_seed = Some(value.parse::<u64>().map_err(parse_err)?),
                (3, "distribution") => distribution_id = Some(value.to_string()),
                _ => {
                    return Err(DataError::Format(format!(
                        "unexpected metadata key `{key}`"
                    )))
                }
            }
        }
        let missing = || DataError::Format("incomplete metadata".into());
        let (k, dim) = (k.ok_or_else(missing)?, dim.ok_or_else(missing)?);
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let mut examples = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != dim + 3 {
                return Err(DataError::Format(format!(
                    "expected {} columns, found {}",
                    dim + 3,
                    record.len()
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| DataError::Format(format!("bad number `{s}`")))
            };
            let class = |s: &str| match s.parse::<usize>() {
                Ok(c) if c < k => Ok(c),
                _ => Err(DataError::Format(format!("bad class `{s}`"))),
            };
            let features = (0..dim)
                .map(|i| num(&record[i]))
                .collect::<Result<Vec<_>, _>>()?;
            examples.push(LabeledExample {
                features,
                label: class(&record[dim])?,
                true_label: class(&record[dim + 1])?,
                provenance: Provenance::parse(&record[dim + 2]).ok_or_else(|| {
                    DataError::Format(format!("bad provenance `{}`", &record[dim + 2]))
                })?,
            });
        }
        Ok(Dataset {
            k,
            dim,
            examples,
            origin_seed: origin_seed.ok_or_else(missing)?,
            distribution_id: distribution_id.ok_or_else(missing)?,
        })
    }
}

/// Draws `count` clean examples i.i.d. from `dist`.
pub fn sample(dist: &DataDistribution, count: usize, seed: u64) -> Result<Dataset, DataError> {
    if count == 0 {
        return Err(DataError::EmptyRequest);
    }
    let mut rng = seed::rng(seed);
    let classes = WeightedIndex::new(&dist.priors)
        .map_err(|e| DataError::InvalidDistribution(e.to_string()))?;
    let examples = (0..count)
        .map(|_| {
            let (features, c) = dist.draw(&mut rng, &classes);
            LabeledExample {
                features,
                label: c,
                true_label: c,
                provenance: Provenance::Clean,
            }
        })
        .collect();
    Ok(Dataset {
        k: dist.k,
        dim: dist.dim,
        examples,
        origin_seed: seed,
        distribution_id: dist.id(),
    })
}

fn check_count(data: &Dataset, count: usize) -> Result<(), DataError> {
    if count > data.len() {
        return Err(DataError::CountExceedsData {
            requested: count,
            available: data.len(),
        });
    }
    Ok(())
}

/// Relabels `count` distinct examples with labels uniform over all `k` classes.
pub fn randomize_labels(
    data: &Dataset,
    count: usize,
    k: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    check_count(data, count)?;
    let mut rng = seed::rng(seed);
    let chosen = index::sample(&mut rng, data.len(), count).into_vec();
    randomize_indices(data, &chosen, k, &mut rng)
}

/// Relabels the given positions uniformly over all `k` classes.
pub fn randomize_indices<R: Rng>(
    data: &Dataset,
    positions: &[usize],
    k: usize,
    rng: &mut R,
) -> Result<Dataset, DataError> {
    if k < 2 {
        return Err(DataError::TooFewClasses(k));
    }
    let mut out = data.clone();
    for &i in positions {
        let e = out.examples.get_mut(i).ok_or(DataError::CountExceedsData {
            requested: i + 1,
            available: data.len(),
        })?;
        e.label = rng.random_range(0..k);
        e.provenance = Provenance::Randomized;
    }
    Ok(out)
}

/// Relabels `count` distinct examples uniformly over the `k-1` wrong classes.
pub fn mislabel(data: &Dataset, count: usize, k: usize, seed: u64) -> Result<Dataset, DataError> {
    check_count(data, count)?;
    if k < 2 {
        return Err(DataError::TooFewClasses(k));
    }
    let mut rng = seed::rng(seed);
    let chosen = index::sample(&mut rng, data.len(), count).into_vec();
    let mut out = data.clone();
    for i in chosen {
        let e = &mut out.examples[i];
        let draw = rng.random_range(0..k - 1);
        e.label = if draw >= e.true_label { draw + 1 } else { draw };
        e.provenance = Provenance::Mislabeled;
    }
    Ok(out)
}

/// Replaces every label with the model's prediction and tags each example as
/// pseudo-correct or pseudo-wrong against the retained ground truth.
pub fn apply_pseudo_labels(data: &Dataset, model: &dyn Model) -> Result<Dataset, DataError> {
    if model.dim() != data.dim {
        return Err(ModelError::DimensionMismatch {
            expected: model.dim(),
            found: data.dim,
        }
        .into());
    }
    let mut out = data.clone();
    for e in &mut out.examples {
        let pred = model.predict(&e.features)?;
        e.label = pred;
        e.provenance = if pred == e.true_label {
            Provenance::PseudoCorrect
        } else {
            Provenance::PseudoWrong
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl RiskEstimate {
    pub fn from_counts(errors: usize, samples: usize) -> Self {
        let estimate = errors as f64 / samples as f64;
        Self {
            estimate,
            std_error: (estimate * (1.0 - estimate) / samples as f64).sqrt(),
            samples,
        }
    }
}

/// Monte-Carlo risk of the Bayes-optimal classifier under `dist`.
pub fn estimate_bayes_risk(
    dist: &DataDistribution,
    samples: usize,
    seed: u64,
) -> Result<RiskEstimate, DataError> {
    if samples < 10_000 {
        return Err(DataError::TooFewSamples(samples));
    }
    let mut rng = seed::rng(seed);
    let classes = WeightedIndex::new(&dist.priors)
        .map_err(|e| DataError::InvalidDistribution(e.to_string()))?;
    let errors = (0..samples)
        .filter(|_| {
            let (x, c) = dist.draw(&mut rng, &classes);
            dist.bayes_class(&x) != c
        })
        .count();
    Ok(RiskEstimate::from_counts(errors, samples))
}
