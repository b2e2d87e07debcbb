//! Confusion matrices and label perturbation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Candidate, SubgroupLabel};

/// Tolerance on each row sum.
pub const ROW_TOLERANCE: f64 = 1e-6;

/// Names accepted by [`load_builtin_matrix`].
pub const BUILTIN_MATRICES: [&str; 5] = ["ethcnn", "ethnicolr", "bisg", "nameprism", "deepface"];

const ETHCNN: &str = include_str!("../data/matrices/ethcnn.json");
const ETHNICOLR: &str = include_str!("../data/matrices/ethnicolr.json");
const BISG: &str = include_str!("../data/matrices/bisg.json");
const NAMEPRISM: &str = include_str!("../data/matrices/nameprism.json");
const DEEPFACE: &str = include_str!("../data/matrices/deepface.json");

/// Row-stochastic map from true label to predicted label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixFile", into = "MatrixFile")]
pub struct ConfusionMatrix {
    labels: Vec<SubgroupLabel>,
    /// `probs[i][j]` = P(predict `labels[j]` | true `labels[i]`).
    probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixFile {
    labels: Vec<SubgroupLabel>,
    rows: BTreeMap<SubgroupLabel, BTreeMap<SubgroupLabel, f64>>,
}

impl TryFrom<MatrixFile> for ConfusionMatrix {
    type Error = Error;

    fn try_from(file: MatrixFile) -> Result<Self> {
        let mut probs = Vec::with_capacity(file.labels.len());
        for t in &file.labels {
            let row = file
                .rows
                .get(t)
                .ok_or_else(|| Error::InvalidMatrix(format!("no row for `{t}`")))?;
            if let Some(extra) = row.keys().find(|p| !file.labels.contains(p)) {
                return Err(Error::InvalidMatrix(format!(
                    "row `{t}` predicts unlisted label `{extra}`"
                )));
            }
            probs.push(
                file.labels
                    .iter()
                    .map(|p| row.get(p).copied().unwrap_or(0.0))
                    .collect(),
            );
        }
        if let Some(extra) = file.rows.keys().find(|t| !file.labels.contains(t)) {
            return Err(Error::InvalidMatrix(format!(
                "row for unlisted label `{extra}`"
            )));
        }
        ConfusionMatrix::new(file.labels, probs)
    }
}

impl From<ConfusionMatrix> for MatrixFile {
    fn from(m: ConfusionMatrix) -> Self {
        let rows = m
            .labels
            .iter()
            .zip(&m.probs)
            .map(|(t, row)| {
                (
                    t.clone(),
                    m.labels.iter().cloned().zip(row.iter().copied()).collect(),
                )
            })
            .collect();
        MatrixFile {
            labels: m.labels,
            rows,
        }
    }
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<SubgroupLabel>, probs: Vec<Vec<f64>>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidMatrix("no labels".into()));
        }
        let unique: BTreeSet<_> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::InvalidMatrix("duplicate labels".into()));
        }
        if probs.len() != labels.len() || probs.iter().any(|r| r.len() != labels.len()) {
            return Err(Error::InvalidMatrix(
                "matrix is not square over its labels".into(),
            ));
        }
        for (t, row) in labels.iter().zip(&probs) {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidMatrix(format!(
                    "row `{t}` has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidMatrix(format!("row `{t}` sums to {sum}")));
            }
        }
        Ok(ConfusionMatrix { labels, probs })
    }

    pub fn identity(labels: Vec<SubgroupLabel>) -> Result<Self> {
        let n = labels.len();
        let probs = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(labels, probs)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidMatrix(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes")
    }

    pub fn labels(&self) -> &[SubgroupLabel] {
        &self.labels
    }

    pub fn index_of(&self, label: &SubgroupLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// P(predicted | truth); zero for labels outside the matrix.
    pub fn prob(&self, truth: &SubgroupLabel, predicted: &SubgroupLabel) -> f64 {
        match (self.index_of(truth), self.index_of(predicted)) {
            (Some(i), Some(j)) => self.probs[i][j],
            _ => 0.0,
        }
    }

    pub fn row(&self, truth: &SubgroupLabel) -> Option<&[f64]> {
        self.index_of(truth).map(|i| self.probs[i].as_slice())
    }

    /// Renames attribute values, e.g. `Latinx` to `Hispanic`. Applied to every
    /// part of composite labels.
    pub fn relabel(&self, aliases: &BTreeMap<String, String>) -> Result<Self> {
        let labels = self
            .labels
            .iter()
            .map(|l| SubgroupLabel::new(l.parts().iter().map(|p| aliases.get(p).unwrap_or(p))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels, self.probs.clone())
    }

    /// Keeps only `keep` and renormalizes each row over the kept columns.
    pub fn restrict(&self, keep: &[SubgroupLabel]) -> Result<Self> {
        let idx: Vec<usize> = keep
            .iter()
            .map(|l| {
                self.index_of(l)
                    .ok_or_else(|| Error::LabelNotInMatrix(l.clone()))
            })
            .collect::<Result<_>>()?;
        let probs = idx
            .iter()
            .map(|&i| {
                let row: Vec<f64> = idx.iter().map(|&j| self.probs[i][j]).collect();
                let sum: f64 = row.iter().sum();
                if sum > 0.0 {
                    Ok(row.iter().map(|p| p / sum).collect())
                } else {
                    Err(Error::InvalidMatrix(format!(
                        "row `{}` has no mass on the kept labels",
                        self.labels[i]
                    )))
                }
            })
            .collect::<Result<_>>()?;
        Self::new(keep.to_vec(), probs)
    }
}

pub fn load_builtin_matrix(name: &str) -> Result<ConfusionMatrix> {
    let text = match name.to_ascii_lowercase().as_str() {
        "ethcnn" => ETHCNN,
        "ethnicolr" => ETHNICOLR,
        "bisg" => BISG,
        "nameprism" => NAMEPRISM,
        "deepface" => DEEPFACE,
        _ => return Err(Error::UnknownMatrix(name.to_string())),
    };
    ConfusionMatrix::from_json(text)
}

pub fn load_matrix_file(path: &Path) -> Result<ConfusionMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ConfusionMatrix::from_json(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// A built-in name, or else a path to a matrix JSON file.
pub fn resolve_matrix(name_or_path: &str) -> Result<ConfusionMatrix> {
    match load_builtin_matrix(name_or_path) {
        Err(Error::UnknownMatrix(_)) if Path::new(name_or_path).exists() => {
            load_matrix_file(Path::new(name_or_path))
        }
        other => other,
    }
}

/// Where the error mass of an accuracy-`a` classifier goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyNoise {
    /// Correct with probability `a`; otherwise one of the other labels.
    #[default]
    UniformOther,
    /// Kept with probability `a`; otherwise redrawn uniformly from all labels,
    /// the true one included.
    UniformAny,
}

/// Diagonal `a`, remaining mass spread evenly over the other labels.
pub fn uniform_accuracy_matrix(a: f64, labels: Vec<SubgroupLabel>) -> Result<ConfusionMatrix> {
    accuracy_matrix(a, labels, AccuracyNoise::UniformOther)
}

pub fn accuracy_matrix(
    a: f64,
    labels: Vec<SubgroupLabel>,
    noise: AccuracyNoise,
) -> Result<ConfusionMatrix> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::InvalidMatrix(format!("accuracy {a} outside [0, 1]")));
    }
    let n = labels.len();
    if n == 1 && a < 1.0 && noise == AccuracyNoise::UniformOther {
        return Err(Error::InvalidMatrix(
            "a single label cannot be misclassified".into(),
        ));
    }
    let (diag, off) = match noise {
        AccuracyNoise::UniformOther if n == 1 => (1.0, 0.0),
        AccuracyNoise::UniformOther => (a, (1.0 - a) / (n - 1) as f64),
        AccuracyNoise::UniformAny => {
            let spread = (1.0 - a) / n as f64;
            (a + spread, spread)
        }
    };
    let probs = (0..n)
        .map(|i| (0..n).map(|j| if i == j { diag } else { off }).collect())
        .collect();
    ConfusionMatrix::new(labels, probs)
}

/// Independent errors on two attributes: the Kronecker product of the
/// matrices. Product labels are ordered `a`-major.
pub fn compose_matrices(a: &ConfusionMatrix, b: &ConfusionMatrix) -> Result<ConfusionMatrix> {
    let labels = a
        .labels
        .iter()
        .flat_map(|la| b.labels.iter().map(move |lb| la.product(lb)))
        .collect();
    let probs = a
        .probs
        .iter()
        .flat_map(|ra| {
            b.probs.iter().map(move |rb| {
                ra.iter()
                    .flat_map(|pa| rb.iter().map(move |pb| pa * pb))
                    .collect()
            })
        })
        .collect();
    ConfusionMatrix::new(labels, probs)
}

/// Cumulative rows with a fast label lookup, for repeated sampling.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    matrix: &'a ConfusionMatrix,
    index: HashMap<&'a SubgroupLabel, usize>,
    cumulative: Vec<Vec<f64>>,
}

impl<'a> Sampler<'a> {
    pub fn new(matrix: &'a ConfusionMatrix) -> Self {
        let index = matrix
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l, i))
            .collect();
        let cumulative = matrix
            .probs
            .iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Sampler {
            matrix,
            index,
            cumulative,
        }
    }

    /// Draws a predicted label for `truth` from one uniform variate.
    pub fn draw_with(&self, truth: &SubgroupLabel, u: f64) -> Result<&'a SubgroupLabel> {
        let i = *self
            .index
            .get(truth)
            .ok_or_else(|| Error::LabelNotInMatrix(truth.clone()))?;
        let row = &self.cumulative[i];
        let probs = &self.matrix.probs[i];
        // Row sums may fall a hair short of 1; overflow lands on the last
        // column with positive mass.
        let j = row
            .iter()
            .position(|&c| u < c)
            .filter(|&j| probs[j] > 0.0)
            .unwrap_or_else(|| probs.iter().rposition(|&p| p > 0.0).unwrap_or(i));
        Ok(&self.matrix.labels[j])
    }

    pub fn draw<R: Rng + ?Sized>(
        &self,
        truth: &SubgroupLabel,
        rng: &mut R,
    ) -> Result<&'a SubgroupLabel> {
        self.draw_with(truth, rng.random::<f64>())
    }
}

/// Sets every candidate's inferred label by sampling its true-label row.
/// Draws consume the generator in slice order.
pub fn perturb_labels_with<R: Rng + ?Sized>(
    candidates: &mut [Candidate],
    matrix: &ConfusionMatrix,
    rng: &mut R,
) -> Result<()> {
    let sampler = Sampler::new(matrix);
    for c in candidates.iter_mut() {
        let predicted = sampler.draw(&c.true_label, rng)?;
        c.inferred_label = Some(predicted.clone());
    }
    Ok(())
}

/// Seeded wrapper around [`perturb_labels_with`] using ChaCha8.
pub fn perturb_labels(
    mut candidates: Vec<Candidate>,
    matrix: &ConfusionMatrix,
    seed: u64,
) -> Result<Vec<Candidate>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perturb_labels_with(&mut candidates, matrix, &mut rng)?;
    Ok(candidates)
}
