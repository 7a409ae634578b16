//! Datasets of per-query candidate documents.
//!
//! Two sources: LETOR/SVMlight text files (`<grade> qid:<id> <fidx>:<value> ...`
//! with 1-based feature indices) and a synthetic generator that plants a
//! hidden linear scorer, so a perfect ranker is known by construction.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Highest relevance grade; labels live in `0..=MAX_GRADE`.
pub const MAX_GRADE: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// One query-document pair: dense features plus a graded relevance label.
#[derive(Debug, Clone, PartialEq)]
pub struct Document<T> {
    pub features: Vec<T>,
    /// Graded relevance in `0..=4`.
    pub relevance: u8,
    /// Position of this document within its query's candidate list.
    pub doc_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query<T> {
    pub query_id: String,
    pub candidates: Vec<Document<T>>,
}

impl<T> Query<T> {
    /// Relevance grades of all candidates, in stored order.
    pub fn grades(&self) -> Vec<u8> {
        self.candidates.iter().map(|d| d.relevance).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub split: Split,
    pub queries: Vec<Query<T>>,
    pub feature_dim: usize,
}

impl<T> Dataset<T> {
    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }
}

/// Recipe for a synthetic dataset triple.
///
/// Feature vectors are standard Gaussian, then shifted along a hidden unit
/// direction so that the hidden score equals `grade + noise_scale * N(0,1)`.
/// With `noise_scale = 0` the hidden scorer ranks every query perfectly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_queries: usize,
    pub docs_per_query: usize,
    pub feature_dim: usize,
    /// Probabilities of grades 0..=4; must sum to 1 within 1e-9.
    pub relevance_distribution: [f64; 5],
    pub noise_scale: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_queries == 0 || self.docs_per_query == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidConfig(
                "synthetic spec counts must be positive".into(),
            ));
        }
        let total: f64 = self.relevance_distribution.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "relevance distribution sums to {total}, expected 1"
            )));
        }
        if self.relevance_distribution.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidConfig(
                "relevance distribution has a negative entry".into(),
            ));
        }
        if self.noise_scale < 0.0 {
            return Err(Error::InvalidConfig("noise_scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// The generator's hidden linear scorer, written as a sidecar JSON file
/// (`{"weights": [..], "seed": n}`) so skyline checks can reuse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenScorer {
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl HiddenScorer {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// Output of [`generate_synthetic`]: three disjoint splits plus the scorer
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData<T> {
    pub train: Dataset<T>,
    pub validation: Dataset<T>,
    pub test: Dataset<T>,
    pub scorer: HiddenScorer,
}

/// Parse a LETOR/SVMlight file into per-query candidate sets.
///
/// Documents are grouped by `qid` in order of first appearance and keep
/// their file order within each query. Feature indices are 1-based; absent
/// indices default to 0.
pub fn load_letor<T: Scalar>(path: &Path, feature_dim: usize) -> Result<Dataset<T>> {
    if feature_dim == 0 {
        return Err(Error::InvalidConfig("feature_dim must be positive".into()));
    }
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;

    let mut queries: Vec<Query<T>> = Vec::new();
    let mut index_of: HashMap<String, usize> = HashMap::new();
    let parse_err = |line_no: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message,
    };

    for (line_idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line.map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }

        let mut tokens = content.split_whitespace();
        let grade_tok = tokens.next().expect("non-empty line has a first token");
        let grade: u8 = grade_tok
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid relevance grade `{grade_tok}`")))?;
        if grade > MAX_GRADE {
            return Err(parse_err(
                line_no,
                format!("relevance grade {grade} outside 0..={MAX_GRADE}"),
            ));
        }

        let qid_tok = tokens
            .next()
            .ok_or_else(|| parse_err(line_no, "missing qid field".into()))?;
        let qid = qid_tok
            .strip_prefix("qid:")
            .ok_or_else(|| parse_err(line_no, format!("expected `qid:<id>`, got `{qid_tok}`")))?;
        if qid.is_empty() {
            return Err(parse_err(line_no, "empty qid".into()));
        }

        let mut features = vec![T::zero(); feature_dim];
        for pair in tokens {
            let (idx_str, val_str) = pair
                .split_once(':')
                .ok_or_else(|| parse_err(line_no, format!("malformed feature pair `{pair}`")))?;
            let idx: usize = idx_str
                .parse()
                .map_err(|_| parse_err(line_no, format!("invalid feature index `{idx_str}`")))?;
            if idx == 0 || idx > feature_dim {
                return Err(parse_err(
                    line_no,
                    format!("feature index {idx} outside 1..={feature_dim}"),
                ));
            }
            let value: f64 = val_str
                .parse()
                .map_err(|_| parse_err(line_no, format!("invalid feature value `{val_str}`")))?;
            features[idx - 1] = T::from_config(value);
        }

        let slot = *index_of.entry(qid.to_string()).or_insert_with(|| {
            queries.push(Query {
                query_id: qid.to_string(),
                candidates: Vec::new(),
            });
            queries.len() - 1
        });
        let doc_index = queries[slot].candidates.len();
        queries[slot].candidates.push(Document {
            features,
            relevance: grade,
            doc_index,
        });
    }

    if queries.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "file contains no documents".into(),
        });
    }

    Ok(Dataset {
        split: Split::Train,
        queries,
        feature_dim,
    })
}

/// Write a dataset in the same LETOR text format that [`load_letor`] reads.
/// All feature values are written densely, so a load/write/load cycle is
/// the identity.
pub fn write_letor<T: Scalar>(dataset: &Dataset<T>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    for query in &dataset.queries {
        for doc in &query.candidates {
            write!(out, "{} qid:{}", doc.relevance, query.query_id).map_err(io_err)?;
            for (i, value) in doc.features.iter().enumerate() {
                write!(out, " {}:{}", i + 1, value).map_err(io_err)?;
            }
            writeln!(out).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

/// Scan a LETOR file for the largest feature index, for callers that do not
/// know the dimensionality up front.
pub fn infer_feature_dim(path: &Path) -> Result<usize> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut max_idx = 0usize;
    for (line_idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        for pair in content.split_whitespace().skip(2) {
            let idx_str = pair.split(':').next().unwrap_or("");
            let idx: usize = idx_str.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_idx + 1,
                message: format!("invalid feature index `{idx_str}`"),
            })?;
            max_idx = max_idx.max(idx);
        }
    }
    if max_idx == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no feature indices found".into(),
        });
    }
    Ok(max_idx)
}

/// Generate train/validation/test splits from a [`SyntheticSpec`].
///
/// Deterministic in the spec (including its seed). Query ids are disjoint
/// across splits; validation and test each hold one fifth of the train
/// query count (at least one).
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<SyntheticData<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.feature_dim;

    let mut scorer: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = scorer.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm == 0.0 {
        // all-zero draw is essentially impossible; fall back to a basis vector
        scorer[0] = 1.0;
    } else {
        for w in &mut scorer {
            *w /= norm;
        }
    }

    let side = spec.n_queries.div_ceil(5);
    let mut next_qid = 1u64;
    let mut make_split = |split: Split, n_queries: usize, rng: &mut ChaCha8Rng| -> Dataset<T> {
        let mut queries = Vec::with_capacity(n_queries);
        for _ in 0..n_queries {
            let query_id = next_qid.to_string();
            next_qid += 1;
            let mut candidates = Vec::with_capacity(spec.docs_per_query);
            for doc_index in 0..spec.docs_per_query {
                let grade = sample_grade(&spec.relevance_distribution, rng);
                let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                let jitter: f64 = StandardNormal.sample(rng);
                let target = f64::from(grade) + spec.noise_scale * jitter;
                let current: f64 = raw.iter().zip(&scorer).map(|(x, w)| x * w).sum();
                let shift = target - current;
                let features = raw
                    .iter()
                    .zip(&scorer)
                    .map(|(x, w)| T::from_config(x + shift * w))
                    .collect();
                candidates.push(Document {
                    features,
                    relevance: grade,
                    doc_index,
                });
            }
            queries.push(Query {
                query_id,
                candidates,
            });
        }
        Dataset {
            split,
            queries,
            feature_dim: dim,
        }
    };

    let train = make_split(Split::Train, spec.n_queries, &mut rng);
    let validation = make_split(Split::Validation, side, &mut rng);
    let test = make_split(Split::Test, side, &mut rng);

    Ok(SyntheticData {
        train,
        validation,
        test,
        scorer: HiddenScorer {
            weights: scorer,
            seed: spec.seed,
        },
    })
}

fn sample_grade(distribution: &[f64; 5], rng: &mut impl Rng) -> u8 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (grade, &p) in distribution.iter().enumerate() {
        acc += p;
        if u < acc {
            return grade as u8;
        }
    }
    MAX_GRADE
}

/// Draw one query uniformly at random.
pub fn sample_query<'a, T>(dataset: &'a Dataset<T>, rng: &mut impl Rng) -> Result<&'a Query<T>> {
    if dataset.queries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let idx = rng.gen_range(0..dataset.queries.len());
    Ok(&dataset.queries[idx])
}

/// Per-feature min-max normalization, fitted on one split (usually train)
/// and applied to any split. Constant features map to 0.
///
/// The loader itself never normalizes; this pass is opt-in.
#[derive(Debug, Clone)]
pub struct FeatureScaler<T> {
    mins: Vec<T>,
    maxs: Vec<T>,
}

impl<T: Scalar> FeatureScaler<T> {
    pub fn fit(dataset: &Dataset<T>) -> Self {
        let dim = dataset.feature_dim;
        let mut mins = vec![T::infinity(); dim];
        let mut maxs = vec![T::neg_infinity(); dim];
        for query in &dataset.queries {
            for doc in &query.candidates {
                for (j, &v) in doc.features.iter().enumerate() {
                    if v < mins[j] {
                        mins[j] = v;
                    }
                    if v > maxs[j] {
                        maxs[j] = v;
                    }
                }
            }
        }
        FeatureScaler { mins, maxs }
    }

    pub fn apply(&self, dataset: &Dataset<T>) -> Dataset<T> {
        let queries = dataset
            .queries
            .iter()
            .map(|q| Query {
                query_id: q.query_id.clone(),
                candidates: q
                    .candidates
                    .iter()
                    .map(|d| Document {
                        features: d
                            .features
                            .iter()
                            .enumerate()
                            .map(|(j, &v)| {
                                let span = self.maxs[j] - self.mins[j];
                                if span > T::zero() {
                                    ((v - self.mins[j]) / span).clamp(T::zero(), T::one())
                                } else {
                                    T::zero()
                                }
                            })
                            .collect(),
                        relevance: d.relevance,
                        doc_index: d.doc_index,
                    })
                    .collect(),
            })
            .collect();
        Dataset {
            split: dataset.split,
            queries,
            feature_dim: dataset.feature_dim,
        }
    }
}
