//! Classical comparison models behind one fit/predict interface.
//!
//! Logistic regression is a zero-hidden-layer [`SupervisedNet`] trained with
//! the same fine-tuning loop as the deep models. The single-hidden-layer ANN
//! row runs the SDA pipeline with pre-training switched off.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledSet, SplitTag};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{Rng, Vector};
use crate::nn::{ActivationKind, DenseLayer};
use crate::sda::{self, FinetuneConfig, PipelineConfig, SupervisedNet};

pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaselineSpec {
    LogisticRegression {
        finetune: FinetuneConfig,
        init_seed: u64,
    },
    KNearest {
        k: usize,
    },
    NearestCentroid,
    GaussianNb,
    MultinomialNb {
        alpha: f64,
    },
    BernoulliNb {
        alpha: f64,
        binarize_threshold: f64,
    },
    /// Randomly initialized feedforward net fine-tuned without pre-training.
    Ann {
        pipeline: PipelineConfig,
    },
    /// Listed for table parity only; always reported as not implemented.
    Svm {
        kernel: String,
    },
}

impl BaselineSpec {
    pub fn name(&self) -> String {
        match self {
            BaselineSpec::LogisticRegression { .. } => "Logistic Regression".into(),
            BaselineSpec::KNearest { k } => format!("K-Nearest Neighbors (K={k})"),
            BaselineSpec::NearestCentroid => "Nearest Centroids".into(),
            BaselineSpec::GaussianNb => "Gaussian Naive Bayes".into(),
            BaselineSpec::MultinomialNb { .. } => "Multinomial Naive Bayes".into(),
            BaselineSpec::BernoulliNb { .. } => "Bernoulli Naive Bayes".into(),
            BaselineSpec::Ann { pipeline } => format!(
                "ANN, {} hidden layer(s) of {} ({}), softmax output, no pre-training",
                pipeline.stack.hidden_dims.len(),
                pipeline
                    .stack
                    .hidden_dims
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join("-"),
                pipeline.stack.hidden_activation
            ),
            BaselineSpec::Svm { kernel } => format!("SVM ({kernel} kernel)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub log_prior: f64,
    pub params: Vec<f64>,
    /// Gaussian variances; empty for the other models.
    pub extra: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    LogisticRegression(SupervisedNet),
    KNearest {
        k: usize,
        samples: Vec<Vector>,
        labels: Vec<usize>,
        n_classes: usize,
    },
    NearestCentroid {
        centroids: Vec<Vector>,
    },
    GaussianNb {
        classes: Vec<ClassStats>,
    },
    MultinomialNb {
        /// Per-class feature log-probabilities in `params`.
        classes: Vec<ClassStats>,
    },
    BernoulliNb {
        /// Per-class `P(x_j = 1)` in `params`.
        classes: Vec<ClassStats>,
        binarize_threshold: f64,
    },
    Ann(SupervisedNet),
}

fn class_counts(train: &LabeledSet) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; train.n_classes];
    for &l in &train.labels {
        counts[l] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::arg(format!("class {c} has no training samples")));
    }
    Ok(counts)
}

fn log_priors(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&n| (n as f64 / total as f64).ln()).collect()
}

/// Per-class sums of each feature.
fn class_sums(train: &LabeledSet, f: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
    let d = train.dim();
    let mut sums = vec![vec![0.0; d]; train.n_classes];
    for (x, &l) in train.samples.iter().zip(&train.labels) {
        for (s, &v) in sums[l].iter_mut().zip(x.iter()) {
            *s += f(v);
        }
    }
    sums
}

/// Softmax regression: a [`SupervisedNet`] with no hidden layer.
pub fn logistic_regression_net(dim: usize, n_classes: usize, rng: &mut Rng) -> Result<SupervisedNet> {
    SupervisedNet::from_layers(vec![DenseLayer::init(dim, n_classes, ActivationKind::Softmax, rng)])
}

/// Fits `spec` on `train`. Models that early-stop (logistic regression, ANN)
/// use `valid` for snapshot selection; the others ignore it.
pub fn fit(spec: &BaselineSpec, train: &LabeledSet, valid: &LabeledSet) -> Result<BaselineModel> {
    if train.is_empty() {
        return Err(Error::arg("cannot fit a baseline on an empty training set"));
    }
    let counts = class_counts(train)?;
    let d = train.dim();
    match spec {
        BaselineSpec::LogisticRegression { finetune, init_seed } => {
            let net = logistic_regression_net(d, train.n_classes, &mut Rng::new(*init_seed))?;
            let out = sda::finetune(net, train, valid, finetune)?;
            Ok(BaselineModel::LogisticRegression(out.net))
        }
        BaselineSpec::KNearest { k } => {
            if *k == 0 {
                return Err(Error::arg("k must be at least 1"));
            }
            Ok(BaselineModel::KNearest {
                k: *k,
                samples: train.samples.clone(),
                labels: train.labels.clone(),
                n_classes: train.n_classes,
            })
        }
        BaselineSpec::NearestCentroid => {
            let sums = class_sums(train, |v| v);
            let centroids = sums
                .into_iter()
                .zip(&counts)
                .map(|(s, &n)| Vector::new(s.into_iter().map(|v| v / n as f64).collect()))
                .collect::<Result<Vec<_>>>()?;
            Ok(BaselineModel::NearestCentroid { centroids })
        }
        BaselineSpec::GaussianNb => {
            let sums = class_sums(train, |v| v);
            let means: Vec<Vec<f64>> = sums
                .iter()
                .zip(&counts)
                .map(|(s, &n)| s.iter().map(|v| v / n as f64).collect())
                .collect();
            let mut sq = vec![vec![0.0; d]; train.n_classes];
            for (x, &l) in train.samples.iter().zip(&train.labels) {
                for ((acc, &v), &m) in sq[l].iter_mut().zip(x.iter()).zip(&means[l]) {
                    *acc += (v - m) * (v - m);
                }
            }
            let priors = log_priors(&counts);
            let classes = means
                .into_iter()
                .zip(sq)
                .zip(counts.iter().zip(priors))
                .map(|((mean, sq), (&n, log_prior))| ClassStats {
                    log_prior,
                    params: mean,
                    extra: sq.into_iter().map(|s| (s / n as f64).max(VARIANCE_FLOOR)).collect(),
                })
                .collect();
            Ok(BaselineModel::GaussianNb { classes })
        }
        BaselineSpec::MultinomialNb { alpha } => {
            check_alpha(*alpha)?;
            if train.samples.iter().any(|x| x.iter().any(|v| *v < 0.0)) {
                return Err(Error::arg("multinomial naive Bayes needs non-negative features"));
            }
            let sums = class_sums(train, |v| v);
            let priors = log_priors(&counts);
            let classes = sums
                .into_iter()
                .zip(priors)
                .map(|(s, log_prior)| {
                    let total: f64 = s.iter().sum::<f64>() + alpha * d as f64;
                    ClassStats {
                        log_prior,
                        params: s.iter().map(|c| ((c + alpha) / total).ln()).collect(),
                        extra: Vec::new(),
                    }
                })
                .collect();
            Ok(BaselineModel::MultinomialNb { classes })
        }
        BaselineSpec::BernoulliNb {
            alpha,
            binarize_threshold,
        } => {
            check_alpha(*alpha)?;
            let t = *binarize_threshold;
            let sums = class_sums(train, |v| if v > t { 1.0 } else { 0.0 });
            let priors = log_priors(&counts);
            let classes = sums
                .into_iter()
                .zip(counts.iter().zip(priors))
                .map(|(s, (&n, log_prior))| ClassStats {
                    log_prior,
                    params: s.iter().map(|c| (c + alpha) / (n as f64 + 2.0 * alpha)).collect(),
                    extra: Vec::new(),
                })
                .collect();
            Ok(BaselineModel::BernoulliNb {
                classes,
                binarize_threshold: t,
            })
        }
        BaselineSpec::Ann { pipeline } => {
            let mut rng = Rng::new(pipeline.init_seed);
            let net = SupervisedNet::random(&pipeline.stack, &mut rng)?;
            let out = sda::finetune(net, train, valid, &pipeline.finetune)?;
            Ok(BaselineModel::Ann(out.net))
        }
        BaselineSpec::Svm { kernel } => Err(Error::arg(format!("SVM ({kernel} kernel) is not implemented"))),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::arg(format!("smoothing alpha must be positive, got {alpha}")));
    }
    Ok(())
}

fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl BaselineModel {
    pub fn dim(&self) -> usize {
        match self {
            BaselineModel::LogisticRegression(net) | BaselineModel::Ann(net) => net.input_dim(),
            BaselineModel::KNearest { samples, .. } => samples.first().map_or(0, Vector::len),
            BaselineModel::NearestCentroid { centroids } => centroids[0].len(),
            BaselineModel::GaussianNb { classes }
            | BaselineModel::MultinomialNb { classes }
            | BaselineModel::BernoulliNb { classes, .. } => classes[0].params.len(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            BaselineModel::LogisticRegression(net) | BaselineModel::Ann(net) => net.n_classes(),
            BaselineModel::KNearest { n_classes, .. } => *n_classes,
            BaselineModel::NearestCentroid { centroids } => centroids.len(),
            BaselineModel::GaussianNb { classes }
            | BaselineModel::MultinomialNb { classes }
            | BaselineModel::BernoulliNb { classes, .. } => classes.len(),
        }
    }

    /// Per-class scores whose argmax is the prediction. Log-posteriors up to
    /// a constant for the Bayes models, negated distances for centroids,
    /// votes for KNN, probabilities for the nets.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape("predict_baseline", self.dim(), x.len()));
        }
        Ok(match self {
            BaselineModel::LogisticRegression(net) | BaselineModel::Ann(net) => net.predict(x)?.into_vec(),
            BaselineModel::KNearest {
                k,
                samples,
                labels,
                n_classes,
            } => {
                let neighbors = nearest_indices(samples, x, *k);
                let mut votes = vec![0.0; *n_classes];
                for i in neighbors {
                    votes[labels[i]] += 1.0;
                }
                votes
            }
            BaselineModel::NearestCentroid { centroids } => centroids.iter().map(|c| -squared_distance(c, x)).collect(),
            BaselineModel::GaussianNb { classes } => classes
                .iter()
                .map(|c| {
                    let mut s = c.log_prior;
                    for ((&v, &m), &var) in x.iter().zip(&c.params).zip(&c.extra) {
                        s -= 0.5 * (2.0 * std::f64::consts::PI * var).ln() + (v - m) * (v - m) / (2.0 * var);
                    }
                    s
                })
                .collect(),
            BaselineModel::MultinomialNb { classes } => classes
                .iter()
                .map(|c| c.log_prior + x.iter().zip(&c.params).map(|(v, lp)| v * lp).sum::<f64>())
                .collect(),
            BaselineModel::BernoulliNb {
                classes,
                binarize_threshold,
            } => classes
                .iter()
                .map(|c| {
                    c.log_prior
                        + x.iter()
                            .zip(&c.params)
                            .map(|(&v, &p)| {
                                if v > *binarize_threshold {
                                    p.ln()
                                } else {
                                    (1.0 - p).ln()
                                }
                            })
                            .sum::<f64>()
                })
                .collect(),
        })
    }

    /// Predicted class; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax_lowest(&self.scores(x)?))
    }

    pub fn evaluate(&self, data: &LabeledSet) -> Result<sda::Evaluation> {
        self.evaluate_with(data, Exec::default())
    }

    pub fn evaluate_with(&self, data: &LabeledSet, exec: Exec) -> Result<sda::Evaluation> {
        let predicted = exec
            .map(&data.samples, |x| self.predict(x))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        sda::Evaluation::from_predictions(&data.labels, &predicted, self.n_classes())
    }
}

/// Indices of the `k` stored samples closest to `x` in Euclidean distance;
/// equal distances prefer the lower stored index.
pub fn nearest_indices(samples: &[Vector], x: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(samples.len());
    // Sorted (distance, index) list of the best k seen so far.
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, s) in samples.iter().enumerate() {
        let d = squared_distance(s, x);
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, i));
        best.truncate(k);
    }
    best.into_iter().map(|(_, i)| i).collect()
}

pub fn predict_baseline(model: &BaselineModel, x: &[f64]) -> Result<usize> {
    model.predict(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub model: String,
    /// `None` when the model is not implemented or failed.
    pub valid_error_pct: Option<f64>,
    pub status: String,
}

/// Fits every spec on the train split and reports its validation error.
pub fn run_baseline_suite(data: &Dataset, specs: &[BaselineSpec]) -> Result<Vec<BaselineRow>> {
    run_baseline_suite_with(data, specs, Exec::default())
}

pub fn run_baseline_suite_with(data: &Dataset, specs: &[BaselineSpec], exec: Exec) -> Result<Vec<BaselineRow>> {
    let train = data.subset(SplitTag::Train);
    let valid = data.subset(SplitTag::Valid);
    if train.is_empty() || valid.is_empty() {
        return Err(Error::arg("the baseline suite needs train and valid splits"));
    }
    let rows = exec.map(specs, |spec| -> Result<BaselineRow> {
        if let BaselineSpec::Svm { .. } = spec {
            return Ok(BaselineRow {
                model: spec.name(),
                valid_error_pct: None,
                status: "not implemented".into(),
            });
        }
        let model = fit(spec, &train, &valid)?;
        // Models already run inside the parallel map; keep inner work serial.
        let eval = model.evaluate_with(&valid, Exec::Sequential)?;
        Ok(BaselineRow {
            model: spec.name(),
            valid_error_pct: Some(eval.error_pct()),
            status: "ok".into(),
        })
    });
    rows.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]], labels: &[usize], n_classes: usize) -> LabeledSet {
        LabeledSet::new(
            rows.iter().map(|r| Vector::new(r.to_vec()).unwrap()).collect(),
            labels.to_vec(),
            n_classes,
        )
        .unwrap()
    }

    #[test]
    fn nearest_centroid_one_point_per_class() {
        let train = set(&[&[0.2, 0.4], &[0.9, 0.1]], &[0, 1], 2);
        let BaselineModel::NearestCentroid { centroids } = fit(&BaselineSpec::NearestCentroid, &train, &train).unwrap()
        else {
            panic!()
        };
        assert_eq!(centroids[0].as_slice(), &[0.2, 0.4]);
        assert_eq!(centroids[1].as_slice(), &[0.9, 0.1]);

        let train = set(&[&[0.0], &[10.0]], &[0, 1], 2);
        let m = fit(&BaselineSpec::NearestCentroid, &train, &train).unwrap();
        assert_eq!(m.predict(&[1.0]).unwrap(), 0);
    }

    #[test]
    fn gaussian_nb_mean() {
        let mut train = set(&[&[0.0], &[2.0], &[5.0]], &[0, 0, 1], 2);
        let BaselineModel::GaussianNb { classes } = fit(&BaselineSpec::GaussianNb, &train, &train).unwrap() else {
            panic!()
        };
        assert_eq!(classes[0].params, vec![1.0]);
        assert_eq!(classes[0].extra, vec![1.0]);
        assert_eq!(classes[1].extra, vec![VARIANCE_FLOOR]);
        train.labels = vec![0, 0, 0];
        assert!(fit(&BaselineSpec::GaussianNb, &train, &train).is_err());
    }

    #[test]
    fn multinomial_laplace_smoothing() {
        let train = set(&[&[2.0, 0.0], &[1.0, 1.0]], &[0, 1], 2);
        let BaselineModel::MultinomialNb { classes } =
            fit(&BaselineSpec::MultinomialNb { alpha: 1.0 }, &train, &train).unwrap()
        else {
            panic!()
        };
        assert!((classes[0].params[0] - (0.75f64).ln()).abs() < 1e-15);
        assert!((classes[0].params[1] - (0.25f64).ln()).abs() < 1e-15);
        let total: f64 = classes.iter().map(|c| c.log_prior.exp()).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn knn_memorizes() {
        let train = set(&[&[0.1, 0.1], &[0.9, 0.8], &[0.5, 0.4]], &[0, 1, 2], 3);
        let m = fit(&BaselineSpec::KNearest { k: 1 }, &train, &train).unwrap();
        for (x, &l) in train.samples.iter().zip(&train.labels) {
            assert_eq!(m.predict(x).unwrap(), l);
        }
        assert!(m.predict(&[0.0]).is_err());
        assert!(fit(&BaselineSpec::KNearest { k: 0 }, &train, &train).is_err());
    }

    #[test]
    fn knn_ties() {
        // Two stored points equidistant from the query: the lower index wins.
        let samples = vec![Vector::new(vec![1.0]).unwrap(), Vector::new(vec![-1.0]).unwrap()];
        assert_eq!(nearest_indices(&samples, &[0.0], 1), vec![0]);
        // Vote tie between classes 1 and 0: lowest class wins.
        let train = set(&[&[1.0], &[-1.0]], &[1, 0], 2);
        let m = fit(&BaselineSpec::KNearest { k: 2 }, &train, &train).unwrap();
        assert_eq!(m.predict(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn svm_rows_are_placeholders() {
        let ds = Dataset::bars(40, 4, 0).unwrap().split((0.5, 0.25, 0.25), 0).unwrap();
        let rows = run_baseline_suite(&ds, &[BaselineSpec::Svm { kernel: "rbf".into() }]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].valid_error_pct, None);
        assert_eq!(rows[0].status, "not implemented");
    }
}
