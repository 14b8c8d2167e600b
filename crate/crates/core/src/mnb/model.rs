use serde::{Deserialize, Serialize};

use super::features::{vectorize, FeatureConfig, SparseVector, Vocabulary};
use super::MnbError;
use crate::corpus::{Label, Language};
use crate::scorer::{ScoreInput, Scorer, ScorerError, ScorerIdentity};
use crate::textprep;

/// Fitted class priors and per-class feature log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct NbParams {
    /// Index 0 is the negative class, index 1 the positive class.
    pub class_log_prior: [f64; 2],
    pub feature_log_likelihood: [Vec<f64>; 2],
}

/// Fits multinomial naive Bayes on (possibly fractional) feature weights.
///
/// `prior_c = ln(n_c / N)` and
/// `theta_ct = ln((sum_{i in c} x_it + alpha) / (sum_t sum_{i in c} x_it + alpha |V|))`.
pub fn train_mnb(x: &[SparseVector], y: &[Label], n_features: usize, alpha: f64) -> Result<NbParams, MnbError> {
    if x.len() != y.len() {
        return Err(MnbError::LengthMismatch { features: x.len(), labels: y.len() });
    }
    if x.len() < 2 {
        return Err(MnbError::TooFewExamples(x.len()));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(MnbError::InvalidConfig(format!("smoothing alpha must be positive, got {alpha}")));
    }
    let mut class_count = [0usize; 2];
    let mut feature_sum = [vec![0.0; n_features], vec![0.0; n_features]];
    for (row, label) in x.iter().zip(y) {
        let c = label.as_u8() as usize;
        class_count[c] += 1;
        for (i, v) in row.iter() {
            feature_sum[c][i] += v;
        }
    }
    if class_count.contains(&0) {
        return Err(MnbError::SingleClass);
    }
    let n = x.len() as f64;
    let class_log_prior = [(class_count[0] as f64 / n).ln(), (class_count[1] as f64 / n).ln()];
    let feature_log_likelihood = feature_sum.map(|sums| {
        let total: f64 = sums.iter().sum::<f64>() + alpha * n_features as f64;
        let log_total = total.ln();
        sums.iter().map(|s| (s + alpha).ln() - log_total).collect()
    });
    Ok(NbParams {
        class_log_prior,
        feature_log_likelihood,
    })
}

impl NbParams {
    /// Positive-class posterior, normalized with log-sum-exp.
    pub fn positive_posterior(&self, x: &SparseVector) -> f64 {
        let jll: [f64; 2] = std::array::from_fn(|c| {
            self.class_log_prior[c]
                + x.iter()
                    .map(|(i, v)| v * self.feature_log_likelihood[c][i])
                    .sum::<f64>()
        });
        let max = jll[0].max(jll[1]);
        let log_norm = max + ((jll[0] - max).exp() + (jll[1] - max).exp()).ln();
        (jll[1] - log_norm).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_id: String,
    pub probability: f64,
    pub label: Label,
}

impl Prediction {
    pub fn new(example_id: impl Into<String>, probability: f64) -> Self {
        Prediction {
            example_id: example_id.into(),
            probability,
            label: Label::from_bool(probability >= 0.5),
        }
    }
}

/// A trained tfidf + multinomial naive Bayes classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MnbModel {
    pub config: FeatureConfig,
    pub vocabulary: Vocabulary,
    pub params: NbParams,
    pub smoothing_alpha: f64,
    pub version: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    config: FeatureConfig,
    vocabulary: Vec<String>,
    idf: Vec<f64>,
    doc_count: usize,
    priors: [f64; 2],
    likelihoods: [Vec<f64>; 2],
    alpha: f64,
    version: String,
}

impl MnbModel {
    /// Fits the vocabulary and the classifier on FULL-profile token lists.
    pub fn fit(
        docs: &[Vec<String>],
        labels: &[Label],
        config: FeatureConfig,
        alpha: f64,
        version: impl Into<String>,
    ) -> Result<Self, MnbError> {
        if docs.len() != labels.len() {
            return Err(MnbError::LengthMismatch { features: docs.len(), labels: labels.len() });
        }
        let vocabulary = super::features::fit_vocabulary(docs, &config)?;
        let x: Vec<SparseVector> = docs.iter().map(|d| vectorize(d, &vocabulary, &config)).collect();
        let params = train_mnb(&x, labels, vocabulary.len(), alpha)?;
        Ok(MnbModel {
            config,
            vocabulary,
            params,
            smoothing_alpha: alpha,
            version: version.into(),
        })
    }

    pub fn predict_tokens(&self, tokens: &[String]) -> f64 {
        self.params
            .positive_posterior(&vectorize(tokens, &self.vocabulary, &self.config))
    }

    pub fn predict(&self, example_id: &str, tokens: &[String]) -> Prediction {
        Prediction::new(example_id, self.predict_tokens(tokens))
    }

    /// Preprocesses raw text with the FULL profile, then scores it.
    pub fn predict_text(&self, text: &str, language: &Language) -> f64 {
        self.predict_tokens(&textprep::full_tokens(text, language))
    }

    pub fn to_json(&self) -> Result<String, MnbError> {
        let file = ModelFile {
            config: self.config,
            vocabulary: self.vocabulary.terms().to_vec(),
            idf: self.vocabulary.idf().to_vec(),
            doc_count: self.vocabulary.doc_count(),
            priors: self.params.class_log_prior,
            likelihoods: self.params.feature_log_likelihood.clone(),
            alpha: self.smoothing_alpha,
            version: self.version.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(json: &str) -> Result<Self, MnbError> {
        let file: ModelFile = serde_json::from_str(json)?;
        file.config.validate()?;
        let vocabulary = Vocabulary::from_parts(file.vocabulary, file.idf, file.doc_count)?;
        if file.likelihoods.iter().any(|row| row.len() != vocabulary.len()) {
            return Err(MnbError::InvalidModel("likelihood rows must match the vocabulary".into()));
        }
        Ok(MnbModel {
            config: file.config,
            vocabulary,
            params: NbParams {
                class_log_prior: file.priors,
                feature_log_likelihood: file.likelihoods,
            },
            smoothing_alpha: file.alpha,
            version: file.version,
        })
    }
}

impl Scorer for MnbModel {
    fn identity(&self) -> ScorerIdentity {
        ScorerIdentity {
            name: "mnb".into(),
            version: self.version.clone(),
        }
    }

    fn score(&self, batch: &[ScoreInput]) -> Result<Vec<f64>, ScorerError> {
        Ok(batch
            .iter()
            .map(|item| self.predict_text(&item.text, &item.language))
            .collect())
    }
}
