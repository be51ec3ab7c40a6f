//! Embedding vectors and contrastive zero-shot classification.
//!
//! Image and text embeddings come from an external encoder. Classification
//! ranks candidate text embeddings by cosine similarity to the image
//! embedding, scales the similarities by `logit_scale` and applies a softmax.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::catalog::ClassId;
use crate::error::{Error, Result};

/// Fixed-dimension vector of finite reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyEmbedding);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    /// Component-wise sum. Fails on dimension mismatch.
    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn euclidean_distance(&self, other: &Self) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(euclidean(&self.values, &other.values))
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Inverse temperature applied to cosine similarities before the softmax.
    pub logit_scale: f64,
}

impl ClassifierConfig {
    pub fn new(logit_scale: f64) -> Result<Self> {
        let cfg = Self { logit_scale };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.logit_scale.is_finite() && self.logit_scale > 0.0) {
            return Err(Error::InvalidLogitScale(self.logit_scale));
        }
        Ok(())
    }
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { logit_scale: 100.0 }
    }
}

/// One classification outcome, the unit aggregated into frequency histograms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub frame_id: String,
    pub ground_truth: ClassId,
    pub predicted: ClassId,
    /// Softmax probability of the predicted class.
    pub confidence: f64,
    pub perturbation_tag: String,
}

/// Result of scoring one image against a candidate set.
#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub predicted: ClassId,
    /// Probability of `predicted`.
    pub confidence: f64,
    /// `(class, probability)` in candidate order.
    pub probabilities: Vec<(ClassId, f64)>,
    /// `(class, cosine similarity)` in candidate order, before scaling.
    pub similarities: Vec<(ClassId, f64)>,
}

impl Classification {
    pub fn probability(&self, class: ClassId) -> Option<f64> {
        self.probabilities
            .iter()
            .find(|(c, _)| *c == class)
            .map(|(_, p)| *p)
    }
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a.as_slice(), b.as_slice()) / (na * nb)).clamp(-1.0, 1.0))
}

/// Zero-shot classification of `image` against candidate text embeddings.
///
/// Ties in probability go to the lowest class index.
pub fn zero_shot_classify(
    image: &EmbeddingVector,
    texts: &[(ClassId, EmbeddingVector)],
    cfg: &ClassifierConfig,
) -> Result<Classification> {
    check_candidates(texts)?;
    let similarities = texts
        .iter()
        .map(|(c, t)| Ok((*c, cosine_similarity(image, t)?)))
        .collect::<Result<Vec<_>>>()?;
    softmax_classification(similarities, cfg)
}

pub(crate) fn check_candidates(texts: &[(ClassId, EmbeddingVector)]) -> Result<()> {
    if texts.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut seen = HashSet::with_capacity(texts.len());
    for (c, _) in texts {
        if !seen.insert(*c) {
            return Err(Error::DuplicateCandidate(*c));
        }
    }
    Ok(())
}

pub(crate) fn softmax_classification(
    similarities: Vec<(ClassId, f64)>,
    cfg: &ClassifierConfig,
) -> Result<Classification> {
    cfg.validate()?;
    let logits: Vec<f64> = similarities
        .iter()
        .map(|(_, s)| cfg.logit_scale * s)
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let probabilities: Vec<(ClassId, f64)> = similarities
        .iter()
        .zip(&exps)
        .map(|((c, _), e)| (*c, e / total))
        .collect();

    let (predicted, confidence) = probabilities
        .iter()
        .copied()
        .reduce(|best, cur| {
            if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                cur
            } else {
                best
            }
        })
        .ok_or(Error::EmptyCandidates)?;

    Ok(Classification {
        predicted,
        confidence,
        probabilities,
        similarities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(),
            1.0
        );
        assert_eq!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(),
            0.0
        );
        // 1 / sqrt(2)
        assert_abs_diff_eq!(
            cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap(),
            0.707_106_781_186_547_5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 3
            })
        ));
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(matches!(
            EmbeddingVector::new(vec![]),
            Err(Error::EmptyEmbedding)
        ));
        assert!(matches!(
            EmbeddingVector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
        assert!(EmbeddingVector::new(vec![f64::INFINITY]).is_err());
        assert!(serde_json::from_str::<EmbeddingVector>("[]").is_err());
    }

    #[test]
    fn singleton_candidate() {
        let out = zero_shot_classify(
            &v(&[0.3, -0.2]),
            &[(ClassId(5), v(&[1.0, 1.0]))],
            &ClassifierConfig::default(),
        )
        .unwrap();
        assert_eq!(out.predicted, ClassId(5));
        assert_eq!(out.probabilities, vec![(ClassId(5), 1.0)]);
        assert_eq!(out.confidence, 1.0);
    }

    #[test]
    fn two_candidate_softmax() {
        let out = zero_shot_classify(
            &v(&[1.0, 0.0]),
            &[(ClassId(1), v(&[1.0, 0.0])), (ClassId(2), v(&[0.0, 1.0]))],
            &ClassifierConfig::new(1.0).unwrap(),
        )
        .unwrap();
        // softmax(1, 0) = (e / (e + 1), 1 / (e + 1))
        assert_eq!(out.predicted, ClassId(1));
        assert_abs_diff_eq!(out.probability(ClassId(1)).unwrap(), 0.7311, epsilon = 1e-4);
        assert_abs_diff_eq!(out.probability(ClassId(2)).unwrap(), 0.2689, epsilon = 1e-4);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let t = v(&[0.5, 0.5]);
        let out = zero_shot_classify(
            &v(&[1.0, 0.0]),
            &[(ClassId(9), t.clone()), (ClassId(4), t)],
            &ClassifierConfig::default(),
        )
        .unwrap();
        assert_eq!(out.predicted, ClassId(4));
        assert_eq!(out.probability(ClassId(4)), Some(0.5));
        assert_eq!(out.probability(ClassId(9)), Some(0.5));
    }

    #[test]
    fn candidate_errors() {
        let cfg = ClassifierConfig::default();
        assert!(matches!(
            zero_shot_classify(&v(&[1.0]), &[], &cfg),
            Err(Error::EmptyCandidates)
        ));
        assert!(matches!(
            zero_shot_classify(&v(&[1.0, 0.0]), &[(ClassId(1), v(&[1.0]))], &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            zero_shot_classify(
                &v(&[1.0]),
                &[(ClassId(1), v(&[1.0])), (ClassId(1), v(&[2.0]))],
                &cfg
            ),
            Err(Error::DuplicateCandidate(ClassId(1)))
        ));
        assert!(ClassifierConfig::new(0.0).is_err());
        assert!(ClassifierConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn large_logit_scale_does_not_overflow() {
        let out = zero_shot_classify(
            &v(&[1.0, 0.0]),
            &[(ClassId(1), v(&[1.0, 0.0])), (ClassId(2), v(&[-1.0, 0.0]))],
            &ClassifierConfig::new(1e6).unwrap(),
        )
        .unwrap();
        assert_eq!(out.confidence, 1.0);
        assert_eq!(out.probability(ClassId(2)), Some(0.0));
    }
}
