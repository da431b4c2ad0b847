//! Trust weights from output similarity.
//!
//! Each worker's candidate model is evaluated on the trial inputs and its
//! outputs are compared with those of the server's own candidate. Weights are
//! a momentum blend of the previous weights and the normalized similarities.

use serde::{Deserialize, Serialize};

use super::{check_beta, TrustWeights};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    /// Mean of `1 - |a - b|` over outputs that are probabilities.
    AbsDiff,
    /// Cosine of the temperature-softmaxed class distributions, shifted to
    /// `[0, 1]` by `(1 + cos) / 2`. Each output entry is a binary logit.
    Cosine,
}

impl SimilarityKind {
    pub fn name(self) -> &'static str {
        match self {
            SimilarityKind::AbsDiff => "abs-diff",
            SimilarityKind::Cosine => "cosine",
        }
    }
}

fn softmax_pairs(logits: &[f64], temperature: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * logits.len());
    for z in logits {
        // Two-class softmax over (z, 0) at temperature T.
        let a = z / temperature;
        let m = a.max(0.0);
        let ea = (a - m).exp();
        let eb = (-m).exp();
        out.push(ea / (ea + eb));
        out.push(eb / (ea + eb));
    }
    out
}

/// Similarity of two output vectors, in `[0, 1]`.
pub fn similarity(kind: SimilarityKind, a: &[f64], b: &[f64], temperature: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: a.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("model outputs"));
    }
    match kind {
        SimilarityKind::AbsDiff => {
            let s: f64 = a.iter().zip(b).map(|(x, y)| 1.0 - (x - y).abs()).sum();
            Ok((s / a.len() as f64).clamp(0.0, 1.0))
        }
        SimilarityKind::Cosine => {
            if !(temperature > 0.0) {
                return Err(Error::invalid("temperature", "must be positive"));
            }
            let pa = softmax_pairs(a, temperature);
            let pb = softmax_pairs(b, temperature);
            let dot: f64 = pa.iter().zip(&pb).map(|(x, y)| x * y).sum();
            let na: f64 = pa.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = pb.iter().map(|x| x * x).sum::<f64>().sqrt();
            let cos = if na > 0.0 && nb > 0.0 {
                (dot / (na * nb)).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            Ok(0.5 * (1.0 + cos))
        }
    }
}

/// Momentum update from similarities to the server output. A zero similarity
/// sum falls back to a uniform fresh term.
pub fn simbant_weights(
    prev: &TrustWeights,
    candidate_outputs: &[Vec<f64>],
    server_output: &[f64],
    kind: SimilarityKind,
    temperature: f64,
    beta: f64,
) -> Result<TrustWeights> {
    check_beta(beta)?;
    if prev.len() != candidate_outputs.len() {
        return Err(Error::DimensionMismatch {
            expected: prev.len(),
            got: candidate_outputs.len(),
        });
    }
    let sims = candidate_outputs
        .iter()
        .map(|o| similarity(kind, o, server_output, temperature))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = sims.iter().sum();
    let n = sims.len() as f64;
    let weights = prev
        .as_slice()
        .iter()
        .zip(&sims)
        .map(|(p, s)| {
            let fresh = if total > 0.0 { s / total } else { 1.0 / n };
            (1.0 - beta) * p + beta * fresh
        })
        .collect();
    TrustWeights::new(weights, prev.active().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abs_diff_hand_example() {
        let prev = TrustWeights::uniform_over(2);
        let w = simbant_weights(&prev, &[vec![1.0], vec![0.0]], &[1.0], SimilarityKind::AbsDiff, 0.05, 1.0)
            .unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn equal_outputs_give_uniform_fresh_term() {
        let prev = TrustWeights::from_weights(vec![0.7, 0.2, 0.1]).unwrap();
        let out = vec![0.3, -1.0];
        let cands = vec![out.clone(), out.clone(), out.clone()];
        for kind in [SimilarityKind::AbsDiff, SimilarityKind::Cosine] {
            let w = simbant_weights(&prev, &cands, &out, kind, 0.05, 0.5).unwrap();
            for (wi, pi) in w.as_slice().iter().zip(prev.as_slice()) {
                assert!((wi - (0.5 * pi + 0.5 / 3.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cosine_of_identical_is_max() {
        let v = [0.5, -2.0, 1.0];
        assert_eq!(similarity(SimilarityKind::Cosine, &v, &v, 0.05).unwrap(), 1.0);
        let other = [-0.5, 2.0, -1.0];
        assert!(similarity(SimilarityKind::Cosine, &other, &v, 0.05).unwrap() < 1.0);
    }

    #[test]
    fn zero_similarity_falls_back() {
        let prev = TrustWeights::uniform_over(2);
        let w = simbant_weights(&prev, &[vec![0.0], vec![0.0]], &[1.0], SimilarityKind::AbsDiff, 1.0, 1.0)
            .unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
    }
}
