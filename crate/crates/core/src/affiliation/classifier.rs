// SPDX-License-Identifier: Apache-2.0

//! Multinomial logistic regression trained by full-batch gradient descent.

use super::{AffiliationError, Result};
use serde::{Deserialize, Serialize};

pub const MODEL_VERSION: u32 = 1;

/// One-hot community, then embeddedness per party, then a constant 1.
pub fn featurize(community: usize, n_communities: usize, embeddedness: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n_communities + embeddedness.len() + 1];
    x[community] = 1.0;
    x[n_communities..n_communities + embeddedness.len()].copy_from_slice(embeddedness);
    x[n_communities + embeddedness.len()] = 1.0;
    x
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    /// Step size; `None` picks one below the inverse smoothness bound of
    /// the loss, which makes every step a descent step.
    pub learning_rate: Option<f64>,
    pub l2: f64,
    pub epochs: usize,
    /// Stop once an epoch improves the loss by less than this.
    pub tolerance: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: None,
            l2: 1e-3,
            epochs: 2000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffiliationModel {
    pub version: u32,
    pub parties: Vec<String>,
    pub features: Vec<String>,
    /// `weights[party][feature]`.
    pub weights: Vec<Vec<f64>>,
    pub params: TrainParams,
    pub learning_rate: f64,
    pub iterations: usize,
    pub final_loss: f64,
    pub loss_history: Vec<f64>,
}

impl AffiliationModel {
    /// Untrained model with all weights zero.
    pub fn zeros(parties: Vec<String>, features: Vec<String>) -> Self {
        let weights = vec![vec![0.0; features.len()]; parties.len()];
        AffiliationModel {
            version: MODEL_VERSION,
            parties,
            features,
            weights,
            params: TrainParams::default(),
            learning_rate: 0.0,
            iterations: 0,
            final_loss: f64::NAN,
            loss_history: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: AffiliationModel =
            serde_json::from_str(s).map_err(|e| AffiliationError::Model(e.to_string()))?;
        if m.version != MODEL_VERSION {
            return Err(AffiliationError::Model(format!(
                "version {}, expected {MODEL_VERSION}",
                m.version
            )));
        }
        if m.weights.len() != m.parties.len()
            || m.weights.iter().any(|w| w.len() != m.features.len())
        {
            return Err(AffiliationError::Model(
                "weight shape does not match names".into(),
            ));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub party: usize,
    pub confidence: f64,
    pub probabilities: Vec<f64>,
}

fn softmax_into(weights: &[Vec<f64>], x: &[f64], out: &mut [f64]) {
    for (o, w) in out.iter_mut().zip(weights) {
        *o = w.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

pub fn predict(model: &AffiliationModel, x: &[f64]) -> Result<Prediction> {
    if x.len() != model.features.len() {
        return Err(AffiliationError::Dimension {
            expected: model.features.len(),
            got: x.len(),
        });
    }
    let mut probabilities = vec![0.0; model.parties.len()];
    softmax_into(&model.weights, x, &mut probabilities);
    let mut party = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p > probabilities[party] {
            party = i;
        }
    }
    Ok(Prediction {
        party,
        confidence: probabilities[party],
        probabilities,
    })
}

/// Mean cross-entropy plus `l2 / 2` times the squared weight norm.
pub fn loss(weights: &[Vec<f64>], xs: &[Vec<f64>], ys: &[usize], l2: f64) -> f64 {
    let mut probs = vec![0.0; weights.len()];
    let mut ce = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        softmax_into(weights, x, &mut probs);
        ce -= probs[y].max(f64::MIN_POSITIVE).ln();
    }
    let norm: f64 = weights.iter().flatten().map(|w| w * w).sum();
    ce / xs.len() as f64 + 0.5 * l2 * norm
}

/// Analytic gradient of [`loss`].
pub fn gradient(weights: &[Vec<f64>], xs: &[Vec<f64>], ys: &[usize], l2: f64) -> Vec<Vec<f64>> {
    let k = weights.len();
    let d = weights.first().map_or(0, Vec::len);
    let mut g = vec![vec![0.0; d]; k];
    let mut probs = vec![0.0; k];
    for (x, &y) in xs.iter().zip(ys) {
        softmax_into(weights, x, &mut probs);
        for c in 0..k {
            let r = probs[c] - if c == y { 1.0 } else { 0.0 };
            for (gj, xj) in g[c].iter_mut().zip(x) {
                *gj += r * xj;
            }
        }
    }
    let n = xs.len() as f64;
    for (gc, wc) in g.iter_mut().zip(weights) {
        for (gj, wj) in gc.iter_mut().zip(wc) {
            *gj = *gj / n + l2 * wj;
        }
    }
    g
}

pub fn train(
    xs: &[Vec<f64>],
    ys: &[usize],
    parties: Vec<String>,
    features: Vec<String>,
    params: &TrainParams,
) -> Result<AffiliationModel> {
    let d = features.len();
    let k = parties.len();
    for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
        if x.len() != d {
            return Err(AffiliationError::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        if y >= k || x.iter().any(|v| !v.is_finite()) {
            return Err(AffiliationError::BadSample(i));
        }
    }
    let mut classes: Vec<usize> = ys.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 || xs.len() != ys.len() {
        return Err(AffiliationError::SingleClass);
    }
    // the softmax cross-entropy Hessian is bounded by max ||x||^2 / 2
    let smooth = 0.5
        * xs.iter()
            .map(|x| x.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max)
        + params.l2;
    let lr = params.learning_rate.unwrap_or(1.0 / smooth);

    let mut model = AffiliationModel::zeros(parties, features);
    model.params = params.clone();
    model.learning_rate = lr;
    let mut current = loss(&model.weights, xs, ys, params.l2);
    model.loss_history.push(current);
    for epoch in 1..=params.epochs {
        let g = gradient(&model.weights, xs, ys, params.l2);
        for (wc, gc) in model.weights.iter_mut().zip(&g) {
            for (w, gj) in wc.iter_mut().zip(gc) {
                *w -= lr * gj;
            }
        }
        let next = loss(&model.weights, xs, ys, params.l2);
        model.loss_history.push(next);
        model.iterations = epoch;
        if !next.is_finite() || next > current + 1e-12 * current.abs().max(1.0) {
            return Err(AffiliationError::Diverged {
                epoch,
                before: current,
                after: next,
            });
        }
        let improved = current - next;
        current = next;
        if improved < params.tolerance {
            break;
        }
    }
    model.final_loss = current;
    Ok(model)
}
