//! Linear SVM trained by deterministic full-batch subgradient descent.
//!
//! Objective: J(w, b) = (λ/2)‖w‖² + (1/n)·Σ max(0, 1 − yᵢ(w·xᵢ + b)) with
//! λ = 1/(C·n), so `c` plays the usual cost role. The bias is unregularized.
//! Each epoch takes one subgradient step with base step size 1/(λ·t); the
//! step is halved until the objective does not increase, which makes the
//! objective non-increasing across epochs by construction and keeps the
//! whole procedure deterministic (no RNG is consumed).

use crate::corpus::{FeatureVector, Sample};

use super::SvmParams;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LinearModel {
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: f64,
}

impl LinearModel {
    pub(crate) fn score(&self, features: &FeatureVector) -> f64 {
        features.dot(&self.weights) + self.bias
    }
}

pub(crate) fn train(params: &SvmParams, train: &[&Sample], dimension: usize) -> (LinearModel, u32) {
    let (model, epochs, _) = descend(params, train, dimension, params.max_epochs, params.tolerance);
    (model, epochs)
}

/// Objective value after initialization and after each accepted epoch; used
/// to verify the monotone-descent property.
#[cfg(test)]
pub(crate) fn objective_trace(
    params: &SvmParams,
    train: &[&Sample],
    dimension: usize,
    epochs: u32,
) -> Vec<f64> {
    let (_, _, trace) = descend(params, train, dimension, epochs, f64::NEG_INFINITY);
    trace
}

fn descend(
    params: &SvmParams,
    train: &[&Sample],
    dimension: usize,
    max_epochs: u32,
    tolerance: f64,
) -> (LinearModel, u32, Vec<f64>) {
    let n = train.len() as f64;
    let lambda = 1.0 / (params.c * n);
    let labels: Vec<f64> = train
        .iter()
        .map(|s| if s.label.is_malware() { 1.0 } else { -1.0 })
        .collect();

    let mut weights = vec![0.0; dimension];
    let mut bias = 0.0;
    let mut current = objective(train, &labels, &weights, bias, lambda);
    let mut trace = vec![current];
    let mut epochs_run = 0;

    for epoch in 1..=max_epochs {
        let mut grad_w: Vec<f64> = weights.iter().map(|w| lambda * w).collect();
        let mut grad_b = 0.0;
        for (sample, &y) in train.iter().zip(&labels) {
            let margin = y * (sample.features.dot(&weights) + bias);
            if margin < 1.0 {
                for (index, value) in sample.features.iter() {
                    grad_w[index as usize] -= y * value / n;
                }
                grad_b -= y / n;
            }
        }

        let mut eta = 1.0 / (lambda * f64::from(epoch));
        let mut accepted = None;
        for _ in 0..60 {
            let trial_w: Vec<f64> = weights
                .iter()
                .zip(&grad_w)
                .map(|(w, g)| w - eta * g)
                .collect();
            let trial_b = bias - eta * grad_b;
            let trial = objective(train, &labels, &trial_w, trial_b, lambda);
            if trial <= current {
                accepted = Some((trial_w, trial_b, trial));
                break;
            }
            eta *= 0.5;
        }
        // No step along this subgradient improves the objective: a kink
        // (or the optimum) was reached; stop.
        let Some((new_w, new_b, new_j)) = accepted else {
            break;
        };
        let improvement = current - new_j;
        weights = new_w;
        bias = new_b;
        current = new_j;
        epochs_run = epoch;
        trace.push(current);
        if improvement <= tolerance * current.abs().max(1.0) {
            break;
        }
    }

    (LinearModel { weights, bias }, epochs_run, trace)
}

fn objective(train: &[&Sample], labels: &[f64], weights: &[f64], bias: f64, lambda: f64) -> f64 {
    let reg: f64 = 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>();
    let hinge: f64 = train
        .iter()
        .zip(labels)
        .map(|(sample, &y)| (1.0 - y * (sample.features.dot(weights) + bias)).max(0.0))
        .sum::<f64>()
        / train.len() as f64;
    reg + hinge
}
