//! Two-hidden-layer MLP trained by mini-batch SGD with inverted dropout.
//!
//! Architecture: input → `hidden` ReLU → dropout → `hidden` ReLU → dropout →
//! 2-way softmax, cross-entropy loss. Weights initialize uniformly in
//! ±1/√fan_in from a seeded generator; the per-epoch shuffle and the dropout
//! masks draw from the same stream, so a seed fully determines training.
//! Dropout is inverted (activations scaled by 1/(1−p) while training), so
//! inference needs no rescaling and runs with dropout disabled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{FeatureVector, Sample};

use super::{LearnerError, MlpParams};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct MlpModel {
    pub(crate) dimension: usize,
    pub(crate) hidden: usize,
    /// dimension × hidden, row-major by input index.
    pub(crate) w1: Vec<f64>,
    pub(crate) b1: Vec<f64>,
    /// hidden × hidden, row-major by source unit.
    pub(crate) w2: Vec<f64>,
    pub(crate) b2: Vec<f64>,
    /// hidden × 2 (goodware logit, malware logit).
    pub(crate) w3: Vec<f64>,
    pub(crate) b3: Vec<f64>,
}

/// Gradients with the same shapes as the model parameters.
#[derive(Debug, Clone)]
pub(crate) struct Gradients {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    w3: Vec<f64>,
    b3: Vec<f64>,
}

impl Gradients {
    fn zeros(model: &MlpModel) -> Self {
        Self {
            w1: vec![0.0; model.w1.len()],
            b1: vec![0.0; model.b1.len()],
            w2: vec![0.0; model.w2.len()],
            b2: vec![0.0; model.b2.len()],
            w3: vec![0.0; model.w3.len()],
            b3: vec![0.0; model.b3.len()],
        }
    }

    fn scale(&mut self, factor: f64) {
        for slice in [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ] {
            for g in slice.iter_mut() {
                *g *= factor;
            }
        }
    }
}

impl MlpModel {
    fn init(params: &MlpParams, rng: &mut ChaCha8Rng, dimension: usize) -> Self {
        let hidden = params.hidden;
        let draw = |rng: &mut ChaCha8Rng, count: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..count).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        Self {
            dimension,
            hidden,
            w1: draw(rng, dimension * hidden, dimension),
            b1: vec![0.0; hidden],
            w2: draw(rng, hidden * hidden, hidden),
            b2: vec![0.0; hidden],
            w3: draw(rng, hidden * 2, hidden),
            b3: vec![0.0; 2],
        }
    }

    /// Inference: `(score, prob_malware)` with dropout disabled. The score
    /// is the malware logit minus the goodware logit, so positive means
    /// malware and the softmax probability equals σ(score).
    pub(crate) fn score(&self, features: &FeatureVector) -> (f64, f64) {
        let trace = self.forward(features, None, None);
        let score = trace.logits[1] - trace.logits[0];
        (score, logistic(score))
    }

    fn forward(&self, features: &FeatureVector, mask1: Option<&[f64]>, mask2: Option<&[f64]>) -> Forward {
        let h = self.hidden;
        let mut z1 = self.b1.clone();
        for (index, value) in features.iter() {
            let row = &self.w1[index as usize * h..(index as usize + 1) * h];
            for (zj, wj) in z1.iter_mut().zip(row) {
                *zj += value * wj;
            }
        }
        let mut a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
        if let Some(mask) = mask1 {
            for (a, m) in a1.iter_mut().zip(mask) {
                *a *= m;
            }
        }

        let mut z2 = self.b2.clone();
        for (i, &a) in a1.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &self.w2[i * h..(i + 1) * h];
            for (zj, wj) in z2.iter_mut().zip(row) {
                *zj += a * wj;
            }
        }
        let mut a2: Vec<f64> = z2.iter().map(|&z| z.max(0.0)).collect();
        if let Some(mask) = mask2 {
            for (a, m) in a2.iter_mut().zip(mask) {
                *a *= m;
            }
        }

        let mut logits = self.b3.clone();
        for (i, &a) in a2.iter().enumerate() {
            logits[0] += a * self.w3[i * 2];
            logits[1] += a * self.w3[i * 2 + 1];
        }
        Forward { z1, a1, z2, a2, logits }
    }

    /// Accumulates the cross-entropy gradient of one sample into `grads`
    /// and returns the sample's loss.
    fn backward(
        &self,
        features: &FeatureVector,
        is_malware: bool,
        mask1: Option<&[f64]>,
        mask2: Option<&[f64]>,
        grads: &mut Gradients,
    ) -> f64 {
        let h = self.hidden;
        let trace = self.forward(features, mask1, mask2);
        let probs = softmax2(&trace.logits);
        let target = usize::from(is_malware);
        let loss = -probs[target].max(f64::MIN_POSITIVE).ln();

        let mut dlogits = probs;
        dlogits[target] -= 1.0;

        for (i, &a) in trace.a2.iter().enumerate() {
            grads.w3[i * 2] += a * dlogits[0];
            grads.w3[i * 2 + 1] += a * dlogits[1];
        }
        grads.b3[0] += dlogits[0];
        grads.b3[1] += dlogits[1];

        let mut dz2 = vec![0.0; h];
        for (j, dz) in dz2.iter_mut().enumerate() {
            let da2 = self.w3[j * 2] * dlogits[0] + self.w3[j * 2 + 1] * dlogits[1];
            let masked = match mask2 {
                Some(mask) => da2 * mask[j],
                None => da2,
            };
            *dz = if trace.z2[j] > 0.0 { masked } else { 0.0 };
        }
        for (i, &a) in trace.a1.iter().enumerate() {
            if a != 0.0 {
                let row = &mut grads.w2[i * h..(i + 1) * h];
                for (g, &dz) in row.iter_mut().zip(&dz2) {
                    *g += a * dz;
                }
            }
        }
        for (g, &dz) in grads.b2.iter_mut().zip(&dz2) {
            *g += dz;
        }

        let mut dz1 = vec![0.0; h];
        for (i, dz) in dz1.iter_mut().enumerate() {
            let mut da1 = 0.0;
            let row = &self.w2[i * h..(i + 1) * h];
            for (wj, &dzj) in row.iter().zip(&dz2) {
                da1 += wj * dzj;
            }
            let masked = match mask1 {
                Some(mask) => da1 * mask[i],
                None => da1,
            };
            *dz = if trace.z1[i] > 0.0 { masked } else { 0.0 };
        }
        for (index, value) in features.iter() {
            let row = &mut grads.w1[index as usize * h..(index as usize + 1) * h];
            for (g, &dz) in row.iter_mut().zip(&dz1) {
                *g += value * dz;
            }
        }
        for (g, &dz) in grads.b1.iter_mut().zip(&dz1) {
            *g += dz;
        }

        loss
    }

    fn parameters_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }
}

struct Forward {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    logits: Vec<f64>,
}

fn softmax2(logits: &[f64]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let sum = e0 + e1;
    [e0 / sum, e1 / sum]
}

fn logistic(score: f64) -> f64 {
    1.0 / (1.0 + (-score).exp())
}

pub(crate) fn train(
    params: &MlpParams,
    seed: u64,
    train: &[&Sample],
    dimension: usize,
) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MlpModel::init(params, &mut rng, dimension);
    let keep = 1.0 - params.dropout;
    let scale = 1.0 / keep;
    let h = params.hidden;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut mask1 = vec![0.0; h];
    let mut mask2 = vec![0.0; h];

    for _epoch in 0..params.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for batch in order.chunks(params.batch_size) {
            let mut grads = Gradients::zeros(&model);
            for &i in batch {
                let sample = train[i];
                for m in mask1.iter_mut().chain(mask2.iter_mut()) {
                    *m = if rng.gen_bool(keep) { scale } else { 0.0 };
                }
                model.backward(
                    &sample.features,
                    sample.label.is_malware(),
                    Some(&mask1),
                    Some(&mask2),
                    &mut grads,
                );
            }
            grads.scale(1.0 / batch.len() as f64);
            let lr = params.learning_rate;
            for (param, grad) in model
                .parameters_mut()
                .into_iter()
                .zip([&grads.w1, &grads.b1, &grads.w2, &grads.b2, &grads.w3, &grads.b3])
            {
                for (p, &g) in param.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
        }
    }
    model
}

/// Mean cross-entropy loss and its analytic gradient over a batch, dropout
/// disabled. Used for training-free diagnostics such as the gradient check.
fn loss_and_gradient(model: &MlpModel, batch: &[(&FeatureVector, bool)]) -> (f64, Gradients) {
    let mut grads = Gradients::zeros(model);
    let mut loss = 0.0;
    for &(features, is_malware) in batch {
        loss += model.backward(features, is_malware, None, None, &mut grads);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    (loss / n, grads)
}

fn loss_only(model: &MlpModel, batch: &[(&FeatureVector, bool)]) -> f64 {
    let mut total = 0.0;
    for &(features, is_malware) in batch {
        let trace = model.forward(features, None, None);
        let probs = softmax2(&trace.logits);
        total += -probs[usize::from(is_malware)].max(f64::MIN_POSITIVE).ln();
    }
    total / batch.len() as f64
}

/// Outcome of [`mlp_gradient_check`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MlpGradCheckReport {
    /// Total number of scalar parameters compared.
    pub parameters_checked: usize,
    /// Worst relative disagreement between analytic and central-difference
    /// gradients.
    pub max_relative_error: f64,
    /// Batch loss at the checked point.
    pub loss: f64,
}

/// Compares the analytic gradient of a freshly initialized MLP against
/// central finite differences over every parameter, on the given batch with
/// dropout disabled. Returns the worst relative error; anything above ~1e-6
/// would indicate a backpropagation bug.
pub fn mlp_gradient_check(
    params: &MlpParams,
    seed: u64,
    batch: &[&Sample],
    epsilon: f64,
) -> Result<MlpGradCheckReport, LearnerError> {
    if batch.is_empty() {
        return Err(LearnerError::EmptyTrain);
    }
    let mut labeled = Vec::with_capacity(batch.len());
    let mut dimension = 0usize;
    for sample in batch {
        let is_malware = match sample.label.as_binary() {
            Some(flag) => flag,
            None => return Err(LearnerError::GraywareUnsupported),
        };
        if let Some(index) = sample.features.max_index() {
            dimension = dimension.max(index as usize + 1);
        }
        labeled.push((&sample.features, is_malware));
    }
    if dimension == 0 {
        return Err(LearnerError::ZeroDimension);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MlpModel::init(params, &mut rng, dimension);
    let (loss, analytic) = loss_and_gradient(&model, &labeled);

    let analytic_slices = [
        analytic.w1.clone(),
        analytic.b1.clone(),
        analytic.w2.clone(),
        analytic.b2.clone(),
        analytic.w3.clone(),
        analytic.b3.clone(),
    ];
    let mut parameters_checked = 0usize;
    let mut max_relative_error = 0.0f64;
    for (slot, reference) in (0..6).zip(&analytic_slices) {
        for (index, &analytic_value) in reference.iter().enumerate() {
            let original = model.parameters_mut()[slot][index];
            model.parameters_mut()[slot][index] = original + epsilon;
            let plus = loss_only(&model, &labeled);
            model.parameters_mut()[slot][index] = original - epsilon;
            let minus = loss_only(&model, &labeled);
            model.parameters_mut()[slot][index] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic_value;
            let relative = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            max_relative_error = max_relative_error.max(relative);
            parameters_checked += 1;
        }
    }

    Ok(MlpGradCheckReport {
        parameters_checked,
        max_relative_error,
        loss,
    })
}
