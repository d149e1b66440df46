//! Supervised training of a fixed circuit layout.
//!
//! Gradients use adjoint differentiation: one forward evolution, then a
//! single backward sweep that un-applies each gate from both the state and
//! the loss-weighted co-state. Shared parameters accumulate contributions
//! from every gate instance that reads them.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{mask_and_normalize, predict, Op, VqcnnLayout};
use crate::error::{Error, Result};
use crate::qsim::{outcome_index, Mat2, StateVector};

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub rng_seed: u64,
    /// Half-width of central finite differences, for gradient checks.
    pub gradient_step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 25,
            iterations: 200,
            rng_seed: 0,
            gradient_step: 1e-5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(
                "learning_rate must be a nonnegative number".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.gradient_step > 0.0) {
            return Err(Error::Config("gradient_step must be positive".into()));
        }
        Ok(())
    }
}

/// Loss recorded before each update, plus the final training accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub losses: Vec<f64>,
    pub final_accuracy: f64,
}

impl TrainHistory {
    /// Two-column `iteration,loss` table.
    pub fn to_table(&self) -> String {
        let mut out = String::from("iteration,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{:.17e}\n", i + 1, l));
        }
        out
    }
}

/// An encoded input with its class.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub state: StateVector,
    pub label: usize,
}

/// `−log(max(p[label], floor))`.
pub fn cross_entropy_loss(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or(Error::LabelOutOfRange {
        label,
        classes: probs.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Loss and `∂loss/∂probs` for a cross-entropy target.
pub(crate) fn cross_entropy_with_grad(probs: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let loss = cross_entropy_loss(probs, label)?;
    let mut g = vec![0.0; probs.len()];
    if probs[label] > PROB_FLOOR {
        g[label] = -1.0 / probs[label];
    }
    Ok((loss, g))
}

/// Loss for one sample and its gradient with respect to θ.
///
/// `objective` maps the masked class distribution to `(loss, ∂loss/∂q)`.
pub fn sample_gradient<F>(
    layout: &VqcnnLayout,
    theta: &[f64],
    input: &StateVector,
    objective: F,
) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut psi = layout.evolve(theta, input)?;
    let measured = layout.measured_qubits();
    let raw = psi.marginal_probabilities(measured)?;
    let classes = layout.class_count();
    let q = mask_and_normalize(&raw, classes)?;
    let (loss, dq) = objective(&q)?;

    // Through renormalization q_c = P_c / S: ∂l/∂P_c = (g_c − Σ_j g_j q_j) / S.
    let total: f64 = raw[..classes].iter().sum();
    let mean: f64 = dq.iter().zip(&q).map(|(g, p)| g * p).sum();
    let mut weights = vec![0.0; raw.len()];
    for c in 0..classes {
        weights[c] = (dq[c] - mean) / total;
    }

    let n = psi.num_qubits();
    let masks: Vec<usize> = measured.iter().map(|&m| 1 << (n - 1 - m)).collect();
    let mut costate = psi.clone();
    for (b, a) in costate.amplitudes_mut().iter_mut().enumerate() {
        *a *= weights[outcome_index(b, &masks)];
    }

    let mut grad = vec![0.0; theta.len()];
    for op in layout.ops().iter().rev() {
        unapply(&mut psi, op, theta);
        if let Some(p) = op.param {
            let d = op.kind.derivative(theta[p]).expect("parameterized gate");
            let mut tangent = psi.clone();
            apply_raw(&mut tangent, op, &d, true);
            grad[p] += 2.0 * costate.inner(&tangent).re;
        }
        unapply(&mut costate, op, theta);
    }
    Ok((loss, grad))
}

fn dagger(m: &Mat2) -> Mat2 {
    [
        [m[0][0].conj(), m[1][0].conj()],
        [m[0][1].conj(), m[1][1].conj()],
    ]
}

fn unapply(state: &mut StateVector, op: &Op, theta: &[f64]) {
    let angle = op.param.map_or(0.0, |p| theta[p]);
    let inv = dagger(op.kind.unitary(angle).matrix());
    apply_raw(state, op, &inv, false);
}

fn apply_raw(state: &mut StateVector, op: &Op, m: &Mat2, derivative: bool) {
    match op.control {
        Some(c) => {
            if derivative {
                state.project_control(c);
            }
            state.apply_controlled_matrix(c, op.target, m);
        }
        None => state.apply_matrix(m, op.target),
    }
}

/// Mean loss and gradient over `batch`, reduced in batch order.
pub fn batch_gradient<F>(
    layout: &VqcnnLayout,
    theta: &[f64],
    batch: &[usize],
    samples: &[Sample],
    objective: F,
) -> Result<(f64, Vec<f64>)>
where
    F: Fn(usize, &[f64]) -> Result<(f64, Vec<f64>)> + Sync,
{
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if theta.len() != layout.count_parameters() {
        return Err(Error::ParamLength {
            expected: layout.count_parameters(),
            got: theta.len(),
        });
    }
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|&k| sample_gradient(layout, theta, &samples[k].state, |q| objective(k, q)))
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    grad.iter_mut().for_each(|v| *v *= scale);
    Ok((loss * scale, grad))
}

/// `∂(mean cross-entropy)/∂θ` over `batch`.
pub fn gradient(layout: &VqcnnLayout, theta: &[f64], batch: &[Sample]) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..batch.len()).collect();
    batch_gradient(layout, theta, &idx, batch, |k, q| {
        cross_entropy_with_grad(q, batch[k].label)
    })
    .map(|(_, g)| g)
}

/// Central finite differences of the mean cross-entropy, for gradient checks.
pub fn finite_difference_gradient(
    layout: &VqcnnLayout,
    theta: &[f64],
    batch: &[Sample],
    step: f64,
) -> Result<Vec<f64>> {
    let loss_at = |t: &[f64]| -> Result<f64> {
        let mut total = 0.0;
        for s in batch {
            total += cross_entropy_loss(&layout.forward(t, &s.state)?, s.label)?;
        }
        Ok(total / batch.len() as f64)
    };
    let mut out = Vec::with_capacity(theta.len());
    let mut t = theta.to_vec();
    for i in 0..theta.len() {
        t[i] = theta[i] + step;
        let up = loss_at(&t)?;
        t[i] = theta[i] - step;
        let down = loss_at(&t)?;
        t[i] = theta[i];
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Uniform draws on `[−π, π)`.
pub fn init_parameters(count: usize, rng: &mut impl Rng) -> Vec<f64> {
    use std::f64::consts::PI;
    (0..count).map(|_| rng.random_range(-PI..PI)).collect()
}

/// Plain minibatch gradient descent from `theta`, drawing batches from `rng`.
/// Returns the loss recorded before each step.
pub(crate) fn descend<F>(
    layout: &VqcnnLayout,
    theta: &mut [f64],
    samples: &[Sample],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    objective: F,
) -> Result<Vec<f64>>
where
    F: Fn(usize, &[f64]) -> Result<(f64, Vec<f64>)> + Sync,
{
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let batch_size = cfg.batch_size.min(samples.len());
    let mut losses = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let batch = index::sample(rng, samples.len(), batch_size).into_vec();
        let (loss, grad) = batch_gradient(layout, theta, &batch, samples, &objective)?;
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= cfg.learning_rate * g;
        }
        losses.push(loss);
    }
    Ok(losses)
}

fn check_labels(layout: &VqcnnLayout, samples: &[Sample]) -> Result<()> {
    if let Some(s) = samples.iter().find(|s| s.label >= layout.class_count()) {
        return Err(Error::LabelOutOfRange {
            label: s.label,
            classes: layout.class_count(),
        });
    }
    Ok(())
}

/// Trains from a seeded uniform initialization.
pub fn train_model(
    layout: &VqcnnLayout,
    samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, TrainHistory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let init = init_parameters(layout.count_parameters(), &mut rng);
    train_from(layout, init, samples, cfg, &mut rng)
}

/// Trains starting from `theta`, continuing with `rng` for batch draws.
pub fn train_from(
    layout: &VqcnnLayout,
    mut theta: Vec<f64>,
    samples: &[Sample],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, TrainHistory)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_labels(layout, samples)?;
    let losses = descend(layout, &mut theta, samples, cfg, rng, |k, q| {
        cross_entropy_with_grad(q, samples[k].label)
    })?;
    let final_accuracy = evaluate(layout, &theta, samples)?;
    Ok((
        theta,
        TrainHistory {
            losses,
            final_accuracy,
        },
    ))
}

/// Class distributions for every sample.
pub fn predict_all(
    layout: &VqcnnLayout,
    theta: &[f64],
    samples: &[Sample],
) -> Result<Vec<Vec<f64>>> {
    samples
        .par_iter()
        .map(|s| layout.forward(theta, &s.state))
        .collect()
}

/// Fraction of samples whose argmax class equals the label.
pub fn evaluate(layout: &VqcnnLayout, theta: &[f64], samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits: Vec<bool> = samples
        .par_iter()
        .map(|s| Ok(predict(&layout.forward(theta, &s.state)?)? == s.label))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / samples.len() as f64)
}
