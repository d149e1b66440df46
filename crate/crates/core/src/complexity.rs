//! Client data complexity and the gate budget derived from it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights, exponents, and reference scales of the complexity score, plus
/// the gate-count bounds it maps onto.
///
/// The defaults are calibrated so that the four reference MNIST splits
/// (500/500, 800/200, 330×3, 2500/2500 at D = 256) land on budgets
/// 6, 5, 7 and 7 between bounds 3 and 15.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComplexityConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub m_ref: f64,
    pub d_ref: f64,
    pub gate_min: usize,
    pub gate_max: usize,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        Self {
            alpha1: 0.2,
            alpha2: 0.1,
            alpha3: 0.7,
            t1: 3.0,
            t2: 2.0,
            t3: 3.0,
            m_ref: 5000.0,
            d_ref: 256.0,
            gate_min: 3,
            gate_max: 15,
        }
    }
}

impl ComplexityConfig {
    pub fn validate(&self) -> Result<()> {
        let alphas = [self.alpha1, self.alpha2, self.alpha3];
        if alphas.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config(
                "complexity weights must be nonnegative".into(),
            ));
        }
        if (alphas.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("complexity weights must sum to 1".into()));
        }
        if [self.t1, self.t2, self.t3].iter().any(|t| !(*t > 1.0)) {
            return Err(Error::Config("complexity exponents must exceed 1".into()));
        }
        if !(self.m_ref >= 2.0) || !(self.d_ref >= 2.0) {
            return Err(Error::Config(
                "reference sample count and dimension must be >= 2".into(),
            ));
        }
        if self.gate_min < 1 || self.gate_min > self.gate_max {
            return Err(Error::Config(format!(
                "gate bounds [{}, {}] are invalid",
                self.gate_min, self.gate_max
            )));
        }
        Ok(())
    }
}

/// Everything the estimator derived for one client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub samples: usize,
    pub dimension: usize,
    pub sparsity: f64,
    pub dispersion: f64,
    pub q_score: f64,
    pub gate_count: usize,
}

/// Fraction of ordered sample pairs (including self-pairs) that share a class.
pub fn label_sparsity(labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyLabels);
    }
    let mut counts: HashMap<usize, u64> = HashMap::new();
    for &y in labels {
        *counts.entry(y).or_default() += 1;
    }
    let same: u128 = counts
        .values()
        .map(|&c| u128::from(c) * u128::from(c))
        .sum();
    let m = labels.len() as u128;
    Ok(same as f64 / (m * m) as f64)
}

/// Weighted sum of normalized log sample count, log dimension, and class dispersion.
pub fn data_complexity(
    samples: usize,
    dimension: usize,
    dispersion: f64,
    cfg: &ComplexityConfig,
) -> Result<f64> {
    if samples < 2 || dimension < 2 {
        return Err(Error::Complexity(format!(
            "need at least 2 samples and 2 features, got M = {samples}, D = {dimension}"
        )));
    }
    if !(0.0..1.0).contains(&dispersion) {
        return Err(Error::Complexity(format!(
            "dispersion {dispersion} outside [0, 1)"
        )));
    }
    let m_term = ((samples as f64).ln() / cfg.m_ref.ln()).powf(cfg.t1);
    let d_term = ((dimension as f64).ln() / cfg.d_ref.ln()).powf(cfg.t2);
    let s_term = dispersion.powf(cfg.t3);
    Ok(cfg.alpha1 * m_term + cfg.alpha2 * d_term + cfg.alpha3 * s_term)
}

/// `gate_min + ⌊Q·(gate_max − gate_min)⌋`, clamped to the bounds.
pub fn estimate_gates(q_score: f64, cfg: &ComplexityConfig) -> usize {
    let span = (cfg.gate_max - cfg.gate_min) as f64;
    let extra = (q_score.max(0.0) * span).floor();
    let extra = if extra.is_finite() {
        extra.min(span) as usize
    } else {
        0
    };
    cfg.gate_min + extra
}

/// Runs the full estimator on a client's labels and feature dimension.
pub fn assess(
    labels: &[usize],
    dimension: usize,
    cfg: &ComplexityConfig,
) -> Result<ComplexityReport> {
    let sparsity = label_sparsity(labels)?;
    let dispersion = 1.0 - sparsity;
    let q_score = data_complexity(labels.len(), dimension, dispersion, cfg)?;
    Ok(ComplexityReport {
        samples: labels.len(),
        dimension,
        sparsity,
        dispersion,
        q_score,
        gate_count: estimate_gates(q_score, cfg),
    })
}
