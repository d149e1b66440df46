//! Particle-swarm search over U structures at a fixed gate budget.
//!
//! Positions are real vectors in `[1, 13]^budget`; a particle's structure is
//! its position rounded (ties away from zero) and clamped to the gate range.
//! Fitness is training-set accuracy after training the decoded structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_layout, UStructure};
use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::train::{train_model, Sample, TrainConfig};

const GATE_LO: f64 = 1.0;
const GATE_HI: f64 = 13.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub velocity_clamp: f64,
    pub rng_seed: u64,
    /// Training run used to score every candidate.
    pub train: TrainConfig,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 15,
            iterations: 100,
            inertia: 0.8,
            cognitive: 0.5,
            social: 0.5,
            velocity_clamp: 6.0,
            rng_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size == 0 {
            return Err(Error::Config("swarm_size must be at least 1".into()));
        }
        if [self.inertia, self.cognitive, self.social]
            .iter()
            .any(|c| !(*c >= 0.0))
        {
            return Err(Error::Config("PSO coefficients must be nonnegative".into()));
        }
        if !(self.velocity_clamp > 0.0) {
            return Err(Error::Config("velocity_clamp must be positive".into()));
        }
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub pbest_position: Vec<f64>,
    pub pbest_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub gbest_structure: UStructure,
    pub gbest_position: Vec<f64>,
    pub gbest_theta: Vec<f64>,
    pub gbest_score: f64,
    /// Best score after each iteration (excluding the initial evaluation).
    pub trace: Vec<f64>,
}

impl SearchResult {
    /// Two-column `iteration,gbest_score` table.
    pub fn trace_table(&self) -> String {
        let mut out = String::from("iteration,gbest_score\n");
        for (i, s) in self.trace.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, s));
        }
        out
    }
}

/// Rounds each coordinate (ties away from zero) and clamps it to 1..=13.
pub fn decode_position(position: &[f64]) -> Result<UStructure> {
    let gates = position
        .iter()
        .map(|&p| {
            let r = if p.is_nan() { GATE_LO } else { p.round() };
            r.clamp(GATE_LO, GATE_HI) as u8
        })
        .collect();
    UStructure::new(gates)
}

/// One velocity/position update for every particle.
pub fn step(
    swarm: &mut [Particle],
    gbest: &[f64],
    cfg: &PsoConfig,
    rng: &mut impl Rng,
) -> Result<()> {
    let dim = gbest.len();
    for p in swarm.iter_mut() {
        if p.position.len() != dim || p.velocity.len() != dim || p.pbest_position.len() != dim {
            return Err(Error::Dimension(format!(
                "particle vectors must all have length {dim}"
            )));
        }
        let r1: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let r2: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        for j in 0..dim {
            let g = p.position[j];
            let v = cfg.inertia * p.velocity[j]
                + cfg.cognitive * r1[j] * (p.pbest_position[j] - g)
                + cfg.social * r2[j] * (gbest[j] - g);
            p.velocity[j] = v.clamp(-cfg.velocity_clamp, cfg.velocity_clamp);
            p.position[j] = g + p.velocity[j];
        }
    }
    Ok(())
}

/// Trains `structure` and returns `(training accuracy, trained θ)`.
pub fn fitness(
    structure: &UStructure,
    samples: &[Sample],
    num_qubits: usize,
    class_count: usize,
    inner: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    let layout = build_layout(num_qubits, class_count, structure.clone())?;
    let (theta, history) = train_model(&layout, samples, inner)?;
    Ok((history.final_accuracy, theta))
}

/// Scores every particle's current position in parallel. Each particle
/// trains with a seed derived from `(rng_seed, particle, iteration)`.
fn evaluate_swarm(
    swarm: &[Particle],
    iteration: usize,
    samples: &[Sample],
    num_qubits: usize,
    class_count: usize,
    cfg: &PsoConfig,
) -> Result<Vec<(f64, Vec<f64>)>> {
    swarm
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let structure = decode_position(&p.position)?;
            let inner = TrainConfig {
                rng_seed: derive_seed(cfg.rng_seed, &[i as u64, iteration as u64]),
                ..cfg.train.clone()
            };
            fitness(&structure, samples, num_qubits, class_count, &inner)
        })
        .collect()
}

/// Runs the swarm for `cfg.iterations` rounds after an initial evaluation.
/// Personal and global bests move only on strict improvement.
pub fn search(
    samples: &[Sample],
    gate_budget: usize,
    num_qubits: usize,
    class_count: usize,
    cfg: &PsoConfig,
) -> Result<SearchResult> {
    cfg.validate()?;
    if gate_budget == 0 {
        return Err(Error::Config("gate budget must be at least 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut swarm: Vec<Particle> = (0..cfg.swarm_size)
        .map(|_| {
            let position: Vec<f64> = (0..gate_budget)
                .map(|_| rng.random_range(GATE_LO..=GATE_HI))
                .collect();
            Particle {
                velocity: vec![0.0; gate_budget],
                pbest_position: position.clone(),
                position,
                pbest_score: f64::NEG_INFINITY,
            }
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut trace = Vec::with_capacity(cfg.iterations);
    for iteration in 0..=cfg.iterations {
        if iteration > 0 {
            let gbest = best
                .as_ref()
                .expect("initial evaluation sets gbest")
                .1
                .clone();
            step(&mut swarm, &gbest, cfg, &mut rng)?;
        }
        let scores = evaluate_swarm(&swarm, iteration, samples, num_qubits, class_count, cfg)?;
        for (p, (score, theta)) in swarm.iter_mut().zip(scores) {
            if score > p.pbest_score {
                p.pbest_score = score;
                p.pbest_position = p.position.clone();
            }
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, p.position.clone(), theta));
            }
        }
        if iteration > 0 {
            trace.push(best.as_ref().unwrap().0);
        }
        log::debug!(
            "pso iteration {iteration}: gbest {:.4}",
            best.as_ref().unwrap().0
        );
    }

    let (gbest_score, gbest_position, gbest_theta) = best.expect("swarm is nonempty");
    Ok(SearchResult {
        gbest_structure: decode_position(&gbest_position)?,
        gbest_position,
        gbest_theta,
        gbest_score,
        trace,
    })
}
