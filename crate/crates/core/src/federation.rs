//! One-shot federation: clients size, search, and train their own circuits,
//! report soft labels on a shared public set, and the server distills the
//! best client's model against the accuracy-weighted fusion of the others.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_layout, predict};
use crate::complexity::{assess, ComplexityConfig, ComplexityReport};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::pso::{search, PsoConfig, SearchResult};
use crate::seeds::derive_seed;
use crate::train::{
    cross_entropy_with_grad, descend, evaluate, init_parameters, predict_all, train_from, Sample,
    TrainConfig, PROB_FLOOR,
};

/// Settings every client shares when building its local model.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientSettings {
    pub num_qubits: usize,
    pub class_count: usize,
    pub complexity: ComplexityConfig,
    pub pso: PsoConfig,
    /// Scenario master seed; each client derives its own from it.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientSpec {
    pub client_id: usize,
    pub complexity: ComplexityReport,
    pub search: SearchResult,
    pub model: Model,
}

/// Estimates the gate budget, searches a structure, and keeps the best
/// trained model.
pub fn client_build(
    client_id: usize,
    dataset: &Dataset,
    settings: &ClientSettings,
) -> Result<ClientSpec> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let complexity = assess(&dataset.labels, dataset.dimension(), &settings.complexity)?;
    let samples = dataset.encode()?;
    let pso = PsoConfig {
        rng_seed: derive_seed(settings.seed, &[client_id as u64]),
        ..settings.pso.clone()
    };
    let result = search(
        &samples,
        complexity.gate_count,
        settings.num_qubits,
        settings.class_count,
        &pso,
    )?;
    let layout = build_layout(
        settings.num_qubits,
        settings.class_count,
        result.gbest_structure.clone(),
    )?;
    let model = Model::new(layout, result.gbest_theta.clone())?;
    Ok(ClientSpec {
        client_id,
        complexity,
        search: result,
        model,
    })
}

/// A client's accuracy and per-sample class distributions on the public set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub client_id: usize,
    pub accuracy: f64,
    pub soft_labels: Vec<Vec<f64>>,
}

pub fn client_infer_public(spec: &ClientSpec, public: &[Sample]) -> Result<ClientReport> {
    if public.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let nq = spec.model.layout.num_qubits();
    if let Some(s) = public.iter().find(|s| s.state.num_qubits() != nq) {
        return Err(Error::Dimension(format!(
            "public sample has {} qubits, client {} model expects {nq}",
            s.state.num_qubits(),
            spec.client_id
        )));
    }
    let soft_labels = predict_all(&spec.model.layout, &spec.model.theta, public)?;
    let mut hits = 0usize;
    for (row, s) in soft_labels.iter().zip(public) {
        hits += usize::from(predict(row)? == s.label);
    }
    Ok(ClientReport {
        client_id: spec.client_id,
        accuracy: hits as f64 / public.len() as f64,
        soft_labels,
    })
}

/// Highest public accuracy; ties go to the smallest client id.
pub fn select_student(reports: &[ClientReport]) -> Result<usize> {
    reports
        .iter()
        .min_by(|a, b| {
            b.accuracy
                .total_cmp(&a.accuracy)
                .then(a.client_id.cmp(&b.client_id))
        })
        .map(|r| r.client_id)
        .ok_or(Error::NoReports)
}

/// Accuracy-weighted soft labels of every non-student client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionMatrix {
    /// `(client_id, weight)` for each teacher, in report order.
    pub weights: Vec<(usize, f64)>,
    pub rows: Vec<Vec<f64>>,
}

pub fn fuse_soft_labels(reports: &[ClientReport], student_id: usize) -> Result<FusionMatrix> {
    let teachers: Vec<&ClientReport> = reports
        .iter()
        .filter(|r| r.client_id != student_id)
        .collect();
    let first = teachers
        .first()
        .ok_or_else(|| Error::Fusion("no teacher reports besides the student".into()))?;
    let total: f64 = teachers.iter().map(|r| r.accuracy).sum();
    if !(total > 0.0) {
        return Err(Error::Fusion("every teacher has zero accuracy".into()));
    }
    let (m, c) = (
        first.soft_labels.len(),
        first.soft_labels.first().map_or(0, Vec::len),
    );
    for t in &teachers {
        if t.soft_labels.len() != m || t.soft_labels.iter().any(|r| r.len() != c) {
            return Err(Error::Dimension(format!(
                "client {} soft labels do not match {m}x{c}",
                t.client_id
            )));
        }
    }
    let weights: Vec<(usize, f64)> = teachers
        .iter()
        .map(|r| (r.client_id, r.accuracy / total))
        .collect();
    let mut rows = vec![vec![0.0; c]; m];
    for (t, &(_, w)) in teachers.iter().zip(&weights) {
        for (acc, row) in rows.iter_mut().zip(&t.soft_labels) {
            for (a, p) in acc.iter_mut().zip(row) {
                *a += w * p;
            }
        }
    }
    Ok(FusionMatrix { weights, rows })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Lambda(lambda))
    }
}

/// `λ·KL(mp ‖ student) + (1−λ)·CE(student, label)`.
pub fn kd_loss(mp_row: &[f64], student_row: &[f64], hard_label: usize, lambda: f64) -> Result<f64> {
    kd_loss_with_grad(mp_row, student_row, hard_label, lambda).map(|(l, _)| l)
}

pub(crate) fn kd_loss_with_grad(
    mp: &[f64],
    student: &[f64],
    label: usize,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    check_lambda(lambda)?;
    if mp.len() != student.len() {
        return Err(Error::Dimension(format!(
            "teacher row has {} classes, student row {}",
            mp.len(),
            student.len()
        )));
    }
    let (ce, ce_grad) = cross_entropy_with_grad(student, label)?;
    let mut kl = 0.0;
    let mut grad: Vec<f64> = ce_grad.iter().map(|g| (1.0 - lambda) * g).collect();
    for (c, (&t, &s)) in mp.iter().zip(student).enumerate() {
        if t > 0.0 {
            kl += t * (t.max(PROB_FLOOR).ln() - s.max(PROB_FLOOR).ln());
            if s > PROB_FLOOR {
                grad[c] -= lambda * t / s;
            }
        }
    }
    Ok((lambda * kl + (1.0 - lambda) * ce, grad))
}

/// Minibatch descent on the mean KD loss over the public set, starting
/// from `student`'s parameters.
pub fn distill(
    student: &Model,
    public: &[Sample],
    fusion: &FusionMatrix,
    lambda: f64,
    cfg: &TrainConfig,
) -> Result<(Model, Vec<f64>)> {
    check_lambda(lambda)?;
    cfg.validate()?;
    if public.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if fusion.rows.len() != public.len() {
        return Err(Error::Dimension(format!(
            "{} fused rows for {} public samples",
            fusion.rows.len(),
            public.len()
        )));
    }
    let mut theta = student.theta.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let losses = descend(
        &student.layout,
        &mut theta,
        public,
        cfg,
        &mut rng,
        |k, q| kd_loss_with_grad(&fusion.rows[k], q, public[k].label, lambda),
    )?;
    Ok((Model::new(student.layout.clone(), theta)?, losses))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Report,
    Structure,
    GlobalModel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Party {
    Server,
    Client(usize),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Server => f.write_str("server"),
            Party::Client(id) => write!(f, "client-{id}"),
        }
    }
}

impl Serialize for Party {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Party {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "server" {
            return Ok(Party::Server);
        }
        s.strip_prefix("client-")
            .and_then(|id| id.parse().ok())
            .map(Party::Client)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown party {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub direction: Direction,
    pub sender: Party,
    pub receiver: Party,
    pub kind: MessageKind,
    /// Number of scalar elements carried.
    pub payload_size: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FederationTranscript {
    pub messages: Vec<Message>,
}

impl FederationTranscript {
    fn push(
        &mut self,
        direction: Direction,
        sender: Party,
        receiver: Party,
        kind: MessageKind,
        payload_size: usize,
    ) {
        self.messages.push(Message {
            direction,
            sender,
            receiver,
            kind,
            payload_size,
        });
    }

    pub fn upload_elements(&self) -> usize {
        self.total(Direction::Up)
    }

    pub fn download_elements(&self) -> usize {
        self.total(Direction::Down)
    }

    fn total(&self, dir: Direction) -> usize {
        self.messages
            .iter()
            .filter(|m| m.direction == dir)
            .map(|m| m.payload_size)
            .sum()
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.messages
            .iter()
            .map(|m| serde_json::to_string(m).expect("message serializes") + "\n")
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FederationSettings {
    pub client: ClientSettings,
    pub distill: TrainConfig,
    pub lambda: f64,
    /// Also distill with λ = 1 and report it as its own row.
    pub kl_only_baseline: bool,
    /// Also train the student structure from scratch on all client data.
    pub full_data_baseline: bool,
}

/// One row of the summary table: model type, supervision, training-set size, test accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model_type: String,
    pub labels: String,
    pub train_size: String,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientMetric {
    pub client_id: usize,
    pub train_size: usize,
    pub gate_count: usize,
    pub structure: Vec<u8>,
    pub train_accuracy: f64,
    pub public_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederationMetrics {
    pub student_id: usize,
    pub clients: Vec<ClientMetric>,
    pub rows: Vec<MetricRow>,
    pub global_accuracy: f64,
    pub hard_label_accuracy: f64,
    pub mean_client_accuracy: f64,
    pub upload_elements: usize,
    pub download_elements: usize,
}

#[derive(Clone, Debug)]
pub struct FederationOutcome {
    pub global: Model,
    pub transcript: FederationTranscript,
    pub metrics: FederationMetrics,
    pub clients: Vec<ClientSpec>,
    pub reports: Vec<ClientReport>,
}

/// Label kind and row name for a given λ.
fn global_row_names(lambda: f64) -> (&'static str, &'static str) {
    if lambda == 0.0 {
        ("Global Model (CE)", "Hard Labels")
    } else if lambda == 1.0 {
        ("Global Model (KL)", "Soft Labels")
    } else {
        ("Global Model (KL+CE)", "Soft + Hard Labels")
    }
}

/// Build → infer → select → fuse → distill → broadcast.
///
/// Client ids are `1..=clients.len()` in input order.
pub fn run_federation(
    clients: &[Dataset],
    public: &Dataset,
    test: &Dataset,
    settings: &FederationSettings,
) -> Result<FederationOutcome> {
    check_lambda(settings.lambda)?;
    if clients.is_empty() {
        return Err(Error::Config("no clients".into()));
    }
    let dim = public.dimension();
    for (i, d) in clients.iter().enumerate() {
        if d.dimension() != dim {
            return Err(Error::Dimension(format!(
                "client {} has dimension {}, public set {dim}",
                i + 1,
                d.dimension()
            )));
        }
    }
    if test.dimension() != dim {
        return Err(Error::Dimension(format!(
            "test set has dimension {}, public set {dim}",
            test.dimension()
        )));
    }
    let min_client = clients.iter().map(Dataset::len).min().unwrap_or(0);
    if public.len() > min_client {
        log::warn!(
            "public set ({} samples) is larger than the smallest client ({min_client})",
            public.len()
        );
    }

    let public_samples = public.encode()?;
    let test_samples = test.encode()?;

    let specs: Vec<ClientSpec> = clients
        .par_iter()
        .enumerate()
        .map(|(i, d)| client_build(i + 1, d, &settings.client))
        .collect::<Result<_>>()?;
    let reports: Vec<ClientReport> = specs
        .par_iter()
        .map(|s| client_infer_public(s, &public_samples))
        .collect::<Result<_>>()?;

    let class_count = settings.client.class_count;
    let mut transcript = FederationTranscript::default();
    for r in &reports {
        transcript.push(
            Direction::Up,
            Party::Client(r.client_id),
            Party::Server,
            MessageKind::Report,
            public.len() * class_count + 1,
        );
    }

    let student_id = select_student(&reports)?;
    let student = &specs[student_id - 1];
    transcript.push(
        Direction::Up,
        Party::Client(student_id),
        Party::Server,
        MessageKind::Structure,
        student.model.layout.u_structure().len(),
    );

    let fusion = fuse_soft_labels(&reports, student_id)?;
    let distill_cfg = TrainConfig {
        rng_seed: derive_seed(settings.client.seed, &[u64::MAX]),
        ..settings.distill.clone()
    };
    let (global, _) = distill(
        &student.model,
        &public_samples,
        &fusion,
        settings.lambda,
        &distill_cfg,
    )?;
    let (hard, _) = distill(&student.model, &public_samples, &fusion, 0.0, &distill_cfg)?;

    let broadcast = global.layout.u_structure().len() + global.theta.len();
    for r in &reports {
        transcript.push(
            Direction::Down,
            Party::Server,
            Party::Client(r.client_id),
            MessageKind::GlobalModel,
            broadcast,
        );
    }

    let client_metrics: Vec<ClientMetric> = specs
        .iter()
        .zip(&reports)
        .zip(clients)
        .map(|((s, r), d)| {
            Ok(ClientMetric {
                client_id: s.client_id,
                train_size: d.len(),
                gate_count: s.complexity.gate_count,
                structure: s.search.gbest_structure.indices().to_vec(),
                train_accuracy: s.search.gbest_score,
                public_accuracy: r.accuracy,
                test_accuracy: s.model.accuracy(&test_samples)?,
            })
        })
        .collect::<Result<_>>()?;
    let mean_client_accuracy =
        client_metrics.iter().map(|c| c.test_accuracy).sum::<f64>() / client_metrics.len() as f64;
    let global_accuracy = global.accuracy(&test_samples)?;
    let hard_label_accuracy = hard.accuracy(&test_samples)?;

    let sizes = clients.iter().map(Dataset::len);
    let (lo, hi) = (sizes.clone().min().unwrap(), sizes.max().unwrap());
    let mut rows = vec![MetricRow {
        model_type: "Client Model".into(),
        labels: "Hard Labels".into(),
        train_size: if lo == hi {
            lo.to_string()
        } else {
            format!("{lo}~{hi}")
        },
        accuracy: mean_client_accuracy,
    }];
    let (name, kind) = global_row_names(settings.lambda);
    rows.push(MetricRow {
        model_type: name.into(),
        labels: kind.into(),
        train_size: public.len().to_string(),
        accuracy: global_accuracy,
    });
    if settings.kl_only_baseline && settings.lambda != 1.0 {
        let (kl, _) = distill(&student.model, &public_samples, &fusion, 1.0, &distill_cfg)?;
        rows.push(MetricRow {
            model_type: "Global Model (KL)".into(),
            labels: "Soft Labels".into(),
            train_size: public.len().to_string(),
            accuracy: kl.accuracy(&test_samples)?,
        });
    }
    rows.push(MetricRow {
        model_type: "Hard-Label Baseline (Public Dataset)".into(),
        labels: "Hard Labels".into(),
        train_size: public.len().to_string(),
        accuracy: hard_label_accuracy,
    });
    if settings.full_data_baseline {
        let all = Dataset::concat(&clients.iter().collect::<Vec<_>>()).encode()?;
        let mut rng = ChaCha8Rng::seed_from_u64(distill_cfg.rng_seed);
        let init = init_parameters(student.model.theta.len(), &mut rng);
        let (theta, _) = train_from(&student.model.layout, init, &all, &distill_cfg, &mut rng)?;
        rows.push(MetricRow {
            model_type: "Full-Data Baseline".into(),
            labels: "Hard Labels".into(),
            train_size: all.len().to_string(),
            accuracy: evaluate(&student.model.layout, &theta, &test_samples)?,
        });
    }

    let metrics = FederationMetrics {
        student_id,
        clients: client_metrics,
        rows,
        global_accuracy,
        hard_label_accuracy,
        mean_client_accuracy,
        upload_elements: transcript.upload_elements(),
        download_elements: transcript.download_elements(),
    };
    Ok(FederationOutcome {
        global,
        transcript,
        metrics,
        clients: specs,
        reports,
    })
}
