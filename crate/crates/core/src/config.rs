//! Scenario files.
//!
//! A scenario is TOML restricted to flat dotted keys, for example
//!
//! ```toml
//! seed = 7
//! num_qubits = 4
//! class_count = 6
//! lambda = 0.7
//!
//! data.source = "blobs"
//! data.dimension = 16
//! data.separation = 6.0
//!
//! clients.1 = [[0, 200], [1, 200]]
//! clients.2 = [[2, 200], [3, 200]]
//! public.per_class = 25
//! test.per_class = 100
//!
//! pso.swarm_size = 4
//! pso.train.learning_rate = 0.2
//! distill.iterations = 300
//! ```
//!
//! Client ids must run from 1 without gaps. Each `clients.N` entry lists
//! `[class, count]` pairs. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::complexity::ComplexityConfig;
use crate::data::{load_idx, partition, synthetic_blobs, Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::federation::{ClientSettings, FederationSettings};
use crate::pso::PsoConfig;
use crate::seeds::derive_seed;
use crate::train::TrainConfig;

const DATA_STREAM: u64 = 0xDA7A;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Gaussian clusters, generated on the fly.
    Blobs { dimension: usize, separation: f64 },
    /// IDX archives. Clients draw from the train pair, the public and test
    /// sets from the test pair.
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        resize: Option<(usize, usize)>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeldOut {
    pub per_class: usize,
    /// Defaults to every class `0..class_count`.
    #[serde(default)]
    pub classes: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub num_qubits: usize,
    pub class_count: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub kl_only_baseline: bool,
    #[serde(default)]
    pub full_data_baseline: bool,
    pub data: DataSource,
    pub clients: BTreeMap<String, Vec<(usize, usize)>>,
    pub public: HeldOut,
    pub test: HeldOut,
    #[serde(default)]
    pub complexity: ComplexityConfig,
    #[serde(default)]
    pub pso: PsoConfig,
    #[serde(default)]
    pub distill: TrainConfig,
}

fn default_lambda() -> f64 {
    0.7
}

/// Materialized datasets; `clients[i]` belongs to client `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioData {
    pub clients: Vec<Dataset>,
    pub public: Dataset,
    pub test: Dataset,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Reads a scenario; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::parse(&text)?;
        if let DataSource::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &mut s.data
        {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [train_images, train_labels, test_images, test_labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Lambda(self.lambda));
        }
        if self.class_count == 0 {
            return Err(Error::Config("class_count must be at least 1".into()));
        }
        if self.clients.is_empty() {
            return Err(Error::Config("no clients declared".into()));
        }
        let ids = self.client_ids()?;
        if ids.iter().enumerate().any(|(i, &id)| id != i + 1) {
            return Err(Error::Config(
                "client ids must be 1, 2, ... without gaps".into(),
            ));
        }
        for (id, plan) in &self.clients {
            if plan.is_empty() {
                return Err(Error::Config(format!("client {id} has no classes")));
            }
            if let Some(&(c, _)) = plan.iter().find(|(c, _)| *c >= self.class_count) {
                return Err(Error::LabelOutOfRange {
                    label: c,
                    classes: self.class_count,
                });
            }
        }
        for set in [&self.public, &self.test] {
            if set.per_class == 0 {
                return Err(Error::Config(
                    "held-out per_class must be at least 1".into(),
                ));
            }
            if let Some(&c) = set
                .classes
                .iter()
                .flatten()
                .find(|&&c| c >= self.class_count)
            {
                return Err(Error::LabelOutOfRange {
                    label: c,
                    classes: self.class_count,
                });
            }
        }
        if let DataSource::Blobs {
            dimension,
            separation,
        } = self.data
        {
            if dimension == 0 {
                return Err(Error::Config("data.dimension must be at least 1".into()));
            }
            if !(separation >= 0.0) {
                return Err(Error::Config("data.separation must be nonnegative".into()));
            }
        }
        self.complexity.validate()?;
        self.pso.validate()?;
        self.distill.validate()
    }

    fn client_ids(&self) -> Result<Vec<usize>> {
        let mut ids = self
            .clients
            .keys()
            .map(|k| {
                k.parse::<usize>()
                    .map_err(|_| Error::Config(format!("client id {k:?} is not an integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        ids.sort_unstable();
        Ok(ids)
    }

    pub fn client_count(&self) -> usize {
        self.clients.len()
    }

    /// Client plans in id order.
    pub fn client_plans(&self) -> Vec<Vec<(usize, usize)>> {
        (1..=self.clients.len())
            .map(|id| self.clients[&id.to_string()].clone())
            .collect()
    }

    fn held_out_plan(&self, set: &HeldOut) -> Vec<(usize, usize)> {
        let classes = set
            .classes
            .clone()
            .unwrap_or_else(|| (0..self.class_count).collect());
        classes.into_iter().map(|c| (c, set.per_class)).collect()
    }

    pub fn client_settings(&self) -> ClientSettings {
        ClientSettings {
            num_qubits: self.num_qubits,
            class_count: self.class_count,
            complexity: self.complexity.clone(),
            pso: self.pso.clone(),
            seed: self.seed,
        }
    }

    pub fn federation_settings(&self) -> FederationSettings {
        FederationSettings {
            client: self.client_settings(),
            distill: self.distill.clone(),
            lambda: self.lambda,
            kl_only_baseline: self.kl_only_baseline,
            full_data_baseline: self.full_data_baseline,
        }
    }

    /// Draws every client, public, and test set. Draws never share a row.
    pub fn materialize(&self) -> Result<ScenarioData> {
        let data_seed = derive_seed(self.seed, &[DATA_STREAM]);
        let clients = self.client_plans();
        let public = self.held_out_plan(&self.public);
        let test = self.held_out_plan(&self.test);
        match &self.data {
            DataSource::Blobs {
                dimension,
                separation,
            } => {
                let mut plans = clients;
                plans.push(public);
                plans.push(test);
                let mut need = vec![0usize; self.class_count];
                for &(c, n) in plans.iter().flatten() {
                    need[c] += n;
                }
                let per_class = need.iter().copied().max().unwrap_or(0);
                let pool = synthetic_blobs(
                    self.class_count,
                    per_class,
                    *dimension,
                    *separation,
                    data_seed,
                );
                let mut parts = partition(
                    &pool,
                    &PartitionPlan {
                        clients: plans,
                        rng_seed: data_seed,
                    },
                )?;
                let test = parts.pop().expect("test part");
                let public = parts.pop().expect("public part");
                Ok(ScenarioData {
                    clients: parts,
                    public,
                    test,
                })
            }
            DataSource::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                resize,
            } => {
                let train = load_idx(train_images, train_labels, *resize)?;
                let held = load_idx(test_images, test_labels, *resize)?;
                let client_sets = partition(
                    &train,
                    &PartitionPlan {
                        clients,
                        rng_seed: data_seed,
                    },
                )?;
                let mut parts = partition(
                    &held,
                    &PartitionPlan {
                        clients: vec![public, test],
                        rng_seed: derive_seed(data_seed, &[1]),
                    },
                )?;
                let test = parts.pop().expect("test part");
                let public = parts.pop().expect("public part");
                Ok(ScenarioData {
                    clients: client_sets,
                    public,
                    test,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BLOBS: &str = r#"
seed = 3
num_qubits = 4
class_count = 4
data.source = "blobs"
data.dimension = 16
data.separation = 6.0
clients.1 = [[0, 20], [1, 20]]
clients.2 = [[2, 20], [3, 10]]
public.per_class = 5
test.per_class = 7
pso.swarm_size = 3
pso.train.iterations = 4
"#;

    #[test]
    fn parses_dotted_keys() {
        let s = Scenario::parse(BLOBS).unwrap();
        assert_eq!(s.lambda, 0.7);
        assert_eq!(s.pso.swarm_size, 3);
        assert_eq!(s.pso.train.iterations, 4);
        assert_eq!(s.pso.iterations, PsoConfig::default().iterations);
        assert_eq!(s.client_plans()[1], vec![(2, 20), (3, 10)]);
    }

    #[test]
    fn materializes_disjoint_sets() {
        let s = Scenario::parse(BLOBS).unwrap();
        let d = s.materialize().unwrap();
        assert_eq!(
            d.clients.iter().map(Dataset::len).collect::<Vec<_>>(),
            vec![40, 30]
        );
        assert_eq!(d.public.len(), 20);
        assert_eq!(d.test.len(), 28);
        let mut rows: Vec<&Vec<f64>> = d.clients.iter().flat_map(|c| &c.features).collect();
        rows.extend(&d.public.features);
        rows.extend(&d.test.features);
        let n = rows.len();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.dedup();
        assert_eq!(rows.len(), n);
        assert_eq!(s.materialize().unwrap(), d);
    }

    #[test]
    fn rejects_bad_scenarios() {
        assert!(Scenario::parse(&BLOBS.replace("clients.2", "clients.3")).is_err());
        assert!(Scenario::parse(&BLOBS.replace("[3, 10]", "[4, 10]")).is_err());
        assert!(Scenario::parse(&format!("{BLOBS}\nbogus = 1\n")).is_err());
        assert!(Scenario::parse(&format!("{BLOBS}\npso.bogus = 1\n")).is_err());
        assert!(Scenario::parse(&format!("{BLOBS}\nlambda = 2.0\n")).is_err());
        assert!(Scenario::parse("num_qubits = ").is_err());
    }
}
