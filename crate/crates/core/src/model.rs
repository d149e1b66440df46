//! A trained circuit and its plain-text record.
//!
//! The record is one `key = value` pair per line:
//!
//! ```text
//! num_qubits = 8
//! class_count = 10
//! num_layers = 3
//! gate_indices = 13,9,6,6,10,3
//! parameters = -1.2345678901234567e0,...
//! ```
//!
//! Parameters are written layer-major with 17 significant digits, which
//! round-trips every `f64` exactly. Blank lines and `#` comments are ignored.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::circuit::{build_layout, UStructure, VqcnnLayout};
use crate::error::{Error, Result};
use crate::train::Sample;

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub layout: VqcnnLayout,
    pub theta: Vec<f64>,
}

impl Model {
    pub fn new(layout: VqcnnLayout, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != layout.count_parameters() {
            return Err(Error::ParamLength {
                expected: layout.count_parameters(),
                got: theta.len(),
            });
        }
        Ok(Self { layout, theta })
    }

    pub fn accuracy(&self, samples: &[Sample]) -> Result<f64> {
        crate::train::evaluate(&self.layout, &self.theta, samples)
    }

    pub fn to_record(&self) -> String {
        let l = &self.layout;
        let mut s = String::new();
        let _ = writeln!(s, "num_qubits = {}", l.num_qubits());
        let _ = writeln!(s, "class_count = {}", l.class_count());
        let _ = writeln!(s, "num_layers = {}", l.num_layers());
        let gates: Vec<String> = l
            .u_structure()
            .indices()
            .iter()
            .map(u8::to_string)
            .collect();
        let _ = writeln!(s, "gate_indices = {}", gates.join(","));
        let params: Vec<String> = self.theta.iter().map(|p| format!("{p:.16e}")).collect();
        let _ = writeln!(s, "parameters = {}", params.join(","));
        s
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut fields: HashMap<&str, &str> = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::ModelFormat(format!("line {}: expected key = value", n + 1))
            })?;
            if fields.insert(k.trim(), v.trim()).is_some() {
                return Err(Error::ModelFormat(format!("duplicate key {}", k.trim())));
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::ModelFormat(format!("missing {k}")))
        };
        let int = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::ModelFormat(format!("{k} is not an integer")))
        };
        let num_qubits = int("num_qubits")?;
        let class_count = int("class_count")?;
        let num_layers = int("num_layers")?;
        let gates = get("gate_indices")?
            .split(',')
            .map(|g| {
                g.trim()
                    .parse::<u8>()
                    .map_err(|_| Error::ModelFormat(format!("bad gate index {g:?}")))
            })
            .collect::<Result<Vec<u8>>>()?;
        let params = get("parameters")?;
        let theta = if params.is_empty() {
            Vec::new()
        } else {
            params
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::ModelFormat(format!("bad parameter {p:?}")))
                })
                .collect::<Result<Vec<f64>>>()?
        };
        let layout = build_layout(num_qubits, class_count, UStructure::new(gates)?)?;
        if layout.num_layers() != num_layers {
            return Err(Error::ModelFormat(format!(
                "record declares {num_layers} layers, layout has {}",
                layout.num_layers()
            )));
        }
        Self::new(layout, theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(gates: Vec<u8>, theta: Vec<f64>) -> Model {
        let layout = build_layout(8, 10, UStructure::new(gates).unwrap()).unwrap();
        Model::new(layout, theta).unwrap()
    }

    #[test]
    fn record_layout() {
        let m = model(vec![13, 9, 6, 6, 10, 3], vec![0.5; 15]);
        let rec = m.to_record();
        assert!(rec.starts_with("num_qubits = 8\nclass_count = 10\nnum_layers = 3\n"));
        assert!(rec.contains("gate_indices = 13,9,6,6,10,3\n"));
        assert!(rec.contains("parameters = 5.0000000000000000e-1,"));
    }

    #[test]
    fn rejects_bad_records() {
        let good = model(vec![5], vec![0.1; 9]).to_record();
        assert!(Model::from_record(&good.replace("num_layers = 3", "num_layers = 2")).is_err());
        assert!(
            Model::from_record(&good.replace("gate_indices = 5", "gate_indices = 14")).is_err()
        );
        assert!(Model::from_record(&good.replace("class_count = 10\n", "")).is_err());
        let short = good.replace("parameters = ", "parameters = 1.0,");
        assert!(matches!(
            Model::from_record(&short),
            Err(Error::ParamLength { .. })
        ));
        assert!(Model::from_record("num_qubits 8").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(gates in prop::collection::vec(1u8..=13, 1..10), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let u = UStructure::new(gates.clone()).unwrap();
            let n = 3 * (u.parameterized_count() + 2);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3) * rng.random::<f64>().powi(7)).collect();
            let m = model(gates, theta);
            let back = Model::from_record(&m.to_record()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
