//! The layered convolution/pooling circuit: gate decoding, layout
//! construction, parameter accounting, and the forward pass.
//!
//! Each layer runs one U module on every adjacent pair of active qubits
//! and then pools disjoint pairs with a V module, keeping the lower-indexed
//! qubit of each pair. Every U instance in a layer shares one parameter
//! set; every V instance shares one `(φ₁, φ₂)` pair. The parameter vector
//! is laid out layer-major: `[u₀…, φ₁, φ₂]` for layer 0, then layer 1, etc.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{Mat2, StateVector, Unitary2};

/// Probabilities below this count as no surviving mass after masking.
const MASK_EPS: f64 = 1e-300;

/// The 13-gate alphabet, indexed 1..=13 in the order
/// X, Y, Z, I, Rx, Ry, Rz, CNOT, CY, CZ, CRx, CRy, CRz.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    X,
    Y,
    Z,
    I,
    Rx,
    Ry,
    Rz,
    Cnot,
    Cy,
    Cz,
    Crx,
    Cry,
    Crz,
}

impl GateKind {
    pub const ALL: [GateKind; 13] = [
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::I,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Cnot,
        GateKind::Cy,
        GateKind::Cz,
        GateKind::Crx,
        GateKind::Cry,
        GateKind::Crz,
    ];

    pub fn from_index(index: i64) -> Result<Self> {
        if (1..=13).contains(&index) {
            Ok(Self::ALL[(index - 1) as usize])
        } else {
            Err(Error::GateIndex(index))
        }
    }

    pub fn index(self) -> u8 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u8 + 1
    }

    pub fn is_parameterized(self) -> bool {
        matches!(
            self,
            GateKind::Rx
                | GateKind::Ry
                | GateKind::Rz
                | GateKind::Crx
                | GateKind::Cry
                | GateKind::Crz
        )
    }

    pub fn is_two_qubit(self) -> bool {
        self.index() >= 8
    }

    /// The single-qubit matrix this kind applies (to the target, for
    /// controlled kinds). `theta` is ignored by fixed gates.
    pub fn unitary(self, theta: f64) -> Unitary2 {
        match self {
            GateKind::X | GateKind::Cnot => Unitary2::x(),
            GateKind::Y | GateKind::Cy => Unitary2::y(),
            GateKind::Z | GateKind::Cz => Unitary2::z(),
            GateKind::I => Unitary2::identity(),
            GateKind::Rx | GateKind::Crx => Unitary2::rx(theta),
            GateKind::Ry | GateKind::Cry => Unitary2::ry(theta),
            GateKind::Rz | GateKind::Crz => Unitary2::rz(theta),
        }
    }

    /// `d/dθ` of [`Self::unitary`]; `None` for fixed gates.
    pub(crate) fn derivative(self, theta: f64) -> Option<Mat2> {
        let (s, c) = (theta / 2.0).sin_cos();
        let z = Complex64::new(0.0, 0.0);
        match self {
            GateKind::Rx | GateKind::Crx => {
                let d = Complex64::new(-s / 2.0, 0.0);
                let o = Complex64::new(0.0, -c / 2.0);
                Some([[d, o], [o, d]])
            }
            GateKind::Ry | GateKind::Cry => Some([
                [Complex64::new(-s / 2.0, 0.0), Complex64::new(-c / 2.0, 0.0)],
                [Complex64::new(c / 2.0, 0.0), Complex64::new(-s / 2.0, 0.0)],
            ]),
            GateKind::Rz | GateKind::Crz => {
                let half = theta / 2.0;
                Some([
                    [
                        Complex64::new(0.0, -0.5) * Complex64::from_polar(1.0, -half),
                        z,
                    ],
                    [
                        z,
                        Complex64::new(0.0, 0.5) * Complex64::from_polar(1.0, half),
                    ],
                ])
            }
            _ => None,
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::I => "I",
            GateKind::Rx => "Rx",
            GateKind::Ry => "Ry",
            GateKind::Rz => "Rz",
            GateKind::Cnot => "CNOT",
            GateKind::Cy => "CY",
            GateKind::Cz => "CZ",
            GateKind::Crx => "CRx",
            GateKind::Cry => "CRy",
            GateKind::Crz => "CRz",
        };
        f.write_str(name)
    }
}

/// A gate bound to concrete qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlacedGate {
    pub kind: GateKind,
    pub control: Option<usize>,
    pub target: usize,
}

/// Places gate `index` on a qubit pair. Odd indices act on (or are
/// controlled by) the first qubit, even indices on (or by) the second.
pub fn decode_gate(index: i64, pair: (usize, usize)) -> Result<PlacedGate> {
    let kind = GateKind::from_index(index)?;
    if pair.0 == pair.1 {
        return Err(Error::SameControlTarget(pair.0));
    }
    let (first, second) = if index % 2 == 1 {
        pair
    } else {
        (pair.1, pair.0)
    };
    Ok(if kind.is_two_qubit() {
        PlacedGate {
            kind,
            control: Some(first),
            target: second,
        }
    } else {
        PlacedGate {
            kind,
            control: None,
            target: first,
        }
    })
}

/// Ordered gate indices of the convolution module.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct UStructure(Vec<u8>);

impl UStructure {
    pub fn new(indices: Vec<u8>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Layout("U structure needs at least one gate".into()));
        }
        for &g in &indices {
            GateKind::from_index(i64::from(g))?;
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn kinds(&self) -> impl Iterator<Item = GateKind> + '_ {
        self.0.iter().map(|&g| GateKind::ALL[usize::from(g) - 1])
    }

    /// Number of trainable angles in one U module.
    pub fn parameterized_count(&self) -> usize {
        self.kinds().filter(|k| k.is_parameterized()).count()
    }
}

impl TryFrom<Vec<u8>> for UStructure {
    type Error = Error;
    fn try_from(v: Vec<u8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<UStructure> for Vec<u8> {
    fn from(u: UStructure) -> Self {
        u.0
    }
}

impl fmt::Display for UStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u8::to_string).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// One convolution + pooling stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layer {
    /// Active qubits entering the layer, ascending.
    pub active: Vec<usize>,
    /// `(first, second)` pairs that each receive a U module.
    pub conv_pairs: Vec<(usize, usize)>,
    /// `(retained, discarded)` pairs that each receive a V module.
    pub pool_pairs: Vec<(usize, usize)>,
    /// Active qubits leaving the layer, ascending.
    pub retained: Vec<usize>,
}

/// Full architecture of a model: register size, class count, the shared U
/// structure, and the per-layer qubit schedule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VqcnnLayout {
    num_qubits: usize,
    class_count: usize,
    u_structure: UStructure,
    layers: Vec<Layer>,
    ops: Vec<Op>,
}

/// A gate in the compiled circuit; `param` indexes the parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Op {
    pub kind: GateKind,
    pub control: Option<usize>,
    pub target: usize,
    pub param: Option<usize>,
}

/// Qubits read out for `class_count` classes: `⌈log₂ C⌉`, at least one.
pub fn measured_qubit_count(class_count: usize) -> usize {
    if class_count <= 2 {
        1
    } else {
        class_count.next_power_of_two().ilog2() as usize
    }
}

/// Builds the layered circuit for `num_qubits` inputs and `class_count` classes.
///
/// The depth is `log₂(num_qubits)` layers. Pooling is scheduled from the
/// back: the last layer ends with `⌈log₂ C⌉` active qubits and every
/// earlier layer ends with at most twice as many as the next one, capped
/// at the register size. For two classes this halves the register every
/// layer (8 → 4 → 2 → 1); for three classes on eight qubits it gives
/// 8 → 8 → 4 → 2.
pub fn build_layout(
    num_qubits: usize,
    class_count: usize,
    u_structure: UStructure,
) -> Result<VqcnnLayout> {
    if num_qubits < 2 || !num_qubits.is_power_of_two() || num_qubits > 16 {
        return Err(Error::Layout(format!(
            "register size {num_qubits} must be a power of two between 2 and 16"
        )));
    }
    if class_count < 2 {
        return Err(Error::Layout("need at least two classes".into()));
    }
    if class_count > 1 << num_qubits {
        return Err(Error::Layout(format!(
            "{class_count} classes cannot be read from {num_qubits} qubits"
        )));
    }
    let readout = measured_qubit_count(class_count);
    let num_layers = num_qubits.ilog2() as usize;

    let mut targets = vec![0; num_layers];
    let mut next = readout;
    for t in targets.iter_mut().rev() {
        *t = next;
        next = (next * 2).min(num_qubits);
    }

    let mut layers = Vec::with_capacity(num_layers);
    let mut active: Vec<usize> = (0..num_qubits).collect();
    for &target in &targets {
        let conv_pairs: Vec<(usize, usize)> = active.windows(2).map(|w| (w[0], w[1])).collect();
        let pools = active.len() - target;
        let pool_pairs: Vec<(usize, usize)> = (0..pools)
            .map(|i| (active[2 * i], active[2 * i + 1]))
            .collect();
        let mut retained = active.clone();
        retained.retain(|q| !pool_pairs.iter().any(|&(_, d)| d == *q));
        layers.push(Layer {
            active: active.clone(),
            conv_pairs,
            pool_pairs,
            retained: retained.clone(),
        });
        active = retained;
    }

    let ops = compile(&u_structure, &layers)?;
    Ok(VqcnnLayout {
        num_qubits,
        class_count,
        u_structure,
        layers,
        ops,
    })
}

fn compile(u: &UStructure, layers: &[Layer]) -> Result<Vec<Op>> {
    let per_layer = u.parameterized_count() + 2;
    let mut ops = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let base = l * per_layer;
        for &pair in &layer.conv_pairs {
            let mut slot = 0;
            for &g in u.indices() {
                let placed = decode_gate(i64::from(g), pair)?;
                let param = placed.kind.is_parameterized().then(|| {
                    slot += 1;
                    base + slot - 1
                });
                ops.push(Op {
                    kind: placed.kind,
                    control: placed.control,
                    target: placed.target,
                    param,
                });
            }
        }
        let v_base = base + per_layer - 2;
        for &(keep, drop) in &layer.pool_pairs {
            ops.push(Op {
                kind: GateKind::Crz,
                control: Some(drop),
                target: keep,
                param: Some(v_base),
            });
            ops.push(Op {
                kind: GateKind::Crx,
                control: Some(drop),
                target: keep,
                param: Some(v_base + 1),
            });
        }
    }
    Ok(ops)
}

impl VqcnnLayout {
    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn u_structure(&self) -> &UStructure {
        &self.u_structure
    }

    /// Qubits read out after the last layer, most significant first.
    pub fn measured_qubits(&self) -> &[usize] {
        &self.layers.last().expect("at least one layer").retained
    }

    pub(crate) fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn count_parameters(&self) -> usize {
        self.num_layers() * (self.u_structure.parameterized_count() + 2)
    }

    /// Fundamental gates executed by one forward pass.
    pub fn gate_cost(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.conv_pairs.len() * self.u_structure.len() + l.pool_pairs.len() * 2)
            .sum()
    }

    /// Slice of `theta` holding layer `layer`'s U angles.
    pub fn u_params<'a>(&self, theta: &'a [f64], layer: usize) -> &'a [f64] {
        let per = self.u_structure.parameterized_count() + 2;
        &theta[layer * per..layer * per + per - 2]
    }

    /// Slice of `theta` holding layer `layer`'s V angle pair.
    pub fn v_params<'a>(&self, theta: &'a [f64], layer: usize) -> &'a [f64] {
        let per = self.u_structure.parameterized_count() + 2;
        &theta[layer * per + per - 2..(layer + 1) * per]
    }

    pub(crate) fn check(&self, theta: &[f64], input: &StateVector) -> Result<()> {
        if theta.len() != self.count_parameters() {
            return Err(Error::ParamLength {
                expected: self.count_parameters(),
                got: theta.len(),
            });
        }
        if input.num_qubits() != self.num_qubits {
            return Err(Error::InputQubits {
                expected: self.num_qubits,
                got: input.num_qubits(),
            });
        }
        Ok(())
    }

    /// Evolves `input` through every layer without reading it out.
    pub fn evolve(&self, theta: &[f64], input: &StateVector) -> Result<StateVector> {
        self.check(theta, input)?;
        let mut state = input.clone();
        for op in &self.ops {
            apply_op(&mut state, op, theta);
        }
        Ok(state)
    }

    /// Class probabilities for one encoded input.
    pub fn forward(&self, theta: &[f64], input: &StateVector) -> Result<Vec<f64>> {
        let state = self.evolve(theta, input)?;
        let raw = state.marginal_probabilities(self.measured_qubits())?;
        mask_and_normalize(&raw, self.class_count)
    }
}

pub(crate) fn apply_op(state: &mut StateVector, op: &Op, theta: &[f64]) {
    let angle = op.param.map_or(0.0, |p| theta[p]);
    let u = op.kind.unitary(angle);
    match op.control {
        Some(c) => state.apply_controlled_matrix(c, op.target, u.matrix()),
        None => state.apply_matrix(u.matrix(), op.target),
    }
}

/// Drops outcomes `>= class_count` and renormalizes the rest.
pub fn mask_and_normalize(raw: &[f64], class_count: usize) -> Result<Vec<f64>> {
    if class_count > raw.len() {
        return Err(Error::Dimension(format!(
            "{class_count} classes from {} outcomes",
            raw.len()
        )));
    }
    let kept = &raw[..class_count];
    let total: f64 = kept.iter().sum();
    if !(total > MASK_EPS) {
        return Err(Error::DegenerateMask);
    }
    Ok(kept.iter().map(|p| p / total).collect())
}

/// Index of the largest probability; ties go to the smallest index.
pub fn predict(probs: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &p) in probs.iter().enumerate() {
        if best.is_none_or(|(_, b)| p > b) {
            best = Some((i, p));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::EmptyProbabilities)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(v: &[u8]) -> UStructure {
        UStructure::new(v.to_vec()).unwrap()
    }

    #[test]
    fn gate_table() {
        assert_eq!(GateKind::from_index(1).unwrap(), GateKind::X);
        assert_eq!(GateKind::from_index(8).unwrap(), GateKind::Cnot);
        assert_eq!(GateKind::from_index(13).unwrap(), GateKind::Crz);
        assert!(GateKind::from_index(0).is_err());
        assert!(GateKind::from_index(14).is_err());
        for (i, k) in GateKind::ALL.iter().enumerate() {
            assert_eq!(usize::from(k.index()), i + 1);
            assert_eq!(k.is_two_qubit(), i + 1 >= 8);
        }
        let params: Vec<u8> = GateKind::ALL
            .iter()
            .filter(|k| k.is_parameterized())
            .map(|k| k.index())
            .collect();
        assert_eq!(params, vec![5, 6, 7, 11, 12, 13]);
    }

    #[test]
    fn decode_examples() {
        let g = decode_gate(5, (2, 3)).unwrap();
        assert_eq!((g.kind, g.control, g.target), (GateKind::Rx, None, 2));
        let g = decode_gate(6, (2, 3)).unwrap();
        assert_eq!((g.kind, g.control, g.target), (GateKind::Ry, None, 3));
        let g = decode_gate(8, (0, 1)).unwrap();
        assert_eq!((g.kind, g.control, g.target), (GateKind::Cnot, Some(1), 0));
        let g = decode_gate(13, (0, 1)).unwrap();
        assert_eq!((g.kind, g.control, g.target), (GateKind::Crz, Some(0), 1));
        assert!(matches!(decode_gate(14, (0, 1)), Err(Error::GateIndex(14))));
        assert!(decode_gate(3, (1, 1)).is_err());
    }

    #[test]
    fn layout_two_classes_eight_qubits() {
        let l = build_layout(8, 2, u(&[13, 9, 11])).unwrap();
        assert_eq!(l.num_layers(), 3);
        let counts: Vec<usize> = l.layers().iter().map(|x| x.retained.len()).collect();
        assert_eq!(counts, vec![4, 2, 1]);
        assert_eq!(l.layers()[0].retained, vec![0, 2, 4, 6]);
        assert_eq!(l.layers()[1].retained, vec![0, 4]);
        assert_eq!(l.measured_qubits(), &[0]);
    }

    #[test]
    fn layout_three_classes_eight_qubits() {
        let l = build_layout(8, 3, u(&[13, 9, 6, 1, 10, 12, 8])).unwrap();
        assert_eq!(l.num_layers(), 3);
        let counts: Vec<usize> = l.layers().iter().map(|x| x.retained.len()).collect();
        assert_eq!(counts, vec![8, 4, 2]);
        assert_eq!(l.measured_qubits().len(), 2);
        assert_eq!(l.count_parameters(), 15);
    }

    #[test]
    fn layout_smallest() {
        let l = build_layout(2, 2, u(&[4])).unwrap();
        assert_eq!(l.num_layers(), 1);
        assert_eq!(l.layers()[0].conv_pairs, vec![(0, 1)]);
        assert_eq!(l.layers()[0].pool_pairs, vec![(0, 1)]);
        assert_eq!(l.gate_cost(), 3);
    }

    #[test]
    fn layout_errors() {
        assert!(build_layout(3, 2, u(&[1])).is_err());
        assert!(build_layout(2, 5, u(&[1])).is_err());
        assert!(build_layout(2, 1, u(&[1])).is_err());
        assert!(UStructure::new(vec![]).is_err());
        assert!(UStructure::new(vec![0]).is_err());
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(
            build_layout(8, 2, u(&[13, 9, 11]))
                .unwrap()
                .count_parameters(),
            12
        );
        assert_eq!(
            build_layout(8, 2, u(&[3, 8, 9, 11, 7, 5, 12, 7]))
                .unwrap()
                .count_parameters(),
            21
        );
        assert_eq!(
            build_layout(8, 2, u(&[1, 2, 8, 10]))
                .unwrap()
                .count_parameters(),
            6
        );
    }

    #[test]
    fn gate_cost_eight_qubits() {
        let l = build_layout(8, 2, u(&[1, 2, 3, 4, 8, 9])).unwrap();
        assert_eq!(l.gate_cost(), 80);
        let wide = build_layout(16, 2, u(&[1, 2, 3, 4, 8, 9])).unwrap();
        // one more layer: 15+7+3+1 U modules and 8+4+2+1 V modules
        assert_eq!(wide.gate_cost(), 26 * 6 + 15 * 2);
    }

    #[test]
    fn identity_forward_uniform() {
        let l = build_layout(2, 2, u(&[4])).unwrap();
        let input = crate::encode::amplitude_encode(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        let p = l.forward(&[0.0, 0.0], &input).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn masking_three_classes() {
        let p = mask_and_normalize(&[0.2, 0.3, 0.4, 0.1], 3).unwrap();
        let want = [2.0 / 9.0, 3.0 / 9.0, 4.0 / 9.0];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(predict(&p).unwrap(), 2);
        assert!(matches!(
            mask_and_normalize(&[0.0, 0.0, 0.0, 1.0], 3),
            Err(Error::DegenerateMask)
        ));
    }

    #[test]
    fn predict_rules() {
        assert_eq!(predict(&[0.1, 0.9]).unwrap(), 1);
        assert_eq!(predict(&[0.5, 0.5]).unwrap(), 0);
        assert!(predict(&[]).is_err());
    }

    #[test]
    fn forward_checks_lengths() {
        let l = build_layout(2, 2, u(&[5])).unwrap();
        let input = StateVector::zero(2).unwrap();
        assert!(matches!(
            l.forward(&[0.0; 2], &input),
            Err(Error::ParamLength { .. })
        ));
        let wrong = StateVector::zero(3).unwrap();
        assert!(matches!(
            l.forward(&[0.0; 3], &wrong),
            Err(Error::InputQubits { .. })
        ));
    }

    #[test]
    fn parameter_slices() {
        let l = build_layout(4, 2, u(&[5, 9, 12])).unwrap();
        let theta: Vec<f64> = (0..l.count_parameters()).map(|i| i as f64).collect();
        assert_eq!(l.u_params(&theta, 1), &[4.0, 5.0]);
        assert_eq!(l.v_params(&theta, 1), &[6.0, 7.0]);
    }
}
