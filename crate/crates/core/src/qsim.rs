//! Dense state-vector simulation of small qubit registers.
//!
//! Qubit 0 is the most significant bit of the basis index, so the basis
//! state `|q0 q1 ... q(n-1)>` has index `q0·2^(n-1) + ... + q(n-1)`.
//! Marginal bitstrings follow the same convention: the first measured
//! qubit is the leftmost (most significant) bit of the outcome.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A 2×2 complex matrix in row-major order.
pub type Mat2 = [[Complex64; 2]; 2];

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

/// A 2×2 unitary, checked on construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unitary2(Mat2);

impl Unitary2 {
    pub fn new(m: Mat2) -> Result<Self> {
        let dev = unitarity_deviation(&m);
        if dev > 1e-12 {
            return Err(Error::NotUnitary(dev));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn identity() -> Self {
        Self([[C1, C0], [C0, C1]])
    }

    pub fn x() -> Self {
        Self([[C0, C1], [C1, C0]])
    }

    pub fn y() -> Self {
        let i = Complex64::i();
        Self([[C0, -i], [i, C0]])
    }

    pub fn z() -> Self {
        Self([[C1, C0], [C0, -C1]])
    }

    pub fn rx(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        let mis = Complex64::new(0.0, -s);
        Self([[Complex64::new(c, 0.0), mis], [mis, Complex64::new(c, 0.0)]])
    }

    pub fn ry(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Self([
            [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
            [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
        ])
    }

    pub fn rz(theta: f64) -> Self {
        let half = theta / 2.0;
        Self([
            [Complex64::from_polar(1.0, -half), C0],
            [C0, Complex64::from_polar(1.0, half)],
        ])
    }
}

fn unitarity_deviation(m: &Mat2) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            // (U†U)[r][c] = Σ_k conj(U[k][r]) U[k][c]
            let v = m[0][r].conj() * m[0][c] + m[1][r].conj() * m[1][c];
            let target = if r == c { C1 } else { C0 };
            worst = worst.max((v - target).norm());
        }
    }
    worst
}

/// Complex amplitudes of a `num_qubits`-qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The all-zeros basis state `|0...0>`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits >= usize::BITS as usize {
            return Err(Error::BadStateLength { len: 0, num_qubits });
        }
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::QubitOutOfRange { index, num_qubits });
        }
        let mut amplitudes = vec![C0; dim];
        amplitudes[index] = C1;
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Builds a state from raw amplitudes. The vector must have power-of-two
    /// length ≥ 2 and unit norm within 1e-9.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::BadStateLength {
                len,
                num_qubits: len.max(1).ilog2() as usize,
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Dimension(format!("state norm {norm} is not 1")));
        }
        Ok(Self {
            num_qubits: len.ilog2() as usize,
            amplitudes,
        })
    }

    pub(crate) fn from_amplitudes_unchecked(num_qubits: usize, amplitudes: Vec<Complex64>) -> Self {
        debug_assert_eq!(amplitudes.len(), 1 << num_qubits);
        Self {
            num_qubits,
            amplitudes,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.num_qubits {
            return Err(Error::QubitOutOfRange {
                index: q,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    fn mask(&self, q: usize) -> usize {
        1 << (self.num_qubits - 1 - q)
    }

    /// Applies `gate` to `qubit`, i.e. `(I ⊗ … ⊗ gate ⊗ … ⊗ I)|ψ>`.
    pub fn apply_single(&mut self, gate: &Unitary2, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        self.apply_matrix(gate.matrix(), qubit);
        Ok(())
    }

    /// Applies `gate` to `target` on the subspace where `control` is 1.
    pub fn apply_controlled(
        &mut self,
        control: usize,
        target: usize,
        gate: &Unitary2,
    ) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::SameControlTarget(control));
        }
        self.apply_controlled_matrix(control, target, gate.matrix());
        Ok(())
    }

    /// Unchecked kernel shared with the derivative pass; `m` need not be unitary.
    pub(crate) fn apply_matrix(&mut self, m: &Mat2, qubit: usize) {
        let mask = self.mask(qubit);
        for i in 0..self.amplitudes.len() {
            if i & mask == 0 {
                let j = i | mask;
                let (a, b) = (self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = m[0][0] * a + m[0][1] * b;
                self.amplitudes[j] = m[1][0] * a + m[1][1] * b;
            }
        }
    }

    pub(crate) fn apply_controlled_matrix(&mut self, control: usize, target: usize, m: &Mat2) {
        let cmask = self.mask(control);
        let tmask = self.mask(target);
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                let j = i | tmask;
                let (a, b) = (self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = m[0][0] * a + m[0][1] * b;
                self.amplitudes[j] = m[1][0] * a + m[1][1] * b;
            }
        }
    }

    /// Zeroes every amplitude whose `control` bit is 0. Used for the
    /// derivative of controlled rotations, whose generator lives only on
    /// the control-set subspace.
    pub(crate) fn project_control(&mut self, control: usize) {
        let cmask = self.mask(control);
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if i & cmask == 0 {
                *a = C0;
            }
        }
    }

    /// `<self|other>`.
    pub(crate) fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Computational-basis probabilities of the `measured` qubits, traced
    /// over the rest. Entry `c` reads `measured[0]` as its most significant bit.
    pub fn marginal_probabilities(&self, measured: &[usize]) -> Result<Vec<f64>> {
        if measured.is_empty() {
            return Err(Error::EmptyMeasurement);
        }
        let mut seen = vec![false; self.num_qubits];
        for &q in measured {
            self.check_qubit(q)?;
            if std::mem::replace(&mut seen[q], true) {
                return Err(Error::DuplicateQubit(q));
            }
        }
        let masks: Vec<usize> = measured.iter().map(|&q| self.mask(q)).collect();
        let mut probs = vec![0.0; 1 << measured.len()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            probs[outcome_index(i, &masks)] += a.norm_sqr();
        }
        Ok(probs)
    }
}

/// Maps a basis index to its outcome index over the measured-qubit masks.
pub(crate) fn outcome_index(basis: usize, masks: &[usize]) -> usize {
    masks
        .iter()
        .fold(0, |acc, &m| (acc << 1) | usize::from(basis & m != 0))
}
