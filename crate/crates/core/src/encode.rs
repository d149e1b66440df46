//! Amplitude encoding of real feature vectors.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qsim::StateVector;

/// Number of qubits needed to hold `dim` amplitudes (at least one).
pub fn qubits_for_dimension(dim: usize) -> usize {
    if dim <= 2 {
        1
    } else {
        dim.next_power_of_two().ilog2() as usize
    }
}

/// Encodes `x` as `Σ_j x_j / ‖x‖₂ |j>`, zero-padding up to the next power of two.
pub fn amplitude_encode(x: &[f64]) -> Result<StateVector> {
    if x.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroFeatures);
    }
    let num_qubits = qubits_for_dimension(x.len());
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
    for (a, v) in amps.iter_mut().zip(x) {
        *a = Complex64::new(v / norm, 0.0);
    }
    Ok(StateVector::from_amplitudes_unchecked(num_qubits, amps))
}
