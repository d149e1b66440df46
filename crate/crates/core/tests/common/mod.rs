#![allow(dead_code)]

use num_complex::Complex64;
use qfed_core::circuit::{decode_gate, GateKind, PlacedGate};
use qfed_core::qsim::{StateVector, Unitary2};
use rand::Rng;

pub type Dense = Vec<Vec<Complex64>>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn kron(a: &Dense, b: &Dense) -> Dense {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0); n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn small(m: &[[Complex64; 2]; 2]) -> Dense {
    vec![m[0].to_vec(), m[1].to_vec()]
}

fn eye2() -> Dense {
    vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(1.0)]]
}

/// Tensor product over all qubits, qubit 0 leftmost.
fn embed(n: usize, factors: &[(usize, Dense)]) -> Dense {
    let mut out = vec![vec![c(1.0)]];
    for q in 0..n {
        let f = factors
            .iter()
            .find(|(k, _)| *k == q)
            .map_or_else(eye2, |(_, m)| m.clone());
        out = kron(&out, &f);
    }
    out
}

pub fn add(a: &Dense, b: &Dense) -> Dense {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn matvec(m: &Dense, v: &[Complex64]) -> Vec<Complex64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Full-register matrix of a placed gate.
pub fn dense_gate(n: usize, gate: &PlacedGate, theta: f64) -> Dense {
    let u = small(gate.kind.unitary(theta).matrix());
    match gate.control {
        None => embed(n, &[(gate.target, u)]),
        Some(ctl) => {
            let p0 = vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(0.0)]];
            let p1 = vec![vec![c(0.0), c(0.0)], vec![c(0.0), c(1.0)]];
            add(
                &embed(n, &[(ctl, p0)]),
                &embed(n, &[(ctl, p1), (gate.target, u)]),
            )
        }
    }
}

pub fn apply(state: &mut StateVector, gate: &PlacedGate, theta: f64) {
    let u: Unitary2 = gate.kind.unitary(theta);
    match gate.control {
        None => state.apply_single(&u, gate.target).unwrap(),
        Some(ctl) => state.apply_controlled(ctl, gate.target, &u).unwrap(),
    }
}

pub fn random_state(n: usize, rng: &mut impl Rng) -> StateVector {
    let raw: Vec<Complex64> = (0..1 << n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(raw.into_iter().map(|a| a / norm).collect()).unwrap()
}

/// A random gate on an ordered pair of distinct qubits.
pub fn random_gate(n: usize, rng: &mut impl Rng) -> (PlacedGate, f64) {
    let kind = GateKind::ALL[rng.random_range(0..13)];
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    let gate = decode_gate(i64::from(kind.index()), (a, b)).unwrap();
    (
        gate,
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

/// Largest amplitude deviation between simulator and dense product over a
/// random circuit of `depth` gates.
pub fn oracle_deviation(n: usize, depth: usize, rng: &mut impl Rng) -> f64 {
    let mut state = random_state(n, rng);
    let mut dense = state.amplitudes().to_vec();
    for _ in 0..depth {
        let (g, theta) = random_gate(n, rng);
        apply(&mut state, &g, theta);
        dense = matvec(&dense_gate(n, &g, theta), &dense);
    }
    state
        .amplitudes()
        .iter()
        .zip(&dense)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

/// O(M²) count of ordered same-label pairs over M².
pub fn pairwise_sparsity(labels: &[usize]) -> f64 {
    let m = labels.len();
    let mut same = 0usize;
    for i in 0..m {
        for j in 0..m {
            same += usize::from(labels[i] == labels[j]);
        }
    }
    same as f64 / (m * m) as f64
}
