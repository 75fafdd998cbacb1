//! Quantum random access optimization: packing several binary variables
//! into one qubit, the relaxed Pauli Hamiltonian, and the two rounding
//! schemes that map a relaxed state back to bitstrings.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::{Bitstring, Counts};
use crate::problem::{IsingHamiltonian, QuboProblem};
use crate::simulator::{
    pauli_string_expectation, sample_indices_with, Pauli, PauliTerm, SimError, Statevector,
};

use super::config::QraoRatio;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    ratio: QraoRatio,
    buckets: Vec<Vec<usize>>,
    /// Variable -> (qubit, slot).
    position: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroupingError {
    #[error("grouping covers {grouping} variables, Hamiltonian has {problem}")]
    Width { grouping: usize, problem: usize },
    #[error("variables {0} and {1} share a qubit but interact")]
    Conflict(usize, usize),
    #[error("invalid grouping: {0}")]
    Invalid(String),
}

impl Grouping {
    /// Builds a grouping from explicit buckets, checking coverage and slot
    /// counts (not interaction independence).
    pub fn from_buckets(ratio: QraoRatio, buckets: Vec<Vec<usize>>) -> Result<Self, GroupingError> {
        let n: usize = buckets.iter().map(Vec::len).sum();
        let mut position = vec![(usize::MAX, 0); n];
        for (q, bucket) in buckets.iter().enumerate() {
            if bucket.is_empty() || bucket.len() > ratio.arity() {
                return Err(GroupingError::Invalid(format!(
                    "bucket {q} has {} members",
                    bucket.len()
                )));
            }
            for (slot, &v) in bucket.iter().enumerate() {
                if v >= n || position[v].0 != usize::MAX {
                    return Err(GroupingError::Invalid(format!("variable {v} misplaced")));
                }
                position[v] = (q, slot);
            }
        }
        Ok(Grouping {
            ratio,
            buckets,
            position,
        })
    }

    pub fn ratio(&self) -> QraoRatio {
        self.ratio
    }

    pub fn buckets(&self) -> &[Vec<usize>] {
        &self.buckets
    }

    pub fn n_qubits(&self) -> usize {
        self.buckets.len()
    }

    pub fn n_variables(&self) -> usize {
        self.position.len()
    }

    pub fn qubit_of(&self, var: usize) -> usize {
        self.position[var].0
    }

    pub fn pauli_of(&self, var: usize) -> Pauli {
        slot_pauli(self.ratio, self.position[var].1)
    }

    fn check(&self, h: &IsingHamiltonian) -> Result<(), GroupingError> {
        if self.n_variables() != h.n() {
            return Err(GroupingError::Width {
                grouping: self.n_variables(),
                problem: h.n(),
            });
        }
        for (&(i, j), &c) in h.couplings() {
            if c != 0.0 && self.qubit_of(i) == self.qubit_of(j) {
                return Err(GroupingError::Conflict(i, j));
            }
        }
        Ok(())
    }
}

fn slot_pauli(ratio: QraoRatio, slot: usize) -> Pauli {
    match (ratio, slot) {
        (QraoRatio::ThreeToOne, 0) | (QraoRatio::TwoToOne, 0) => Pauli::X,
        (QraoRatio::ThreeToOne, 1) => Pauli::Y,
        _ => Pauli::Z,
    }
}

/// Greedy packing: variables in descending interaction degree (lower id
/// first on ties) go into the first bucket with a free slot and no
/// neighbour already inside.
pub fn group_adjacency(adjacency: &[Vec<usize>], ratio: QraoRatio) -> Grouping {
    let n = adjacency.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(adjacency[v].len()));
    let mut buckets: Vec<Vec<usize>> = Vec::new();
    let mut qubit = vec![usize::MAX; n];
    for v in order {
        let slot = buckets.iter().position(|b| {
            b.len() < ratio.arity() && !adjacency[v].iter().any(|&u| qubit[u] != usize::MAX && b.contains(&u))
        });
        let q = match slot {
            Some(q) => q,
            None => {
                buckets.push(Vec::new());
                buckets.len() - 1
            }
        };
        buckets[q].push(v);
        qubit[v] = q;
    }
    Grouping::from_buckets(ratio, buckets).expect("greedy grouping is well formed")
}

pub fn qrao_group(q: &QuboProblem, ratio: QraoRatio) -> Grouping {
    group_adjacency(&q.interaction_graph(), ratio)
}

pub fn qrao_group_ising(h: &IsingHamiltonian, ratio: QraoRatio) -> Grouping {
    let mut adjacency = vec![Vec::new(); h.n()];
    for (&(i, j), &c) in h.couplings() {
        if c != 0.0 {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    group_adjacency(&adjacency, ratio)
}

/// Replaces each spin `z_i` by `√m·P_i`; the offset becomes an identity term.
pub fn qrao_relax(h: &IsingHamiltonian, grouping: &Grouping) -> Result<Vec<PauliTerm>, GroupingError> {
    grouping.check(h)?;
    let m = grouping.ratio.arity() as f64;
    let mut terms = Vec::new();
    if h.offset() != 0.0 {
        terms.push(PauliTerm::identity(h.offset()));
    }
    for (i, &field) in h.fields().iter().enumerate() {
        if field != 0.0 {
            terms.push(PauliTerm::new(
                field * m.sqrt(),
                [(grouping.qubit_of(i), grouping.pauli_of(i))],
            ));
        }
    }
    for (&(i, j), &c) in h.couplings() {
        if c != 0.0 {
            terms.push(PauliTerm::new(
                c * m,
                [
                    (grouping.qubit_of(i), grouping.pauli_of(i)),
                    (grouping.qubit_of(j), grouping.pauli_of(j)),
                ],
            ));
        }
    }
    Ok(terms)
}

/// Pure qubit state with the given unit Bloch vector.
fn bloch_state(r: [f64; 3]) -> (Complex64, Complex64) {
    let theta = r[2].clamp(-1.0, 1.0).acos();
    let phi = r[1].atan2(r[0]);
    (
        Complex64::new((theta / 2.0).cos(), 0.0),
        Complex64::from_polar((theta / 2.0).sin(), phi),
    )
}

/// Bloch vector of the magic state encoding `bits`; empty slots encode 0.
fn encoding_bloch(grouping: &Grouping, bucket: &[usize], bits: &Bitstring) -> [f64; 3] {
    let sign = |slot: usize| match bucket.get(slot) {
        Some(&v) if bits.get(v) => -1.0,
        _ => 1.0,
    };
    match grouping.ratio {
        QraoRatio::ThreeToOne => {
            let s = 3f64.sqrt();
            [sign(0) / s, sign(1) / s, sign(2) / s]
        }
        QraoRatio::TwoToOne => {
            let s = 2f64.sqrt();
            [sign(0) / s, 0.0, sign(1) / s]
        }
    }
}

/// Product of per-qubit magic states encoding `bits`.
pub fn encode_magic_state(grouping: &Grouping, bits: &Bitstring) -> Result<Statevector, SimError> {
    assert_eq!(bits.len(), grouping.n_variables(), "bitstring width");
    let qubits: Vec<_> = grouping
        .buckets
        .iter()
        .map(|b| bloch_state(encoding_bloch(grouping, b, bits)))
        .collect();
    Statevector::product(&qubits)
}

const TETRAHEDRAL: [[f64; 3]; 4] = [
    [1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
];

/// Maps the measurement axis `signs/√3` onto +Z: RZ(−φ) then RY(−θ).
fn basis_rotation(signs: [f64; 3]) -> [[Complex64; 2]; 2] {
    let s = 3f64.sqrt();
    let theta = (signs[2] / s).acos();
    let phi = signs[1].atan2(signs[0]);
    let (c, sn) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let e_minus = Complex64::from_polar(1.0, phi / 2.0);
    let e_plus = Complex64::from_polar(1.0, -phi / 2.0);
    // RY(−θ)·RZ(−φ), with RZ(a) = diag(e^{−ia/2}, e^{ia/2}).
    [
        [e_minus * c, e_plus * sn],
        [-e_minus * sn, e_plus * c],
    ]
}

fn check_width(s: &Statevector, grouping: &Grouping) -> Result<(), SimError> {
    if s.n_qubits() != grouping.n_qubits() {
        return Err(SimError::WidthMismatch {
            state: s.n_qubits(),
            operator: grouping.n_qubits(),
        });
    }
    Ok(())
}

/// Randomized tetrahedral-basis rounding; deterministic given `seed`.
pub fn magic_round(
    s: &Statevector,
    grouping: &Grouping,
    shots: u64,
    seed: u64,
) -> Result<Counts, SimError> {
    check_width(s, grouping)?;
    let nq = grouping.n_qubits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_basis: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    for _ in 0..shots {
        let choice: Vec<u8> = (0..nq).map(|_| rng.gen_range(0..4u8)).collect();
        *by_basis.entry(choice).or_insert(0) += 1;
    }
    let rotations: Vec<_> = TETRAHEDRAL.iter().map(|&b| basis_rotation(b)).collect();
    let mut counts = Counts::new();
    for (choice, n) in by_basis {
        let mut rotated = s.clone();
        for (q, &b) in choice.iter().enumerate() {
            rotated.apply_1q(q, rotations[b as usize]);
        }
        for (index, c) in sample_indices_with(&rotated, n, &mut rng) {
            let mut bits = Bitstring::zeros(grouping.n_variables());
            for (q, bucket) in grouping.buckets.iter().enumerate() {
                let flipped = (index >> q) & 1 == 1;
                let signs = TETRAHEDRAL[choice[q] as usize];
                for (slot, &v) in bucket.iter().enumerate() {
                    let axis = match (grouping.ratio, slot) {
                        (QraoRatio::TwoToOne, 1) => 2,
                        _ => slot,
                    };
                    let sign = if flipped { -signs[axis] } else { signs[axis] };
                    bits.set(v, sign < 0.0);
                }
            }
            *counts.entry(bits).or_insert(0) += c;
        }
    }
    Ok(counts)
}

/// Sign rounding of single-variable Pauli expectations; near-zero rounds to 0.
pub fn semideterministic_round(s: &Statevector, grouping: &Grouping) -> Result<Bitstring, SimError> {
    check_width(s, grouping)?;
    let mut bits = Bitstring::zeros(grouping.n_variables());
    for v in 0..grouping.n_variables() {
        let factors = BTreeMap::from([(grouping.qubit_of(v), grouping.pauli_of(v))]);
        bits.set(v, pauli_string_expectation(s, &factors) < -1e-12);
    }
    Ok(bits)
}
