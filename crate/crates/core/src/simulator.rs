//! Dense statevector simulation over a minimal gate set, with diagonal and
//! Pauli-sum expectations and seeded multinomial sampling.
//!
//! Qubit `q` is bit `q` of the amplitude index (little-endian). Rotations
//! follow `R_P(θ) = exp(-i θ P / 2)`. Global phase is not tracked.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{Bitstring, Counts};
use crate::problem::IsingHamiltonian;

/// Dense amplitude storage is `2^n`; beyond this we refuse.
pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("{0} qubits exceeds the simulator cap of {MAX_QUBITS}")]
    TooWide(usize),
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("width mismatch: state has {state} qubits, operator has {operator}")]
    WidthMismatch { state: usize, operator: usize },
    #[error("gate {index} references qubit {qubit} on a {n}-qubit circuit")]
    QubitOutOfRange { index: usize, qubit: usize, n: usize },
    #[error("gate {index} references parameter {param} but the circuit has {n_params}")]
    ParamOutOfRange {
        index: usize,
        param: usize,
        n_params: usize,
    },
    #[error("{0}")]
    MissingInput(&'static str),
}

/// A rotation angle: fixed, or `scale * params[index]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    Fixed(f64),
    Param { index: usize, scale: f64 },
}

impl Angle {
    pub fn param(index: usize) -> Self {
        Angle::Param { index, scale: 1.0 }
    }

    fn resolve(&self, params: &[f64]) -> f64 {
        match *self {
            Angle::Fixed(v) => v,
            Angle::Param { index, scale } => scale * params[index],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    H(usize),
    Rx(usize, Angle),
    Ry(usize, Angle),
    Rz(usize, Angle),
    Cx(usize, usize),
    Cz(usize, usize),
}

impl Gate {
    fn qubits(&self) -> (usize, Option<usize>) {
        match *self {
            Gate::H(q) | Gate::Rx(q, _) | Gate::Ry(q, _) | Gate::Rz(q, _) => (q, None),
            Gate::Cx(a, b) | Gate::Cz(a, b) => (a, Some(b)),
        }
    }

    fn angle(&self) -> Option<&Angle> {
        match self {
            Gate::Rx(_, a) | Gate::Ry(_, a) | Gate::Rz(_, a) => Some(a),
            _ => None,
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Gate::Cx(..) | Gate::Cz(..))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub n_params: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitStats {
    pub total_gates: usize,
    pub two_qubit_gates: usize,
    /// Greedy layering: each gate sits one layer after the latest gate on
    /// any of its qubits.
    pub depth: usize,
}

impl CircuitSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_qubits > MAX_QUBITS {
            return Err(SimError::TooWide(self.n_qubits));
        }
        for (index, gate) in self.gates.iter().enumerate() {
            let (a, b) = gate.qubits();
            for qubit in std::iter::once(a).chain(b) {
                if qubit >= self.n_qubits {
                    return Err(SimError::QubitOutOfRange {
                        index,
                        qubit,
                        n: self.n_qubits,
                    });
                }
            }
            if b == Some(a) {
                return Err(SimError::QubitOutOfRange {
                    index,
                    qubit: a,
                    n: self.n_qubits,
                });
            }
            if let Some(Angle::Param { index: param, .. }) = gate.angle() {
                if *param >= self.n_params {
                    return Err(SimError::ParamOutOfRange {
                        index,
                        param: *param,
                        n_params: self.n_params,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> CircuitStats {
        let mut layer = vec![0usize; self.n_qubits];
        let mut depth = 0;
        for gate in &self.gates {
            let (a, b) = gate.qubits();
            let l = 1 + b.map_or(layer[a], |b| layer[a].max(layer[b]));
            layer[a] = l;
            if let Some(b) = b {
                layer[b] = l;
            }
            depth = depth.max(l);
        }
        CircuitStats {
            total_gates: self.gates.len(),
            two_qubit_gates: self.gates.iter().filter(|g| g.is_two_qubit()).count(),
            depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    pub fn zero(n_qubits: usize) -> Result<Self, SimError> {
        if n_qubits > MAX_QUBITS {
            return Err(SimError::TooWide(n_qubits));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Statevector { n_qubits, amps })
    }

    /// Wraps amplitudes as given; the caller is responsible for the norm.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, SimError> {
        let n_qubits = amps.len().trailing_zeros() as usize;
        assert!(amps.len().is_power_of_two(), "amplitude count must be 2^n");
        if n_qubits > MAX_QUBITS {
            return Err(SimError::TooWide(n_qubits));
        }
        Ok(Statevector { n_qubits, amps })
    }

    /// Product state from per-qubit `(amp0, amp1)` pairs.
    pub fn product(qubits: &[(Complex64, Complex64)]) -> Result<Self, SimError> {
        let n = qubits.len();
        if n > MAX_QUBITS {
            return Err(SimError::TooWide(n));
        }
        let amps = (0..1usize << n)
            .map(|k| {
                qubits
                    .iter()
                    .enumerate()
                    .fold(Complex64::new(1.0, 0.0), |acc, (q, &(a0, a1))| {
                        acc * if (k >> q) & 1 == 1 { a1 } else { a0 }
                    })
            })
            .collect();
        Ok(Statevector { n_qubits: n, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn apply(&mut self, gate: &Gate, params: &[f64]) {
        match *gate {
            Gate::H(q) => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let h = [[s, s], [s, -s]].map(|r| r.map(|v| Complex64::new(v, 0.0)));
                self.apply_1q(q, h);
            }
            Gate::Rx(q, a) => {
                let t = a.resolve(params) / 2.0;
                let (c, s) = (t.cos(), t.sin());
                self.apply_1q(
                    q,
                    [
                        [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
                        [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
                    ],
                );
            }
            Gate::Ry(q, a) => {
                let t = a.resolve(params) / 2.0;
                let (c, s) = (t.cos(), t.sin());
                self.apply_1q(
                    q,
                    [
                        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
                    ],
                );
            }
            Gate::Rz(q, a) => {
                let t = a.resolve(params) / 2.0;
                let p0 = Complex64::from_polar(1.0, -t);
                let p1 = Complex64::from_polar(1.0, t);
                let mask = 1usize << q;
                for (k, amp) in self.amps.iter_mut().enumerate() {
                    *amp *= if k & mask == 0 { p0 } else { p1 };
                }
            }
            Gate::Cx(c, t) => {
                let (cm, tm) = (1usize << c, 1usize << t);
                for k in 0..self.amps.len() {
                    if k & cm != 0 && k & tm == 0 {
                        self.amps.swap(k, k | tm);
                    }
                }
            }
            Gate::Cz(a, b) => {
                let mask = (1usize << a) | (1usize << b);
                for (k, amp) in self.amps.iter_mut().enumerate() {
                    if k & mask == mask {
                        *amp = -*amp;
                    }
                }
            }
        }
    }

    /// Applies a 2x2 unitary `m` (row-major) to qubit `q`.
    pub fn apply_1q(&mut self, q: usize, m: [[Complex64; 2]; 2]) {
        let mask = 1usize << q;
        for k in 0..self.amps.len() {
            if k & mask == 0 {
                let (a0, a1) = (self.amps[k], self.amps[k | mask]);
                self.amps[k] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[k | mask] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }
}

/// Runs `c` on `|0…0⟩`.
pub fn simulate(c: &CircuitSpec, params: &[f64]) -> Result<Statevector, SimError> {
    c.validate()?;
    if params.len() != c.n_params {
        return Err(SimError::ParamCount {
            expected: c.n_params,
            got: params.len(),
        });
    }
    let mut state = Statevector::zero(c.n_qubits)?;
    for gate in &c.gates {
        state.apply(gate, params);
        debug_assert!(
            (state.norm_sqr() - 1.0).abs() < 1e-10,
            "norm drifted after {gate:?}"
        );
    }
    Ok(state)
}

pub fn expectation_diag(s: &Statevector, h: &IsingHamiltonian) -> Result<f64, SimError> {
    if s.n_qubits() != h.n() {
        return Err(SimError::WidthMismatch {
            state: s.n_qubits(),
            operator: h.n(),
        });
    }
    Ok(expectation_from_diagonal(s, &h.diagonal()))
}

/// `Σ_k |a_k|² diag[k]` for a precomputed diagonal.
pub fn expectation_from_diagonal(s: &Statevector, diag: &[f64]) -> f64 {
    s.amps
        .iter()
        .zip(diag)
        .map(|(a, d)| a.norm_sqr() * d)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// `coefficient · ⊗_q P_q`; an empty factor map is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub factors: BTreeMap<usize, Pauli>,
}

impl PauliTerm {
    pub fn identity(coefficient: f64) -> Self {
        PauliTerm {
            coefficient,
            factors: BTreeMap::new(),
        }
    }

    pub fn new(coefficient: f64, factors: impl IntoIterator<Item = (usize, Pauli)>) -> Self {
        PauliTerm {
            coefficient,
            factors: factors.into_iter().collect(),
        }
    }

    pub fn max_qubit(&self) -> Option<usize> {
        self.factors.keys().next_back().copied()
    }
}

/// `⟨s|P|s⟩` for a single Pauli string (coefficient ignored).
pub fn pauli_string_expectation(s: &Statevector, factors: &BTreeMap<usize, Pauli>) -> f64 {
    let (mut flip, mut sign_mask, mut n_y) = (0usize, 0usize, 0u32);
    for (&q, &p) in factors {
        match p {
            Pauli::X => flip |= 1 << q,
            Pauli::Y => {
                flip |= 1 << q;
                sign_mask |= 1 << q;
                n_y += 1;
            }
            Pauli::Z => sign_mask |= 1 << q,
        }
    }
    // P|k⟩ = i^{n_y} (-1)^{|k ∧ sign_mask|} |k ⊕ flip⟩
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &a) in s.amps.iter().enumerate() {
        if a.norm_sqr() == 0.0 {
            continue;
        }
        let sign = if (k & sign_mask).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        acc += s.amps[k ^ flip].conj() * a * sign;
    }
    let phase = match n_y % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    let value = acc * phase;
    debug_assert!(value.im.abs() < 1e-9, "non-real Pauli expectation {value}");
    value.re
}

pub fn expectation_pauli(s: &Statevector, terms: &[PauliTerm]) -> Result<f64, SimError> {
    if let Some(q) = terms.iter().filter_map(PauliTerm::max_qubit).max() {
        if q >= s.n_qubits() {
            return Err(SimError::WidthMismatch {
                state: s.n_qubits(),
                operator: q + 1,
            });
        }
    }
    Ok(terms
        .iter()
        .map(|t| {
            if t.factors.is_empty() {
                t.coefficient
            } else {
                t.coefficient * pauli_string_expectation(s, &t.factors)
            }
        })
        .sum())
}

/// Multinomial draw of basis-state indices from `|a_k|²`.
pub fn sample_indices(s: &Statevector, shots: u64, seed: u64) -> BTreeMap<u64, u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_indices_with(s, shots, &mut rng)
}

pub(crate) fn sample_indices_with(
    s: &Statevector,
    shots: u64,
    rng: &mut impl Rng,
) -> BTreeMap<u64, u64> {
    let mut cumulative = Vec::with_capacity(s.amps.len());
    let mut total = 0.0;
    for a in &s.amps {
        total += a.norm_sqr();
        cumulative.push(total);
    }
    let mut counts = BTreeMap::new();
    for _ in 0..shots {
        let u = rng.gen::<f64>() * total;
        let k = cumulative
            .partition_point(|&c| c <= u)
            .min(cumulative.len() - 1);
        *counts.entry(k as u64).or_insert(0) += 1;
    }
    counts
}

pub fn sample(s: &Statevector, shots: u64, seed: u64) -> Counts {
    sample_indices(s, shots, seed)
        .into_iter()
        .map(|(k, c)| (Bitstring::from_index(k, s.n_qubits()), c))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzKind {
    EfficientSu2,
    Qaoa,
    WsQaoa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entanglement {
    #[default]
    Linear,
    Full,
}

fn entangling_pairs(n: usize, entanglement: Entanglement) -> Vec<(usize, usize)> {
    match entanglement {
        Entanglement::Linear => (1..n).map(|i| (i - 1, i)).collect(),
        Entanglement::Full => (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect(),
    }
}

/// `exp(-i γ H)` for a diagonal Ising `H`, with `γ = params[param]`.
fn push_cost_layer(gates: &mut Vec<Gate>, h: &IsingHamiltonian, param: usize) {
    for (q, &field) in h.fields().iter().enumerate() {
        if field != 0.0 {
            gates.push(Gate::Rz(q, Angle::Param { index: param, scale: 2.0 * field }));
        }
    }
    for (&(i, j), &coupling) in h.couplings() {
        if coupling != 0.0 {
            gates.push(Gate::Cx(i, j));
            gates.push(Gate::Rz(j, Angle::Param { index: param, scale: 2.0 * coupling }));
            gates.push(Gate::Cx(i, j));
        }
    }
}

/// Builds one of the supported ansatz families. QAOA parameters are laid out
/// as `[γ_1, β_1, γ_2, β_2, …]`.
pub fn build_ansatz(
    kind: AnsatzKind,
    n: usize,
    reps: usize,
    entanglement: Entanglement,
    problem: Option<&IsingHamiltonian>,
    warm_start: Option<&[f64]>,
) -> Result<CircuitSpec, SimError> {
    if n > MAX_QUBITS {
        return Err(SimError::TooWide(n));
    }
    let mut gates = Vec::new();
    let n_params = match kind {
        AnsatzKind::EfficientSu2 => {
            let pairs = entangling_pairs(n, entanglement);
            let mut p = 0;
            for block in 0..=reps {
                for q in 0..n {
                    gates.push(Gate::Ry(q, Angle::param(p)));
                    p += 1;
                }
                for q in 0..n {
                    gates.push(Gate::Rz(q, Angle::param(p)));
                    p += 1;
                }
                if block < reps {
                    gates.extend(pairs.iter().map(|&(a, b)| Gate::Cx(a, b)));
                }
            }
            p
        }
        AnsatzKind::Qaoa | AnsatzKind::WsQaoa => {
            let h = problem.ok_or(SimError::MissingInput("QAOA ansatz requires a problem"))?;
            if h.n() != n {
                return Err(SimError::WidthMismatch {
                    state: n,
                    operator: h.n(),
                });
            }
            let thetas: Option<Vec<f64>> = match kind {
                AnsatzKind::WsQaoa => {
                    let c = warm_start
                        .ok_or(SimError::MissingInput("warm-start QAOA requires a warm-start vector"))?;
                    if c.len() != n {
                        return Err(SimError::MissingInput(
                            "warm-start vector length must equal the qubit count",
                        ));
                    }
                    Some(c.iter().map(|&ci| 2.0 * ci.sqrt().asin()).collect())
                }
                _ => None,
            };
            match &thetas {
                Some(thetas) => {
                    for (q, &t) in thetas.iter().enumerate() {
                        gates.push(Gate::Ry(q, Angle::Fixed(t)));
                    }
                }
                None => gates.extend((0..n).map(Gate::H)),
            }
            for layer in 0..reps {
                let (gamma, beta) = (2 * layer, 2 * layer + 1);
                push_cost_layer(&mut gates, h, gamma);
                match &thetas {
                    Some(thetas) => {
                        for (q, &t) in thetas.iter().enumerate() {
                            gates.push(Gate::Ry(q, Angle::Fixed(-t)));
                            gates.push(Gate::Rz(q, Angle::Param { index: beta, scale: -2.0 }));
                            gates.push(Gate::Ry(q, Angle::Fixed(t)));
                        }
                    }
                    None => {
                        for q in 0..n {
                            gates.push(Gate::Rx(q, Angle::Param { index: beta, scale: 2.0 }));
                        }
                    }
                }
            }
            2 * reps
        }
    };
    let c = CircuitSpec {
        n_qubits: n,
        gates,
        n_params,
    };
    c.validate()?;
    Ok(c)
}
