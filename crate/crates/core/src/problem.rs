//! Binary and spin problem forms, the MIS encoding, and the gap metrics
//! that every search stage optimizes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bits::Bitstring;

/// Default MIS penalty. Anything strictly above 1 makes QUBO minima coincide
/// with maximum independent sets.
pub const DEFAULT_MIS_PENALTY: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProblemError {
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("vertex {vertex} out of range for graph with {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("variable {index} out of range for width {n}")]
    VariableOutOfRange { index: usize, n: usize },
    #[error("bitstring has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("MIS penalty must be > 1, got {0}")]
    PenaltyTooSmall(f64),
    #[error("optimum size must be >= 1")]
    ZeroOptimum,
    #[error("reference cost must be positive, got {0}")]
    NonPositiveReference(f64),
}

/// Undirected simple graph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphInstance {
    pub name: String,
    n: usize,
    /// Sorted, deduplicated, each pair stored as `(min, max)`.
    edges: Vec<(usize, usize)>,
}

impl GraphInstance {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, ProblemError> {
        let mut normalized = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(ProblemError::SelfLoop(u));
            }
            for w in [u, v] {
                if w >= n {
                    return Err(ProblemError::VertexOutOfRange { vertex: w, n });
                }
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        Ok(GraphInstance {
            name: name.into(),
            n,
            edges: normalized,
        })
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Self::new(format!("K{n}"), n, edges).expect("complete graph is valid")
    }

    pub fn cycle(n: usize) -> Self {
        let edges = (0..n).map(|i| (i, (i + 1) % n));
        Self::new(format!("C{n}"), n, edges).expect("cycle is valid for n >= 3")
    }

    pub fn path(n: usize) -> Self {
        let edges = (1..n).map(|i| (i - 1, i));
        Self::new(format!("P{n}"), n, edges).expect("path is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }
}

/// `offset + Σ linear_i b_i + Σ_{i<j} quadratic_ij b_i b_j` over `b ∈ {0,1}^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboProblem {
    n: usize,
    linear: Vec<f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

impl QuboProblem {
    pub fn new(n: usize) -> Self {
        QuboProblem {
            n,
            linear: vec![0.0; n],
            quadratic: BTreeMap::new(),
            offset: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn quadratic(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.quadratic
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn add_offset(&mut self, value: f64) {
        self.offset += value;
    }

    pub fn add_linear(&mut self, i: usize, value: f64) {
        assert!(i < self.n, "variable {i} out of range");
        self.linear[i] += value;
    }

    /// Accumulates onto the `(min, max)` key. `i == j` folds into the linear
    /// term since `b² = b`.
    pub fn add_quadratic(&mut self, i: usize, j: usize, value: f64) {
        assert!(i < self.n && j < self.n, "variable pair ({i},{j}) out of range");
        if i == j {
            self.linear[i] += value;
            return;
        }
        *self.quadratic.entry((i.min(j), i.max(j))).or_insert(0.0) += value;
    }

    pub fn evaluate(&self, bits: &Bitstring) -> Result<f64, ProblemError> {
        if bits.len() != self.n {
            return Err(ProblemError::LengthMismatch {
                expected: self.n,
                got: bits.len(),
            });
        }
        Ok(self.evaluate_unchecked(bits.as_slice()))
    }

    pub(crate) fn evaluate_unchecked(&self, bits: &[bool]) -> f64 {
        let mut e = self.offset;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                e += self.linear[i];
            }
        }
        for (&(i, j), &c) in &self.quadratic {
            if bits[i] && bits[j] {
                e += c;
            }
        }
        e
    }

    /// Neighbour lists of the interaction graph (pairs with a stored
    /// quadratic entry, including explicit zeros).
    pub fn interaction_graph(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in self.quadratic.keys() {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.linear
            .iter()
            .chain(self.quadratic.values())
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }
}

/// `offset + Σ h_i z_i + Σ_{i<j} J_ij z_i z_j` over `z ∈ {+1,-1}^n`, with
/// `z_i = 1 - 2 b_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingHamiltonian {
    n: usize,
    fields: Vec<f64>,
    couplings: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

impl IsingHamiltonian {
    pub fn new(n: usize) -> Self {
        IsingHamiltonian {
            n,
            fields: vec![0.0; n],
            couplings: BTreeMap::new(),
            offset: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn couplings(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.couplings
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn add_offset(&mut self, value: f64) {
        self.offset += value;
    }

    pub fn add_field(&mut self, i: usize, value: f64) {
        assert!(i < self.n, "spin {i} out of range");
        self.fields[i] += value;
    }

    pub fn add_coupling(&mut self, i: usize, j: usize, value: f64) {
        assert!(i < self.n && j < self.n && i != j, "bad spin pair ({i},{j})");
        *self.couplings.entry((i.min(j), i.max(j))).or_insert(0.0) += value;
    }

    /// Energy of a spin configuration (entries must be ±1).
    pub fn energy(&self, spins: &[i8]) -> f64 {
        debug_assert_eq!(spins.len(), self.n);
        let mut e = self.offset;
        for (h, &z) in self.fields.iter().zip(spins) {
            e += h * f64::from(z);
        }
        for (&(i, j), &c) in &self.couplings {
            e += c * f64::from(spins[i] * spins[j]);
        }
        e
    }

    pub fn energy_of_bits(&self, bits: &Bitstring) -> f64 {
        let spins: Vec<i8> = bits.iter().map(|b| if b { -1 } else { 1 }).collect();
        self.energy(&spins)
    }

    /// Energy of computational basis state `index` (bit i is qubit i).
    pub fn energy_of_index(&self, index: u64) -> f64 {
        let z = |i: usize| if (index >> i) & 1 == 1 { -1.0 } else { 1.0 };
        let mut e = self.offset;
        for (i, h) in self.fields.iter().enumerate() {
            e += h * z(i);
        }
        for (&(i, j), &c) in &self.couplings {
            e += c * z(i) * z(j);
        }
        e
    }

    /// All `2^n` diagonal entries, built incrementally (one pass per term).
    pub fn diagonal(&self) -> Vec<f64> {
        let dim = 1usize << self.n;
        let mut diag = vec![self.offset; dim];
        for (i, &h) in self.fields.iter().enumerate() {
            if h == 0.0 {
                continue;
            }
            for (k, d) in diag.iter_mut().enumerate() {
                *d += if (k >> i) & 1 == 1 { -h } else { h };
            }
        }
        for (&(i, j), &c) in &self.couplings {
            if c == 0.0 {
                continue;
            }
            for (k, d) in diag.iter_mut().enumerate() {
                let parity = ((k >> i) ^ (k >> j)) & 1;
                *d += if parity == 1 { -c } else { c };
            }
        }
        diag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapScore {
    pub value: f64,
    pub feasible: bool,
    pub objective: f64,
}

impl GapScore {
    pub fn infeasible(objective: f64) -> Self {
        GapScore {
            value: 1.0,
            feasible: false,
            objective,
        }
    }
}

/// `-Σ x_i + P Σ_{(i,j)∈E} x_i x_j`.
pub fn mis_to_qubo(graph: &GraphInstance, penalty: f64) -> Result<QuboProblem, ProblemError> {
    if !(penalty > 1.0) {
        return Err(ProblemError::PenaltyTooSmall(penalty));
    }
    let mut q = QuboProblem::new(graph.n());
    for i in 0..graph.n() {
        q.add_linear(i, -1.0);
    }
    for &(u, v) in graph.edges() {
        q.add_quadratic(u, v, penalty);
    }
    Ok(q)
}

/// Substitutes `x_i = (1 - z_i) / 2`.
pub fn qubo_to_ising(q: &QuboProblem) -> IsingHamiltonian {
    let mut h = IsingHamiltonian::new(q.n());
    h.add_offset(q.offset());
    for (i, &a) in q.linear().iter().enumerate() {
        h.add_offset(a / 2.0);
        h.add_field(i, -a / 2.0);
    }
    for (&(i, j), &b) in q.quadratic() {
        h.add_offset(b / 4.0);
        h.add_field(i, -b / 4.0);
        h.add_field(j, -b / 4.0);
        h.add_coupling(i, j, b / 4.0);
    }
    h
}

/// Substitutes `z_i = 1 - 2 x_i`.
pub fn ising_to_qubo(h: &IsingHamiltonian) -> QuboProblem {
    let mut q = QuboProblem::new(h.n());
    q.add_offset(h.offset());
    for (i, &f) in h.fields().iter().enumerate() {
        q.add_offset(f);
        q.add_linear(i, -2.0 * f);
    }
    for (&(i, j), &c) in h.couplings() {
        q.add_offset(c);
        q.add_linear(i, -2.0 * c);
        q.add_linear(j, -2.0 * c);
        q.add_quadratic(i, j, 4.0 * c);
    }
    q
}

pub fn evaluate_qubo(q: &QuboProblem, bits: &Bitstring) -> Result<f64, ProblemError> {
    q.evaluate(bits)
}

pub fn is_independent_set(graph: &GraphInstance, bits: &Bitstring) -> bool {
    debug_assert_eq!(bits.len(), graph.n());
    graph
        .edges()
        .iter()
        .all(|&(u, v)| !(bits.get(u) && bits.get(v)))
}

/// `(opt - |S|) / opt` for an independent set `S`, 1.0 otherwise.
pub fn mis_gap(
    graph: &GraphInstance,
    bits: &Bitstring,
    opt_size: usize,
) -> Result<GapScore, ProblemError> {
    if opt_size == 0 {
        return Err(ProblemError::ZeroOptimum);
    }
    if bits.len() != graph.n() {
        return Err(ProblemError::LengthMismatch {
            expected: graph.n(),
            got: bits.len(),
        });
    }
    let found = bits.count_ones();
    if !is_independent_set(graph, bits) {
        return Ok(GapScore::infeasible(found as f64));
    }
    let value = (opt_size as f64 - found as f64) / opt_size as f64;
    Ok(GapScore {
        value: value.clamp(0.0, 1.0),
        feasible: true,
        objective: found as f64,
    })
}

/// `(routed - reference) / routed`, clamped to `[0, 1]` when the routed cost
/// undercuts a heuristic reference.
pub fn cvrp_gap(routed_cost: f64, reference_cost: f64) -> Result<GapScore, ProblemError> {
    if !(reference_cost > 0.0) {
        return Err(ProblemError::NonPositiveReference(reference_cost));
    }
    let value = (routed_cost - reference_cost) / routed_cost;
    Ok(GapScore {
        value: value.clamp(0.0, 1.0),
        feasible: true,
        objective: routed_cost,
    })
}
