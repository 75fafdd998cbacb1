//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use qpolicy_core::problem::IsingHamiltonian;
use qpolicy_core::simulator::{Angle, CircuitSpec, Gate, Pauli, PauliTerm};

pub type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

fn angle(a: &Angle, params: &[f64]) -> f64 {
    match *a {
        Angle::Fixed(v) => v,
        Angle::Param { index, scale } => scale * params[index],
    }
}

fn single(g: &Gate, params: &[f64]) -> Option<(usize, [[C; 2]; 2])> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    Some(match g {
        Gate::H(q) => (*q, [[c(r, 0.0), c(r, 0.0)], [c(r, 0.0), c(-r, 0.0)]]),
        Gate::Rx(q, a) => {
            let t = angle(a, params) / 2.0;
            (*q, [[c(t.cos(), 0.0), c(0.0, -t.sin())], [c(0.0, -t.sin()), c(t.cos(), 0.0)]])
        }
        Gate::Ry(q, a) => {
            let t = angle(a, params) / 2.0;
            (*q, [[c(t.cos(), 0.0), c(-t.sin(), 0.0)], [c(t.sin(), 0.0), c(t.cos(), 0.0)]])
        }
        Gate::Rz(q, a) => {
            let t = angle(a, params) / 2.0;
            (*q, [[C::from_polar(1.0, -t), c(0.0, 0.0)], [c(0.0, 0.0), C::from_polar(1.0, t)]])
        }
        _ => return None,
    })
}

/// Full `2^n × 2^n` matrix of one gate; qubit `q` is bit `q` of the index.
pub fn gate_matrix(g: &Gate, n: usize, params: &[f64]) -> DMatrix<C> {
    let dim = 1 << n;
    let mut m = DMatrix::from_element(dim, dim, c(0.0, 0.0));
    if let Some((q, u)) = single(g, params) {
        for i in 0..dim {
            for j in 0..dim {
                if (i ^ j) & !(1 << q) == 0 {
                    m[(i, j)] = u[(i >> q) & 1][(j >> q) & 1];
                }
            }
        }
        return m;
    }
    match *g {
        Gate::Cx(ctl, tgt) => {
            for j in 0..dim {
                let i = if (j >> ctl) & 1 == 1 { j ^ (1 << tgt) } else { j };
                m[(i, j)] = c(1.0, 0.0);
            }
        }
        Gate::Cz(a, b) => {
            for j in 0..dim {
                let s = if (j >> a) & 1 == 1 && (j >> b) & 1 == 1 { -1.0 } else { 1.0 };
                m[(j, j)] = c(s, 0.0);
            }
        }
        _ => unreachable!(),
    }
    m
}

/// Matrix-chain product applied to `|0…0⟩`.
pub fn dense_run(circuit: &CircuitSpec, params: &[f64]) -> DVector<C> {
    let dim = 1 << circuit.n_qubits;
    let mut v = DVector::from_element(dim, c(0.0, 0.0));
    v[0] = c(1.0, 0.0);
    for g in &circuit.gates {
        v = gate_matrix(g, circuit.n_qubits, params) * v;
    }
    v
}

pub fn random_circuit(rng: &mut impl Rng, n: usize, n_gates: usize) -> (CircuitSpec, Vec<f64>) {
    let n_params = 4;
    let params: Vec<f64> = (0..n_params).map(|_| rng.gen_range(-3.2..3.2)).collect();
    let mut gates = Vec::new();
    for _ in 0..n_gates {
        let q = rng.gen_range(0..n);
        let a = if rng.gen_bool(0.5) {
            Angle::Fixed(rng.gen_range(-3.2..3.2))
        } else {
            Angle::Param {
                index: rng.gen_range(0..n_params),
                scale: rng.gen_range(-2.0..2.0),
            }
        };
        let kind = rng.gen_range(0..if n > 1 { 6 } else { 4 });
        let other = if n > 1 { (q + rng.gen_range(1..n)) % n } else { q };
        gates.push(match kind {
            0 => Gate::H(q),
            1 => Gate::Rx(q, a),
            2 => Gate::Ry(q, a),
            3 => Gate::Rz(q, a),
            4 => Gate::Cx(q, other),
            _ => Gate::Cz(q, other),
        });
    }
    (
        CircuitSpec {
            n_qubits: n,
            gates,
            n_params,
        },
        params,
    )
}

pub fn random_ising(rng: &mut impl Rng, n: usize, density: f64) -> IsingHamiltonian {
    let mut h = IsingHamiltonian::new(n);
    for i in 0..n {
        if rng.gen_bool(0.8) {
            h.add_field(i, rng.gen_range(-2.0..2.0));
        }
        for j in i + 1..n {
            if rng.gen_bool(density) {
                h.add_coupling(i, j, rng.gen_range(-2.0..2.0));
            }
        }
    }
    h.add_offset(rng.gen_range(-1.0..1.0));
    h
}

/// Classical minimum of `h` by enumerating spin vectors directly.
pub fn ising_min(h: &IsingHamiltonian) -> f64 {
    let n = h.n();
    (0..1u64 << n)
        .map(|k| {
            let z: Vec<f64> = (0..n).map(|i| if (k >> i) & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let mut e = h.offset();
            for i in 0..n {
                e += h.fields()[i] * z[i];
            }
            for (&(i, j), &v) in h.couplings() {
                e += v * z[i] * z[j];
            }
            e
        })
        .fold(f64::INFINITY, f64::min)
}

fn pauli_matrix(p: Pauli) -> [[C; 2]; 2] {
    let (o, z) = (c(1.0, 0.0), c(0.0, 0.0));
    match p {
        Pauli::X => [[z, o], [o, z]],
        Pauli::Y => [[z, c(0.0, -1.0)], [c(0.0, 1.0), z]],
        Pauli::Z => [[o, z], [z, c(-1.0, 0.0)]],
    }
}

/// Dense Hermitian matrix of a Pauli sum on `n` qubits.
pub fn pauli_sum_matrix(terms: &[PauliTerm], n: usize) -> DMatrix<C> {
    let dim = 1 << n;
    let mut m = DMatrix::from_element(dim, dim, c(0.0, 0.0));
    for t in terms {
        for i in 0..dim {
            for j in 0..dim {
                let mut v = c(t.coefficient, 0.0);
                for q in 0..n {
                    let (bi, bj) = ((i >> q) & 1, (j >> q) & 1);
                    v *= match t.factors.get(&q) {
                        Some(&p) => pauli_matrix(p)[bi][bj],
                        None if bi == bj => c(1.0, 0.0),
                        None => c(0.0, 0.0),
                    };
                    if v == c(0.0, 0.0) {
                        break;
                    }
                }
                m[(i, j)] += v;
            }
        }
    }
    m
}

pub fn min_eigenvalue(m: DMatrix<C>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Shortest closed tour from `depot` over `nodes` by trying every order.
pub fn tsp_brute_force(dist: &[Vec<f64>], nodes: &[usize], depot: usize) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    nodes
        .iter()
        .permutations(nodes.len())
        .map(|perm| {
            let mut cost = dist[depot][*perm[0]];
            for w in perm.windows(2) {
                cost += dist[*w[0]][*w[1]];
            }
            cost + dist[*perm[perm.len() - 1]][depot]
        })
        .fold(f64::INFINITY, f64::min)
}
