//! Variational solver families (VQE, QAOA, warm-start QAOA, QRAO) on top of
//! the statevector simulator, plus per-attempt diagnostics.

pub mod config;
pub mod objective;
pub mod optimizer;
pub mod qrao;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::bits::{Bitstring, Counts};
use crate::problem::{ising_to_qubo, GapScore, IsingHamiltonian, QuboProblem};
use crate::seed::derive_seed;
use crate::simulator::{
    build_ansatz, expectation_from_diagonal, pauli_string_expectation, sample_indices,
    simulate, AnsatzKind, CircuitSpec, PauliTerm, SimError, Statevector,
};

pub use config::{Family, Objective, OptimizerKind, QraoRatio, Rounding, SolverConfig};
use objective::{cvar_distribution, cvar_samples, ObjectiveError};
use optimizer::{nelder_mead, NelderMeadOptions, OptimizeError, OptimizeResult};

const SALT_INIT: u64 = 0x1;
const SALT_ESTIMATOR: u64 = 0x2;
const SALT_SAMPLER: u64 = 0x3;

pub const WARM_START_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Simulator(#[from] SimError),
    #[error(transparent)]
    Optimizer(#[from] OptimizeError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Grouping(#[from] qrao::GroupingError),
    #[error("family {0} is not handled by this entry point")]
    WrongFamily(Family),
    #[error("invalid configuration: {0}")]
    Config(#[from] config::ConfigError),
    #[error("problem has no variables")]
    EmptyProblem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResult {
    pub best_bitstring: Bitstring,
    pub best_energy: f64,
    pub counts: Counts,
    pub optimizer_history: Vec<f64>,
    pub params_final: Vec<f64>,
    pub evals_used: usize,
    /// Number of qubits actually simulated.
    pub circuit_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptOutcome {
    pub gap: f64,
    pub feasible: bool,
    pub feasibility_rate: f64,
    pub top1_prob: f64,
    pub stagnated: bool,
    pub n_unique: usize,
    pub attempt_index: usize,
    pub family: Family,
    pub best_objective: f64,
}

impl AttemptOutcome {
    /// Outcome recorded when the solver itself failed.
    pub fn failed(attempt_index: usize, family: Family) -> Self {
        AttemptOutcome {
            gap: 1.0,
            feasible: false,
            feasibility_rate: 0.0,
            top1_prob: 1.0,
            stagnated: true,
            n_unique: 0,
            attempt_index,
            family,
            best_objective: f64::INFINITY,
        }
    }
}

/// Continuous relaxation for warm starts: projected gradient descent on
/// `[0,1]^n` from the cube centre, then clamped into `[ε, 1−ε]`.
pub fn warm_start_relaxation(q: &QuboProblem, epsilon: f64) -> Vec<f64> {
    assert!(epsilon > 0.0 && epsilon < 0.5, "epsilon must lie in (0, 0.5)");
    let n = q.n();
    let mut row = vec![0.0; n];
    for (&(i, j), &b) in q.quadratic() {
        row[i] += b.abs();
        row[j] += b.abs();
    }
    let lipschitz = row.iter().copied().fold(0.0, f64::max);
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };
    let mut x = vec![0.5; n];
    for _ in 0..WARM_START_ITERATIONS {
        let mut grad = q.linear().to_vec();
        for (&(i, j), &b) in q.quadratic() {
            grad[i] += b * x[j];
            grad[j] += b * x[i];
        }
        for (xi, g) in x.iter_mut().zip(&grad) {
            *xi = (*xi - step * g).clamp(0.0, 1.0);
        }
    }
    x.into_iter().map(|v| v.clamp(epsilon, 1.0 - epsilon)).collect()
}

/// Stagnation over the trailing `window` best-so-far entries.
pub fn is_stagnated(history: &[f64], window: usize, tol: f64) -> bool {
    let Some(&last) = history.last() else {
        return true;
    };
    let start = history.len().saturating_sub(window.max(1));
    let improvement = history[start] - last;
    improvement < tol * (1.0 + last.abs())
}

/// Picks the minimum-energy feasible sample, falling back to the overall
/// minimum. Ties keep the lexicographically first bitstring.
pub fn select_best(
    counts: &Counts,
    energy: impl Fn(&Bitstring) -> f64,
    feas_check: &dyn Fn(&Bitstring) -> bool,
) -> Option<(Bitstring, f64)> {
    let mut best_feasible: Option<(&Bitstring, f64)> = None;
    let mut best_any: Option<(&Bitstring, f64)> = None;
    for bits in counts.keys() {
        let e = energy(bits);
        if best_any.map_or(true, |(_, b)| e < b) {
            best_any = Some((bits, e));
        }
        if feas_check(bits) && best_feasible.map_or(true, |(_, b)| e < b) {
            best_feasible = Some((bits, e));
        }
    }
    best_feasible.or(best_any).map(|(b, e)| (b.clone(), e))
}

fn optimizer_options(config: &SolverConfig) -> NelderMeadOptions {
    if config.optimizer == OptimizerKind::Cobyla {
        log::info!("cobyla requested; running Nelder-Mead");
    }
    NelderMeadOptions {
        maxiter: config.maxiter,
        ..Default::default()
    }
}

fn initial_params(circuit: &CircuitSpec, kind: AnsatzKind, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SALT_INIT));
    match kind {
        AnsatzKind::EfficientSu2 => (0..circuit.n_params)
            .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect(),
        AnsatzKind::Qaoa | AnsatzKind::WsQaoa => (0..circuit.n_params)
            .map(|_| rng.gen_range(0.05..0.5))
            .collect(),
    }
}

fn expectation_diagonal(
    state: &Statevector,
    diag: &[f64],
    objective: Objective,
    shots: u64,
    seed: u64,
) -> Result<f64, ObjectiveError> {
    let alpha = match objective {
        Objective::Energy => 1.0,
        Objective::Cvar(a) => a,
    };
    if shots == 0 {
        return match objective {
            Objective::Energy => Ok(expectation_from_diagonal(state, diag)),
            Objective::Cvar(a) => cvar_distribution(&state.probabilities(), diag, a),
        };
    }
    let samples: Vec<(f64, u64)> = sample_indices(state, shots, seed)
        .into_iter()
        .map(|(k, c)| (diag[k as usize], c))
        .collect();
    cvar_samples(&samples, alpha)
}

/// Expectation of a Pauli sum; with `shots > 0` each term is estimated
/// from a binomial draw of `shots` ±1 outcomes.
fn expectation_terms(state: &Statevector, terms: &[PauliTerm], shots: u64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    terms
        .iter()
        .map(|t| {
            if t.factors.is_empty() {
                return t.coefficient;
            }
            let exact = pauli_string_expectation(state, &t.factors);
            if shots == 0 {
                return t.coefficient * exact;
            }
            let p = ((1.0 + exact) / 2.0).clamp(0.0, 1.0);
            let plus = Binomial::new(shots, p).expect("valid binomial").sample(&mut rng);
            t.coefficient * (2.0 * plus as f64 / shots as f64 - 1.0)
        })
        .sum()
}

struct Minimized {
    result: OptimizeResult,
    state: Statevector,
}

fn minimize<F>(circuit: &CircuitSpec, kind: AnsatzKind, config: &SolverConfig, mut objective: F) -> Result<Minimized, SolverError>
where
    F: FnMut(&Statevector, u64) -> Result<f64, SolverError>,
{
    let x0 = initial_params(circuit, kind, config.seed);
    let mut failure: Option<SolverError> = None;
    let mut evals = 0u64;
    let result = nelder_mead(
        |params| {
            evals += 1;
            let value = simulate(circuit, params)
                .map_err(SolverError::from)
                .and_then(|s| objective(&s, derive_seed(config.seed, SALT_ESTIMATOR ^ (evals << 8))));
            match value {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &x0,
        &optimizer_options(config),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let result = result?;
    let state = simulate(circuit, &result.x)?;
    Ok(Minimized { result, state })
}

fn finish(
    minimized: Minimized,
    counts: Counts,
    h: &IsingHamiltonian,
    feas_check: &dyn Fn(&Bitstring) -> bool,
) -> RawResult {
    let (best_bitstring, best_energy) =
        select_best(&counts, |b| h.energy_of_bits(b), feas_check).expect("at least one sample");
    RawResult {
        best_bitstring,
        best_energy,
        counts,
        optimizer_history: minimized.result.history,
        params_final: minimized.result.x,
        evals_used: minimized.result.evals,
        circuit_width: minimized.state.n_qubits(),
    }
}

/// VQE, QAOA and warm-start QAOA on a diagonal Ising Hamiltonian.
pub fn run_variational(
    h: &IsingHamiltonian,
    feas_check: &dyn Fn(&Bitstring) -> bool,
    config: &SolverConfig,
) -> Result<RawResult, SolverError> {
    if config.family == Family::Qrao {
        return Err(SolverError::WrongFamily(config.family));
    }
    config.validate()?;
    if h.n() == 0 {
        return Err(SolverError::EmptyProblem);
    }
    let warm = match config.family {
        Family::WsQaoa => Some(warm_start_relaxation(
            &ising_to_qubo(h),
            config.warm_start_epsilon.unwrap_or(config::DEFAULT_WARM_START_EPSILON),
        )),
        _ => None,
    };
    let circuit = build_ansatz(
        config.ansatz_kind,
        h.n(),
        config.reps,
        config.entanglement,
        Some(h),
        warm.as_deref(),
    )?;
    let diag = h.diagonal();
    let minimized = minimize(&circuit, config.ansatz_kind, config, |state, seed| {
        Ok(expectation_diagonal(state, &diag, config.objective, config.estimator_shots, seed)?)
    })?;
    let counts: Counts = sample_indices(&minimized.state, config.sampler_shots, derive_seed(config.seed, SALT_SAMPLER))
        .into_iter()
        .map(|(k, c)| (Bitstring::from_index(k, h.n()), c))
        .collect();
    Ok(finish(minimized, counts, h, feas_check))
}

/// Group, relax, optimize an efficient-SU2 ansatz on the relaxed
/// Hamiltonian, and round back to full-width bitstrings.
pub fn run_qrao(
    h: &IsingHamiltonian,
    feas_check: &dyn Fn(&Bitstring) -> bool,
    config: &SolverConfig,
) -> Result<RawResult, SolverError> {
    if config.family != Family::Qrao {
        return Err(SolverError::WrongFamily(config.family));
    }
    config.validate()?;
    if h.n() == 0 {
        return Err(SolverError::EmptyProblem);
    }
    if let Objective::Cvar(_) = config.objective {
        log::info!("CVaR is not defined for the relaxed Hamiltonian; optimizing its energy");
    }
    let ratio = config.qrao_ratio.unwrap_or(QraoRatio::ThreeToOne);
    let grouping = qrao::qrao_group_ising(h, ratio);
    let terms = qrao::qrao_relax(h, &grouping)?;
    let circuit = build_ansatz(
        AnsatzKind::EfficientSu2,
        grouping.n_qubits(),
        config.reps,
        config.entanglement,
        None,
        None,
    )?;
    let minimized = minimize(&circuit, AnsatzKind::EfficientSu2, config, |state, seed| {
        Ok(expectation_terms(state, &terms, config.estimator_shots, seed))
    })?;
    let counts = match config.qrao_rounding.unwrap_or(Rounding::Magic) {
        Rounding::Magic => qrao::magic_round(
            &minimized.state,
            &grouping,
            config.sampler_shots,
            derive_seed(config.seed, SALT_SAMPLER),
        )?,
        Rounding::Semideterministic => {
            let bits = qrao::semideterministic_round(&minimized.state, &grouping)?;
            Counts::from([(bits, config.sampler_shots)])
        }
    };
    Ok(finish(minimized, counts, h, feas_check))
}

/// Dispatches on the configured family.
pub fn solve(
    h: &IsingHamiltonian,
    feas_check: &dyn Fn(&Bitstring) -> bool,
    config: &SolverConfig,
) -> Result<RawResult, SolverError> {
    match config.family {
        Family::Qrao => run_qrao(h, feas_check, config),
        _ => run_variational(h, feas_check, config),
    }
}

/// Attempt diagnostics from a raw result. `gap_fn` scores the best bitstring.
pub fn diagnostics(
    raw: &RawResult,
    feas_check: &dyn Fn(&Bitstring) -> bool,
    gap_fn: &dyn Fn(&Bitstring) -> GapScore,
    config: &SolverConfig,
    attempt_index: usize,
) -> AttemptOutcome {
    let total: u64 = raw.counts.values().sum();
    assert!(total > 0, "diagnostics need at least one sample");
    let feasible_shots: u64 = raw
        .counts
        .iter()
        .filter(|(b, _)| feas_check(b))
        .map(|(_, &c)| c)
        .sum();
    let top = raw.counts.values().copied().max().unwrap_or(0);
    let score = gap_fn(&raw.best_bitstring);
    AttemptOutcome {
        gap: score.value,
        // An empty independent set is feasible but worthless.
        feasible: score.feasible && score.value < 1.0,
        feasibility_rate: feasible_shots as f64 / total as f64,
        top1_prob: top as f64 / total as f64,
        stagnated: is_stagnated(&raw.optimizer_history, config.stagnation_window, config.stagnation_tol),
        n_unique: raw.counts.len(),
        attempt_index,
        family: config.family,
        best_objective: score.objective,
    }
}

/// Counts keyed by bitstring text, for reports.
pub fn counts_to_text(counts: &Counts) -> BTreeMap<String, u64> {
    counts.iter().map(|(b, &c)| (b.to_string(), c)).collect()
}
