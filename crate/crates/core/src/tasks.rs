//! Problem instances prepared for the controller: MIS graphs with a known
//! optimum and CVRP instances run through the decomposed pipeline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::Bitstring;
use crate::cvrp::{
    assignment_qubo, classical_greedy_assignment, decode_assignment, fix_unambiguous, randomized_reference,
    repair, route_clusters, Assignment, AssignmentEncoding, AssignmentProblem, CvrpError, PenaltyMode,
    PenaltyWeights, DEFAULT_RHO, REFERENCE_RUNS,
};
use crate::instance::{load_graph, load_vrplib, CvrpInstance, ParseError};
use crate::oracle::{exact_cvrp, exact_mis, MAX_TSP_NODES};
use crate::policy::Instance;
use crate::problem::{cvrp_gap, is_independent_set, mis_gap, mis_to_qubo, qubo_to_ising, GapScore, GraphInstance};
use crate::solvers::{diagnostics, solve, AttemptOutcome, SolverConfig};

pub struct MisTask {
    id: String,
    graph: GraphInstance,
    optimum: usize,
}

impl MisTask {
    pub fn new(id: impl Into<String>, graph: GraphInstance) -> Result<Self, String> {
        let (optimum, _) = exact_mis(&graph).map_err(|e| e.to_string())?;
        Ok(MisTask {
            id: id.into(),
            graph,
            optimum,
        })
    }

    pub fn graph(&self) -> &GraphInstance {
        &self.graph
    }

    pub fn optimum(&self) -> usize {
        self.optimum
    }
}

impl Instance for MisTask {
    fn id(&self) -> &str {
        &self.id
    }

    fn attempt(&self, config: &SolverConfig, attempt_index: usize) -> Result<AttemptOutcome, String> {
        let q = mis_to_qubo(&self.graph, config.penalty).map_err(|e| e.to_string())?;
        let h = qubo_to_ising(&q);
        let feasible = |b: &Bitstring| is_independent_set(&self.graph, b);
        let raw = solve(&h, &feasible, config).map_err(|e| e.to_string())?;
        let gap = |b: &Bitstring| {
            mis_gap(&self.graph, b, self.optimum).unwrap_or(GapScore::infeasible(b.count_ones() as f64))
        };
        Ok(diagnostics(&raw, &feasible, &gap, config, attempt_index))
    }
}

/// Stored next to generated CVRP instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub reference_cost: f64,
    pub method: String,
}

/// The instance's known optimum if it carries one; otherwise the exact
/// optimum when small enough, else the best randomized greedy pipeline.
pub fn reference_cost(inst: &CvrpInstance, seed: u64) -> Result<ReferenceRecord, CvrpError> {
    if let Some(opt) = inst.known_optimum {
        return Ok(ReferenceRecord {
            reference_cost: opt,
            method: "known_optimum".into(),
        });
    }
    if inst.customers().len() <= MAX_TSP_NODES {
        if let Ok((cost, _)) = exact_cvrp(inst) {
            return Ok(ReferenceRecord {
                reference_cost: cost,
                method: "exact".into(),
            });
        }
    }
    Ok(ReferenceRecord {
        reference_cost: randomized_reference(inst, REFERENCE_RUNS, seed)?,
        method: format!("best_of_{REFERENCE_RUNS}_randomized_greedy"),
    })
}

pub struct CvrpTask {
    id: String,
    inst: CvrpInstance,
    reference: f64,
    default_mode: PenaltyMode,
    ap: AssignmentProblem,
}

impl CvrpTask {
    /// Seeds depot-farthest and fixes unambiguous customers at `rho`.
    pub fn new(id: impl Into<String>, inst: CvrpInstance, reference: f64, rho: f64) -> Result<Self, CvrpError> {
        let ap = fix_unambiguous(&AssignmentProblem::from_instance(&inst)?, rho);
        Ok(CvrpTask {
            id: id.into(),
            inst,
            reference,
            default_mode: PenaltyMode::HardSlack,
            ap,
        })
    }

    pub fn instance(&self) -> &CvrpInstance {
        &self.inst
    }

    pub fn assignment_problem(&self) -> &AssignmentProblem {
        &self.ap
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    fn score_assignment(&self, a: &Assignment) -> GapScore {
        match route_clusters(a, &self.inst) {
            Ok((cost, _)) => cvrp_gap(cost, self.reference).unwrap_or(GapScore::infeasible(cost)),
            Err(_) => GapScore::infeasible(f64::INFINITY),
        }
    }

    /// Decode, optionally repair, route and compare with the reference.
    pub fn score_bits(&self, bits: &Bitstring, enc: &AssignmentEncoding, allow_repair: bool) -> GapScore {
        let Ok((a, report)) = decode_assignment(bits, &self.ap, enc) else {
            return GapScore::infeasible(f64::INFINITY);
        };
        if report.is_empty() {
            return self.score_assignment(&a);
        }
        if !allow_repair {
            return GapScore::infeasible(f64::INFINITY);
        }
        match repair(&a, &report, &self.ap) {
            Ok(fixed) => self.score_assignment(&fixed),
            Err(_) => GapScore::infeasible(f64::INFINITY),
        }
    }

    /// The pipeline with the classical greedy assignment in place of the
    /// quantum step: routed cost and its gap.
    pub fn classical_pipeline(&self) -> Result<(Assignment, GapScore), CvrpError> {
        let a = match classical_greedy_assignment(&self.ap) {
            Ok(a) => a,
            Err(_) => {
                let a = Assignment::from_map(&self.ap, self.ap.fixed.clone());
                repair(&a, &Default::default(), &self.ap)?
            }
        };
        let score = self.score_assignment(&a);
        Ok((a, score))
    }
}

impl Instance for CvrpTask {
    fn id(&self) -> &str {
        &self.id
    }

    fn attempt(&self, config: &SolverConfig, attempt_index: usize) -> Result<AttemptOutcome, String> {
        if self.ap.free.is_empty() {
            let a = Assignment::from_map(&self.ap, self.ap.fixed.clone());
            let score = self.score_assignment(&a);
            return Ok(AttemptOutcome {
                gap: score.value,
                feasible: score.feasible,
                feasibility_rate: 1.0,
                top1_prob: 1.0,
                stagnated: true,
                n_unique: 1,
                attempt_index,
                family: config.family,
                best_objective: score.objective,
            });
        }
        let mode = config.penalty_mode.unwrap_or(self.default_mode);
        let (q, enc) = assignment_qubo(&self.ap, mode, PenaltyWeights::default()).map_err(|e| e.to_string())?;
        let h = qubo_to_ising(&q);
        let feasible = |b: &Bitstring| {
            decode_assignment(b, &self.ap, &enc)
                .map(|(_, report)| report.is_empty())
                .unwrap_or(false)
        };
        let raw = solve(&h, &feasible, config).map_err(|e| e.to_string())?;
        let gap = |b: &Bitstring| self.score_bits(b, &enc, config.repair);
        Ok(diagnostics(&raw, &feasible, &gap, config, attempt_index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Mis,
    Cvrp,
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("{path}: {message}")]
    Prepare { path: String, message: String },
}

/// Sidecar path holding the reference cost of a CVRP instance file.
pub fn reference_path(vrp: &Path) -> std::path::PathBuf {
    vrp.with_extension("ref.json")
}

/// Loads an instance file of the given kind. CVRP references come from the
/// sidecar when present.
pub fn load_task(kind: ProblemKind, path: &Path, rho: Option<f64>) -> Result<Box<dyn Instance + Send>, TaskError> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let prepare = |message: String| TaskError::Prepare {
        path: path.display().to_string(),
        message,
    };
    match kind {
        ProblemKind::Mis => {
            let graph = load_graph(path).map_err(|source| TaskError::Parse {
                path: path.display().to_string(),
                source,
            })?;
            Ok(Box::new(MisTask::new(id, graph).map_err(prepare)?))
        }
        ProblemKind::Cvrp => {
            let inst = load_vrplib(path).map_err(|source| TaskError::Parse {
                path: path.display().to_string(),
                source,
            })?;
            let sidecar = reference_path(path);
            let reference = match std::fs::read_to_string(&sidecar) {
                Ok(text) => serde_json::from_str::<ReferenceRecord>(&text)
                    .map_err(|e| prepare(format!("{}: {e}", sidecar.display())))?
                    .reference_cost,
                Err(_) => reference_cost(&inst, 0).map_err(|e| prepare(e.to_string()))?.reference_cost,
            };
            let task = CvrpTask::new(id, inst, reference, rho.unwrap_or(DEFAULT_RHO))
                .map_err(|e| prepare(e.to_string()))?;
            Ok(Box::new(task))
        }
    }
}
