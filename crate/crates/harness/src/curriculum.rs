//! Staged scout, promote and confirm search with replay guardrails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use qpolicy_core::policy::{
    parse_policy, run_controller, validate_policy, Budget, Instance, InstanceResult, PolicyDocument,
    DEFAULT_MAX_ATTEMPTS_CAP,
};
use qpolicy_core::seed::{derive_seed, hash_str};
use qpolicy_core::solvers::Family;
use qpolicy_core::tasks::{load_task, ProblemKind};

use crate::events::EventLog;
use crate::llm::{llm_propose, ChatTransport, HttpTransport, LlmSettings, StubTransport, Transcript, API_KEY_ENV};
use crate::proposer::{
    policy_diff, scripted_mutation, CandidateDigest, DigestDiagnostics, ProposalContext, StageSummary,
};
use crate::report::{emit_report, RunReport};
use crate::HarnessError;

pub const DEFAULT_GUARDRAIL_DELTA: f64 = 0.02;
pub const DEFAULT_PROPOSALS_PER_STAGE: usize = 12;
pub const DEFAULT_PROMOTE_K: usize = 3;
pub const DEFAULT_SCOUT_INSTANCES: usize = 2;

fn default_delta() -> f64 {
    DEFAULT_GUARDRAIL_DELTA
}
fn default_proposals() -> usize {
    DEFAULT_PROPOSALS_PER_STAGE
}
fn default_promote_k() -> usize {
    DEFAULT_PROMOTE_K
}
pub fn default_scout_budget() -> Budget {
    Budget {
        maxiter: Some(50),
        sampler_shots: Some(256),
        estimator_shots: None,
    }
}
pub fn default_confirm_budget() -> Budget {
    Budget {
        maxiter: Some(200),
        sampler_shots: None,
        estimator_shots: None,
    }
}
fn default_cap() -> usize {
    DEFAULT_MAX_ATTEMPTS_CAP
}
fn default_family() -> Family {
    Family::Vqe
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub name: String,
    pub problem_kind: ProblemKind,
    pub instances: Vec<PathBuf>,
    /// Defaults to the first two instances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scout_subset: Option<Vec<PathBuf>>,
    #[serde(default)]
    pub replay_stages: Vec<String>,
    #[serde(default = "default_delta")]
    pub guardrail_delta: f64,
    #[serde(default = "default_scout_budget")]
    pub scout_budget: Budget,
    #[serde(default = "default_confirm_budget")]
    pub confirm_budget: Budget,
    #[serde(default = "default_proposals")]
    pub proposals_per_stage: usize,
    #[serde(default = "default_promote_k")]
    pub promote_k: usize,
    /// CVRP fixing threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl StageSpec {
    pub fn new(name: impl Into<String>, problem_kind: ProblemKind, instances: Vec<PathBuf>) -> Self {
        StageSpec {
            name: name.into(),
            problem_kind,
            instances,
            scout_subset: None,
            replay_stages: Vec::new(),
            guardrail_delta: DEFAULT_GUARDRAIL_DELTA,
            scout_budget: default_scout_budget(),
            confirm_budget: default_confirm_budget(),
            proposals_per_stage: DEFAULT_PROPOSALS_PER_STAGE,
            promote_k: DEFAULT_PROMOTE_K,
            rho: None,
        }
    }

    fn scout_paths(&self) -> Vec<PathBuf> {
        self.scout_subset
            .clone()
            .unwrap_or_else(|| self.instances.iter().take(DEFAULT_SCOUT_INSTANCES).cloned().collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposerSpec {
    #[default]
    Scripted,
    Llm,
    /// Canned responses from a transcript file.
    Stub(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub stages: Vec<StageSpec>,
    /// Evaluated once with the final locked policy and the confirm budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_out: Option<StageSpec>,
    #[serde(default)]
    pub proposer: ProposerSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_policy: Option<PathBuf>,
    #[serde(default = "default_family")]
    pub initial_family: Family,
    #[serde(default = "default_cap")]
    pub max_attempts_cap: usize,
    #[serde(default)]
    pub llm: LlmSettings,
}

impl RunConfig {
    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in self.stages.iter_mut().chain(self.held_out.iter_mut()) {
            s.instances.iter_mut().for_each(fix);
            if let Some(sub) = s.scout_subset.as_mut() {
                sub.iter_mut().for_each(fix);
            }
        }
        if let Some(p) = self.initial_policy.as_mut() {
            fix(p);
        }
        if let ProposerSpec::Stub(p) = &mut self.proposer {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut seen: Vec<&str> = Vec::new();
        for s in self.stages.iter().chain(self.held_out.iter()) {
            if s.instances.is_empty() {
                return Err(HarnessError::Config(format!("stage {}: no instances", s.name)));
            }
            if seen.contains(&s.name.as_str()) {
                return Err(HarnessError::Config(format!("duplicate stage name {}", s.name)));
            }
            for r in &s.replay_stages {
                if !seen.contains(&r.as_str()) {
                    return Err(HarnessError::Config(format!(
                        "stage {}: replay stage {r} does not precede it",
                        s.name
                    )));
                }
            }
            if let Some(sub) = &s.scout_subset {
                if sub.is_empty() || sub.iter().any(|p| !s.instances.contains(p)) {
                    return Err(HarnessError::Config(format!(
                        "stage {}: scout_subset must be a nonempty subset of instances",
                        s.name
                    )));
                }
            }
            if !(s.guardrail_delta >= 0.0) {
                return Err(HarnessError::Config(format!("stage {}: guardrail_delta must be >= 0", s.name)));
            }
            if s.promote_k == 0 {
                return Err(HarnessError::Config(format!("stage {}: promote_k must be >= 1", s.name)));
            }
            seen.push(&s.name);
        }
        if self.max_attempts_cap == 0 {
            return Err(HarnessError::Config("max_attempts_cap must be >= 1".into()));
        }
        Ok(())
    }

    pub fn stage(&self, name: &str) -> Option<&StageSpec> {
        self.stages.iter().chain(self.held_out.iter()).find(|s| s.name == name)
    }

    /// The configured initial policy, or the single-configuration baseline.
    pub fn initial_policy(&self) -> Result<PolicyDocument, HarnessError> {
        match &self.initial_policy {
            Some(path) => load_policy(path, self.max_attempts_cap),
            None => Ok(PolicyDocument::baseline(
                format!("baseline-{}", self.initial_family),
                self.initial_family,
            )),
        }
    }
}

pub fn load_policy(path: &Path, cap: usize) -> Result<PolicyDocument, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    parse_policy(&text, cap).map_err(|issues| {
        let list: Vec<String> = issues.iter().map(ToString::to_string).collect();
        HarnessError::Config(format!("{}: {}", path.display(), list.join("; ")))
    })
}

pub type BoxedInstance = Box<dyn Instance + Send>;

/// A stage with its instances prepared.
pub struct LoadedStage {
    pub spec: StageSpec,
    pub instances: Vec<BoxedInstance>,
    /// Indices into `instances`.
    pub scout: Vec<usize>,
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

impl LoadedStage {
    /// Scout instances are matched to the subset paths by file stem.
    pub fn new(spec: StageSpec, instances: Vec<BoxedInstance>) -> Result<Self, HarnessError> {
        let mut scout = Vec::new();
        for p in spec.scout_paths() {
            let id = stem(&p);
            let k = instances
                .iter()
                .position(|i| i.id() == id)
                .ok_or_else(|| HarnessError::Config(format!("stage {}: scout instance {id} not loaded", spec.name)))?;
            scout.push(k);
        }
        Ok(LoadedStage { spec, instances, scout })
    }

    pub fn load(spec: &StageSpec) -> Result<Self, HarnessError> {
        let instances = spec
            .instances
            .iter()
            .map(|p| load_task(spec.problem_kind, p, spec.rho).map_err(HarnessError::Load))
            .collect::<Result<Vec<_>, _>>()?;
        LoadedStage::new(spec.clone(), instances)
    }

    pub fn all(&self) -> Vec<&dyn Instance> {
        self.instances.iter().map(|i| i.as_ref() as &dyn Instance).collect()
    }

    pub fn scout_instances(&self) -> Vec<&dyn Instance> {
        self.scout.iter().map(|&k| self.instances[k].as_ref() as &dyn Instance).collect()
    }

    pub fn seed(&self, run_seed: u64) -> u64 {
        derive_seed(run_seed, hash_str(&self.spec.name))
    }
}

/// Per-suite score with light per-instance detail for the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub score: f64,
    pub per_instance: BTreeMap<String, f64>,
    pub diagnostics: DigestDiagnostics,
    pub attempts: usize,
    pub errors: usize,
}

impl SuiteSummary {
    fn from_results(results: &[InstanceResult]) -> Self {
        let n = results.len() as f64;
        let mut d = DigestDiagnostics::default();
        for r in results {
            let last = r.attempts.last().expect("at least one attempt");
            d.gap += r.final_gap / n;
            d.feasibility_rate += last.feasibility_rate / n;
            d.top1_prob += last.top1_prob / n;
            d.stagnated += if last.stagnated { 1.0 / n } else { 0.0 };
        }
        SuiteSummary {
            score: results.iter().map(|r| r.final_gap).sum::<f64>() / n,
            per_instance: results.iter().map(|r| (r.instance_id.clone(), r.final_gap)).collect(),
            diagnostics: d,
            attempts: results.iter().map(|r| r.attempts_used).sum(),
            errors: results.iter().map(|r| r.errors.len()).sum(),
        }
    }
}

/// Runs the controller on every instance; per-instance seeds derive from
/// `seed` and the instance id.
pub fn suite_results(policy: &PolicyDocument, instances: &[&dyn Instance], budget: &Budget, seed: u64) -> Vec<InstanceResult> {
    instances
        .par_iter()
        .map(|inst| run_controller(policy, *inst, derive_seed(seed, hash_str(inst.id())), budget))
        .collect()
}

/// Mean final gap over the suite.
pub fn suite_score(
    policy: &PolicyDocument,
    instances: &[&dyn Instance],
    budget: &Budget,
    seed: u64,
) -> Result<SuiteSummary, HarnessError> {
    if instances.is_empty() {
        return Err(HarnessError::Config("suite has no instances".into()));
    }
    Ok(SuiteSummary::from_results(&suite_results(policy, instances, budget, seed)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Proposed,
    Scouted,
    Promoted,
    Confirmed,
    Rejected,
    GuardrailFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub proposer: String,
    pub parent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<String>,
    /// Set when a model proposal failed and the scripted mutator stood in.
    #[serde(default)]
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub candidate_id: String,
    pub stage: String,
    pub policy: PolicyDocument,
    pub scout_score: Option<f64>,
    pub confirmed_score: Option<f64>,
    pub replay_results: BTreeMap<String, f64>,
    pub status: CandidateStatus,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DigestDiagnostics>,
}

impl CandidateRecord {
    pub fn new(candidate_id: String, stage: String, policy: PolicyDocument, provenance: Provenance) -> Self {
        CandidateRecord {
            candidate_id,
            stage,
            policy,
            scout_score: None,
            confirmed_score: None,
            replay_results: BTreeMap::new(),
            status: CandidateStatus::Proposed,
            provenance,
            diagnostics: None,
        }
    }

    /// Scout minus confirmed score; positive when the proxy was pessimistic.
    pub fn proxy_divergence(&self) -> Option<f64> {
        Some(self.scout_score? - self.confirmed_score?)
    }
}

/// Scores the candidate on the stage's scout subset under the scout budget.
pub fn scout_eval(c: &mut CandidateRecord, stage: &LoadedStage, seed: u64) -> Result<SuiteSummary, HarnessError> {
    assert_eq!(c.status, CandidateStatus::Proposed, "scout_eval needs a proposed candidate");
    let s = suite_score(&c.policy, &stage.scout_instances(), &stage.spec.scout_budget, seed)?;
    c.scout_score = Some(s.score);
    c.diagnostics = Some(s.diagnostics);
    c.status = CandidateStatus::Scouted;
    Ok(s)
}

/// The `k` lowest scout scores, ties to the earlier id; marks them promoted.
pub fn promote(archive: &mut [CandidateRecord], k: usize) -> Vec<String> {
    let mut scouted: Vec<&CandidateRecord> = archive
        .iter()
        .filter(|c| c.status == CandidateStatus::Scouted && c.scout_score.is_some())
        .collect();
    scouted.sort_by(|a, b| {
        a.scout_score
            .unwrap()
            .total_cmp(&b.scout_score.unwrap())
            .then_with(|| a.candidate_id.cmp(&b.candidate_id))
    });
    let ids: Vec<String> = scouted.into_iter().take(k).map(|c| c.candidate_id.clone()).collect();
    for c in archive.iter_mut() {
        if ids.contains(&c.candidate_id) {
            c.status = CandidateStatus::Promoted;
        }
    }
    ids
}

/// Full-suite score under the confirm budget.
pub fn confirm(c: &mut CandidateRecord, stage: &LoadedStage, seed: u64) -> Result<SuiteSummary, HarnessError> {
    assert_eq!(c.status, CandidateStatus::Promoted, "confirm needs a promoted candidate");
    let s = suite_score(&c.policy, &stage.all(), &stage.spec.confirm_budget, seed)?;
    c.confirmed_score = Some(s.score);
    c.status = CandidateStatus::Confirmed;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFailure {
    pub stage: String,
    pub regression: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub results: BTreeMap<String, f64>,
    pub failure: Option<ReplayFailure>,
}

impl ReplayOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Re-scores the candidate on each replay stage with that stage's seed and
/// confirm budget; fails on the first stage beyond locked score + delta.
pub fn replay_check(
    c: &mut CandidateRecord,
    locked_scores: &BTreeMap<String, f64>,
    stage: &StageSpec,
    replay: &[&LoadedStage],
    run_seed: u64,
) -> Result<ReplayOutcome, HarnessError> {
    let mut out = ReplayOutcome {
        results: BTreeMap::new(),
        failure: None,
    };
    for name in &stage.replay_stages {
        let prior = replay
            .iter()
            .find(|s| &s.spec.name == name)
            .ok_or_else(|| HarnessError::Config(format!("replay stage {name} is not loaded")))?;
        let locked = *locked_scores
            .get(name)
            .ok_or_else(|| HarnessError::Config(format!("replay stage {name} has no locked score")))?;
        let s = suite_score(&c.policy, &prior.all(), &prior.spec.confirm_budget, prior.seed(run_seed))?;
        out.results.insert(name.clone(), s.score);
        if out.failure.is_none() && s.score > locked + stage.guardrail_delta {
            out.failure = Some(ReplayFailure {
                stage: name.clone(),
                regression: s.score - locked,
            });
        }
    }
    c.replay_results = out.results.clone();
    if !out.passed() {
        c.status = CandidateStatus::GuardrailFailed;
    }
    Ok(out)
}

/// A proposed policy with where it came from.
pub struct Proposal {
    pub policy: PolicyDocument,
    pub provenance: Provenance,
    pub transcript: Option<Transcript>,
}

pub trait Proposer {
    fn propose(&mut self, ctx: &ProposalContext, seed: u64) -> Proposal;

    /// Strings that must be scrubbed from persisted transcripts.
    fn secrets(&self) -> Vec<String> {
        Vec::new()
    }
}

pub struct ScriptedProposer;

fn scripted_proposal(ctx: &ProposalContext, seed: u64, fallback: bool) -> Proposal {
    let (policy, kind) = scripted_mutation(ctx, seed);
    Proposal {
        policy,
        provenance: Provenance {
            proposer: "scripted".into(),
            parent: ctx.locked.policy_id.clone(),
            mutation: kind.map(|k| k.name().to_string()),
            fallback,
            temperature: None,
        },
        transcript: None,
    }
}

impl Proposer for ScriptedProposer {
    fn propose(&mut self, ctx: &ProposalContext, seed: u64) -> Proposal {
        scripted_proposal(ctx, seed, false)
    }
}

/// Model proposals with the scripted mutator as fallback.
pub struct LlmProposer {
    pub transport: Box<dyn ChatTransport>,
    pub label: String,
    pub temperature: Option<f64>,
}

impl LlmProposer {
    /// Total transport requests so far.
    pub fn requests(&self) -> usize {
        self.transport.requests()
    }
}

impl Proposer for LlmProposer {
    fn propose(&mut self, ctx: &ProposalContext, seed: u64) -> Proposal {
        let out = llm_propose(ctx, self.transport.as_mut(), self.temperature);
        match out.result {
            Ok(policy) => Proposal {
                policy,
                provenance: Provenance {
                    proposer: self.label.clone(),
                    parent: ctx.locked.policy_id.clone(),
                    mutation: None,
                    fallback: false,
                    temperature: self.temperature,
                },
                transcript: Some(out.transcript),
            },
            Err(e) => {
                log::warn!("model proposal failed ({e}); using the scripted mutator");
                let mut p = scripted_proposal(ctx, seed, true);
                p.provenance.temperature = self.temperature;
                p.transcript = Some(out.transcript);
                p
            }
        }
    }

    fn secrets(&self) -> Vec<String> {
        let mut s = self.transport.secrets();
        if let Ok(k) = std::env::var(API_KEY_ENV) {
            s.push(k);
        }
        s
    }
}

/// Replays a fixed list of policies, one per call, cycling.
pub struct FixedProposer {
    pub policies: Vec<PolicyDocument>,
    next: usize,
}

impl FixedProposer {
    pub fn new(policies: Vec<PolicyDocument>) -> Self {
        assert!(!policies.is_empty(), "at least one policy");
        FixedProposer { policies, next: 0 }
    }
}

impl Proposer for FixedProposer {
    fn propose(&mut self, ctx: &ProposalContext, _seed: u64) -> Proposal {
        let policy = self.policies[self.next % self.policies.len()].clone();
        self.next += 1;
        Proposal {
            policy,
            provenance: Provenance {
                proposer: "fixed".into(),
                parent: ctx.locked.policy_id.clone(),
                mutation: None,
                fallback: false,
                temperature: None,
            },
            transcript: None,
        }
    }
}

/// Builds the proposer named by the configuration.
pub fn make_proposer(config: &RunConfig) -> Result<Box<dyn Proposer>, HarnessError> {
    match &config.proposer {
        ProposerSpec::Scripted => Ok(Box::new(ScriptedProposer)),
        ProposerSpec::Stub(path) => {
            let stub = StubTransport::load(path).map_err(|e| HarnessError::io(path, e))?;
            Ok(Box::new(LlmProposer {
                transport: Box::new(stub),
                label: "stub".into(),
                temperature: Some(config.llm.temperature),
            }))
        }
        ProposerSpec::Llm => {
            let http = HttpTransport::from_env(config.llm.clone())
                .ok_or_else(|| HarnessError::Config(format!("{API_KEY_ENV} is not set")))?;
            Ok(Box::new(LlmProposer {
                transport: Box::new(http),
                label: "llm".into(),
                temperature: Some(config.llm.temperature),
            }))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePayload {
    pub policy: PolicyDocument,
    pub summary: SuiteSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedPayload {
    pub policy: PolicyDocument,
    pub provenance: Provenance,
    pub diff: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockPayload {
    pub policy: PolicyDocument,
    pub candidate_id: Option<String>,
    pub score: f64,
    pub baseline_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutPayload {
    pub policy: PolicyDocument,
    pub summary: SuiteSummary,
}

/// Everything a curriculum run needs besides the event log location.
pub struct Curriculum {
    pub stages: Vec<LoadedStage>,
    pub held_out: Option<LoadedStage>,
    pub initial: PolicyDocument,
    pub seed: u64,
    pub max_attempts_cap: usize,
}

impl Curriculum {
    pub fn load(config: &RunConfig, seed: u64) -> Result<Self, HarnessError> {
        Ok(Curriculum {
            stages: config.stages.iter().map(LoadedStage::load).collect::<Result<_, _>>()?,
            held_out: config.held_out.as_ref().map(LoadedStage::load).transpose()?,
            initial: config.initial_policy()?,
            seed,
            max_attempts_cap: config.max_attempts_cap,
        })
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Runs every stage, then the held-out evaluation, and writes reports.
/// An existing event log in `run_dir` is replayed first.
pub fn run_curriculum(cur: &Curriculum, proposer: &mut dyn Proposer, run_dir: &Path) -> Result<RunReport, HarnessError> {
    std::fs::create_dir_all(run_dir).map_err(|e| HarnessError::io(run_dir, e))?;
    let mut log = EventLog::open(&run_dir.join("events.jsonl"))?;
    if log.recorded_len() > 0 {
        log::info!("resuming {} from {} recorded events", run_dir.display(), log.recorded_len());
    }
    let names: Vec<String> = cur.stages.iter().map(|s| s.spec.name.clone()).collect();
    log.record("run_started", None, None, || {
        Ok(serde_json::json!({ "seed": cur.seed, "stages": names, "initial_policy": cur.initial.policy_id }))
    })?;

    let mut locked = cur.initial.clone();
    let mut locked_scores: BTreeMap<String, f64> = BTreeMap::new();
    for (si, stage) in cur.stages.iter().enumerate() {
        let spec = &stage.spec;
        let name = spec.name.as_str();
        let seed = stage.seed(cur.seed);
        let baseline: BaselinePayload = log.record("baseline_scored", Some(name), None, || {
            Ok(BaselinePayload {
                policy: locked.clone(),
                summary: suite_score(&locked, &stage.all(), &spec.confirm_budget, seed)?,
            })
        })?;
        let mut ctx = ProposalContext::new(
            StageSummary {
                name: spec.name.clone(),
                problem_kind: spec.problem_kind,
                instance_count: stage.instances.len(),
                locked_score: Some(baseline.summary.score),
            },
            locked.clone(),
            cur.max_attempts_cap,
        );

        let mut archive: Vec<CandidateRecord> = Vec::new();
        for k in 0..spec.proposals_per_stage {
            let id = format!("{name}-c{k:03}");
            let proposed: ProposedPayload = log.record("candidate_proposed", Some(name), Some(&id), || {
                let p = proposer.propose(&ctx, derive_seed(seed, k as u64));
                if let Some(t) = &p.transcript {
                    let secrets = proposer.secrets();
                    write_json(&run_dir.join("transcripts").join(format!("{id}.json")), &t.redacted(&secrets))?;
                }
                if let Err(issues) = validate_policy(&p.policy, cur.max_attempts_cap) {
                    return Err(HarnessError::Config(format!("proposer emitted an invalid policy: {issues:?}")));
                }
                Ok(ProposedPayload {
                    diff: policy_diff(&locked, &p.policy),
                    policy: p.policy,
                    provenance: p.provenance,
                })
            })?;
            let mut rec = CandidateRecord::new(id.clone(), spec.name.clone(), proposed.policy, proposed.provenance);
            let scouted: SuiteSummary = log.record("candidate_scouted", Some(name), Some(&id), || {
                let mut probe = rec.clone();
                scout_eval(&mut probe, stage, seed)
            })?;
            rec.scout_score = Some(scouted.score);
            rec.diagnostics = Some(scouted.diagnostics);
            rec.status = CandidateStatus::Scouted;
            ctx.push_digest(CandidateDigest {
                candidate_id: id,
                diff: proposed.diff,
                scout_score: rec.scout_score,
                confirmed_score: None,
                diagnostics: rec.diagnostics,
            });
            archive.push(rec);
        }

        if archive.is_empty() {
            log::warn!("stage {name}: no candidates; keeping the baseline");
        } else {
            let ids = promote(&mut archive, spec.promote_k);
            let recorded: Vec<String> = log.record("candidates_promoted", Some(name), None, || Ok(ids.clone()))?;
            debug_assert_eq!(recorded, ids);
            let prior: Vec<&LoadedStage> = cur.stages[..si].iter().collect();
            for id in &ids {
                let rec = archive.iter_mut().find(|c| &c.candidate_id == id).expect("promoted id");
                let confirmed: SuiteSummary = log.record("candidate_confirmed", Some(name), Some(id), || {
                    let mut probe = rec.clone();
                    confirm(&mut probe, stage, seed)
                })?;
                rec.confirmed_score = Some(confirmed.score);
                rec.status = CandidateStatus::Confirmed;
                let replay: ReplayOutcome = log.record("replay_checked", Some(name), Some(id), || {
                    let mut probe = rec.clone();
                    replay_check(&mut probe, &locked_scores, spec, &prior, cur.seed)
                })?;
                rec.replay_results = replay.results.clone();
                if let Some(f) = &replay.failure {
                    log::info!("{id}: replay regression {:.4} on {}", f.regression, f.stage);
                    rec.status = CandidateStatus::GuardrailFailed;
                }
            }
        }

        // Argmin over confirmed passers; the incumbent keeps ties.
        let winner = archive
            .iter()
            .filter(|c| c.status == CandidateStatus::Confirmed)
            .filter(|c| c.confirmed_score.unwrap() < baseline.summary.score)
            .min_by(|a, b| {
                a.confirmed_score
                    .unwrap()
                    .total_cmp(&b.confirmed_score.unwrap())
                    .then_with(|| a.candidate_id.cmp(&b.candidate_id))
            });
        let lock = match winner {
            Some(c) => LockPayload {
                policy: c.policy.clone(),
                candidate_id: Some(c.candidate_id.clone()),
                score: c.confirmed_score.unwrap(),
                baseline_score: baseline.summary.score,
            },
            None => LockPayload {
                policy: locked.clone(),
                candidate_id: None,
                score: baseline.summary.score,
                baseline_score: baseline.summary.score,
            },
        };
        let lock: LockPayload = log.record("stage_locked", Some(name), lock.candidate_id.clone().as_deref(), || Ok(lock))?;
        locked = lock.policy;
        locked_scores.insert(spec.name.clone(), lock.score);
    }

    if let Some(h) = &cur.held_out {
        let name = h.spec.name.as_str();
        log.record("held_out_evaluated", Some(name), None, || {
            Ok(HeldOutPayload {
                policy: locked.clone(),
                summary: suite_score(&locked, &h.all(), &h.spec.confirm_budget, h.seed(cur.seed))?,
            })
        })?;
    }
    log.record("run_completed", None, None, || Ok(serde_json::json!({ "locked_policy": locked.policy_id })))?;
    drop(log);
    emit_report(run_dir)
}

/// Loads the configuration's stages and runs them with its proposer.
pub fn run_from_config(config: &RunConfig, seed: u64, run_dir: &Path) -> Result<RunReport, HarnessError> {
    let snapshot = run_dir.join("config.json");
    let mut stored = config.clone();
    stored.seed = seed;
    if snapshot.exists() {
        let text = std::fs::read_to_string(&snapshot).map_err(|e| HarnessError::io(&snapshot, e))?;
        let previous: RunConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::EventLog(format!("{}: {e}", snapshot.display())))?;
        if previous != stored {
            return Err(HarnessError::Config(format!(
                "{} was created with a different configuration or seed",
                run_dir.display()
            )));
        }
    } else {
        write_json(&snapshot, &stored)?;
    }
    let cur = Curriculum::load(config, seed)?;
    let mut proposer = make_proposer(config)?;
    run_curriculum(&cur, proposer.as_mut(), run_dir)
}
