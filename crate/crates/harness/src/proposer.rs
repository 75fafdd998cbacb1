//! Candidate policy generation: a seeded mutator over a fixed menu, and the
//! prompt handed to an external model.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use qpolicy_core::cvrp::PenaltyMode;
use qpolicy_core::policy::{validate_policy, PolicyDocument, RetryRule, RuleAction, POLICY_SCHEMA};
use qpolicy_core::seed::{derive_seed, hash_str};
use qpolicy_core::solvers::config::MAX_SAMPLER_SHOTS;
use qpolicy_core::solvers::{Family, Objective, QraoRatio};
use qpolicy_core::tasks::ProblemKind;

pub const MAX_DIGESTS: usize = 10;
pub const MAX_RULES: usize = 4;
pub const MAX_REPS: usize = 4;

const CVAR_ALPHAS: [f64; 3] = [0.1, 0.25, 0.5];
const SHOT_FACTORS: [f64; 3] = [0.5, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub name: String,
    pub problem_kind: ProblemKind,
    pub instance_count: usize,
    pub locked_score: Option<f64>,
}

/// Suite-level means of the last attempt on each instance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DigestDiagnostics {
    pub gap: f64,
    pub feasibility_rate: f64,
    pub top1_prob: f64,
    /// Fraction of instances whose last attempt stagnated.
    pub stagnated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDigest {
    pub candidate_id: String,
    pub diff: Vec<String>,
    pub scout_score: Option<f64>,
    pub confirmed_score: Option<f64>,
    pub diagnostics: Option<DigestDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalContext {
    pub stage: StageSummary,
    pub locked: PolicyDocument,
    digests: Vec<CandidateDigest>,
    pub design_space: String,
    pub schema: String,
    pub max_attempts_cap: usize,
}

impl ProposalContext {
    pub fn new(stage: StageSummary, locked: PolicyDocument, max_attempts_cap: usize) -> Self {
        ProposalContext {
            stage,
            locked,
            digests: Vec::new(),
            design_space: design_space_text(),
            schema: POLICY_SCHEMA.to_string(),
            max_attempts_cap,
        }
    }

    /// Appends a digest, dropping the oldest beyond [`MAX_DIGESTS`].
    pub fn push_digest(&mut self, digest: CandidateDigest) {
        self.digests.push(digest);
        if self.digests.len() > MAX_DIGESTS {
            let excess = self.digests.len() - MAX_DIGESTS;
            self.digests.drain(..excess);
        }
    }

    /// Oldest first.
    pub fn digests(&self) -> &[CandidateDigest] {
        &self.digests
    }
}

pub fn design_space_text() -> String {
    let families: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
    format!(
        "Solver families: {}.\n\
         Objectives: \"energy\" or {{\"cvar\": alpha}} with alpha in (0, 1].\n\
         Tunable fields: reps, maxiter, sampler_shots (1..={MAX_SAMPLER_SHOTS}), estimator_shots (0 = exact), \
         qrao_ratio (\"3:1\" or \"2:1\", qrao only), qrao_rounding (\"magic\" or \"semideterministic\", qrao only), \
         warm_start_epsilon (ws_qaoa only), penalty (MIS, > 1), penalty_mode (CVRP: \"hard_slack\" or \"tilted\"), repair.\n\
         Rule conditions read the previous attempt: feasible, gap, feasibility_rate, top1_prob, stagnated, \
         attempt_index, family; combine with and, or, not and parentheses.\n\
         Rules are checked in order; the first match fires. A retry rule's patch overrides the current config.",
        families.join(", ")
    )
}

/// Field-level differences between two policies, ignoring id and metadata.
pub fn policy_diff(parent: &PolicyDocument, child: &PolicyDocument) -> Vec<String> {
    fn strip(doc: &PolicyDocument) -> Value {
        let mut v = serde_json::to_value(doc).expect("policy serializes");
        let o = v.as_object_mut().expect("object");
        o.remove("policy_id");
        o.remove("metadata");
        v
    }
    fn walk(path: &str, a: &Value, b: &Value, out: &mut Vec<String>) {
        match (a, b) {
            (Value::Object(x), Value::Object(y)) => {
                let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
                for k in keys {
                    let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    walk(&p, x.get(k).unwrap_or(&Value::Null), y.get(k).unwrap_or(&Value::Null), out);
                }
            }
            _ if a == b => {}
            _ => out.push(format!("{path}: {a} -> {b}")),
        }
    }
    let mut out = Vec::new();
    walk("", &strip(parent), &strip(child), &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    SwitchFamily,
    Objective,
    SamplerShots,
    AddRule,
    RemoveRule,
    EditRule,
    QraoRatio,
    Reps,
    PenaltyMode,
}

pub const MUTATION_MENU: [MutationKind; 9] = [
    MutationKind::SwitchFamily,
    MutationKind::Objective,
    MutationKind::SamplerShots,
    MutationKind::AddRule,
    MutationKind::RemoveRule,
    MutationKind::EditRule,
    MutationKind::QraoRatio,
    MutationKind::Reps,
    MutationKind::PenaltyMode,
];

impl MutationKind {
    pub fn name(self) -> &'static str {
        match self {
            MutationKind::SwitchFamily => "switch_family",
            MutationKind::Objective => "objective",
            MutationKind::SamplerShots => "sampler_shots",
            MutationKind::AddRule => "add_rule",
            MutationKind::RemoveRule => "remove_rule",
            MutationKind::EditRule => "edit_rule",
            MutationKind::QraoRatio => "qrao_ratio",
            MutationKind::Reps => "reps",
            MutationKind::PenaltyMode => "penalty_mode",
        }
    }
}

fn objective_value(o: Objective) -> Value {
    serde_json::to_value(o).expect("objective serializes")
}

/// Retry rules from the template library, adapted to the parent's config.
fn rule_templates(parent: &PolicyDocument) -> Vec<RetryRule> {
    let base = &parent.base_config;
    let objective_switch = match base.objective {
        Objective::Energy => objective_value(Objective::Cvar(0.25)),
        Objective::Cvar(_) => objective_value(Objective::Energy),
    };
    let family_switch = if base.family == Family::WsQaoa { Family::Qaoa } else { Family::WsQaoa };
    let mut out = vec![
        RetryRule {
            condition: "stagnated".into(),
            action: RuleAction::Retry,
            patch: BTreeMap::from([("objective".into(), objective_switch)]),
        },
        RetryRule {
            condition: "feasibility_rate < 0.5".into(),
            action: RuleAction::Retry,
            patch: BTreeMap::from([("family".into(), json!(family_switch.name()))]),
        },
        RetryRule {
            condition: "gap > 0.25".into(),
            action: RuleAction::Retry,
            patch: BTreeMap::from([("maxiter".into(), json!((base.maxiter * 2).min(1000)))]),
        },
    ];
    if base.family != Family::Qrao {
        out.push(RetryRule {
            condition: "top1_prob < 0.05".into(),
            action: RuleAction::Retry,
            patch: BTreeMap::from([("family".into(), json!("qrao")), ("qrao_ratio".into(), json!("3:1"))]),
        });
    }
    out
}

fn with_config_patch(parent: &PolicyDocument, patch: BTreeMap<String, Value>) -> Option<PolicyDocument> {
    let config = parent.base_config.apply_patch(&patch).ok()?;
    let mut doc = parent.clone();
    doc.initial_family = config.family;
    doc.base_config = config;
    Some(doc)
}

/// Applies one mutation of the given kind; `None` when it does not apply
/// to this parent.
pub fn apply_mutation(
    kind: MutationKind,
    parent: &PolicyDocument,
    problem_kind: ProblemKind,
    max_attempts_cap: usize,
    rng: &mut impl Rng,
) -> Option<PolicyDocument> {
    let base = &parent.base_config;
    match kind {
        MutationKind::SwitchFamily => {
            let others: Vec<Family> = Family::ALL.into_iter().filter(|&f| f != base.family).collect();
            let f = *others.choose(rng)?;
            with_config_patch(parent, BTreeMap::from([("family".into(), json!(f.name()))]))
        }
        MutationKind::Objective => {
            let mut options: Vec<Objective> = vec![Objective::Energy];
            options.extend(CVAR_ALPHAS.iter().map(|&a| Objective::Cvar(a)));
            options.retain(|&o| o != base.objective);
            if base.objective == Objective::Energy {
                options.retain(|&o| o != Objective::Energy);
            }
            let o = *options.choose(rng)?;
            with_config_patch(parent, BTreeMap::from([("objective".into(), objective_value(o))]))
        }
        MutationKind::SamplerShots => {
            let factor = *SHOT_FACTORS.choose(rng)?;
            let shots = ((base.sampler_shots as f64 * factor).round() as u64).clamp(1, MAX_SAMPLER_SHOTS);
            (shots != base.sampler_shots)
                .then(|| with_config_patch(parent, BTreeMap::from([("sampler_shots".into(), json!(shots))])))
                .flatten()
        }
        MutationKind::AddRule => {
            if parent.rules.len() >= MAX_RULES || max_attempts_cap < 2 {
                return None;
            }
            let fresh: Vec<RetryRule> = rule_templates(parent)
                .into_iter()
                .filter(|t| parent.rules.iter().all(|r| r.condition != t.condition))
                .collect();
            let rule = fresh.choose(rng)?.clone();
            let mut doc = parent.clone();
            doc.rules.push(rule);
            doc.max_attempts = doc.max_attempts.max(2).min(max_attempts_cap);
            Some(doc)
        }
        MutationKind::RemoveRule => {
            if parent.rules.is_empty() {
                return None;
            }
            let mut doc = parent.clone();
            doc.rules.remove(rng.gen_range(0..doc.rules.len()));
            Some(doc)
        }
        MutationKind::EditRule => {
            if parent.rules.is_empty() {
                return None;
            }
            let k = rng.gen_range(0..parent.rules.len());
            let patches: Vec<BTreeMap<String, Value>> = rule_templates(parent)
                .into_iter()
                .map(|t| t.patch)
                .filter(|p| *p != parent.rules[k].patch)
                .collect();
            let mut doc = parent.clone();
            doc.rules[k].patch = patches.choose(rng)?.clone();
            doc.rules[k].action = RuleAction::Retry;
            Some(doc)
        }
        MutationKind::QraoRatio => {
            let next = match base.qrao_ratio? {
                QraoRatio::ThreeToOne => "2:1",
                QraoRatio::TwoToOne => "3:1",
            };
            with_config_patch(parent, BTreeMap::from([("qrao_ratio".into(), json!(next))]))
        }
        MutationKind::Reps => {
            let up = base.reps < MAX_REPS && (base.reps == 1 || rng.gen_bool(0.5));
            let reps = if up { base.reps + 1 } else { base.reps - 1 };
            with_config_patch(parent, BTreeMap::from([("reps".into(), json!(reps))]))
        }
        MutationKind::PenaltyMode => {
            if problem_kind != ProblemKind::Cvrp {
                return None;
            }
            let next = match base.penalty_mode.unwrap_or(PenaltyMode::HardSlack) {
                PenaltyMode::HardSlack => PenaltyMode::Tilted,
                PenaltyMode::Tilted => PenaltyMode::HardSlack,
            };
            with_config_patch(parent, BTreeMap::from([("penalty_mode".into(), json!(next))]))
        }
    }
}

/// One seeded mutation of the locked policy. Menu items that do not apply
/// or would not validate are skipped in menu order.
pub fn scripted_mutation(ctx: &ProposalContext, rng_seed: u64) -> (PolicyDocument, Option<MutationKind>) {
    let parent = &ctx.locked;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let start = rng.gen_range(0..MUTATION_MENU.len());
    let id = format!(
        "p{:012x}",
        derive_seed(rng_seed, hash_str(&parent.to_json())) & 0xffff_ffff_ffff
    );
    for k in 0..MUTATION_MENU.len() {
        let kind = MUTATION_MENU[(start + k) % MUTATION_MENU.len()];
        let Some(mut doc) = apply_mutation(kind, parent, ctx.stage.problem_kind, ctx.max_attempts_cap, &mut rng) else {
            continue;
        };
        if policy_diff(parent, &doc).is_empty() || validate_policy(&doc, ctx.max_attempts_cap).is_err() {
            continue;
        }
        doc.policy_id = id;
        doc.metadata = BTreeMap::from([
            ("parent".into(), json!(parent.policy_id)),
            ("mutation".into(), json!(kind.name())),
        ]);
        return (doc, Some(kind));
    }
    let mut doc = parent.clone();
    doc.policy_id = id;
    (doc, None)
}

pub fn scripted_propose(ctx: &ProposalContext, rng_seed: u64) -> PolicyDocument {
    scripted_mutation(ctx, rng_seed).0
}

fn fmt_score(s: Option<f64>) -> String {
    s.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}

pub fn render_prompt(ctx: &ProposalContext) -> String {
    let mut p = String::new();
    p.push_str(
        "You are planning experiments for an adaptive variational quantum optimization controller. \
         Propose one policy document that you expect to lower the average gap on the current stage \
         without regressing earlier stages. Lower gap is better; infeasible results score 1.0.\n\n",
    );
    let _ = writeln!(p, "## Design space\n{}\n", ctx.design_space);
    let _ = writeln!(p, "## Policy schema\n```json\n{}\n```\n", ctx.schema.trim_end());
    let _ = writeln!(
        p,
        "## Stage\nname: {}\nproblem: {}\ninstances: {}\nlocked score: {}\nmax_attempts cap: {}\n",
        ctx.stage.name,
        serde_json::to_value(ctx.stage.problem_kind).expect("kind serializes").as_str().unwrap_or(""),
        ctx.stage.instance_count,
        fmt_score(ctx.stage.locked_score),
        ctx.max_attempts_cap
    );
    let _ = writeln!(p, "## Locked policy\n```json\n{}\n```\n", ctx.locked.to_json());
    if !ctx.digests.is_empty() {
        p.push_str("## Recent candidates (oldest first)\n");
        for d in &ctx.digests {
            let _ = writeln!(
                p,
                "- {}: scout {}, confirmed {}",
                d.candidate_id,
                fmt_score(d.scout_score),
                fmt_score(d.confirmed_score)
            );
            if let Some(g) = d.diagnostics {
                let _ = writeln!(
                    p,
                    "  gap {:.6}, feasibility_rate {:.6}, top1_prob {:.6}, stagnated {:.6}",
                    g.gap, g.feasibility_rate, g.top1_prob, g.stagnated
                );
            }
            if d.diff.is_empty() {
                p.push_str("  diff: none\n");
            }
            for line in &d.diff {
                let _ = writeln!(p, "  diff: {line}");
            }
        }
        p.push('\n');
    }
    p.push_str(
        "## Answer\nReturn exactly one complete policy document as JSON inside a single ```json fenced block. \
         Use a new policy_id. Do not include any other code blocks.\n",
    );
    p
}
