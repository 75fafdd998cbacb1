//! Declarative controller policies: the document format, the rule
//! condition language, and the per-instance attempt loop.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::seed::derive_seed;
use crate::solvers::config::{SolverConfig, CONFIG_FIELDS};
use crate::solvers::{AttemptOutcome, Family};

pub const DEFAULT_MAX_ATTEMPTS_CAP: usize = 4;

/// JSON schema for policy documents.
pub const POLICY_SCHEMA: &str = include_str!("../schema/policy.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleAction {
    Stop,
    Retry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryRule {
    pub condition: String,
    pub action: RuleAction,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub patch: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub policy_id: String,
    pub initial_family: Family,
    pub base_config: SolverConfig,
    #[serde(default)]
    pub rules: Vec<RetryRule>,
    pub max_attempts: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Value>,
}

impl PolicyDocument {
    /// Single-configuration policy for `family` with default settings.
    pub fn baseline(policy_id: impl Into<String>, family: Family) -> Self {
        PolicyDocument {
            policy_id: policy_id.into(),
            initial_family: family,
            base_config: SolverConfig::for_family(family),
            rules: Vec::new(),
            max_attempts: 1,
            metadata: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }
}

/// One validation failure, located by a field path such as `rules[0].patch`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyIssue {
    pub location: String,
    pub message: String,
}

impl fmt::Display for PolicyIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

fn issue(location: impl Into<String>, message: impl fmt::Display) -> PolicyIssue {
    PolicyIssue {
        location: location.into(),
        message: message.to_string(),
    }
}

/// Strict parse followed by validation.
pub fn parse_policy(text: &str, max_attempts_cap: usize) -> Result<PolicyDocument, Vec<PolicyIssue>> {
    let doc: PolicyDocument =
        serde_json::from_str(text).map_err(|e| vec![issue("document", e)])?;
    validate_policy(&doc, max_attempts_cap)?;
    Ok(doc)
}

pub fn validate_policy(doc: &PolicyDocument, max_attempts_cap: usize) -> Result<(), Vec<PolicyIssue>> {
    let mut issues = Vec::new();
    if doc.policy_id.trim().is_empty() {
        issues.push(issue("policy_id", "must not be empty"));
    }
    if doc.max_attempts == 0 || doc.max_attempts > max_attempts_cap {
        issues.push(issue(
            "max_attempts",
            format!("{} not in [1, {max_attempts_cap}]", doc.max_attempts),
        ));
    }
    if doc.base_config.family != doc.initial_family {
        issues.push(issue(
            "base_config.family",
            format!(
                "{} does not match initial_family {}",
                doc.base_config.family, doc.initial_family
            ),
        ));
    }
    if let Err(e) = doc.base_config.validate() {
        issues.push(issue("base_config", e));
    }
    for (k, rule) in doc.rules.iter().enumerate() {
        if let Err(e) = parse_condition(&rule.condition) {
            issues.push(issue(format!("rules[{k}].condition"), e));
        }
        for key in rule.patch.keys() {
            if !CONFIG_FIELDS.contains(&key.as_str()) {
                issues.push(issue(format!("rules[{k}].patch.{key}"), "unknown config field"));
            }
        }
        if rule.action == RuleAction::Retry {
            if let Err(e) = doc.base_config.apply_patch(&rule.patch) {
                issues.push(issue(format!("rules[{k}].patch"), e));
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Feasible,
    Gap,
    FeasibilityRate,
    Top1Prob,
    Stagnated,
    AttemptIndex,
    Family,
}

impl Field {
    fn from_name(name: &str) -> Option<Field> {
        Some(match name {
            "feasible" => Field::Feasible,
            "gap" => Field::Gap,
            "feasibility_rate" => Field::FeasibilityRate,
            "top1_prob" => Field::Top1Prob,
            "stagnated" => Field::Stagnated,
            "attempt_index" => Field::AttemptIndex,
            "family" => Field::Family,
            _ => return None,
        })
    }

    fn is_bool(self) -> bool {
        matches!(self, Field::Feasible | Field::Stagnated)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(f64),
    Bool(bool),
    Family(Family),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Const(bool),
    Flag(Field),
    Compare(Field, CmpOp, Literal),
    Not(Box<Condition>),
    And(Vec<Condition>),
    Or(Vec<Condition>),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Op(CmpOp),
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<Token>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' {
            out.push(Token::Open);
            i += 1;
        } else if c == ')' {
            out.push(Token::Close);
            i += 1;
        } else if "=!<>".contains(c) {
            let two = chars.get(i + 1) == Some(&'=');
            let op = match (c, two) {
                ('=', true) => CmpOp::Eq,
                ('!', true) => CmpOp::Ne,
                ('<', true) => CmpOp::Le,
                ('>', true) => CmpOp::Ge,
                ('<', false) => CmpOp::Lt,
                ('>', false) => CmpOp::Gt,
                _ => return Err(format!("unexpected `{c}` at offset {i}")),
            };
            out.push(Token::Op(op));
            i += if two { 2 } else { 1 };
        } else if c == '"' || c == '\'' {
            let end = chars[i + 1..]
                .iter()
                .position(|&d| d == c)
                .ok_or_else(|| format!("unterminated string at offset {i}"))?;
            out.push(Token::Ident(chars[i + 1..i + 1 + end].iter().collect()));
            i += end + 2;
        } else if c.is_ascii_digit() || c == '.' || c == '-' {
            let start = i;
            i += 1;
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '.'
                    || ((chars[i] == '-' || chars[i] == '+') && matches!(chars[i - 1], 'e' | 'E')))
            {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| format!("bad number `{s}`"))?;
            out.push(Token::Number(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else {
            return Err(format!("unexpected `{c}` at offset {i}"));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn keyword(&mut self, word: &str) -> bool {
        if matches!(self.peek(), Some(Token::Ident(w)) if w == word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn or(&mut self) -> Result<Condition, String> {
        let mut parts = vec![self.and()?];
        while self.keyword("or") {
            parts.push(self.and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Condition::Or(parts) })
    }

    fn and(&mut self) -> Result<Condition, String> {
        let mut parts = vec![self.not()?];
        while self.keyword("and") {
            parts.push(self.not()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Condition::And(parts) })
    }

    fn not(&mut self) -> Result<Condition, String> {
        if self.keyword("not") {
            return Ok(Condition::Not(Box::new(self.not()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Condition, String> {
        let token = self.peek().cloned().ok_or("unexpected end of condition")?;
        self.pos += 1;
        match token {
            Token::Open => {
                let inner = self.or()?;
                if self.peek() != Some(&Token::Close) {
                    return Err("missing `)`".into());
                }
                self.pos += 1;
                Ok(inner)
            }
            Token::Ident(word) => {
                match word.as_str() {
                    "true" => return Ok(Condition::Const(true)),
                    "false" => return Ok(Condition::Const(false)),
                    _ => {}
                }
                let field = Field::from_name(&word).ok_or_else(|| format!("unknown field `{word}`"))?;
                if let Some(Token::Op(op)) = self.peek().cloned() {
                    self.pos += 1;
                    let literal = self.literal(field)?;
                    if !matches!(literal, Literal::Number(_)) && !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                        return Err(format!("`{word}` only supports == and !="));
                    }
                    Ok(Condition::Compare(field, op, literal))
                } else if field.is_bool() {
                    Ok(Condition::Flag(field))
                } else {
                    Err(format!("`{word}` needs a comparison"))
                }
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }

    fn literal(&mut self, field: Field) -> Result<Literal, String> {
        let token = self.peek().cloned().ok_or("missing comparison value")?;
        self.pos += 1;
        match (field, token) {
            (Field::Family, Token::Ident(name)) => Family::from_name(&name)
                .map(Literal::Family)
                .ok_or_else(|| format!("unknown family `{name}`")),
            (f, Token::Ident(b)) if f.is_bool() && (b == "true" || b == "false") => {
                Ok(Literal::Bool(b == "true"))
            }
            (Field::Family, t) => Err(format!("family compared with {t:?}")),
            (f, Token::Number(v)) if !f.is_bool() => Ok(Literal::Number(v)),
            (f, t) => Err(format!("{f:?} compared with {t:?}")),
        }
    }
}

pub fn parse_condition(text: &str) -> Result<Condition, String> {
    let mut p = Parser {
        tokens: tokenize(text)?,
        pos: 0,
    };
    if p.tokens.is_empty() {
        return Err("empty condition".into());
    }
    let c = p.or()?;
    if p.pos != p.tokens.len() {
        return Err(format!("trailing input after token {}", p.pos));
    }
    Ok(c)
}

fn compare<T: PartialOrd>(a: T, op: CmpOp, b: T) -> bool {
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Gt => a > b,
        CmpOp::Ge => a >= b,
    }
}

impl Condition {
    pub fn eval(&self, o: &AttemptOutcome) -> bool {
        match self {
            Condition::Const(b) => *b,
            Condition::Flag(Field::Feasible) => o.feasible,
            Condition::Flag(Field::Stagnated) => o.stagnated,
            Condition::Flag(_) => false,
            Condition::Compare(field, op, lit) => match (field, lit) {
                (Field::Feasible, Literal::Bool(b)) => compare(o.feasible, *op, *b),
                (Field::Stagnated, Literal::Bool(b)) => compare(o.stagnated, *op, *b),
                (Field::Family, Literal::Family(f)) => compare(o.family, *op, *f),
                (Field::Gap, Literal::Number(v)) => compare(o.gap, *op, *v),
                (Field::FeasibilityRate, Literal::Number(v)) => compare(o.feasibility_rate, *op, *v),
                (Field::Top1Prob, Literal::Number(v)) => compare(o.top1_prob, *op, *v),
                (Field::AttemptIndex, Literal::Number(v)) => compare(o.attempt_index as f64, *op, *v),
                _ => false,
            },
            Condition::Not(c) => !c.eval(o),
            Condition::And(cs) => cs.iter().all(|c| c.eval(o)),
            Condition::Or(cs) => cs.iter().any(|c| c.eval(o)),
        }
    }
}

/// Parses and evaluates; unparsable conditions are false.
pub fn eval_condition(condition: &str, outcome: &AttemptOutcome) -> bool {
    parse_condition(condition).map(|c| c.eval(outcome)).unwrap_or(false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum StopReason {
    Optimal,
    MaxAttempts,
    NoRuleMatched,
    RuleStop { rule: usize },
    InvalidPatch { rule: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Stop(StopReason),
    Retry { rule: usize, config: SolverConfig },
}

fn first_match(doc: &PolicyDocument, outcome: &AttemptOutcome) -> Option<usize> {
    doc.rules.iter().position(|r| eval_condition(&r.condition, outcome))
}

/// Decides what follows the last outcome in `history`. The effective
/// configuration is rebuilt by replaying the rules that fired earlier.
pub fn next_action(doc: &PolicyDocument, history: &[AttemptOutcome]) -> Decision {
    let last = history.last().expect("history must be nonempty");
    if last.gap == 0.0 {
        return Decision::Stop(StopReason::Optimal);
    }
    if last.attempt_index + 1 >= doc.max_attempts {
        return Decision::Stop(StopReason::MaxAttempts);
    }
    let mut config = doc.base_config.clone();
    for outcome in history {
        let Some(k) = first_match(doc, outcome) else {
            return Decision::Stop(StopReason::NoRuleMatched);
        };
        let rule = &doc.rules[k];
        if rule.action == RuleAction::Stop {
            return Decision::Stop(StopReason::RuleStop { rule: k });
        }
        config = match config.apply_patch(&rule.patch) {
            Ok(c) => c,
            Err(e) => {
                return Decision::Stop(StopReason::InvalidPatch {
                    rule: k,
                    message: e.to_string(),
                })
            }
        };
        if std::ptr::eq(outcome, last) {
            return Decision::Retry { rule: k, config };
        }
    }
    unreachable!("loop returns on the last outcome")
}

/// Caps applied on top of a policy's own settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    #[serde(default)]
    pub maxiter: Option<usize>,
    #[serde(default)]
    pub sampler_shots: Option<u64>,
    #[serde(default)]
    pub estimator_shots: Option<u64>,
}

impl Budget {
    pub fn apply(&self, config: &mut SolverConfig) {
        if let Some(m) = self.maxiter {
            config.maxiter = config.maxiter.min(m).max(1);
        }
        if let Some(s) = self.sampler_shots {
            config.sampler_shots = config.sampler_shots.min(s).max(1);
        }
        if let Some(s) = self.estimator_shots {
            config.estimator_shots = config.estimator_shots.min(s);
        }
    }
}

/// A prepared problem instance the controller can attempt.
pub trait Instance: Sync {
    fn id(&self) -> &str;

    /// Runs one solver attempt with a fully resolved configuration.
    fn attempt(&self, config: &SolverConfig, attempt_index: usize) -> Result<AttemptOutcome, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance_id: String,
    pub attempts: Vec<AttemptOutcome>,
    pub final_gap: f64,
    pub final_feasible: bool,
    pub attempts_used: usize,
    pub stop: StopReason,
    /// Solver errors, by attempt index.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<usize, String>,
}

/// Runs attempts until the policy stops; the instance is scored by its
/// best attempt.
pub fn run_controller(doc: &PolicyDocument, instance: &dyn Instance, seed: u64, budget: &Budget) -> InstanceResult {
    let mut config = doc.base_config.clone();
    let mut attempts: Vec<AttemptOutcome> = Vec::new();
    let mut errors = BTreeMap::new();
    let stop = loop {
        let index = attempts.len();
        let mut run_config = config.clone();
        run_config.seed = derive_seed(seed, index as u64);
        budget.apply(&mut run_config);
        let outcome = match instance.attempt(&run_config, index) {
            Ok(mut o) => {
                o.attempt_index = index;
                o
            }
            Err(e) => {
                log::debug!("{}: attempt {index} failed: {e}", instance.id());
                errors.insert(index, e);
                AttemptOutcome::failed(index, run_config.family)
            }
        };
        attempts.push(outcome);
        match next_action(doc, &attempts) {
            Decision::Stop(reason) => break reason,
            Decision::Retry { config: next, .. } => config = next,
        }
    };
    let best = attempts
        .iter()
        .fold(None::<&AttemptOutcome>, |acc, a| match acc {
            Some(b) if b.gap <= a.gap => Some(b),
            _ => Some(a),
        })
        .expect("at least one attempt");
    InstanceResult {
        instance_id: instance.id().to_string(),
        final_gap: best.gap,
        final_feasible: best.feasible,
        attempts_used: attempts.len(),
        attempts,
        stop,
        errors,
    }
}
