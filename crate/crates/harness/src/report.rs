//! Reports rebuilt from the event log: stage summary, candidate trajectory
//! and materialized candidate files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::curriculum::{
    BaselinePayload, CandidateRecord, CandidateStatus, HeldOutPayload, LockPayload, ProposedPayload, ReplayOutcome,
    SuiteSummary,
};
use crate::events::{read_events, Event};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub baseline_policy_id: String,
    pub baseline_score: f64,
    pub best_scout_score: Option<f64>,
    pub best_confirmed_score: Option<f64>,
    pub locked_policy_id: String,
    pub locked_candidate_id: Option<String>,
    pub locked_score: f64,
    pub candidates: usize,
    /// Scout minus confirmed score per promoted candidate.
    pub proxy_divergence: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutReport {
    pub name: String,
    pub policy_id: String,
    pub score: f64,
    pub per_instance: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stages: Vec<StageReport>,
    pub held_out: Option<HeldOutReport>,
    pub event_counts: BTreeMap<String, usize>,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct TrajectoryRow {
    stage: String,
    row_kind: &'static str,
    candidate_id: String,
    policy_id: String,
    scout_score: Option<f64>,
    confirmed_score: Option<f64>,
    status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SummaryRow {
    stage: String,
    baseline_score: f64,
    best_scout_score: Option<f64>,
    best_confirmed_score: Option<f64>,
    locked_score: f64,
    locked_policy_id: String,
    locked_candidate_id: String,
}

/// Candidate records and reports reconstructed from events.
pub struct Reconstruction {
    pub report: RunReport,
    pub candidates: Vec<CandidateRecord>,
    trajectory: Vec<TrajectoryRow>,
}

fn payload<T: serde::de::DeserializeOwned>(e: &Event) -> Result<T, HarnessError> {
    serde_json::from_value(e.payload.clone())
        .map_err(|err| HarnessError::EventLog(format!("{} event: {err}", e.event_type)))
}

fn status_name(s: CandidateStatus) -> String {
    match serde_json::to_value(s).expect("status serializes") {
        Value::String(s) => s,
        _ => unreachable!(),
    }
}

fn min_opt(a: Option<f64>, b: f64) -> Option<f64> {
    Some(a.map_or(b, |a| a.min(b)))
}

pub fn reconstruct(events: &[Event]) -> Result<Reconstruction, HarnessError> {
    let mut stages: Vec<StageReport> = Vec::new();
    let mut candidates: Vec<CandidateRecord> = Vec::new();
    let mut trajectory = Vec::new();
    let mut held_out = None;
    let mut completed = false;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut baseline: Option<BaselinePayload> = None;
    let mut stage_start = 0usize;

    let cand = |candidates: &mut Vec<CandidateRecord>, e: &Event| -> Result<usize, HarnessError> {
        let id = e
            .candidate_id
            .as_deref()
            .ok_or_else(|| HarnessError::EventLog(format!("{} event without candidate_id", e.event_type)))?;
        candidates
            .iter()
            .position(|c| c.candidate_id == id)
            .ok_or_else(|| HarnessError::EventLog(format!("{} event for unknown candidate {id}", e.event_type)))
    };

    for e in events {
        *counts.entry(e.event_type.clone()).or_insert(0) += 1;
        let stage = e.stage.clone().unwrap_or_default();
        match e.event_type.as_str() {
            "baseline_scored" => {
                baseline = Some(payload(e)?);
                stage_start = candidates.len();
            }
            "candidate_proposed" => {
                let p: ProposedPayload = payload(e)?;
                let id = e.candidate_id.clone().unwrap_or_default();
                candidates.push(CandidateRecord::new(id, stage, p.policy, p.provenance));
            }
            "candidate_scouted" => {
                let s: SuiteSummary = payload(e)?;
                let k = cand(&mut candidates, e)?;
                candidates[k].scout_score = Some(s.score);
                candidates[k].diagnostics = Some(s.diagnostics);
                candidates[k].status = CandidateStatus::Scouted;
            }
            "candidates_promoted" => {
                let ids: Vec<String> = payload(e)?;
                for c in candidates.iter_mut().filter(|c| ids.contains(&c.candidate_id)) {
                    c.status = CandidateStatus::Promoted;
                }
            }
            "candidate_confirmed" => {
                let s: SuiteSummary = payload(e)?;
                let k = cand(&mut candidates, e)?;
                candidates[k].confirmed_score = Some(s.score);
                candidates[k].status = CandidateStatus::Confirmed;
            }
            "replay_checked" => {
                let r: ReplayOutcome = payload(e)?;
                let k = cand(&mut candidates, e)?;
                candidates[k].replay_results = r.results.clone();
                if !r.passed() {
                    candidates[k].status = CandidateStatus::GuardrailFailed;
                }
            }
            "stage_locked" => {
                let lock: LockPayload = payload(e)?;
                let base = baseline
                    .take()
                    .ok_or_else(|| HarnessError::EventLog(format!("stage {stage} locked before its baseline")))?;
                let mut report = StageReport {
                    name: stage.clone(),
                    baseline_policy_id: base.policy.policy_id.clone(),
                    baseline_score: base.summary.score,
                    best_scout_score: None,
                    best_confirmed_score: None,
                    locked_policy_id: lock.policy.policy_id.clone(),
                    locked_candidate_id: lock.candidate_id.clone(),
                    locked_score: lock.score,
                    candidates: candidates.len() - stage_start,
                    proxy_divergence: BTreeMap::new(),
                };
                trajectory.push(TrajectoryRow {
                    stage: stage.clone(),
                    row_kind: "baseline",
                    candidate_id: String::new(),
                    policy_id: base.policy.policy_id.clone(),
                    scout_score: None,
                    confirmed_score: Some(base.summary.score),
                    status: "baseline".into(),
                });
                for c in &mut candidates[stage_start..] {
                    if c.status == CandidateStatus::Scouted {
                        c.status = CandidateStatus::Rejected;
                    }
                    if let Some(s) = c.scout_score {
                        report.best_scout_score = min_opt(report.best_scout_score, s);
                    }
                    if let Some(s) = c.confirmed_score {
                        report.best_confirmed_score = min_opt(report.best_confirmed_score, s);
                    }
                    if let Some(d) = c.proxy_divergence() {
                        report.proxy_divergence.insert(c.candidate_id.clone(), d);
                    }
                    trajectory.push(TrajectoryRow {
                        stage: stage.clone(),
                        row_kind: "candidate",
                        candidate_id: c.candidate_id.clone(),
                        policy_id: c.policy.policy_id.clone(),
                        scout_score: c.scout_score,
                        confirmed_score: c.confirmed_score,
                        status: status_name(c.status),
                    });
                }
                trajectory.push(TrajectoryRow {
                    stage: stage.clone(),
                    row_kind: "locked",
                    candidate_id: lock.candidate_id.clone().unwrap_or_default(),
                    policy_id: lock.policy.policy_id.clone(),
                    scout_score: None,
                    confirmed_score: Some(lock.score),
                    status: "locked".into(),
                });
                stages.push(report);
            }
            "held_out_evaluated" => {
                let h: HeldOutPayload = payload(e)?;
                held_out = Some(HeldOutReport {
                    name: stage,
                    policy_id: h.policy.policy_id,
                    score: h.summary.score,
                    per_instance: h.summary.per_instance,
                });
            }
            "run_completed" => completed = true,
            _ => {}
        }
    }
    Ok(Reconstruction {
        report: RunReport {
            stages,
            held_out,
            event_counts: counts,
            completed,
        },
        candidates,
        trajectory,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn pretty(value: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializes");
    s.push('\n');
    s.into_bytes()
}

/// Rebuilds reports and candidate files from `events.jsonl`. Output
/// depends only on event contents, never on timestamps.
pub fn emit_report(run_dir: &Path) -> Result<RunReport, HarnessError> {
    let path = run_dir.join("events.jsonl");
    if !path.exists() {
        return Err(HarnessError::EventLog(format!("{} not found", path.display())));
    }
    let events = read_events(&path)?;
    if events.is_empty() {
        return Err(HarnessError::EventLog(format!("{} is empty", path.display())));
    }
    let rec = reconstruct(&events)?;
    let summary: Vec<SummaryRow> = rec
        .report
        .stages
        .iter()
        .map(|s| SummaryRow {
            stage: s.name.clone(),
            baseline_score: s.baseline_score,
            best_scout_score: s.best_scout_score,
            best_confirmed_score: s.best_confirmed_score,
            locked_score: s.locked_score,
            locked_policy_id: s.locked_policy_id.clone(),
            locked_candidate_id: s.locked_candidate_id.clone().unwrap_or_default(),
        })
        .collect();
    let reports = run_dir.join("reports");
    write_file(
        &reports.join("summary.csv"),
        &csv_bytes(
            &summary,
            &[
                "stage",
                "baseline_score",
                "best_scout_score",
                "best_confirmed_score",
                "locked_score",
                "locked_policy_id",
                "locked_candidate_id",
            ],
        ),
    )?;
    write_file(
        &reports.join("trajectory.csv"),
        &csv_bytes(
            &rec.trajectory,
            &["stage", "row_kind", "candidate_id", "policy_id", "scout_score", "confirmed_score", "status"],
        ),
    )?;
    write_file(&reports.join("report.json"), &pretty(&rec.report))?;
    for c in &rec.candidates {
        let dir = run_dir.join("candidates").join(&c.candidate_id);
        write_file(&dir.join("policy.json"), &pretty(&c.policy))?;
        write_file(&dir.join("record.json"), &pretty(c))?;
    }
    Ok(rec.report)
}
