use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use proptest::prelude::*;

use qpolicy_core::policy::{Budget, Instance};
use qpolicy_core::solvers::{AttemptOutcome, Family, SolverConfig};
use qpolicy_harness::curriculum::{
    confirm, promote, replay_check, run_curriculum, run_from_config, scout_eval, suite_score, CandidateRecord,
    CandidateStatus, Curriculum, FixedProposer, LoadedStage, Provenance, RunConfig, ScriptedProposer,
};
use qpolicy_harness::events::read_events;
use qpolicy_harness::report::{emit_report, reconstruct};
use qpolicy_harness::HarnessError;

mod support;
use support::{planted_stage, policy, repo_root, Planted};

use Family::*;

fn refs(stage: &LoadedStage) -> Vec<&dyn Instance> {
    stage.all()
}

fn record(id: &str, doc_family: Family) -> CandidateRecord {
    CandidateRecord::new(
        id.into(),
        "s".into(),
        policy(id, doc_family),
        Provenance {
            proposer: "fixed".into(),
            parent: "baseline".into(),
            mutation: None,
            fallback: false,
            temperature: None,
        },
    )
}

fn curriculum(stages: Vec<LoadedStage>, held_out: Option<LoadedStage>, seed: u64) -> Curriculum {
    Curriculum {
        stages,
        held_out,
        initial: policy("baseline-vqe", Vqe),
        seed,
        max_attempts_cap: 4,
    }
}

#[test]
fn suite_score_is_the_mean_final_gap() {
    let s = planted_stage(
        "s",
        vec![Planted::boxed("a", &[(Vqe, 0.0)]), Planted::boxed("b", &[(Vqe, 0.5)])],
        &["a"],
        &[],
    );
    let b = Budget::default();
    assert_eq!(suite_score(&policy("p", Vqe), &refs(&s), &b, 0).unwrap().score, 0.25);
    // No gap is planted for QAOA, so every instance is infeasible.
    let all_bad = suite_score(&policy("p", Qaoa), &refs(&s), &b, 0).unwrap();
    assert_eq!(all_bad.score, 1.0);
    assert_eq!(all_bad.per_instance.len(), 2);
    let one = planted_stage("one", vec![Planted::boxed("c", &[(Vqe, 0.3)])], &["c"], &[]);
    assert_eq!(suite_score(&policy("p", Vqe), &refs(&one), &b, 0).unwrap().score, 0.3);
    assert!(matches!(suite_score(&policy("p", Vqe), &[], &b, 0), Err(HarnessError::Config(_))));
}

#[test]
fn scouting_can_be_optimistic() {
    let s = planted_stage(
        "s",
        vec![Planted::boxed("easy", &[(Qaoa, 0.0)]), Planted::boxed("hard", &[(Qaoa, 1.0)])],
        &["easy"],
        &[],
    );
    let mut c = record("c", Qaoa);
    scout_eval(&mut c, &s, 1).unwrap();
    assert_eq!((c.scout_score, c.status), (Some(0.0), CandidateStatus::Scouted));
    promote(std::slice::from_mut(&mut c), 1);
    let first = confirm(&mut c, &s, 1).unwrap();
    assert_eq!((c.confirmed_score, c.status), (Some(0.5), CandidateStatus::Confirmed));
    assert_eq!(c.proxy_divergence(), Some(-0.5));
    let mut again = record("c", Qaoa);
    again.status = CandidateStatus::Promoted;
    assert_eq!(confirm(&mut again, &s, 1).unwrap(), first);
}

#[test]
fn promotion_takes_the_lowest_scouts_with_id_ties() {
    let mut archive: Vec<CandidateRecord> = [("c0", 0.3), ("c1", 0.1), ("c2", 0.5)]
        .iter()
        .map(|&(id, s)| {
            let mut c = record(id, Vqe);
            c.scout_score = Some(s);
            c.status = CandidateStatus::Scouted;
            c
        })
        .collect();
    assert_eq!(promote(&mut archive.clone(), 2), ["c1", "c0"]);
    assert_eq!(promote(&mut archive.clone(), 9).len(), 3);
    archive[2].scout_score = Some(0.3);
    assert_eq!(promote(&mut archive, 2), ["c1", "c0"]);
    assert_eq!(archive[2].status, CandidateStatus::Scouted);
}

fn replay_fixture() -> (LoadedStage, LoadedStage) {
    let one = planted_stage(
        "one",
        vec![Planted::boxed("o", &[(Vqe, 0.2), (Qaoa, 0.2), (WsQaoa, 1.0)])],
        &["o"],
        &[],
    );
    let two = planted_stage(
        "two",
        vec![Planted::boxed("t", &[(Vqe, 0.5), (Qaoa, 0.4), (WsQaoa, 0.0)])],
        &["t"],
        &["one"],
    );
    (one, two)
}

#[test]
fn replay_guardrail_examples() {
    let (one, mut two) = replay_fixture();
    let locked = BTreeMap::from([("one".to_string(), 0.2)]);
    let mut matching = record("m", Qaoa);
    assert!(replay_check(&mut matching, &locked, &two.spec, &[&one], 5).unwrap().passed());
    let mut regressor = record("r", WsQaoa);
    let out = replay_check(&mut regressor, &locked, &two.spec, &[&one], 5).unwrap();
    let failure = out.failure.unwrap();
    assert_eq!(failure.stage, "one");
    assert!((failure.regression - 0.8).abs() < 1e-12);
    assert_eq!(regressor.status, CandidateStatus::GuardrailFailed);
    two.spec.guardrail_delta = 1.0;
    let mut vacuous = record("v", WsQaoa);
    assert!(replay_check(&mut vacuous, &locked, &two.spec, &[&one], 5).unwrap().passed());
}

#[test]
fn a_worse_confirmed_candidate_is_not_locked() {
    let mut s = planted_stage(
        "s",
        vec![Planted::boxed("a", &[(Vqe, 0.3), (Qaoa, 0.0)]), Planted::boxed("b", &[(Vqe, 0.3), (Qaoa, 1.0)])],
        &["a"],
        &[],
    );
    s.spec.proposals_per_stage = 1;
    let dir = tempfile::tempdir().unwrap();
    let mut proposer = FixedProposer::new(vec![policy("lucky", Qaoa)]);
    let report = run_curriculum(&curriculum(vec![s], None, 0), &mut proposer, dir.path()).unwrap();
    let stage = &report.stages[0];
    assert_eq!(stage.best_confirmed_score, Some(0.5));
    assert_eq!(stage.locked_policy_id, "baseline-vqe");
    assert_eq!(stage.locked_candidate_id, None);
    assert_eq!(stage.locked_score, stage.baseline_score);
}

#[test]
fn zero_proposals_is_a_pure_baseline_evaluation() {
    let mut s = planted_stage("s", vec![Planted::boxed("a", &[(Vqe, 0.4)])], &["a"], &[]);
    s.spec.proposals_per_stage = 0;
    let dir = tempfile::tempdir().unwrap();
    let report = run_curriculum(&curriculum(vec![s], None, 0), &mut ScriptedProposer, dir.path()).unwrap();
    let stage = &report.stages[0];
    assert_eq!((stage.baseline_score, stage.locked_score), (0.4, 0.4));
    assert_eq!((stage.candidates, stage.best_scout_score, stage.best_confirmed_score), (0, None, None));
    assert!(!report.event_counts.contains_key("candidate_proposed"));
    assert!(report.completed);
}

#[test]
fn held_out_is_evaluated_once_without_candidates() {
    let mut s = planted_stage("s", vec![Planted::boxed("a", &[(Vqe, 0.4), (Qaoa, 0.1)])], &["a"], &[]);
    s.spec.proposals_per_stage = 3;
    let h = planted_stage("final", vec![Planted::boxed("h", &[(Vqe, 0.9), (Qaoa, 0.6)])], &["h"], &[]);
    let dir = tempfile::tempdir().unwrap();
    let mut proposer = FixedProposer::new(vec![policy("q", Qaoa)]);
    let report = run_curriculum(&curriculum(vec![s], Some(h), 0), &mut proposer, dir.path()).unwrap();
    assert_eq!(report.event_counts["held_out_evaluated"], 1);
    let held = report.held_out.unwrap();
    assert_eq!((held.policy_id.as_str(), held.score), ("q", 0.6));
    let events = read_events(&dir.path().join("events.jsonl")).unwrap();
    assert!(events.iter().filter(|e| e.stage.as_deref() == Some("final")).all(|e| e.candidate_id.is_none()));
    let rec = reconstruct(&events).unwrap();
    assert!(rec.candidates.iter().all(|c| c.stage == "s"));
}

/// Counts solver attempts across clones.
struct Counting {
    inner: Planted,
    calls: Arc<AtomicUsize>,
}

impl Instance for Counting {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn attempt(&self, config: &SolverConfig, attempt_index: usize) -> Result<AttemptOutcome, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.attempt(config, attempt_index)
    }
}

fn counted_curriculum(calls: &Arc<AtomicUsize>) -> Curriculum {
    let gaps = [(Vqe, 0.6), (Qaoa, 0.3), (WsQaoa, 0.2), (Qrao, 0.5)];
    let mk = |id: &str| -> qpolicy_harness::curriculum::BoxedInstance {
        Box::new(Counting {
            inner: Planted::new(id, &gaps),
            calls: Arc::clone(calls),
        })
    };
    let mut one = planted_stage("one", vec![mk("a"), mk("b")], &["a"], &[]);
    let mut two = planted_stage("two", vec![mk("c"), mk("d")], &["c"], &["one"]);
    one.spec.proposals_per_stage = 4;
    two.spec.proposals_per_stage = 4;
    curriculum(vec![one, two], None, 77)
}

fn semantic(path: &Path) -> Vec<(String, Option<String>, Option<String>, serde_json::Value)> {
    read_events(path)
        .unwrap()
        .into_iter()
        .map(|e| (e.event_type, e.stage, e.candidate_id, e.payload))
        .collect()
}

#[test]
fn an_interrupted_run_resumes_without_repeating_work() {
    let full_calls = Arc::new(AtomicUsize::new(0));
    let full_dir = tempfile::tempdir().unwrap();
    let full = run_curriculum(&counted_curriculum(&full_calls), &mut ScriptedProposer, full_dir.path()).unwrap();
    let full_events = semantic(&full_dir.path().join("events.jsonl"));

    let dir = tempfile::tempdir().unwrap();
    run_curriculum(&counted_curriculum(&Arc::new(AtomicUsize::new(0))), &mut ScriptedProposer, dir.path()).unwrap();
    let log = dir.path().join("events.jsonl");
    let text = std::fs::read_to_string(&log).unwrap();
    let keep = full_events.len() / 2;
    let mut prefix: String = text.lines().take(keep).map(|l| format!("{l}\n")).collect();
    prefix.push_str(&text.lines().nth(keep).unwrap()[..20]);
    std::fs::write(&log, prefix).unwrap();
    std::fs::remove_dir_all(dir.path().join("reports")).unwrap();

    let resumed_calls = Arc::new(AtomicUsize::new(0));
    let resumed = run_curriculum(&counted_curriculum(&resumed_calls), &mut ScriptedProposer, dir.path()).unwrap();
    assert_eq!(resumed, full);
    assert_eq!(semantic(&log), full_events);
    let (r, f) = (resumed_calls.load(Ordering::SeqCst), full_calls.load(Ordering::SeqCst));
    assert!(r > 0 && r < f, "resumed run made {r} attempts, full run {f}");

    let mut seen = BTreeSet::new();
    for (kind, _, id, _) in &full_events {
        if let Some(id) = id {
            assert!(seen.insert((kind.clone(), id.clone())), "{kind} recorded twice for {id}");
        }
    }

    // A completed log replays entirely.
    let again_calls = Arc::new(AtomicUsize::new(0));
    run_curriculum(&counted_curriculum(&again_calls), &mut ScriptedProposer, dir.path()).unwrap();
    assert_eq!(again_calls.load(Ordering::SeqCst), 0);
    assert_eq!(semantic(&log).len(), full_events.len());
}

#[test]
fn reports_account_for_every_candidate_and_are_reproducible() {
    let calls = Arc::new(AtomicUsize::new(0));
    let dir = tempfile::tempdir().unwrap();
    let report = run_curriculum(&counted_curriculum(&calls), &mut ScriptedProposer, dir.path()).unwrap();
    let reports = dir.path().join("reports");
    let read = |name: &str| std::fs::read(reports.join(name)).unwrap();
    let before = (read("summary.csv"), read("trajectory.csv"), read("report.json"));
    assert_eq!(emit_report(dir.path()).unwrap(), report);
    assert_eq!(before, (read("summary.csv"), read("trajectory.csv"), read("report.json")));

    let rows = |bytes: &[u8]| csv::Reader::from_reader(bytes).records().count();
    assert_eq!(rows(&before.0), report.stages.len());
    let candidates: usize = report.stages.iter().map(|s| s.candidates).sum();
    assert_eq!(rows(&before.1), candidates + 2 * report.stages.len());
    for s in &report.stages {
        let dir = dir.path().join("candidates").join(format!("{}-c000", s.name));
        assert!(dir.join("policy.json").exists() && dir.join("record.json").exists());
    }

    let other = tempfile::tempdir().unwrap();
    let twin = run_curriculum(&counted_curriculum(&calls), &mut ScriptedProposer, other.path()).unwrap();
    assert_eq!(twin, report);
    assert_eq!(std::fs::read(other.path().join("reports/trajectory.csv")).unwrap(), before.1);
}

#[test]
fn emitting_without_a_log_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(emit_report(dir.path()), Err(HarnessError::EventLog(_))));
    let mut f = std::fs::File::create(dir.path().join("events.jsonl")).unwrap();
    writeln!(f, "not json").unwrap();
    assert!(matches!(emit_report(dir.path()), Err(HarnessError::EventLog(_))));
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let graph = repo_root().join("data/mis/mis-n8-0.txt");
    let path = dir.join("tiny.json");
    let config = serde_json::json!({
        "seed": 5,
        "proposer": "scripted",
        "stages": [{
            "name": "tiny",
            "problem_kind": "mis",
            "instances": [graph],
            "replay_stages": [],
            "proposals_per_stage": 1,
            "promote_k": 1
        }]
    });
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

#[test]
fn a_run_directory_is_tied_to_its_config_and_seed() {
    let work = tempfile::tempdir().unwrap();
    let config = RunConfig::load(&tiny_config(work.path())).unwrap();
    let run = work.path().join("run");
    let first = run_from_config(&config, 5, &run).unwrap();
    assert!(run.join("config.json").exists());
    assert_eq!(run_from_config(&config, 5, &run).unwrap(), first);
    let err = run_from_config(&config, 6, &run).unwrap_err();
    assert!(matches!(err, HarnessError::Config(_)), "{err}");
}

fn gap_table() -> impl Strategy<Value = Vec<(Family, f64)>> {
    prop::collection::vec(prop::sample::select(vec![0.0, 0.1, 0.25, 0.5, 0.75, 1.0]), 4)
        .prop_map(|g| Family::ALL.iter().copied().zip(g).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn locks_never_regress_and_respect_guardrails(
        tables in prop::collection::vec(gap_table(), 4),
        seed in any::<u64>(),
        delta in prop::sample::select(vec![0.0, 0.02, 0.3]),
    ) {
        let mut one = planted_stage(
            "one",
            vec![Planted::boxed("a", &tables[0]), Planted::boxed("b", &tables[1])],
            &["a"],
            &[],
        );
        let mut two = planted_stage(
            "two",
            vec![Planted::boxed("c", &tables[2]), Planted::boxed("d", &tables[3])],
            &["c"],
            &["one"],
        );
        one.spec.proposals_per_stage = 5;
        two.spec.proposals_per_stage = 5;
        two.spec.guardrail_delta = delta;
        let dir = tempfile::tempdir().unwrap();
        let report = run_curriculum(&curriculum(vec![one, two], None, seed), &mut ScriptedProposer, dir.path()).unwrap();
        let records = reconstruct(&read_events(&dir.path().join("events.jsonl")).unwrap()).unwrap().candidates;
        for s in &report.stages {
            prop_assert!(s.locked_score <= s.baseline_score);
            let passers: Vec<&CandidateRecord> = records
                .iter()
                .filter(|c| c.stage == s.name && c.status == CandidateStatus::Confirmed)
                .collect();
            let best = passers.iter().filter_map(|c| c.confirmed_score).fold(f64::INFINITY, f64::min);
            match &s.locked_candidate_id {
                Some(id) => {
                    let c = records.iter().find(|c| &c.candidate_id == id).unwrap();
                    prop_assert_eq!(c.status, CandidateStatus::Confirmed);
                    prop_assert_eq!(c.confirmed_score, Some(best));
                    prop_assert!(best < s.baseline_score);
                }
                None => prop_assert!(best >= s.baseline_score),
            }
            for c in records.iter().filter(|c| c.stage == s.name) {
                prop_assert_eq!(c.confirmed_score.is_some(), matches!(c.status, CandidateStatus::Confirmed | CandidateStatus::GuardrailFailed));
            }
        }
        let locked_one = report.stages[0].locked_score;
        if let Some(id) = &report.stages[1].locked_candidate_id {
            let c = records.iter().find(|c| &c.candidate_id == id).unwrap();
            prop_assert!(c.replay_results["one"] <= locked_one + delta);
        }
    }
}
