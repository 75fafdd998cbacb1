//! Fixtures shared by the harness tests: planted instances whose gap is a
//! fixed function of the solver family, and a local chat-completions stub.
#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use qpolicy_core::policy::{Instance, PolicyDocument};
use qpolicy_core::solvers::{AttemptOutcome, Family, SolverConfig};
use qpolicy_harness::curriculum::{BoxedInstance, LoadedStage, StageSpec};
use qpolicy_core::tasks::ProblemKind;

/// Gap is looked up by family; unknown families score 1.0.
pub struct Planted {
    pub id: String,
    pub gaps: BTreeMap<Family, f64>,
}

impl Planted {
    pub fn new(id: &str, gaps: &[(Family, f64)]) -> Self {
        Planted {
            id: id.to_string(),
            gaps: gaps.iter().copied().collect(),
        }
    }

    pub fn boxed(id: &str, gaps: &[(Family, f64)]) -> BoxedInstance {
        Box::new(Planted::new(id, gaps))
    }
}

impl Instance for Planted {
    fn id(&self) -> &str {
        &self.id
    }

    fn attempt(&self, config: &SolverConfig, attempt_index: usize) -> Result<AttemptOutcome, String> {
        let gap = self.gaps.get(&config.family).copied().unwrap_or(1.0);
        Ok(AttemptOutcome {
            gap,
            feasible: gap < 1.0,
            feasibility_rate: 1.0,
            top1_prob: 0.5,
            stagnated: false,
            n_unique: 1,
            attempt_index,
            family: config.family,
            best_objective: gap,
        })
    }
}

/// A stage over planted instances; `scout` names the scout subset.
pub fn planted_stage(name: &str, instances: Vec<BoxedInstance>, scout: &[&str], replay: &[&str]) -> LoadedStage {
    let paths: Vec<PathBuf> = instances.iter().map(|i| PathBuf::from(i.id())).collect();
    let mut spec = StageSpec::new(name, ProblemKind::Mis, paths);
    spec.scout_subset = Some(scout.iter().map(PathBuf::from).collect());
    spec.replay_stages = replay.iter().map(|s| s.to_string()).collect();
    LoadedStage::new(spec, instances).expect("planted stage")
}

pub fn policy(id: &str, family: Family) -> PolicyDocument {
    PolicyDocument::baseline(id, family)
}

/// Wraps a policy in a fenced block the way a model would answer.
pub fn fenced(doc: &PolicyDocument) -> String {
    format!("Here is the policy.\n```json\n{}\n```\n", doc.to_json())
}

/// Serves canned chat-completion replies in order, one per request, and
/// remembers each request's authorization header.
pub struct StubServer {
    pub url: String,
    pub authorizations: Arc<Mutex<Vec<String>>>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(replies: Vec<String>) -> Self {
        StubServer::start_with_status(replies.into_iter().map(|r| (200, r)).collect())
    }

    /// Replies with an explicit HTTP status; non-2xx replies carry no content.
    pub fn start_with_status(replies: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let authorizations = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&authorizations);
        let handle = std::thread::spawn(move || {
            let mut queue: VecDeque<(u16, String)> = replies.into();
            while let Some((status, reply)) = queue.pop_front() {
                let Ok((stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream);
                let mut length = 0usize;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap_or(0);
                    }
                    if lower.starts_with("authorization:") {
                        auth = line["authorization:".len()..].trim().to_string();
                    }
                }
                let mut body = vec![0u8; length];
                let _ = reader.read_exact(&mut body);
                seen.lock().unwrap().push(auth);
                let payload = if status == 200 {
                    serde_json::json!({
                        "choices": [{ "index": 0, "message": { "role": "assistant", "content": reply } }]
                    })
                    .to_string()
                } else {
                    format!("{{\"error\": \"{status}\"}}")
                };
                let mut stream = reader.into_inner();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                );
                let _ = stream.flush();
            }
        });
        StubServer {
            url,
            authorizations,
            handle: Some(handle),
        }
    }

    pub fn requests(&self) -> usize {
        self.authorizations.lock().unwrap().len()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        // The thread exits once its replies are used up; never block on it.
        drop(self.handle.take());
    }
}

/// Every regular file under `dir`.
pub fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let p = entry.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

/// The repository root.
pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}
