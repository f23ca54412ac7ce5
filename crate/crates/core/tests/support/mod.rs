//! Shared fixtures for the integration suites: a minimal chat-completions
//! stub server, an independent brute-force BLEU oracle, and the scripted
//! debate scenarios behind the golden transcripts.
#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use mad_core::{BackendSpec, DebateConfig, ScriptEntry, TaskKind, TopicRecord};

// ---------------------------------------------------------------------------
// Scripted debate scenarios
// ---------------------------------------------------------------------------

pub const NO: &str = "Decision: No\nAnswer: pending\nWinner: Tie";
pub const YES: &str = "Decision: Yes\nAnswer: 4\nWinner: Negative";
pub const PROSE: &str = "Both sides make interesting points.";
pub const EXTRACT: &str = "Answer: 4\nWinner: Negative";

pub fn side_name(side: u32) -> &'static str {
    match side {
        1 => "aff",
        2 => "neg",
        3 => "third",
        4 => "fourth",
        _ => panic!("scenario sides stop at 4"),
    }
}

pub struct Scenario {
    pub id: &'static str,
    pub n_debaters: u32,
    pub max_iterations: u32,
    pub judge_rounds: Vec<&'static str>,
    pub expected_rounds: u32,
    pub expected_broke_early: bool,
}

/// The twelve protocol-oracle scenarios; golden transcripts live in
/// `tests/goldens/<id>.jsonl`.
pub fn scenarios() -> Vec<Scenario> {
    let s = |id, n, max, judge: Vec<&'static str>, rounds, broke| Scenario {
        id,
        n_debaters: n,
        max_iterations: max,
        judge_rounds: judge,
        expected_rounds: rounds,
        expected_broke_early: broke,
    };
    vec![
        s("s01", 2, 3, vec![YES], 1, true),
        s("s02", 2, 3, vec![NO, YES], 2, true),
        s("s03", 2, 3, vec![NO, NO, YES], 3, false),
        s("s04", 2, 3, vec![NO, NO, NO], 3, false),
        s("s05", 2, 3, vec![PROSE, YES], 2, true),
        s("s06", 3, 3, vec![YES], 1, true),
        s("s07", 3, 3, vec![NO, YES], 2, true),
        s("s08", 3, 2, vec![NO, NO], 2, false),
        s("s09", 4, 3, vec![YES], 1, true),
        s("s10", 4, 2, vec![NO, NO], 2, false),
        s("s11", 2, 2, vec![PROSE, PROSE], 2, false),
        s("s12", 3, 3, vec![PROSE, YES], 2, true),
    ]
}

/// Topic plus config with pinned-token scripted backends for a scenario.
pub fn scenario_setup(scenario: &Scenario) -> (TopicRecord, DebateConfig) {
    let topic = TopicRecord::new(scenario.id, TaskKind::Qa, "What is 2+2?");
    let mut config = DebateConfig {
        n_debaters: scenario.n_debaters,
        max_iterations: scenario.max_iterations,
        ..DebateConfig::default()
    };
    for side in 1..=scenario.n_debaters {
        let script: Vec<ScriptEntry> = (1..=scenario.expected_rounds)
            .map(|r| ScriptEntry::any(format!("{} r{}", side_name(side), r)).with_tokens(10, 5))
            .collect();
        config
            .backend_bindings
            .insert(format!("side{side}"), BackendSpec::Scripted { script });
    }
    let mut judge_script: Vec<ScriptEntry> = scenario
        .judge_rounds
        .iter()
        .map(|text| ScriptEntry::any(*text).with_tokens(10, 5))
        .collect();
    judge_script.push(ScriptEntry::any(EXTRACT).with_tokens(10, 5));
    config.backend_bindings.insert(
        "judge".to_string(),
        BackendSpec::Scripted { script: judge_script },
    );
    (topic, config)
}

// ---------------------------------------------------------------------------
// Independent brute-force BLEU oracle
// ---------------------------------------------------------------------------

fn oracle_is_cjk(c: char) -> bool {
    let v = c as u32;
    (0x4E00..=0x9FFF).contains(&v)
        || (0x3400..=0x4DBF).contains(&v)
        || (0xF900..=0xFAFF).contains(&v)
        || (0x3040..=0x30FF).contains(&v)
}

fn oracle_tokens(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut run = String::new();
    for c in lowered.chars() {
        if oracle_is_cjk(c) {
            if !run.is_empty() {
                tokens.push(run.clone());
                run.clear();
            }
            tokens.push(c.to_string());
        } else if c.is_alphanumeric() {
            run.push(c);
        } else {
            if !run.is_empty() {
                tokens.push(run.clone());
            }
            run.clear();
        }
    }
    if !run.is_empty() {
        tokens.push(run);
    }
    tokens
}

fn oracle_directional_bleu(hyp: &[String], reference: &[String]) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut product = 1.0f64;
    let mut used_orders = 0u32;
    for n in 1..=4usize {
        if hyp.len() < n {
            continue;
        }
        let grams = |tokens: &[String]| -> std::collections::HashMap<String, usize> {
            let mut counts = std::collections::HashMap::new();
            if tokens.len() >= n {
                for i in 0..=(tokens.len() - n) {
                    let key = tokens[i..i + n].join("\u{1f}");
                    *counts.entry(key).or_insert(0) += 1;
                }
            }
            counts
        };
        let hyp_counts = grams(hyp);
        let ref_counts = grams(reference);
        let mut clipped = 0usize;
        for (gram, count) in &hyp_counts {
            clipped += (*count).min(ref_counts.get(gram).copied().unwrap_or(0));
        }
        let total = hyp.len() - n + 1;
        let precision = if clipped == 0 {
            0.1
        } else {
            100.0 * clipped as f64 / total as f64
        };
        product *= precision;
        used_orders += 1;
    }
    if used_orders == 0 {
        return 0.0;
    }
    let geo_mean = product.powf(1.0 / f64::from(used_orders));
    let penalty = if hyp.len() > reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / hyp.len() as f64).exp()
    };
    penalty * geo_mean
}

/// Straightforward reimplementation of the symmetric Self-BLEU definition,
/// kept structurally independent of the library (string-keyed n-gram maps,
/// product-form geometric mean).
pub fn oracle_self_bleu(a: &str, b: &str) -> f64 {
    let ta = oracle_tokens(a);
    let tb = oracle_tokens(b);
    if ta.is_empty() && tb.is_empty() {
        return 100.0;
    }
    (oracle_directional_bleu(&ta, &tb) + oracle_directional_bleu(&tb, &ta)) / 2.0
}

// ---------------------------------------------------------------------------
// Chat-completions stub server
// ---------------------------------------------------------------------------

pub enum StubResponse {
    /// 200 with a chat-completion body.
    Chat(serde_json::Value),
    /// Bare status code with an empty body.
    Status(u16),
}

pub struct StubServer {
    addr: SocketAddr,
    requests: Arc<Mutex<Vec<serde_json::Value>>>,
    hits: Arc<Mutex<usize>>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Serves `responses` in order; the last one repeats once exhausted.
    pub fn start(responses: Vec<StubResponse>) -> Self {
        assert!(!responses.is_empty());
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let addr = listener.local_addr().expect("stub addr");
        let requests: Arc<Mutex<Vec<serde_json::Value>>> = Arc::new(Mutex::new(Vec::new()));
        let hits = Arc::new(Mutex::new(0usize));
        let shutdown = Arc::new(AtomicBool::new(false));

        let thread_requests = requests.clone();
        let thread_hits = hits.clone();
        let thread_shutdown = shutdown.clone();
        let handle = std::thread::spawn(move || {
            let mut served = 0usize;
            for stream in listener.incoming() {
                if thread_shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(mut stream) = stream else { continue };
                if let Some(body) = read_request_body(&mut stream) {
                    if let Ok(value) = serde_json::from_str::<serde_json::Value>(&body) {
                        thread_requests.lock().unwrap().push(value);
                    }
                    *thread_hits.lock().unwrap() += 1;
                    let index = served.min(responses.len() - 1);
                    served += 1;
                    let _ = write_response(&mut stream, &responses[index]);
                }
            }
        });

        Self {
            addr,
            requests,
            hits,
            shutdown,
            handle: Some(handle),
        }
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<serde_json::Value> {
        self.requests.lock().unwrap().clone()
    }

    pub fn hits(&self) -> usize {
        *self.hits.lock().unwrap()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn read_request_body(stream: &mut TcpStream) -> Option<String> {
    let mut buffer = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end;
    loop {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buffer.extend_from_slice(&chunk[..n]);
        if let Some(pos) = find_header_end(&buffer) {
            header_end = pos;
            break;
        }
        if buffer.len() > 1 << 20 {
            return None;
        }
    }
    let headers = String::from_utf8_lossy(&buffer[..header_end]).to_string();
    let content_length: usize = headers
        .lines()
        .find_map(|line| {
            let (name, value) = line.split_once(':')?;
            name.trim()
                .eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse().ok())?
        })
        .unwrap_or(0);
    let mut body = buffer[header_end + 4..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    Some(String::from_utf8_lossy(&body).to_string())
}

fn find_header_end(buffer: &[u8]) -> Option<usize> {
    buffer.windows(4).position(|w| w == b"\r\n\r\n")
}

fn write_response(stream: &mut TcpStream, response: &StubResponse) -> std::io::Result<()> {
    let (status_line, body) = match response {
        StubResponse::Chat(value) => ("HTTP/1.1 200 OK", value.to_string()),
        StubResponse::Status(429) => ("HTTP/1.1 429 Too Many Requests", String::new()),
        StubResponse::Status(500) => ("HTTP/1.1 500 Internal Server Error", String::new()),
        StubResponse::Status(code) => {
            return write_custom_status(stream, *code);
        }
    };
    let payload = format!(
        "{status_line}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(payload.as_bytes())?;
    stream.flush()
}

fn write_custom_status(stream: &mut TcpStream, code: u16) -> std::io::Result<()> {
    let payload =
        format!("HTTP/1.1 {code} Stub\r\ncontent-length: 0\r\nconnection: close\r\n\r\n");
    stream.write_all(payload.as_bytes())?;
    stream.flush()
}

/// A standard successful chat-completion body.
pub fn chat_body(content: &str, prompt_tokens: u32, completion_tokens: u32) -> serde_json::Value {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens}
    })
}
