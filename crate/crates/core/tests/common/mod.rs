#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

pub struct Request {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: serde_json::Value,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

type Handler = dyn Fn(&Request) -> (u16, String) + Send + Sync;

#[derive(Default)]
pub struct Stats {
    pub hits: AtomicUsize,
    pub active: AtomicUsize,
    pub peak: AtomicUsize,
    pub bodies: Mutex<Vec<serde_json::Value>>,
}

/// Minimal HTTP/1.1 server on a loopback port, one thread per connection.
pub struct MockServer {
    pub url: String,
    pub stats: Arc<Stats>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&Request) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let stats = Arc::new(Stats::default());
        let handler: Arc<Handler> = Arc::new(handler);
        let s = stats.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (h, s) = (handler.clone(), s.clone());
                thread::spawn(move || serve(stream, &*h, &s));
            }
        });
        MockServer { url, stats }
    }

    pub fn hits(&self) -> usize {
        self.stats.hits.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.stats.peak.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, handler: &Handler, stats: &Stats) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let path = line.split_whitespace().nth(1).unwrap_or("/").to_owned();
    let mut headers = Vec::new();
    let mut len = 0;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            let (k, v) = (k.trim().to_owned(), v.trim().to_owned());
            if k.eq_ignore_ascii_case("content-length") {
                len = v.parse().unwrap();
            }
            headers.push((k, v));
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let body: serde_json::Value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);

    stats.hits.fetch_add(1, Ordering::SeqCst);
    let now = stats.active.fetch_add(1, Ordering::SeqCst) + 1;
    stats.peak.fetch_max(now, Ordering::SeqCst);
    stats.bodies.lock().unwrap().push(body.clone());
    let (status, text) = handler(&Request { path, headers, body });
    stats.active.fetch_sub(1, Ordering::SeqCst);

    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = stream.flush();
}

/// A loopback URL nothing listens on.
pub fn dead_url() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    url
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hallucounter")
}

/// Runs the CLI binary, returning (exit code, stdout, stderr).
pub fn run_cli<I, S>(args: I) -> (i32, String, String)
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = std::process::Command::new(bin()).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// The six-command workflow over the golden fixture, writing into `dir`.
pub fn run_workflow(dir: &Path, jobs: u32) {
    let g = golden_dir();
    let p = |name: &str| dir.join(name).into_os_string().into_string().unwrap();
    let queries = g.join("queries.jsonl").into_os_string().into_string().unwrap();
    let logits = g.join("logits.jsonl").into_os_string().into_string().unwrap();
    let jobs = jobs.to_string();
    let steps: Vec<Vec<String>> = vec![
        vec![
            "filter-corpus".into(),
            "--in".into(),
            queries,
            "--out".into(),
            p("kept.jsonl"),
            "--rejected".into(),
            p("rejections.jsonl"),
        ],
        vec![
            "label".into(),
            "--in".into(),
            p("kept.jsonl"),
            "--strategy".into(),
            "exact-match".into(),
            "--out".into(),
            p("labels.jsonl"),
        ],
        vec![
            "featurize".into(),
            "--in".into(),
            p("kept.jsonl"),
            "--logits-file".into(),
            logits.clone(),
            "--combination".into(),
            "qrrr".into(),
            "--out".into(),
            p("features.jsonl"),
            "--emit-text".into(),
            "--text-out".into(),
            p("features_text.jsonl"),
        ],
        vec![
            "train".into(),
            "--features".into(),
            p("features.jsonl"),
            "--labels".into(),
            p("labels.jsonl"),
            "--seed".into(),
            "42".into(),
            "--out".into(),
            p("model.json"),
        ],
        vec![
            "predict".into(),
            "--in".into(),
            p("kept.jsonl"),
            "--logits-file".into(),
            logits,
            "--model".into(),
            p("model.json"),
            "--take-k".into(),
            "5".into(),
            "--out".into(),
            p("predictions.jsonl"),
        ],
        vec![
            "evaluate".into(),
            "--pred".into(),
            p("predictions.jsonl"),
            "--gold".into(),
            p("labels.jsonl"),
            "--mode".into(),
            "per-query".into(),
            "--by-category".into(),
            "category".into(),
            "--records".into(),
            p("kept.jsonl"),
            "--out".into(),
            p("report.json"),
        ],
    ];
    for step in steps {
        let mut args = vec!["--jobs".to_owned(), jobs.clone()];
        args.extend(step);
        let (code, _, err) = run_cli(&args);
        assert_eq!(code, 0, "{args:?} failed: {err}");
    }
}

pub const WORKFLOW_OUTPUTS: [&str; 8] = [
    "kept.jsonl",
    "rejections.jsonl",
    "labels.jsonl",
    "features.jsonl",
    "features_text.jsonl",
    "model.json",
    "predictions.jsonl",
    "report.json",
];
