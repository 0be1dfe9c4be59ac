#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::PathBuf;
use std::sync::OnceLock;

use inkrec::classifier::{ClassifierTraining, PipelineConfig, StrokeClassifier};
use inkrec::hmm::TrainConfig;
use inkrec::ink::{split_by_session, Dataset, Sample};
use inkrec::rules::{alternatives_from_confusion, build_rules, expand_rules, RuleSet};
use inkrec::service::{AppState, Engine};
use inkrec::synth;

/// A small trained bundle plus rules on disk, shared by one test binary.
pub struct Fixture {
    _dir: tempfile::TempDir,
    pub bundle: PathBuf,
    pub rules: PathBuf,
    pub aksharas: Dataset,
    pub test_strokes: Dataset,
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let specs = synth::catalog(10);
        let strokes = synth::generate_all(&specs, 2, 8, 2, 11).unwrap();
        let (train, test) = split_by_session(&strokes, &BTreeSet::from([1])).unwrap();
        let opts = ClassifierTraining {
            n_states: 7,
            train: TrainConfig {
                max_iterations: 8,
                target_mixtures: 2,
                ..TrainConfig::default()
            },
            jobs: 0,
        };
        let classifier =
            StrokeClassifier::train_all(&train, &opts, PipelineConfig::default()).unwrap();
        let eval = classifier.evaluate(&test).unwrap();

        let aksharas =
            synth::generate_aksharas(&specs, &synth::akshara_catalog(), 1, 8, 2, 12).unwrap();
        let (samples, labels): (Vec<_>, Vec<_>) = aksharas
            .aksharas()
            .map(|a| (a.clone(), a.stroke_labels.clone().unwrap()))
            .unzip();
        let base = build_rules(&samples, &labels, 5.0).unwrap();
        let refined =
            expand_rules(&base, &alternatives_from_confusion(&eval.matrix, 5.0), 5.0).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let bundle = dir.path().join("bundle");
        classifier.save_bundle(&bundle).unwrap();
        let rules = dir.path().join("rules.json");
        refined.save(&rules).unwrap();
        Fixture {
            _dir: dir,
            bundle,
            rules,
            aksharas,
            test_strokes: test,
        }
    })
}

pub fn engine() -> Engine {
    let f = fixture();
    Engine::load(&f.bundle, &f.rules).unwrap()
}

pub fn rules() -> RuleSet {
    RuleSet::load(&fixture().rules).unwrap()
}

/// Request bodies: every fixture akshara as a full ink record.
pub fn akshara_payloads() -> Vec<String> {
    fixture()
        .aksharas
        .samples
        .iter()
        .map(|s| serde_json::to_string(&inkrec::ink::InkRecord::from_sample(s)).unwrap())
        .collect()
}

pub fn akshara_strokes(i: usize) -> Vec<inkrec::ink::InkTrace> {
    match &fixture().aksharas.samples[i] {
        Sample::Akshara(a) => a.traces.clone(),
        Sample::Stroke(s) => vec![s.trace.clone()],
    }
}

/// Runs the service on an ephemeral port in a background runtime.
pub struct Server {
    pub addr: SocketAddr,
    pub state: AppState,
}

pub fn start_server(state: AppState) -> Server {
    let (tx, rx) = std::sync::mpsc::channel();
    let st = state.clone();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, inkrec::service::router(st))
                .await
                .unwrap();
        });
    });
    Server {
        addr: rx.recv().unwrap(),
        state,
    }
}

pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal HTTP/1.1 client: one request per connection.
pub fn http(addr: SocketAddr, method: &str, path: &str, body: Option<&str>) -> HttpResponse {
    let mut stream = TcpStream::connect(addr).unwrap();
    let body = body.unwrap_or("");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();
    let text = String::from_utf8(raw).unwrap();
    let (head, rest) = text
        .split_once("\r\n\r\n")
        .expect("http response has a header");
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    let chunked = head.lines().any(|l| {
        l.to_ascii_lowercase()
            .starts_with("transfer-encoding: chunked")
    });
    HttpResponse {
        status,
        body: if chunked {
            dechunk(rest)
        } else {
            rest.to_string()
        },
    }
}

fn dechunk(mut s: &str) -> String {
    let mut out = String::new();
    loop {
        let (size, rest) = s.split_once("\r\n").unwrap();
        let n = usize::from_str_radix(size.trim(), 16).unwrap();
        if n == 0 {
            return out;
        }
        out.push_str(&rest[..n]);
        s = &rest[n + 2..];
    }
}
