#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[derive(Debug, Clone)]
pub struct Captured {
    pub path: String,
    pub body: Value,
}

type Handler = dyn Fn(&str, &Value, usize) -> (u16, Value) + Send + Sync;

/// Minimal HTTP/1.1 server: one request per connection, JSON in and out.
/// The handler receives the path, parsed body and a 0-based request counter.
pub struct StubServer {
    pub url: String,
    pub captured: Arc<Mutex<Vec<Captured>>>,
}

impl StubServer {
    pub fn start(handler: impl Fn(&str, &Value, usize) -> (u16, Value) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let captured = Arc::new(Mutex::new(Vec::new()));
        let counter = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        let log = captured.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (handler, log, counter) = (handler.clone(), log.clone(), counter.clone());
                std::thread::spawn(move || serve_one(stream, &*handler, &log, &counter));
            }
        });
        StubServer { url, captured }
    }

    pub fn requests(&self) -> Vec<Captured> {
        self.captured.lock().unwrap().clone()
    }
}

fn serve_one(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<Captured>>, counter: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body).unwrap();
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let n = counter.fetch_add(1, Ordering::SeqCst);
    log.lock().unwrap().push(Captured {
        path: path.clone(),
        body: body.clone(),
    });
    let (status, reply) = handler(&path, &body, n);
    let text = reply.to_string();
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = stream.flush();
}

/// Answers the scorer endpoints with the crate's mock scorers, i.e. a
/// dummy-mode inference service.
pub fn mock_service(path: &str, body: &Value) -> (u16, Value) {
    use contraground::scorers::mock::{MockEmbedder, MockNli, MockReranker};
    use contraground::scorers::remote::{
        EmbedRequest, EmbedResponse, NliRequest, NliResponse, RerankRequest, RerankResponse, ScoredId,
        WireVerdict,
    };
    use contraground::scorers::{Embedder, NliClassifier, Reranker};

    let bad = |m: String| (400, serde_json::json!({ "error": m }));
    match path {
        "/v1/rerank" => {
            let Ok(req) = serde_json::from_value::<RerankRequest>(body.clone()) else {
                return bad("malformed rerank request".into());
            };
            let scores = MockReranker.score(&req.query, &req.passages).unwrap();
            let resp = RerankResponse {
                scores: req
                    .passages
                    .iter()
                    .zip(scores)
                    .map(|(p, score)| ScoredId { id: p.id.clone(), score })
                    .collect(),
            };
            (200, serde_json::to_value(resp).unwrap())
        }
        "/v1/nli" => {
            let Ok(req) = serde_json::from_value::<NliRequest>(body.clone()) else {
                return bad("malformed nli request".into());
            };
            let verdicts = MockNli::new().classify(&req.pairs).unwrap();
            let resp = NliResponse {
                verdicts: verdicts.iter().map(WireVerdict::from).collect(),
            };
            (200, serde_json::to_value(resp).unwrap())
        }
        "/v1/embed" => {
            let Ok(req) = serde_json::from_value::<EmbedRequest>(body.clone()) else {
                return bad("malformed embed request".into());
            };
            let e = MockEmbedder::default();
            match e.embed(&req.texts) {
                Ok(v) => (
                    200,
                    serde_json::to_value(EmbedResponse {
                        dimension: e.dimension,
                        vectors: v.into_iter().map(|x| x.values).collect(),
                    })
                    .unwrap(),
                ),
                Err(err) => bad(err.to_string()),
            }
        }
        _ => (404, serde_json::json!({ "error": format!("no route {path}") })),
    }
}
