//! HTTP client for an external inference service.
//!
//! Wire protocol (JSON bodies, status 200 on success):
//!
//! ```text
//! POST /v1/rerank {query, passages: [{id, text}]}        -> {scores: [{id, score}]}
//! POST /v1/nli    {pairs: [{premise, hypothesis}]}       -> {verdicts: [{entail, contradict, neutral}]}
//! POST /v1/embed  {texts: [string]}                      -> {vectors: [[f64]], dimension}
//! ```
//!
//! A 4xx reply carries `{error}` and fails immediately. 5xx replies, timeouts
//! and transport failures are retried up to the configured attempt count.
//! Large inputs are split into `batch_size` chunks, at most `max_in_flight`
//! of which are outstanding at once; results are reassembled by position.

use std::collections::HashMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{
    Embedder, EmbeddingVector, NliClassifier, NliPair, NliVerdict, Passage, Reranker,
    ScorerBackendConfig,
};

#[derive(Debug, Serialize, Deserialize)]
pub struct RerankRequest {
    pub query: String,
    pub passages: Vec<Passage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredId {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RerankResponse {
    pub scores: Vec<ScoredId>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NliRequest {
    pub pairs: Vec<NliPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireVerdict {
    pub entail: f64,
    pub contradict: f64,
    pub neutral: f64,
}

impl From<&NliVerdict> for WireVerdict {
    fn from(v: &NliVerdict) -> Self {
        WireVerdict {
            entail: v.p_entail,
            contradict: v.p_contradict,
            neutral: v.p_neutral,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NliResponse {
    pub verdicts: Vec<WireVerdict>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dimension: usize,
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    error: String,
}

/// Blocking JSON-over-HTTP client with retry.
#[derive(Debug, Clone)]
pub struct HttpJsonClient {
    base: String,
    agent: ureq::Agent,
    retries: u32,
}

impl HttpJsonClient {
    pub fn new(base: &str, timeout: std::time::Duration, retries: u32) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        HttpJsonClient {
            base: base.trim_end_matches('/').to_string(),
            agent: ureq::Agent::new_with_config(config),
            retries: retries.max(1),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp> {
        let url = format!("{}{}", self.base, path);
        let mut last = String::new();
        for attempt in 1..=self.retries {
            let fail = |message: String| Error::Backend {
                endpoint: url.clone(),
                attempts: attempt,
                message,
            };
            match self.agent.post(&url).send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 200 {
                        return resp
                            .body_mut()
                            .read_json::<Resp>()
                            .map_err(|e| fail(format!("malformed response body: {e}")));
                    }
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    let detail = serde_json::from_str::<ErrorBody>(&text)
                        .map(|b| b.error)
                        .unwrap_or(text);
                    if (400..500).contains(&status) {
                        return Err(fail(format!("status {status}: {detail}")));
                    }
                    last = format!("status {status}: {detail}");
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::Backend {
            endpoint: url,
            attempts: self.retries,
            message: last,
        })
    }
}

/// One remote service implementing all three scorer roles.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    client: HttpJsonClient,
    batch_size: usize,
    max_in_flight: usize,
}

impl RemoteBackend {
    pub fn new(config: ScorerBackendConfig) -> Result<Self> {
        config.validate()?;
        let endpoint = config.endpoint.as_deref().unwrap_or_default();
        Ok(RemoteBackend {
            client: HttpJsonClient::new(endpoint, config.timeout, config.retries),
            batch_size: config.batch_size,
            max_in_flight: config.max_in_flight,
        })
    }

    pub fn endpoint(&self) -> &str {
        self.client.base()
    }

    /// Runs `call` over `batch_size` chunks with bounded concurrency and
    /// concatenates the per-chunk outputs in input order.
    fn batched<I: Sync, O: Send>(
        &self,
        items: &[I],
        call: impl Fn(&[I]) -> Result<Vec<O>> + Sync,
    ) -> Result<Vec<O>> {
        let chunks: Vec<&[I]> = items.chunks(self.batch_size).collect();
        let mut out = Vec::with_capacity(items.len());
        for wave in chunks.chunks(self.max_in_flight) {
            let results: Vec<Result<Vec<O>>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|chunk| {
                        let call = &call;
                        s.spawn(move || {
                            let got = call(chunk)?;
                            if got.len() != chunk.len() {
                                return Err(Error::Backend {
                                    endpoint: self.endpoint().to_string(),
                                    attempts: 1,
                                    message: format!(
                                        "expected {} items in response, got {}",
                                        chunk.len(),
                                        got.len()
                                    ),
                                });
                            }
                            Ok(got)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("scorer worker panicked"))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }

    fn protocol_error(&self, message: String) -> Error {
        Error::Backend {
            endpoint: self.endpoint().to_string(),
            attempts: 1,
            message,
        }
    }
}

impl Reranker for RemoteBackend {
    fn score(&self, query: &str, passages: &[Passage]) -> Result<Vec<f64>> {
        self.batched(passages, |chunk| {
            let resp: RerankResponse = self.client.post(
                "/v1/rerank",
                &RerankRequest {
                    query: query.to_string(),
                    passages: chunk.to_vec(),
                },
            )?;
            let by_id: HashMap<&str, f64> = resp
                .scores
                .iter()
                .map(|s| (s.id.as_str(), s.score))
                .collect();
            chunk
                .iter()
                .map(|p| match by_id.get(p.id.as_str()) {
                    Some(&s) if (0.0..=1.0).contains(&s) => Ok(s),
                    Some(&s) => Err(self.protocol_error(format!("score {s} for `{}` outside [0,1]", p.id))),
                    None => Err(self.protocol_error(format!("no score for passage `{}`", p.id))),
                })
                .collect()
        })
    }
}

impl NliClassifier for RemoteBackend {
    fn classify(&self, pairs: &[NliPair]) -> Result<Vec<NliVerdict>> {
        self.batched(pairs, |chunk| {
            let resp: NliResponse = self.client.post(
                "/v1/nli",
                &NliRequest {
                    pairs: chunk.to_vec(),
                },
            )?;
            resp.verdicts
                .iter()
                .map(|v| {
                    NliVerdict::new(v.entail, v.contradict, v.neutral)
                        .map_err(|e| self.protocol_error(e.to_string()))
                })
                .collect()
        })
    }
}

impl Embedder for RemoteBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.batched(texts, |chunk| {
            let resp: EmbedResponse = self.client.post(
                "/v1/embed",
                &EmbedRequest {
                    texts: chunk.to_vec(),
                },
            )?;
            resp.vectors
                .into_iter()
                .map(|values| {
                    if values.len() != resp.dimension {
                        return Err(Error::DimensionMismatch {
                            expected: resp.dimension,
                            found: values.len(),
                        });
                    }
                    Ok(EmbeddingVector { values })
                })
                .collect()
        })
    }
}
