//! HTTP logprob protocol: a blocking client backend and a small server that
//! exposes any [`ScorerBackend`].
//!
//! ```text
//! POST /v1/score        {"context": "...", "completion": "..."}
//!                    -> {"tokens": ["..."], "logprobs": [-1.2, ...]}
//! POST /v1/score_batch  {"items": [{"context": ..., "completion": ...}, ...]}
//!                    -> {"results": [{"tokens": [...], "logprobs": [...]}, ...]}
//! ```
//!
//! Failures are non-200 responses with `{"error": "..."}`.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{BackendError, Error, Result};
use crate::scoring::{BackendResult, ScorerBackend, TokenLogProb};

pub const BACKEND_URL_ENV: &str = "REPLYSCORE_BACKEND_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub context: String,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

impl ScoreResponse {
    pub fn from_tokens(tokens: &[TokenLogProb]) -> Self {
        ScoreResponse {
            tokens: tokens.iter().map(|t| t.token.clone()).collect(),
            logprobs: tokens.iter().map(|t| t.logprob).collect(),
        }
    }

    pub fn into_tokens(self) -> Result<Vec<TokenLogProb>, BackendError> {
        if self.tokens.len() != self.logprobs.len() {
            return Err(BackendError::new(format!(
                "{} tokens but {} logprobs",
                self.tokens.len(),
                self.logprobs.len()
            )));
        }
        Ok(self
            .tokens
            .into_iter()
            .zip(self.logprobs)
            .map(|(t, lp)| TokenLogProb::new(t, lp))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRequest {
    pub items: Vec<ScoreRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResponse {
    pub results: Vec<ScoreResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteOptions {
    pub timeout: Duration,
    /// Extra attempts after the first one.
    pub retries: u32,
    /// Send the replies of one prompt in a single batch request.
    pub batch: bool,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        RemoteOptions {
            timeout: Duration::from_secs(60),
            retries: 2,
            batch: true,
        }
    }
}

/// Client for a server speaking the `/v1/score` protocol.
pub struct RemoteBackend {
    id: String,
    base_url: String,
    agent: ureq::Agent,
    options: RemoteOptions,
}

impl RemoteBackend {
    pub fn new(base_url: &str, options: RemoteOptions) -> Result<Self> {
        let base_url = base_url.trim_end_matches('/').to_string();
        if !(base_url.starts_with("http://") || base_url.starts_with("https://")) {
            return Err(Error::Config(format!("backend URL must be http(s): {base_url:?}")));
        }
        let agent = ureq::AgentBuilder::new().timeout(options.timeout).build();
        Ok(RemoteBackend {
            id: format!("remote:{base_url}"),
            base_url,
            agent,
            options,
        })
    }

    /// Reads the endpoint from `REPLYSCORE_BACKEND_URL`.
    pub fn from_env(options: RemoteOptions) -> Result<Self> {
        let url = std::env::var(BACKEND_URL_ENV).map_err(|_| Error::Config(format!("{BACKEND_URL_ENV} is not set")))?;
        Self::new(&url, options)
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let url = format!("{}{path}", self.base_url);
        let attempts = self.options.retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.agent.post(&url).send_json(body) {
                Ok(resp) => {
                    return resp.into_json::<Resp>().map_err(|e| {
                        BackendError::new(format!("{url}: malformed response: {e}")).with_attempts(attempt)
                    })
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let message = resp
                        .into_json::<ErrorResponse>()
                        .map(|e| e.error)
                        .unwrap_or_else(|_| "no error body".to_string());
                    last = format!("{url}: HTTP {code}: {message}");
                    // Client errors will not go away on retry.
                    if (400..500).contains(&code) && code != 429 {
                        return Err(BackendError::new(last).with_attempts(attempt));
                    }
                }
                Err(e) => last = format!("{url}: {e}"),
            }
            if attempt < attempts {
                thread::sleep(Duration::from_millis(50 << (attempt - 1).min(5)));
            }
        }
        Err(BackendError::new(last).with_attempts(attempts))
    }
}

impl ScorerBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn logprobs(&self, context: &str, completion: &str) -> BackendResult {
        let req = ScoreRequest {
            context: context.to_string(),
            completion: completion.to_string(),
        };
        self.post::<_, ScoreResponse>("/v1/score", &req)?.into_tokens()
    }

    fn logprobs_batch(&self, items: &[(&str, &str)]) -> Vec<BackendResult> {
        if !self.options.batch || items.len() < 2 {
            return items.iter().map(|(c, x)| self.logprobs(c, x)).collect();
        }
        let req = BatchRequest {
            items: items
                .iter()
                .map(|(c, x)| ScoreRequest {
                    context: c.to_string(),
                    completion: x.to_string(),
                })
                .collect(),
        };
        match self.post::<_, BatchResponse>("/v1/score_batch", &req) {
            Ok(resp) if resp.results.len() == items.len() => {
                resp.results.into_iter().map(ScoreResponse::into_tokens).collect()
            }
            Ok(resp) => {
                let e = BackendError::new(format!(
                    "batch returned {} results for {} items",
                    resp.results.len(),
                    items.len()
                ));
                vec![Err(e); items.len()]
            }
            Err(e) => vec![Err(e); items.len()],
        }
    }
}

/// A running `/v1/score` server; stops when dropped.
pub struct ScoreServer {
    addr: SocketAddr,
    server: Arc<tiny_http::Server>,
    workers: Vec<JoinHandle<()>>,
}

impl ScoreServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Serves until the process ends.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ScoreServer {
    fn drop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

/// Exposes `backend` over HTTP on `addr` (use port 0 for an ephemeral port).
pub fn serve(backend: Arc<dyn ScorerBackend>, addr: &str, workers: usize) -> Result<ScoreServer> {
    let server = tiny_http::Server::http(addr).map_err(|e| Error::Config(format!("cannot listen on {addr}: {e}")))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::Config("server has no IP address".to_string()))?;
    let server = Arc::new(server);
    let workers = (0..workers.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let backend = Arc::clone(&backend);
            thread::spawn(move || {
                while let Ok(mut request) = server.recv() {
                    let (status, body) = handle(&mut request, backend.as_ref());
                    let header =
                        tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
                    let response = tiny_http::Response::from_string(body)
                        .with_status_code(status)
                        .with_header(header);
                    let _ = request.respond(response);
                }
            })
        })
        .collect();
    Ok(ScoreServer { addr, server, workers })
}

fn error_body(status: u16, message: impl Into<String>) -> (u16, String) {
    let body = serde_json::to_string(&ErrorResponse { error: message.into() }).expect("serializable");
    (status, body)
}

fn handle(request: &mut tiny_http::Request, backend: &dyn ScorerBackend) -> (u16, String) {
    let path = request.url().split('?').next().unwrap_or("").to_string();
    if path != "/v1/score" && path != "/v1/score_batch" {
        return error_body(404, format!("no route for {path}"));
    }
    if *request.method() != tiny_http::Method::Post {
        return error_body(405, "use POST");
    }
    let mut body = String::new();
    if let Err(e) = request.as_reader().read_to_string(&mut body) {
        return error_body(400, format!("unreadable body: {e}"));
    }
    if path == "/v1/score" {
        let req: ScoreRequest = match serde_json::from_str(&body) {
            Ok(r) => r,
            Err(e) => return error_body(400, format!("bad request: {e}")),
        };
        match backend.logprobs(&req.context, &req.completion) {
            Ok(tokens) => (
                200,
                serde_json::to_string(&ScoreResponse::from_tokens(&tokens)).expect("json"),
            ),
            Err(e) => error_body(500, e.message),
        }
    } else {
        let req: BatchRequest = match serde_json::from_str(&body) {
            Ok(r) => r,
            Err(e) => return error_body(400, format!("bad request: {e}")),
        };
        let items: Vec<(&str, &str)> = req
            .items
            .iter()
            .map(|r| (r.context.as_str(), r.completion.as_str()))
            .collect();
        let mut results = Vec::with_capacity(items.len());
        for (i, r) in backend.logprobs_batch(&items).into_iter().enumerate() {
            match r {
                Ok(tokens) => results.push(ScoreResponse::from_tokens(&tokens)),
                Err(e) => return error_body(500, format!("item {i}: {}", e.message)),
            }
        }
        (200, serde_json::to_string(&BatchResponse { results }).expect("json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::HashNoiseBackend;

    fn opts() -> RemoteOptions {
        RemoteOptions {
            timeout: Duration::from_secs(5),
            retries: 0,
            batch: true,
        }
    }

    #[test]
    fn round_trip_matches_the_wrapped_backend() {
        let inner = Arc::new(HashNoiseBackend::new(5));
        let server = serve(inner.clone(), "127.0.0.1:0", 2).unwrap();
        let client = RemoteBackend::new(&server.url(), opts()).unwrap();
        let direct = inner.logprobs("ctx", "Det er positivt .").unwrap();
        assert_eq!(client.logprobs("ctx", "Det er positivt .").unwrap(), direct);
        let batch = client.logprobs_batch(&[("ctx", "Det er positivt ."), ("ctx", "Negativ .")]);
        assert_eq!(batch[0].as_ref().unwrap(), &direct);
        assert_eq!(batch[1].as_ref().unwrap(), &inner.logprobs("ctx", "Negativ .").unwrap());
    }

    #[test]
    fn server_errors_are_reported_with_attempts() {
        let failing = Arc::new(crate::scoring::FnBackend::new("f", |_: &str, _: &str| {
            Err(BackendError::new("model not loaded"))
        }));
        let server = serve(failing, "127.0.0.1:0", 1).unwrap();
        let client = RemoteBackend::new(&server.url(), RemoteOptions { retries: 1, ..opts() }).unwrap();
        let err = client.logprobs("c", "x").unwrap_err();
        assert_eq!(err.attempts, 2);
        assert!(err.message.contains("model not loaded"), "{}", err.message);
    }

    #[test]
    fn unknown_route_is_not_retried() {
        let server = serve(Arc::new(HashNoiseBackend::new(0)), "127.0.0.1:0", 1).unwrap();
        let client = RemoteBackend::new(
            &format!("{}/nope", server.url()),
            RemoteOptions { retries: 3, ..opts() },
        )
        .unwrap();
        assert_eq!(client.logprobs("c", "x").unwrap_err().attempts, 1);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let r = ScoreResponse {
            tokens: vec!["a".into()],
            logprobs: vec![],
        };
        assert!(r.into_tokens().is_err());
    }
}
