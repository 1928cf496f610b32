//! JSON-over-HTTP completion client.
//!
//! Request body (field order is stable):
//!
//! ```json
//! {"prompt":"...","max_tokens":256,"temperature":0.0,"top_p":1.0,"top_k":0,
//!  "stop":["\n"],"logprobs":20,"seed":0}
//! ```
//!
//! Response: `choices[0].text` plus `choices[0].logprobs.tokens` and
//! `choices[0].logprobs.top_logprobs` (one `{token: logprob}` map per
//! generated token), the layout used by common completion servers.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, DecodeMode, DecodeParams, Generation, LmBackend, LmError};

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub token: Option<String>,
    pub max_in_flight: usize,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: None,
            max_in_flight: 8,
            max_attempts: 3,
            backoff_base: Duration::from_millis(250),
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct WireRequest<'a> {
    pub prompt: &'a str,
    pub max_tokens: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: usize,
    pub stop: &'a [String],
    pub logprobs: usize,
    pub seed: u64,
}

impl<'a> WireRequest<'a> {
    /// Greedy requests are sent as temperature 0 with sampling filters off.
    pub fn new(prompt: &'a str, params: &'a DecodeParams) -> Self {
        let (temperature, top_p, top_k) = match params.mode {
            DecodeMode::Greedy => (0.0, 1.0, 0),
            DecodeMode::Nucleus => (params.temperature, params.top_p, params.top_k),
        };
        Self {
            prompt,
            max_tokens: params.max_tokens,
            temperature,
            top_p,
            top_k,
            stop: &params.stop_sequences,
            logprobs: params.logprob_depth,
            seed: params.seed,
        }
    }
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    text: String,
    logprobs: Option<WireLogprobs>,
}

#[derive(Debug, Deserialize)]
struct WireLogprobs {
    tokens: Vec<String>,
    top_logprobs: Vec<Option<BTreeMap<String, f64>>>,
}

/// Excess top-token mass tolerated from a server before a response is
/// treated as malformed.
pub const ROUNDING_SLACK: f64 = 1e-2;

/// Serializes the request body exactly as sent.
pub fn encode_request(prompt: &str, params: &DecodeParams) -> String {
    serde_json::to_string(&WireRequest::new(prompt, params)).expect("request serializes")
}

/// Parses a response body into a [`Generation`], converting log-probabilities
/// to probabilities.
pub fn decode_response(body: &str) -> Result<Generation, String> {
    let resp: WireResponse = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let choice = resp.choices.into_iter().next().ok_or("response has no choices")?;
    let lp = choice.logprobs.ok_or("response has no logprobs")?;
    if lp.tokens.len() != lp.top_logprobs.len() {
        return Err(format!(
            "{} tokens but {} top_logprobs entries",
            lp.tokens.len(),
            lp.top_logprobs.len()
        ));
    }
    let top_probs = lp
        .top_logprobs
        .into_iter()
        .map(|m| {
            let mut dist: BTreeMap<String, f64> = m
                .unwrap_or_default()
                .into_iter()
                .filter(|(_, l)| l.is_finite())
                .map(|(t, l)| (t, l.exp().min(1.0)))
                .filter(|(_, p)| *p > 0.0)
                .collect();
            // Servers round logprobs; small excess mass is rescaled away.
            let mass: f64 = dist.values().sum();
            if mass > 1.0 && mass <= 1.0 + ROUNDING_SLACK {
                dist.values_mut().for_each(|p| *p /= mass);
            }
            dist
        })
        .collect();
    let g = Generation {
        text: choice.text,
        tokens: lp.tokens,
        top_probs,
    };
    g.check()?;
    Ok(g)
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().expect("semaphore lock");
        while *p == 0 {
            p = self.cv.wait(p).expect("semaphore lock");
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Blocking HTTP backend with an in-flight request bound and retries.
///
/// Transport failures and 5xx responses are retried with exponential backoff
/// up to `max_attempts`; 4xx responses are not retried.
pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
    gate: Semaphore,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(config.timeout)
            .max_idle_connections_per_host(config.max_in_flight.max(1))
            .build();
        let gate = Semaphore::new(config.max_in_flight);
        Self { config, agent, gate }
    }

    #[allow(clippy::result_large_err)]
    fn send_once(&self, body: &str) -> Result<String, ureq::Error> {
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .set("Content-Type", "application/json");
        if let Some(tok) = &self.config.token {
            req = req.set("Authorization", &format!("Bearer {tok}"));
        }
        let resp = req.send_string(body)?;
        Ok(resp.into_string()?)
    }
}

impl LmBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Generation, LmError> {
        request.params.validate()?;
        let body = encode_request(&request.prompt, &request.params);
        let _permit = self.gate.acquire();
        let max_attempts = self.config.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.send_once(&body) {
                Ok(text) => {
                    return decode_response(&text).map_err(|message| LmError::Malformed {
                        attempts: attempt,
                        message,
                    })
                }
                Err(ureq::Error::Status(status, resp)) if (400..500).contains(&status) => {
                    let body = resp.into_string().unwrap_or_default();
                    let lower = body.to_lowercase();
                    if status == 413 || lower.contains("context") || lower.contains("too long") {
                        return Err(LmError::ContextOverflow { message: body });
                    }
                    return Err(LmError::Http {
                        status,
                        attempts: attempt,
                        body,
                    });
                }
                Err(e) => {
                    if attempt >= max_attempts {
                        return Err(match e {
                            ureq::Error::Status(status, resp) => LmError::Http {
                                status,
                                attempts: attempt,
                                body: resp.into_string().unwrap_or_default(),
                            },
                            other => LmError::Unreachable {
                                attempts: attempt,
                                message: other.to_string(),
                            },
                        });
                    }
                    log::warn!("completion attempt {attempt} failed: {e}; retrying");
                    std::thread::sleep(self.config.backoff_base * 2u32.pow(attempt - 1));
                }
            }
        }
    }
}
