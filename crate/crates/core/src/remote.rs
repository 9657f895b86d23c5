//! HTTP client for scoring against a model served by another process.
//!
//! The wire protocol is two JSON endpoints:
//!
//! * `GET  {base}/v1/meta`  → `{"num_classes": 2, "reserved_tokens": ["[cls]"]}`
//!   (`reserved_tokens` is optional and defaults to empty)
//! * `POST {base}/v1/score` with `{"texts": ["a fine film ."]}`
//!   → `{"scores": [[0.1, 0.9]]}` — one row per input text, each row a
//!   probability distribution over the advertised classes.
//!
//! Network failures surface as retriable [`Error::Transport`]; responses that
//! violate the protocol (wrong row counts, rows that are not distributions)
//! surface as [`Error::Protocol`].

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::classifier::{ScoreVector, Scorer};
use crate::error::{Error, Result};
use crate::text::{detokenize, Sentence, Token};

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Deserialize)]
struct MetaResponse {
    num_classes: usize,
    #[serde(default)]
    reserved_tokens: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ScoreRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct ScoreResponse {
    scores: Vec<Vec<f64>>,
}

/// A scorer backed by a model server.
pub struct RemoteScorer {
    agent: ureq::Agent,
    base_url: String,
    num_classes: usize,
    reserved_tokens: Vec<Token>,
}

impl std::fmt::Debug for RemoteScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteScorer")
            .field("base_url", &self.base_url)
            .field("num_classes", &self.num_classes)
            .field("reserved_tokens", &self.reserved_tokens)
            .finish()
    }
}

impl RemoteScorer {
    /// Connects to a model server, fetching its metadata.
    pub fn connect(base_url: &str) -> Result<Self> {
        Self::connect_with_timeout(base_url, DEFAULT_TIMEOUT)
    }

    pub fn connect_with_timeout(base_url: &str, timeout: Duration) -> Result<Self> {
        let base_url = base_url.trim_end_matches('/').to_string();
        if base_url.is_empty() {
            return Err(Error::invalid("empty server URL"));
        }
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();

        let meta: MetaResponse = agent
            .get(format!("{base_url}/v1/meta"))
            .call()
            .map_err(map_ureq)?
            .body_mut()
            .read_json()
            .map_err(map_ureq)?;
        if meta.num_classes < 2 {
            return Err(Error::Protocol(format!(
                "server advertises {} classes; need at least 2",
                meta.num_classes
            )));
        }
        let reserved_tokens = meta
            .reserved_tokens
            .iter()
            .map(|raw| {
                Token::new(raw).map_err(|e| {
                    Error::Protocol(format!("bad reserved token {raw:?}: {e}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(RemoteScorer { agent, base_url, num_classes: meta.num_classes, reserved_tokens })
    }

    /// Tokens the server declares as its own machinery (separators, masks);
    /// callers fold these into the protected token set.
    pub fn reserved_tokens(&self) -> &[Token] {
        &self.reserved_tokens
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn score_texts(&self, texts: &[String]) -> Result<Vec<ScoreVector>> {
        let response: ScoreResponse = self
            .agent
            .post(format!("{}/v1/score", self.base_url))
            .send_json(ScoreRequest { texts })
            .map_err(map_ureq)?
            .body_mut()
            .read_json()
            .map_err(map_ureq)?;

        if response.scores.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "sent {} texts, got {} score rows",
                texts.len(),
                response.scores.len()
            )));
        }
        response
            .scores
            .into_iter()
            .map(|row| {
                if row.len() != self.num_classes {
                    return Err(Error::Protocol(format!(
                        "score row has {} entries for {} classes",
                        row.len(),
                        self.num_classes
                    )));
                }
                ScoreVector::new(row)
                    .map_err(|e| Error::Protocol(format!("score row is not a distribution: {e}")))
            })
            .collect()
    }
}

impl Scorer for RemoteScorer {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn score(&self, sentence: &Sentence) -> Result<ScoreVector> {
        let batch = self.score_texts(&[detokenize(sentence)])?;
        Ok(batch.into_iter().next().expect("length checked"))
    }

    /// One request for the whole batch instead of one per sentence.
    fn score_batch(&self, sentences: &[Sentence]) -> Result<Vec<ScoreVector>> {
        if sentences.is_empty() {
            return Ok(Vec::new());
        }
        let texts: Vec<String> = sentences.iter().map(detokenize).collect();
        self.score_texts(&texts)
    }
}

fn map_ureq(e: ureq::Error) -> Error {
    match e {
        // 4xx means we sent something the server rejects; retrying the same
        // request cannot help. 5xx and transport faults are retriable.
        ureq::Error::StatusCode(code) if code < 500 => {
            Error::Protocol(format!("server rejected request: HTTP {code}"))
        }
        ureq::Error::StatusCode(code) => Error::Transport(format!("server error: HTTP {code}")),
        ureq::Error::Json(e) => Error::Protocol(format!("malformed response body: {e}")),
        other => Error::Transport(other.to_string()),
    }
}
