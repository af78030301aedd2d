//! Blocking client for a scoring server speaking the `/score` protocol.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::Agent;

use crate::config::{OracleConfig, RetryPolicy};
use crate::error::{Error, Result};
use crate::wire::{BatchItem, Health, ScoreRequest, ScoreResponse};

#[derive(Clone, Debug)]
pub struct RemoteClient {
    agent: Agent,
    base: String,
    token: Option<String>,
    retry: RetryPolicy,
}

enum Attempt<T> {
    Done(T),
    Retry(Error),
}

impl RemoteClient {
    pub fn new(
        endpoint: &str,
        token: Option<String>,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Self {
        let agent = Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            agent,
            base: endpoint.trim_end_matches('/').to_string(),
            token,
            retry,
        }
    }

    pub fn from_config(config: &OracleConfig) -> Result<Self> {
        let endpoint = config
            .endpoint
            .as_deref()
            .ok_or_else(|| Error::Config("remote backend needs an endpoint".into()))?;
        Ok(Self::new(
            endpoint,
            config.credential()?,
            Duration::from_secs(config.timeout_secs),
            config.retry.clone(),
        ))
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    pub fn health(&self) -> Result<Health> {
        self.with_retries("/health", || {
            let mut req = self.agent.get(format!("{}/health", self.base));
            if let Some(t) = &self.token {
                req = req.header("Authorization", format!("Bearer {t}"));
            }
            classify(req.call())
        })
    }

    pub fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse> {
        self.post("/score", request)
    }

    /// Scores several requests in one call. Items the server rejected come back
    /// as `Err` with the server's message; the outer error is for the call itself.
    pub fn score_batch(
        &self,
        requests: &[ScoreRequest],
    ) -> Result<Vec<Result<ScoreResponse, String>>> {
        let items: Vec<BatchItem> = self.post("/score_batch", &requests)?;
        if items.len() != requests.len() {
            return Err(Error::Data(format!(
                "score_batch returned {} items for {} requests",
                items.len(),
                requests.len()
            )));
        }
        Ok(items
            .into_iter()
            .map(|item| match item {
                BatchItem::Score(r) => Ok(r),
                BatchItem::Error { error, .. } => Err(error),
            })
            .collect())
    }

    fn post<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let url = format!("{}{path}", self.base);
        self.with_retries(path, || {
            let mut req = self.agent.post(&url);
            if let Some(t) = &self.token {
                req = req.header("Authorization", format!("Bearer {t}"));
            }
            classify(req.send_json(body))
        })
    }

    fn with_retries<T>(
        &self,
        path: &str,
        mut call: impl FnMut() -> Result<Attempt<T>>,
    ) -> Result<T> {
        let mut attempt = 0;
        loop {
            match call()? {
                Attempt::Done(v) => return Ok(v),
                Attempt::Retry(err) if attempt < self.retry.retries => {
                    let wait = self.retry.delay(attempt);
                    log::warn!("{path}: {err}; retrying in {wait:?}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Attempt::Retry(err) => return Err(err),
            }
        }
    }
}

/// Transport failures, 429 and 5xx are worth retrying; other statuses are not.
fn classify<T: DeserializeOwned>(
    sent: std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
) -> Result<Attempt<T>> {
    let mut resp = match sent {
        Ok(r) => r,
        Err(e) => return Ok(Attempt::Retry(Error::Transport(e.to_string()))),
    };
    let status = resp.status().as_u16();
    if (200..300).contains(&status) {
        let parsed = resp
            .body_mut()
            .read_json::<T>()
            .map_err(|e| Error::Data(format!("unreadable response body: {e}")))?;
        return Ok(Attempt::Done(parsed));
    }
    let body = resp.body_mut().read_to_string().unwrap_or_default();
    let err = Error::Status { status, body };
    if status == 429 || status >= 500 {
        Ok(Attempt::Retry(err))
    } else {
        Err(err)
    }
}
