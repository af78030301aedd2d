use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::confidence::DEFAULT_P_CLAMP;
use crate::error::{Error, Result};
use crate::wire::MaskingMode;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Synthetic,
    Replay,
    Remote,
}

/// Retry attempts after the first failure, with the wait before each one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retries: usize,
    /// Waits in milliseconds; the last entry repeats when `retries` is larger.
    pub backoff_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            backoff_ms: vec![200, 1000, 5000],
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: usize) -> Duration {
        let ms = self
            .backoff_ms
            .get(attempt)
            .or(self.backoff_ms.last())
            .copied()
            .unwrap_or(0);
        Duration::from_millis(ms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer credential.
    pub auth_env: Option<String>,
    pub parallelism: usize,
    /// Requests per `/score_batch` call; 1 uses `/score`.
    pub batch_size: usize,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
    pub p_clamp: f64,
    pub cache_path: Option<PathBuf>,
    pub model_id: String,
    pub masking: MaskingMode,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Synthetic,
            endpoint: None,
            auth_env: None,
            parallelism: 4,
            batch_size: 64,
            retry: RetryPolicy::default(),
            timeout_secs: 120,
            p_clamp: DEFAULT_P_CLAMP,
            cache_path: None,
            model_id: "synthetic".into(),
            masking: MaskingMode::Embedding,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_clamp > 0.0 && self.p_clamp < 0.5) {
            return Err(Error::Config(format!(
                "p_clamp must be in (0, 0.5), got {}",
                self.p_clamp
            )));
        }
        if self.parallelism < 1 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.model_id.contains('|') {
            return Err(Error::Config("model_id may not contain '|'".into()));
        }
        match self.backend {
            BackendKind::Remote if self.endpoint.is_none() => {
                Err(Error::Config("remote backend needs an endpoint".into()))
            }
            BackendKind::Replay if self.cache_path.is_none() => {
                Err(Error::Config("replay backend needs a cache_path".into()))
            }
            _ => Ok(()),
        }
    }

    /// Bearer credential, if an `auth_env` is configured.
    pub fn credential(&self) -> Result<Option<String>> {
        match &self.auth_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| Error::MissingCredential(var.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(OracleConfig::default().validate().is_ok());
        for bad in [
            OracleConfig {
                p_clamp: 0.5,
                ..Default::default()
            },
            OracleConfig {
                p_clamp: 0.0,
                ..Default::default()
            },
            OracleConfig {
                parallelism: 0,
                ..Default::default()
            },
            OracleConfig {
                backend: BackendKind::Remote,
                ..Default::default()
            },
            OracleConfig {
                backend: BackendKind::Replay,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn backoff_repeats_last_entry() {
        let r = RetryPolicy {
            retries: 5,
            backoff_ms: vec![1, 2],
        };
        assert_eq!(r.delay(0), Duration::from_millis(1));
        assert_eq!(r.delay(4), Duration::from_millis(2));
    }

    #[test]
    fn missing_credential_is_reported() {
        let c = OracleConfig {
            auth_env: Some("MEMREASON_TEST_SURELY_UNSET".into()),
            ..Default::default()
        };
        assert!(matches!(c.credential(), Err(Error::MissingCredential(_))));
    }
}
