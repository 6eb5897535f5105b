use serde::{Deserialize, Serialize};

use super::ProviderError;

/// Connection and resilience settings for one provider service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderEndpoint {
    pub base_url: String,
    /// Name of the environment variable holding a bearer token, if any.
    pub api_key_env: Option<String>,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub timeout_ms: u64,
    /// Request starts per second; 0 disables the limit.
    pub rate_limit_per_s: f64,
    /// Send local image files base64-encoded in the request body.
    pub inline_images: bool,
}

impl Default for ProviderEndpoint {
    fn default() -> Self {
        ProviderEndpoint {
            base_url: String::new(),
            api_key_env: None,
            max_in_flight: 8,
            max_retries: 3,
            backoff_base_ms: 250,
            backoff_cap_ms: 30_000,
            timeout_ms: 30_000,
            rate_limit_per_s: 0.0,
            inline_images: false,
        }
    }
}

impl ProviderEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        ProviderEndpoint {
            base_url: base_url.into(),
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<(), ProviderError> {
        if self.max_in_flight == 0 {
            return Err(ProviderError::Config("max_in_flight must be >= 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(ProviderError::Config("timeout_ms must be > 0".into()));
        }
        if self.rate_limit_per_s.is_nan() || self.rate_limit_per_s < 0.0 {
            return Err(ProviderError::Config(
                "rate_limit_per_s must be >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn api_key(&self) -> Option<String> {
        self.api_key_env
            .as_deref()
            .and_then(|k| std::env::var(k).ok())
            .filter(|v| !v.is_empty())
    }
}
