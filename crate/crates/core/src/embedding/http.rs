//! HTTP embedding backend.
//!
//! `POST {base}/v1/embed/text` with `{"model", "texts"}` and
//! `POST {base}/v1/embed/image` with `{"model", "images_b64"}` both answer
//! `{"dim", "embeddings"}`. Status 400 is a contract violation; 503,
//! other 5xx statuses and transport failures are retried with exponential
//! backoff before giving up with [`Error::ProviderUnavailable`].

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{EmbeddingBackend, ProviderId};
use crate::{Error, Result};

#[derive(Serialize)]
struct TextRequest<'a> {
    model: &'a str,
    texts: &'a [String],
}

#[derive(Serialize)]
struct ImageRequest<'a> {
    model: &'a str,
    images_b64: Vec<String>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    embeddings: Vec<Vec<f32>>,
}

pub struct HttpBackend {
    base_url: String,
    agent: ureq::Agent,
    max_attempts: u32,
    backoff: Duration,
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        HttpBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
            max_attempts: 4,
            backoff: Duration::from_millis(200),
        }
    }

    /// Overrides the retry policy (total attempts and initial backoff).
    pub fn with_retries(mut self, max_attempts: u32, backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<B: Serialize>(&self, model: &ProviderId, route: &str, body: &B) -> Result<Vec<Vec<f32>>> {
        let url = format!("{}{}", self.base_url, route);
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            match self.try_post(model, &url, body) {
                Ok(rows) => return Ok(rows),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("{url} attempt {attempt}/{}: {msg}", self.max_attempts);
                    last = msg;
                }
            }
            if attempt < self.max_attempts {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(Error::ProviderUnavailable {
            provider: model.name.clone(),
            message: format!("{url}: {last}"),
        })
    }

    fn try_post<B: Serialize>(&self, model: &ProviderId, url: &str, body: &B) -> std::result::Result<Vec<Vec<f32>>, Attempt> {
        let violation = |message: String| {
            Attempt::Fatal(Error::ProviderContractViolation {
                provider: model.name.clone(),
                message,
            })
        };
        let mut response = self
            .agent
            .post(url)
            .send_json(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        if status >= 500 {
            return Err(Attempt::Retry(format!("status {status}")));
        }
        if status != 200 {
            let detail = response.body_mut().read_to_string().unwrap_or_default();
            return Err(violation(format!("status {status}: {detail}")));
        }
        let parsed: EmbedResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| violation(format!("malformed response: {e}")))?;
        if parsed.dim != model.dim {
            return Err(violation(format!("advertised dim {} but registry says {}", parsed.dim, model.dim)));
        }
        Ok(parsed.embeddings)
    }
}

impl EmbeddingBackend for HttpBackend {
    fn embed_texts(&self, model: &ProviderId, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let body = TextRequest {
            model: &model.name,
            texts,
        };
        self.post(model, "/v1/embed/text", &body)
    }

    fn embed_images(&self, model: &ProviderId, images: &[Vec<u8>]) -> Result<Vec<Vec<f32>>> {
        let engine = base64::engine::general_purpose::STANDARD;
        let body = ImageRequest {
            model: &model.name,
            images_b64: images.iter().map(|b| engine.encode(b)).collect(),
        };
        self.post(model, "/v1/embed/image", &body)
    }
}
