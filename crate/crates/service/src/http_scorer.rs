//! Client for an external scorer speaking a small JSON protocol:
//!
//! * `GET  {base}/health` answers `{"name": .., "version": ..}`
//! * `POST {base}/score` takes `{"texts": [..], "languages": [..]}` and answers
//!   `{"probabilities": [..]}` in input order.

use std::time::Duration;

use loopsift_core::{ScoreInput, Scorer, ScorerError, ScorerIdentity};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub texts: Vec<String>,
    #[serde(default)]
    pub languages: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub probabilities: Vec<f64>,
}

/// Blocking client; call it from a blocking context, not from async code.
pub struct HttpScorer {
    base: String,
    client: reqwest::blocking::Client,
    identity: ScorerIdentity,
}

impl HttpScorer {
    /// Connects and reads the remote identity from the health endpoint.
    pub fn connect(base_url: &str, timeout: Duration) -> Result<Self, ScorerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ScorerError::Unavailable(e.to_string()))?;
        let base = base_url.trim_end_matches('/').to_string();
        let identity = client
            .get(format!("{base}/health"))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json::<ScorerIdentity>())
            .map_err(|e| ScorerError::Unavailable(format!("health check: {e}")))?;
        Ok(HttpScorer { base, client, identity })
    }
}

impl Scorer for HttpScorer {
    fn identity(&self) -> ScorerIdentity {
        self.identity.clone()
    }

    fn score(&self, batch: &[ScoreInput]) -> Result<Vec<f64>, ScorerError> {
        let body = ScoreRequest {
            texts: batch.iter().map(|i| i.text.clone()).collect(),
            languages: batch.iter().map(|i| i.language.to_string()).collect(),
        };
        let resp: ScoreResponse = self
            .client
            .post(format!("{}/score", self.base))
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| ScorerError::Unavailable(e.to_string()))?;
        Ok(resp.probabilities)
    }
}
