//! HTTP adapter for an externally hosted classifier (e.g. a fine-tuned transformer).
//!
//! Request: `POST <endpoint>` with `{"text": "<normalized text>"}`.
//! Response: `{"probs": [p_0, ..., p_{K-1}]}` in the order of the configured classes.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::error::{Error, Result};

#[derive(Serialize)]
struct Request<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct Response {
    probs: Vec<f64>,
}

pub struct HttpClassifier {
    endpoint: String,
    classes: Vec<String>,
    agent: ureq::Agent,
}

impl HttpClassifier {
    pub fn new(endpoint: impl Into<String>, classes: Vec<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpClassifier {
            endpoint: endpoint.into(),
            classes,
            agent,
        }
    }
}

impl Classifier for HttpClassifier {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict_proba(&self, text: &str) -> Result<Vec<f64>> {
        let resp: Response = self
            .agent
            .post(&self.endpoint)
            .send_json(Request { text })
            .map_err(|e| Error::Backend(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| Error::Backend(e.to_string()))?;
        if resp.probs.len() != self.classes.len() {
            return Err(Error::Backend(format!(
                "expected {} probabilities, got {}",
                self.classes.len(),
                resp.probs.len()
            )));
        }
        if resp.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Backend("invalid probability in response".into()));
        }
        Ok(resp.probs)
    }
}
