//! Chat-completions backend that reads label log-probabilities from the first
//! generated position.

use std::thread;
use std::time::Duration;

use rayon::prelude::*;
use serde_json::{Value, json};

use crate::datamodel::RequestKind;
use crate::error::{Error, Result};
use crate::scorer::{
    Backend, BackendReply, DEFAULT_MAX_DOC_CHARS, LabelLogits, MAX_SETWISE_GROUP, PromptTemplates,
    ScoreRequest, build_prompt, label_names,
};

/// Token strings the model is expected to emit for each label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTokens {
    pub yes: String,
    pub no: String,
    /// Slot labels for triplet, duel and setwise requests.
    pub slots: Vec<String>,
}

impl Default for LabelTokens {
    fn default() -> Self {
        LabelTokens {
            yes: "Yes".into(),
            no: "No".into(),
            slots: label_names(RequestKind::Setwise, MAX_SETWISE_GROUP),
        }
    }
}

impl LabelTokens {
    fn for_request(&self, kind: RequestKind, count: usize) -> Vec<&str> {
        match kind {
            RequestKind::Pointwise => vec![&self.yes, &self.no],
            _ => self.slots.iter().take(count).map(String::as_str).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.yes.is_empty() || self.yes == self.no {
            return Err(Error::validation("pointwise label tokens must be distinct"));
        }
        let mut all: Vec<&str> = Vec::with_capacity(self.slots.len());
        for slot in &self.slots {
            if slot.is_empty() || all.contains(&slot.as_str()) {
                return Err(Error::validation(format!(
                    "slot label token {slot:?} is empty or repeated"
                )));
            }
            all.push(slot);
        }
        if self.slots.len() < 2 {
            return Err(Error::validation(
                "at least two slot label tokens are required",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LlmBackendConfig {
    pub base_url: String,
    pub path: String,
    pub model: String,
    /// Environment variable holding the API key; unset means no auth header.
    pub api_key_env: String,
    pub templates: PromptTemplates,
    pub labels: LabelTokens,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff: Duration,
    pub max_doc_chars: usize,
    /// Maximum number of requests in flight at once.
    pub batch_size: usize,
    pub top_logprobs: u32,
}

impl LlmBackendConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        LlmBackendConfig {
            base_url: base_url.into(),
            path: "/v1/chat/completions".into(),
            model: model.into(),
            api_key_env: "OPENAI_API_KEY".into(),
            templates: PromptTemplates::default(),
            labels: LabelTokens::default(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff: Duration::from_millis(250),
            max_doc_chars: DEFAULT_MAX_DOC_CHARS,
            batch_size: 8,
            top_logprobs: 20,
        }
    }

    pub fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with(self.path.trim_end_matches('/')) {
            base.to_string()
        } else {
            format!("{base}{}", self.path)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.templates.validate()?;
        self.labels.validate()?;
        if self.model.is_empty() {
            return Err(Error::validation("model name is required"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be at least 1"));
        }
        if self.top_logprobs < 20 {
            return Err(Error::validation("top_logprobs must be at least 20"));
        }
        Ok(())
    }
}

/// Looks up each label (bare and with a leading space, taking the larger) among
/// the returned top log-probabilities. A label that is absent gets the floor
/// `min(returned) - 1`; if no label is present at all the response is degenerate.
pub fn extract_label_logits(
    top: &[(String, f64)],
    labels: &[&str],
    payload: &str,
) -> Result<Vec<f64>> {
    let degenerate = |reason: &str| Error::DegenerateResponse {
        reason: reason.to_string(),
        payload: payload.to_string(),
    };
    let min = top
        .iter()
        .map(|(_, lp)| *lp)
        .filter(|lp| lp.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(degenerate("no finite top log-probabilities returned"));
    }
    let found: Vec<Option<f64>> = labels
        .iter()
        .map(|label| {
            let spaced = format!(" {label}");
            top.iter()
                .filter(|(tok, lp)| (tok == label || *tok == spaced) && lp.is_finite())
                .map(|(_, lp)| *lp)
                .reduce(f64::max)
        })
        .collect();
    if found.iter().all(Option::is_none) {
        return Err(degenerate(
            "no label token among the returned top log-probabilities",
        ));
    }
    Ok(found.into_iter().map(|v| v.unwrap_or(min - 1.0)).collect())
}

fn parse_top_logprobs(body: &Value) -> Option<Vec<(String, f64)>> {
    let first = body
        .get("choices")?
        .get(0)?
        .get("logprobs")?
        .get("content")?
        .get(0)?;
    let entries = first.get("top_logprobs")?.as_array()?;
    entries
        .iter()
        .map(|e| {
            Some((
                e.get("token")?.as_str()?.to_string(),
                e.get("logprob")?.as_f64()?,
            ))
        })
        .collect()
}

enum Attempt {
    Retry(String),
    Fail(Error),
}

pub struct LlmBackend {
    cfg: LlmBackendConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    pool: rayon::ThreadPool,
}

impl LlmBackend {
    pub fn new(cfg: LlmBackendConfig) -> Result<Self> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.batch_size)
            .build()
            .map_err(|e| Error::validation(format!("cannot build request pool: {e}")))?;
        Ok(LlmBackend {
            cfg,
            agent,
            api_key,
            pool,
        })
    }

    pub fn config(&self) -> &LlmBackendConfig {
        &self.cfg
    }

    fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "max_tokens": 1,
            "logprobs": true,
            "top_logprobs": self.cfg.top_logprobs,
        })
    }

    fn attempt(&self, url: &str, body: &str) -> std::result::Result<Value, Attempt> {
        let mut req = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send(body) {
            Ok(resp) => resp,
            Err(
                e @ (ureq::Error::Timeout(_)
                | ureq::Error::Io(_)
                | ureq::Error::ConnectionFailed
                | ureq::Error::HostNotFound
                | ureq::Error::BodyStalled),
            ) => return Err(Attempt::Retry(e.to_string())),
            Err(e) => return Err(Attempt::Fail(Error::Backend(e.to_string()))),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("HTTP {status}: {text}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fail(Error::DegenerateResponse {
                reason: format!("HTTP {status}"),
                payload: text,
            }));
        }
        serde_json::from_str(&text).map_err(|e| {
            Attempt::Fail(Error::DegenerateResponse {
                reason: format!("invalid JSON: {e}"),
                payload: text,
            })
        })
    }
}

impl Backend for LlmBackend {
    fn score(&self, request: &ScoreRequest<'_>) -> Result<BackendReply> {
        let prompt = build_prompt(request, &self.cfg.templates, self.cfg.max_doc_chars)?;
        let body = self.request_body(&prompt).to_string();
        let url = self.cfg.url();

        let attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        let mut response = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.cfg.backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(&url, &body) {
                Ok(v) => {
                    response = Some(v);
                    break;
                }
                Err(Attempt::Retry(msg)) => {
                    log::warn!(
                        "request {} attempt {}: {msg}",
                        request.request_id,
                        attempt + 1
                    );
                    last = msg;
                }
                Err(Attempt::Fail(e)) => return Err(e),
            }
        }
        let response = response.ok_or(Error::TransientBackend {
            attempts,
            message: last,
        })?;

        let payload = response.to_string();
        let top = parse_top_logprobs(&response).ok_or_else(|| Error::DegenerateResponse {
            reason: "response has no first-position top_logprobs".into(),
            payload: payload.clone(),
        })?;
        let kind = request.kind();
        let labels = self.cfg.labels.for_request(kind, request.label_count());
        let values = extract_label_logits(&top, &labels, &payload)?;
        Ok(BackendReply {
            logits: LabelLogits::new(kind, values)?,
            prompt_chars: prompt.chars().count() as u64,
        })
    }

    fn score_batch(&self, requests: &[ScoreRequest<'_>]) -> Vec<Result<BackendReply>> {
        self.pool
            .install(|| requests.par_iter().map(|r| self.score(r)).collect())
    }

    fn setwise_cap(&self) -> usize {
        self.cfg.labels.slots.len().min(MAX_SETWISE_GROUP)
    }
}
