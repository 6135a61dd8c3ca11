//! Judge interface: requests, label log-likelihoods, and the backends that produce them.
//!
//! Backends return raw label logits; turning them into probabilities is the
//! strategies' job. Every request that goes through a [`Scorer`] is counted in
//! its [`CallLedger`].

mod llm;
mod oracle;
mod prompt;

use crate::datamodel::{CallLedger, DocCandidate, Query, RequestKind};
use crate::error::{Error, Result};

pub use llm::{LabelTokens, LlmBackend, LlmBackendConfig, extract_label_logits};
pub use oracle::{
    LatentSource, OracleConfig, SyntheticOracle, oracle_latent, stable_hash, synthetic_latent,
};
pub use prompt::{DEFAULT_MAX_DOC_CHARS, PromptTemplates, TRUNCATION_MARKER, build_prompt};

/// Largest setwise group the label alphabet supports.
pub const MAX_SETWISE_GROUP: usize = 26;

#[derive(Debug, Clone)]
pub enum RequestBody<'a> {
    Pointwise {
        query: &'a Query,
        doc: &'a DocCandidate,
    },
    /// Candidate in slot A, reference in slot B.
    Triplet {
        query: &'a Query,
        doc: &'a DocCandidate,
        reference: &'a DocCandidate,
    },
    Duel {
        query: &'a Query,
        doc_a: &'a DocCandidate,
        doc_b: &'a DocCandidate,
    },
    Setwise {
        query: &'a Query,
        docs: Vec<&'a DocCandidate>,
    },
}

#[derive(Debug, Clone)]
pub struct ScoreRequest<'a> {
    pub body: RequestBody<'a>,
    /// Opaque token for correlating responses; not part of the scored content.
    pub request_id: u64,
}

impl<'a> ScoreRequest<'a> {
    pub fn pointwise(query: &'a Query, doc: &'a DocCandidate) -> Self {
        Self::new(RequestBody::Pointwise { query, doc })
    }

    pub fn triplet(query: &'a Query, doc: &'a DocCandidate, reference: &'a DocCandidate) -> Self {
        Self::new(RequestBody::Triplet {
            query,
            doc,
            reference,
        })
    }

    pub fn duel(query: &'a Query, doc_a: &'a DocCandidate, doc_b: &'a DocCandidate) -> Self {
        Self::new(RequestBody::Duel {
            query,
            doc_a,
            doc_b,
        })
    }

    pub fn setwise(query: &'a Query, docs: Vec<&'a DocCandidate>) -> Self {
        Self::new(RequestBody::Setwise { query, docs })
    }

    fn new(body: RequestBody<'a>) -> Self {
        ScoreRequest {
            body,
            request_id: 0,
        }
    }

    pub fn with_id(mut self, request_id: u64) -> Self {
        self.request_id = request_id;
        self
    }

    pub fn kind(&self) -> RequestKind {
        match self.body {
            RequestBody::Pointwise { .. } => RequestKind::Pointwise,
            RequestBody::Triplet { .. } => RequestKind::Triplet,
            RequestBody::Duel { .. } => RequestKind::Duel,
            RequestBody::Setwise { .. } => RequestKind::Setwise,
        }
    }

    pub fn query(&self) -> &'a Query {
        match &self.body {
            RequestBody::Pointwise { query, .. }
            | RequestBody::Triplet { query, .. }
            | RequestBody::Duel { query, .. }
            | RequestBody::Setwise { query, .. } => query,
        }
    }

    /// Documents in slot order.
    pub fn docs(&self) -> Vec<&'a DocCandidate> {
        match &self.body {
            RequestBody::Pointwise { doc, .. } => vec![doc],
            RequestBody::Triplet { doc, reference, .. } => vec![doc, reference],
            RequestBody::Duel { doc_a, doc_b, .. } => vec![doc_a, doc_b],
            RequestBody::Setwise { docs, .. } => docs.clone(),
        }
    }

    pub fn label_count(&self) -> usize {
        match &self.body {
            RequestBody::Setwise { docs, .. } => docs.len(),
            _ => 2,
        }
    }

    pub fn validate(&self, setwise_cap: usize) -> Result<()> {
        self.query().validate()?;
        for doc in self.docs() {
            if doc.text.is_empty() {
                return Err(Error::validation(format!(
                    "document {:?} has empty text",
                    doc.doc_id
                )));
            }
        }
        if let RequestBody::Setwise { docs, .. } = &self.body {
            let cap = setwise_cap.min(MAX_SETWISE_GROUP);
            if docs.len() < 2 || docs.len() > cap {
                return Err(Error::validation(format!(
                    "setwise group size {} outside 2..={cap}",
                    docs.len()
                )));
            }
        }
        Ok(())
    }
}

/// Canonical label names for a request kind, in slot order.
pub fn label_names(kind: RequestKind, count: usize) -> Vec<String> {
    match kind {
        RequestKind::Pointwise => vec!["yes".into(), "no".into()],
        RequestKind::Triplet | RequestKind::Duel => vec!["A".into(), "B".into()],
        RequestKind::Setwise => (0..count.min(MAX_SETWISE_GROUP))
            .map(|i| char::from(b'A' + i as u8).to_string())
            .collect(),
    }
}

/// Raw per-label log-likelihoods, positionally aligned with [`label_names`].
///
/// Pointwise: `[yes, no]`; triplet and duel: `[A, B]`; setwise: `[A, B, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelLogits {
    pub kind: RequestKind,
    pub values: Vec<f64>,
}

impl LabelLogits {
    pub fn new(kind: RequestKind, values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::DegenerateResponse {
                reason: "non-finite label logit".into(),
                payload: format!("{bad}"),
            });
        }
        Ok(LabelLogits { kind, values })
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        label_names(self.kind, self.values.len())
            .iter()
            .position(|l| l == label)
            .map(|i| self.values[i])
    }

    /// First two logits; `(yes, no)` for pointwise, `(A, B)` for comparisons.
    pub fn pair(&self) -> (f64, f64) {
        (self.values[0], self.values[1])
    }

    /// Slot index with the largest logit; ties go to the earlier slot.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate().skip(1) {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub logits: LabelLogits,
    pub prompt_chars: u64,
}

impl From<LabelLogits> for BackendReply {
    fn from(logits: LabelLogits) -> Self {
        BackendReply {
            logits,
            prompt_chars: 0,
        }
    }
}

/// A relevance judge. Implementations must be callable from many threads at once.
pub trait Backend: Send + Sync {
    fn score(&self, request: &ScoreRequest<'_>) -> Result<BackendReply>;

    /// Results are positionally aligned with `requests`.
    fn score_batch(&self, requests: &[ScoreRequest<'_>]) -> Vec<Result<BackendReply>> {
        requests.iter().map(|r| self.score(r)).collect()
    }

    /// Largest setwise group this backend accepts.
    fn setwise_cap(&self) -> usize {
        MAX_SETWISE_GROUP
    }
}

/// A backend paired with the ledger that accounts for its calls.
#[derive(Clone, Copy)]
pub struct Scorer<'a> {
    backend: &'a dyn Backend,
    ledger: &'a CallLedger,
}

impl<'a> Scorer<'a> {
    pub fn new(backend: &'a dyn Backend, ledger: &'a CallLedger) -> Self {
        Scorer { backend, ledger }
    }

    pub fn ledger(&self) -> &'a CallLedger {
        self.ledger
    }

    pub fn score(&self, request: &ScoreRequest<'_>) -> Result<LabelLogits> {
        request.validate(self.backend.setwise_cap())?;
        let reply = self.backend.score(request);
        self.record(request.kind(), &reply);
        reply.map(|r| r.logits)
    }

    pub fn score_batch(&self, requests: &[ScoreRequest<'_>]) -> Vec<Result<LabelLogits>> {
        let cap = self.backend.setwise_cap();
        let invalid: Vec<Option<Error>> = requests.iter().map(|r| r.validate(cap).err()).collect();
        if invalid.iter().all(Option::is_none) {
            let replies = self.backend.score_batch(requests);
            return requests
                .iter()
                .zip(replies)
                .map(|(req, reply)| {
                    self.record(req.kind(), &reply);
                    reply.map(|r| r.logits)
                })
                .collect();
        }
        // invalid entries never reach the backend
        requests
            .iter()
            .zip(invalid)
            .map(|(req, err)| match err {
                Some(e) => Err(e),
                None => self.score(req),
            })
            .collect()
    }

    fn record(&self, kind: RequestKind, reply: &Result<BackendReply>) {
        let chars = reply.as_ref().map(|r| r.prompt_chars).unwrap_or(0);
        self.ledger.record_call(kind, chars);
    }
}
