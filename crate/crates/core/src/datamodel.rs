//! Domain types shared by every stage of the pipeline.
//!
//! Everything here is immutable after construction except [`CallLedger`],
//! which is updated concurrently by scorers and only read for totals.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::sync::Mutex;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let query = Query {
            id: id.into(),
            text: text.into(),
        };
        query.validate()?;
        Ok(query)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("query id is empty"));
        }
        if self.text.trim().is_empty() {
            return Err(Error::validation(format!(
                "query {:?} has empty text",
                self.id
            )));
        }
        Ok(())
    }
}

/// A first-stage retrieval candidate for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocCandidate {
    pub doc_id: String,
    pub text: String,
    pub first_stage_rank: usize,
    pub first_stage_score: f64,
}

impl DocCandidate {
    pub fn new(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        first_stage_rank: usize,
        first_stage_score: f64,
    ) -> Self {
        DocCandidate {
            doc_id: doc_id.into(),
            text: text.into(),
            first_stage_rank,
            first_stage_score,
        }
    }
}

/// Secondary sort key used wherever scores tie.
pub fn tiebreak_key(candidate: &DocCandidate) -> usize {
    candidate.first_stage_rank
}

/// Candidates for one query, always sorted by first-stage rank with ranks `1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    query: Query,
    docs: Vec<DocCandidate>,
}

impl CandidateList {
    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn docs(&self) -> &[DocCandidate] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Document at first-stage rank `rank` (1-based).
    pub fn at_rank(&self, rank: usize) -> Option<&DocCandidate> {
        rank.checked_sub(1).and_then(|i| self.docs.get(i))
    }

    pub fn validate(&self) -> Result<()> {
        validate_docs(&self.query, &self.docs)
    }

    pub fn into_parts(self) -> (Query, Vec<DocCandidate>) {
        (self.query, self.docs)
    }
}

pub fn make_candidate_list(query: Query, mut docs: Vec<DocCandidate>) -> Result<CandidateList> {
    docs.sort_by_key(tiebreak_key);
    validate_docs(&query, &docs)?;
    Ok(CandidateList { query, docs })
}

fn validate_docs(query: &Query, docs: &[DocCandidate]) -> Result<()> {
    query.validate()?;
    if docs.is_empty() {
        return Err(Error::validation(format!(
            "query {:?} has no candidates",
            query.id
        )));
    }
    let mut seen = HashSet::with_capacity(docs.len());
    for doc in docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(Error::DuplicateDoc(doc.doc_id.clone()));
        }
    }
    for (i, doc) in docs.iter().enumerate() {
        let expected = i + 1;
        if doc.first_stage_rank != expected {
            // docs are sorted, so the first mismatch names the gap (or a repeat)
            if doc.first_stage_rank > expected {
                return Err(Error::NonContiguousRanks { missing: expected });
            }
            return Err(Error::validation(format!(
                "first-stage rank {} appears more than once",
                doc.first_stage_rank
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub query_id: String,
    pub entries: Vec<RankEntry>,
    pub strategy_tag: String,
}

impl Ranking {
    /// Orders `list` by `scores` (indexed like `list.docs()`), descending, ties by first-stage rank.
    pub fn from_scores(list: &CandidateList, scores: &[f64], strategy_tag: &str) -> Self {
        assert_eq!(
            scores.len(),
            list.len(),
            "one score per candidate is required"
        );
        let docs = list.docs();
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| tiebreak_key(&docs[a]).cmp(&tiebreak_key(&docs[b])))
        });
        let entries = order
            .into_iter()
            .enumerate()
            .map(|(pos, i)| RankEntry {
                doc_id: docs[i].doc_id.clone(),
                score: scores[i],
                rank: pos + 1,
            })
            .collect();
        Ranking {
            query_id: list.query().id.clone(),
            entries,
            strategy_tag: strategy_tag.to_string(),
        }
    }

    /// Builds a ranking from an explicit order (indices into `list.docs()`).
    /// Scores are synthesized as `n - position` so they stay strictly descending.
    pub fn from_order(list: &CandidateList, order: &[usize], strategy_tag: &str) -> Self {
        let n = order.len();
        let entries = order
            .iter()
            .enumerate()
            .map(|(pos, &i)| RankEntry {
                doc_id: list.docs()[i].doc_id.clone(),
                score: (n - pos) as f64,
                rank: pos + 1,
            })
            .collect();
        Ranking {
            query_id: list.query().id.clone(),
            entries,
            strategy_tag: strategy_tag.to_string(),
        }
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for (i, entry) in self.entries.iter().enumerate() {
            if entry.rank != i + 1 {
                return Err(Error::validation(format!(
                    "ranking for {:?}: expected rank {} at position {}, found {}",
                    self.query_id,
                    i + 1,
                    i,
                    entry.rank
                )));
            }
            if !seen.insert(entry.doc_id.as_str()) {
                return Err(Error::DuplicateDoc(entry.doc_id.clone()));
            }
        }
        for pair in self.entries.windows(2) {
            if pair[0].score.total_cmp(&pair[1].score) == Ordering::Less {
                return Err(Error::validation(format!(
                    "ranking for {:?} is not sorted by score",
                    self.query_id
                )));
            }
        }
        Ok(())
    }
}

/// Graded relevance judgments. Absent pairs are grade 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Qrels {
    grades: HashMap<String, HashMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a judgment, returning the previous grade if the pair was already judged.
    pub fn insert(
        &mut self,
        query_id: impl Into<String>,
        doc_id: impl Into<String>,
        grade: u32,
    ) -> Option<u32> {
        self.grades
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.grades
            .get(query_id)
            .and_then(|docs| docs.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.grades.contains_key(query_id)
    }

    pub fn judged(&self, query_id: &str) -> Option<&HashMap<String, u32>> {
        self.grades.get(query_id)
    }

    pub fn max_grade(&self, query_id: &str) -> u32 {
        self.grades
            .get(query_id)
            .and_then(|docs| docs.values().copied().max())
            .unwrap_or(0)
    }

    pub fn judged_queries(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn query_count(&self) -> usize {
        self.grades.len()
    }

    pub fn len(&self) -> usize {
        self.grades.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Pointwise,
    Triplet,
    Duel,
    Setwise,
}

impl RequestKind {
    pub const ALL: [RequestKind; 4] = [
        RequestKind::Pointwise,
        RequestKind::Triplet,
        RequestKind::Duel,
        RequestKind::Setwise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::Pointwise => "pointwise",
            RequestKind::Triplet => "triplet",
            RequestKind::Duel => "duel",
            RequestKind::Setwise => "setwise",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub pointwise: u64,
    pub triplet: u64,
    pub duel: u64,
    pub setwise: u64,
}

impl CallCounts {
    pub fn get(&self, kind: RequestKind) -> u64 {
        match kind {
            RequestKind::Pointwise => self.pointwise,
            RequestKind::Triplet => self.triplet,
            RequestKind::Duel => self.duel,
            RequestKind::Setwise => self.setwise,
        }
    }

    pub fn total(&self) -> u64 {
        self.pointwise + self.triplet + self.duel + self.setwise
    }
}

/// Exact accounting of judge invocations. Counters only ever increase.
#[derive(Debug, Default)]
pub struct CallLedger {
    calls: [AtomicU64; 4],
    prompt_chars: AtomicU64,
    wall_times: Mutex<Vec<(String, Duration)>>,
}

impl CallLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_call(&self, kind: RequestKind, prompt_chars: u64) {
        self.calls[kind.index()].fetch_add(1, AtomicOrdering::Relaxed);
        self.prompt_chars
            .fetch_add(prompt_chars, AtomicOrdering::Relaxed);
    }

    pub fn record_query_time(&self, query_id: impl Into<String>, elapsed: Duration) {
        self.wall_times
            .lock()
            .expect("ledger mutex poisoned")
            .push((query_id.into(), elapsed));
    }

    pub fn calls(&self, kind: RequestKind) -> u64 {
        self.calls[kind.index()].load(AtomicOrdering::Relaxed)
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts {
            pointwise: self.calls(RequestKind::Pointwise),
            triplet: self.calls(RequestKind::Triplet),
            duel: self.calls(RequestKind::Duel),
            setwise: self.calls(RequestKind::Setwise),
        }
    }

    pub fn prompt_chars(&self) -> u64 {
        self.prompt_chars.load(AtomicOrdering::Relaxed)
    }

    pub fn wall_times(&self) -> Vec<(String, Duration)> {
        self.wall_times
            .lock()
            .expect("ledger mutex poisoned")
            .clone()
    }

    /// Adds another ledger's totals into this one.
    pub fn absorb(&self, other: &CallLedger) {
        for kind in RequestKind::ALL {
            self.calls[kind.index()].fetch_add(other.calls(kind), AtomicOrdering::Relaxed);
        }
        self.prompt_chars
            .fetch_add(other.prompt_chars(), AtomicOrdering::Relaxed);
        let times = other.wall_times();
        self.wall_times
            .lock()
            .expect("ledger mutex poisoned")
            .extend(times);
    }
}
