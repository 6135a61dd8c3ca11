//! Zero-shot LLM reranking harness built around reference-anchored comparison.
//!
//! Candidates from a first-stage run are scored against one or more reference
//! documents drawn from the top of that run ([`strategies::rank_refrank_single`],
//! [`strategies::rank_refrank_multiple`]). Pointwise, all-pairs, bubble-sort and
//! setwise-heapsort baselines share the same [`scorer::Scorer`] interface so call
//! counts and quality can be compared directly.

pub mod analysis;
pub mod datamodel;
pub mod error;
pub mod eval;
pub mod io;
pub mod scorer;
pub mod strategies;
pub mod synthetic;

pub use datamodel::{
    CallCounts, CallLedger, CandidateList, DocCandidate, Qrels, Query, RankEntry, Ranking,
    RequestKind, make_candidate_list, tiebreak_key,
};
pub use error::{Error, Result};
