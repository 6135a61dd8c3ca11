//! Reranking strategies.
//!
//! Each strategy takes one [`CandidateList`] and a [`Scorer`] and returns a
//! [`Ranking`]. Call accounting happens in the scorer's ledger; the call count
//! of every strategy is a closed form of `n` (and `m`, `k`) except setwise
//! heapsort, whose count depends on the comparisons the heap actually needs.

use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{CandidateList, DocCandidate, Ranking};
use crate::error::{Error, Result};
use crate::scorer::{LabelLogits, MAX_SETWISE_GROUP, ScoreRequest, Scorer, stable_hash};

/// `exp(a) / (exp(a) + exp(b))` without overflow.
fn softmax_first(a: f64, b: f64) -> f64 {
    let d = a - b;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// Relevance probability from the "yes"/"no" label log-likelihoods.
pub fn pointwise_score(s_yes: f64, s_no: f64) -> f64 {
    softmax_first(s_yes, s_no)
}

/// Probability of slot A (the candidate) over slot B (the reference).
pub fn refrank_score(s_a: f64, s_b: f64) -> f64 {
    softmax_first(s_a, s_b)
}

fn pair_probability(logits: &LabelLogits) -> f64 {
    let (a, b) = logits.pair();
    softmax_first(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RefPolicy {
    /// Reference at this first-stage rank (1-based).
    FixedIndex { rank: usize },
    /// Seeded uniform draw among first-stage ranks `1..=k`, fixed per query.
    RandomTopK { k: usize, seed: u64 },
}

impl Default for RefPolicy {
    fn default() -> Self {
        RefPolicy::FixedIndex { rank: 1 }
    }
}

impl RefPolicy {
    pub fn random_top2(seed: u64) -> Self {
        RefPolicy::RandomTopK { k: 2, seed }
    }
}

pub fn resolve_reference(list: &CandidateList, policy: RefPolicy) -> Result<&DocCandidate> {
    let n = list.len();
    let rank = match policy {
        RefPolicy::FixedIndex { rank } => {
            if rank == 0 || rank > n {
                return Err(Error::validation(format!(
                    "reference index {rank} outside 1..={n}"
                )));
            }
            rank
        }
        RefPolicy::RandomTopK { k, seed } => {
            if k == 0 || k > n {
                return Err(Error::validation(format!(
                    "reference pool size {k} outside 1..={n}"
                )));
            }
            let key = stable_hash(&[
                &seed.to_le_bytes(),
                b"reference",
                list.query().id.as_bytes(),
            ]);
            ChaCha8Rng::seed_from_u64(key).random_range(1..=k)
        }
    };
    Ok(list
        .at_rank(rank)
        .expect("rank checked against list length"))
}

/// Weights for averaging RefRank scores over the top-`m` first-stage references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    weights: Vec<f64>,
}

impl EnsembleConfig {
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::validation("ensemble size must be at least 1"));
        }
        Ok(EnsembleConfig {
            weights: vec![1.0 / m as f64; m],
        })
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::validation("ensemble size must be at least 1"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation(
                "ensemble weights must be finite and nonnegative",
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "ensemble weights sum to {sum}, expected 1"
            )));
        }
        Ok(EnsembleConfig { weights })
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Checks `m <= n`. Returns a warning message when `m` exceeds the
    /// `floor(log2 n)` budget that keeps `m * n` calls within `O(n log n)`.
    pub fn validate(&self, n: usize) -> Result<Option<String>> {
        let m = self.m();
        if m > n {
            return Err(Error::validation(format!(
                "ensemble size {m} exceeds candidate count {n}"
            )));
        }
        let budget = budget_limit(n);
        if m > budget {
            let msg = format!(
                "ensemble size {m} exceeds the O(n log n) budget floor(log2 {n}) = {budget} \
                 (m <= 6 at n = 100)"
            );
            return Ok(Some(msg));
        }
        Ok(None)
    }
}

/// Largest ensemble size whose `m * n` cost stays below `n log2 n`.
pub fn budget_limit(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (n as f64).log2().floor() as usize
    }
}

fn collect_batch(
    scorer: &Scorer<'_>,
    requests: &[ScoreRequest<'_>],
    owners: &[&str],
) -> Result<Vec<LabelLogits>> {
    scorer
        .score_batch(requests)
        .into_iter()
        .zip(owners)
        .map(|(r, owner)| r.map_err(|e| e.for_doc(owner)))
        .collect()
}

pub fn rank_pointwise(list: &CandidateList, scorer: &Scorer<'_>) -> Result<Ranking> {
    let query = list.query();
    let requests: Vec<_> = list
        .docs()
        .iter()
        .map(|d| ScoreRequest::pointwise(query, d))
        .collect();
    let owners: Vec<&str> = list.docs().iter().map(|d| d.doc_id.as_str()).collect();
    let scores: Vec<f64> = collect_batch(scorer, &requests, &owners)?
        .iter()
        .map(|l| {
            let (yes, no) = l.pair();
            pointwise_score(yes, no)
        })
        .collect();
    Ok(Ranking::from_scores(
        list,
        &scores,
        StrategyName::Pointwise.as_str(),
    ))
}

/// RefRank scores of every candidate against `reference`, in first-stage order.
fn refrank_scores(
    list: &CandidateList,
    scorer: &Scorer<'_>,
    reference: &DocCandidate,
    swap_debias: bool,
) -> Result<Vec<f64>> {
    let query = list.query();
    let docs = list.docs();
    let mut requests: Vec<_> = docs
        .iter()
        .map(|d| ScoreRequest::triplet(query, d, reference))
        .collect();
    let mut owners: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
    if swap_debias {
        requests.extend(
            docs.iter()
                .map(|d| ScoreRequest::triplet(query, reference, d)),
        );
        owners.extend(docs.iter().map(|d| d.doc_id.as_str()));
    }
    let logits = collect_batch(scorer, &requests, &owners)?;
    let forward = logits[..docs.len()].iter().map(pair_probability);
    if !swap_debias {
        return Ok(forward.collect());
    }
    Ok(forward
        .zip(logits[docs.len()..].iter().map(pair_probability))
        .map(|(fwd, rev)| 0.5 * (fwd + (1.0 - rev)))
        .collect())
}

pub fn rank_refrank_single(
    list: &CandidateList,
    scorer: &Scorer<'_>,
    policy: RefPolicy,
) -> Result<Ranking> {
    rank_refrank_single_with(list, scorer, policy, false)
}

/// Single-reference RefRank. With `swap_debias` each candidate is also scored
/// with slots exchanged and the two probabilities averaged (`2n` calls).
pub fn rank_refrank_single_with(
    list: &CandidateList,
    scorer: &Scorer<'_>,
    policy: RefPolicy,
    swap_debias: bool,
) -> Result<Ranking> {
    let reference = resolve_reference(list, policy)?;
    let scores = refrank_scores(list, scorer, reference, swap_debias)?;
    Ok(Ranking::from_scores(
        list,
        &scores,
        StrategyName::RefRankSingle.as_str(),
    ))
}

/// Weighted mean of RefRank scores against the top-`m` first-stage documents.
pub fn rank_refrank_multiple(
    list: &CandidateList,
    scorer: &Scorer<'_>,
    cfg: &EnsembleConfig,
) -> Result<Ranking> {
    if let Some(warning) = cfg.validate(list.len())? {
        log::debug!("{warning}");
    }
    let query = list.query();
    let docs = list.docs();
    let references = &docs[..cfg.m()];
    let mut requests = Vec::with_capacity(cfg.m() * docs.len());
    let mut owners = Vec::with_capacity(cfg.m() * docs.len());
    for reference in references {
        for doc in docs {
            requests.push(ScoreRequest::triplet(query, doc, reference));
            owners.push(doc.doc_id.as_str());
        }
    }
    let logits = collect_batch(scorer, &requests, &owners)?;
    let n = docs.len();
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            cfg.weights().iter().enumerate().fold(0.0, |acc, (r, w)| {
                acc + w * pair_probability(&logits[r * n + i])
            })
        })
        .collect();
    Ok(Ranking::from_scores(
        list,
        &scores,
        StrategyName::RefRankMultiple.as_str(),
    ))
}

pub fn rank_pairwise_allpairs(list: &CandidateList, scorer: &Scorer<'_>) -> Result<Ranking> {
    rank_pairwise_allpairs_with(list, scorer, false)
}

/// All-pairs duels. Both slot orders per pair by default (`n(n-1)` calls);
/// `half_matrix` scores each unordered pair once (`n(n-1)/2` calls).
pub fn rank_pairwise_allpairs_with(
    list: &CandidateList,
    scorer: &Scorer<'_>,
    half_matrix: bool,
) -> Result<Ranking> {
    let query = list.query();
    let docs = list.docs();
    let n = docs.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && (!half_matrix || i < j) {
                pairs.push((i, j));
            }
        }
    }
    let requests: Vec<_> = pairs
        .iter()
        .map(|&(i, j)| ScoreRequest::duel(query, &docs[i], &docs[j]))
        .collect();
    let owners: Vec<&str> = pairs
        .iter()
        .map(|&(i, _)| docs[i].doc_id.as_str())
        .collect();
    let logits = collect_batch(scorer, &requests, &owners)?;

    let mut wins = vec![vec![0.0; n]; n];
    for (&(i, j), l) in pairs.iter().zip(&logits) {
        wins[i][j] = pair_probability(l);
    }
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                return 0.0;
            }
            let total = (0..n).filter(|&j| j != i).fold(0.0, |acc, j| {
                if half_matrix {
                    acc + if i < j { wins[i][j] } else { 1.0 - wins[j][i] }
                } else {
                    acc + wins[i][j] + (1.0 - wins[j][i])
                }
            });
            let norm = if half_matrix { n - 1 } else { 2 * (n - 1) };
            total / norm as f64
        })
        .collect();
    Ok(Ranking::from_scores(
        list,
        &scores,
        StrategyName::AllPairs.as_str(),
    ))
}

fn settled_then_first_stage(n: usize, settled: &[usize]) -> Vec<usize> {
    let mut taken = vec![false; n];
    for &i in settled {
        taken[i] = true;
    }
    settled
        .iter()
        .copied()
        .chain((0..n).filter(|&i| !taken[i]))
        .collect()
}

/// `k` bubble passes from the bottom of the first-stage order. Each pass floats
/// the strongest remaining candidate into position `pass`. Documents below the
/// settled top-`k` keep their first-stage order.
pub fn rank_pairwise_bubblesort(
    list: &CandidateList,
    scorer: &Scorer<'_>,
    k: usize,
) -> Result<Ranking> {
    let n = list.len();
    if k == 0 || k > n {
        return Err(Error::validation(format!(
            "bubble passes {k} outside 1..={n}"
        )));
    }
    let query = list.query();
    let docs = list.docs();
    let mut order: Vec<usize> = (0..n).collect();
    for pass in 0..k {
        for j in (pass + 1..n).rev() {
            let (lower, upper) = (order[j], order[j - 1]);
            let logits = scorer
                .score(&ScoreRequest::duel(query, &docs[lower], &docs[upper]))
                .map_err(|e| e.for_doc(&docs[lower].doc_id))?;
            if pair_probability(&logits) > 0.5 {
                order.swap(j, j - 1);
            }
        }
    }
    let ranked = settled_then_first_stage(n, &order[..k]);
    Ok(Ranking::from_order(
        list,
        &ranked,
        StrategyName::BubbleSort.as_str(),
    ))
}

struct SetwiseHeap<'s, 'l> {
    list: &'l CandidateList,
    scorer: &'s Scorer<'s>,
    arity: usize,
    heap: Vec<usize>,
    size: usize,
}

impl SetwiseHeap<'_, '_> {
    fn sift_down(&mut self, mut pos: usize) -> Result<()> {
        let docs = self.list.docs();
        loop {
            let first = self.arity * pos + 1;
            if first >= self.size {
                return Ok(());
            }
            let children: Vec<usize> = (first..(first + self.arity).min(self.size)).collect();
            let mut group = Vec::with_capacity(children.len() + 1);
            group.push(&docs[self.heap[pos]]);
            group.extend(children.iter().map(|&c| &docs[self.heap[c]]));
            let logits = self
                .scorer
                .score(&ScoreRequest::setwise(self.list.query(), group))
                .map_err(|e| e.for_doc(&docs[self.heap[pos]].doc_id))?;
            let best = logits.argmax();
            if best == 0 {
                return Ok(());
            }
            let child = children[best - 1];
            self.heap.swap(pos, child);
            pos = child;
        }
    }
}

/// Top-`k` selection with a `c`-ary max-heap whose node comparisons are setwise
/// requests (a parent and up to `c` children, the judge picks the best).
pub fn rank_setwise_heapsort(
    list: &CandidateList,
    scorer: &Scorer<'_>,
    c: usize,
    k: usize,
) -> Result<Ranking> {
    let n = list.len();
    if c < 2 {
        return Err(Error::validation(format!(
            "setwise arity {c} must be at least 2"
        )));
    }
    if c + 1 > MAX_SETWISE_GROUP {
        return Err(Error::validation(format!(
            "setwise arity {c} exceeds the label alphabet"
        )));
    }
    if k == 0 || k > n {
        return Err(Error::validation(format!(
            "setwise top-k {k} outside 1..={n}"
        )));
    }
    let mut heap = SetwiseHeap {
        list,
        scorer,
        arity: c,
        heap: (0..n).collect(),
        size: n,
    };
    if n > 1 {
        for pos in (0..=(n - 2) / c).rev() {
            heap.sift_down(pos)?;
        }
    }
    let mut extracted = Vec::with_capacity(k);
    for t in 0..k {
        extracted.push(heap.heap[0]);
        heap.size -= 1;
        if heap.size == 0 {
            break;
        }
        heap.heap.swap(0, heap.size);
        if t + 1 < k {
            heap.sift_down(0)?;
        }
    }
    let ranked = settled_then_first_stage(n, &extracted);
    Ok(Ranking::from_order(
        list,
        &ranked,
        StrategyName::Setwise.as_str(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyName {
    Pointwise,
    RefRankSingle,
    RefRankMultiple,
    AllPairs,
    BubbleSort,
    Setwise,
}

impl StrategyName {
    pub const ALL: [StrategyName; 6] = [
        StrategyName::Pointwise,
        StrategyName::RefRankSingle,
        StrategyName::RefRankMultiple,
        StrategyName::AllPairs,
        StrategyName::BubbleSort,
        StrategyName::Setwise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyName::Pointwise => "pointwise",
            StrategyName::RefRankSingle => "refrank-single",
            StrategyName::RefRankMultiple => "refrank-multiple",
            StrategyName::AllPairs => "allpairs",
            StrategyName::BubbleSort => "bubblesort",
            StrategyName::Setwise => "setwise",
        }
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown strategy {s:?}")))
    }
}

/// A fully parameterized strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum Strategy {
    Pointwise,
    #[serde(rename = "refrank-single")]
    RefRankSingle {
        policy: RefPolicy,
        #[serde(default)]
        swap_debias: bool,
    },
    #[serde(rename = "refrank-multiple")]
    RefRankMultiple {
        ensemble: EnsembleConfig,
    },
    #[serde(rename = "allpairs")]
    AllPairs {
        #[serde(default)]
        half_matrix: bool,
    },
    #[serde(rename = "bubblesort")]
    BubbleSort {
        k: usize,
    },
    #[serde(rename = "setwise")]
    Setwise {
        children: usize,
        k: usize,
    },
}

impl Strategy {
    pub fn name(&self) -> StrategyName {
        match self {
            Strategy::Pointwise => StrategyName::Pointwise,
            Strategy::RefRankSingle { .. } => StrategyName::RefRankSingle,
            Strategy::RefRankMultiple { .. } => StrategyName::RefRankMultiple,
            Strategy::AllPairs { .. } => StrategyName::AllPairs,
            Strategy::BubbleSort { .. } => StrategyName::BubbleSort,
            Strategy::Setwise { .. } => StrategyName::Setwise,
        }
    }

    /// `k`, `m` and `c` can be smaller than the requested value on short lists.
    pub fn clamped_to(&self, n: usize) -> Strategy {
        match self {
            Strategy::BubbleSort { k } => Strategy::BubbleSort { k: (*k).min(n) },
            Strategy::Setwise { children, k } => Strategy::Setwise {
                children: *children,
                k: (*k).min(n),
            },
            other => other.clone(),
        }
    }

    pub fn run(&self, list: &CandidateList, scorer: &Scorer<'_>) -> Result<Ranking> {
        match self {
            Strategy::Pointwise => rank_pointwise(list, scorer),
            Strategy::RefRankSingle {
                policy,
                swap_debias,
            } => rank_refrank_single_with(list, scorer, *policy, *swap_debias),
            Strategy::RefRankMultiple { ensemble } => rank_refrank_multiple(list, scorer, ensemble),
            Strategy::AllPairs { half_matrix } => {
                rank_pairwise_allpairs_with(list, scorer, *half_matrix)
            }
            Strategy::BubbleSort { k } => rank_pairwise_bubblesort(list, scorer, *k),
            Strategy::Setwise { children, k } => rank_setwise_heapsort(list, scorer, *children, *k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{CallLedger, Query, RequestKind, make_candidate_list};
    use crate::scorer::{LatentSource, OracleConfig, SyntheticOracle};

    fn list(n: usize) -> CandidateList {
        let docs = (1..=n)
            .map(|r| DocCandidate::new(format!("d{r}"), format!("passage {r}"), r, 0.0))
            .collect();
        make_candidate_list(Query::new("q1", "query").unwrap(), docs).unwrap()
    }

    fn oracle(sigma: f64) -> SyntheticOracle {
        SyntheticOracle::new(
            OracleConfig::new(3, LatentSource::Synthetic { seed: 17 }).with_sigma(sigma),
        )
        .unwrap()
    }

    #[test]
    fn softmax_unit_values() {
        assert_eq!(pointwise_score(0.0, 0.0), 0.5);
        assert!((pointwise_score(3f64.ln(), 0.0) - 0.75).abs() < 1e-12);
        assert!((pointwise_score(1000.0, 0.0) - 1.0).abs() < 1e-12);
        assert!(pointwise_score(0.0, 1000.0).abs() < 1e-12);
        assert_eq!(refrank_score(0.0, 0.0), 0.5);
        let expected = 2f64.exp() / (2f64.exp() + 1f64.exp());
        assert!((refrank_score(2.0, 1.0) - expected).abs() < 1e-15);
        assert!((refrank_score(2.0, 1.0) - 0.731059).abs() < 1e-6);
    }

    #[test]
    fn reference_resolution() {
        let l = list(5);
        assert_eq!(
            resolve_reference(&l, RefPolicy::FixedIndex { rank: 1 })
                .unwrap()
                .first_stage_rank,
            1
        );
        assert!(resolve_reference(&l, RefPolicy::FixedIndex { rank: 6 }).is_err());
        assert!(resolve_reference(&l, RefPolicy::RandomTopK { k: 6, seed: 1 }).is_err());
        let a = resolve_reference(&l, RefPolicy::random_top2(7)).unwrap();
        let b = resolve_reference(&l, RefPolicy::random_top2(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.first_stage_rank <= 2);
    }

    #[test]
    fn ensemble_validation() {
        assert!(EnsembleConfig::uniform(0).is_err());
        assert!(EnsembleConfig::weighted(vec![0.5, 0.6]).is_err());
        assert!(EnsembleConfig::weighted(vec![1.5, -0.5]).is_err());
        let cfg = EnsembleConfig::uniform(7).unwrap();
        assert!(cfg.validate(100).unwrap().is_some());
        assert!(
            EnsembleConfig::uniform(6)
                .unwrap()
                .validate(100)
                .unwrap()
                .is_none()
        );
        assert!(cfg.validate(5).is_err());
        assert_eq!(budget_limit(100), 6);
    }

    #[test]
    fn call_counts_on_small_list() {
        let backend = oracle(0.3);
        let l = list(12);
        let cases: Vec<(Strategy, RequestKind, u64)> = vec![
            (Strategy::Pointwise, RequestKind::Pointwise, 12),
            (
                Strategy::RefRankSingle {
                    policy: RefPolicy::default(),
                    swap_debias: false,
                },
                RequestKind::Triplet,
                12,
            ),
            (
                Strategy::RefRankSingle {
                    policy: RefPolicy::default(),
                    swap_debias: true,
                },
                RequestKind::Triplet,
                24,
            ),
            (
                Strategy::RefRankMultiple {
                    ensemble: EnsembleConfig::uniform(3).unwrap(),
                },
                RequestKind::Triplet,
                36,
            ),
            (
                Strategy::AllPairs { half_matrix: false },
                RequestKind::Duel,
                132,
            ),
            (
                Strategy::AllPairs { half_matrix: true },
                RequestKind::Duel,
                66,
            ),
            (Strategy::BubbleSort { k: 3 }, RequestKind::Duel, 3 * 11 - 3),
            (Strategy::BubbleSort { k: 12 }, RequestKind::Duel, 66),
        ];
        for (strategy, kind, expected) in cases {
            let ledger = CallLedger::new();
            let ranking = strategy.run(&l, &Scorer::new(&backend, &ledger)).unwrap();
            ranking.validate().unwrap();
            assert_eq!(ledger.calls(kind), expected, "{strategy:?}");
            assert_eq!(ledger.counts().total(), expected, "{strategy:?}");
        }
    }

    #[test]
    fn single_document_lists() {
        let backend = oracle(0.5);
        let l = list(1);
        let ledger = CallLedger::new();
        let scorer = Scorer::new(&backend, &ledger);
        for strategy in [
            Strategy::Pointwise,
            Strategy::AllPairs { half_matrix: false },
            Strategy::BubbleSort { k: 1 },
            Strategy::Setwise { children: 3, k: 1 },
        ] {
            let r = strategy.run(&l, &scorer).unwrap();
            assert_eq!(r.entries.len(), 1);
            assert_eq!(r.entries[0].rank, 1);
        }
        assert_eq!(ledger.calls(RequestKind::Setwise), 0);
        assert_eq!(ledger.calls(RequestKind::Duel), 0);
    }

    #[test]
    fn setwise_rejects_bad_parameters() {
        let backend = oracle(0.0);
        let ledger = CallLedger::new();
        let scorer = Scorer::new(&backend, &ledger);
        let l = list(4);
        assert!(rank_setwise_heapsort(&l, &scorer, 1, 2).is_err());
        assert!(rank_setwise_heapsort(&l, &scorer, 2, 5).is_err());
        assert!(rank_setwise_heapsort(&l, &scorer, 30, 2).is_err());
        assert!(rank_pairwise_bubblesort(&l, &scorer, 0).is_err());
        assert_eq!(ledger.counts().total(), 0);
    }

    #[test]
    fn allpairs_two_docs_scores_sum_to_one() {
        let backend = oracle(0.8);
        let ledger = CallLedger::new();
        let r = rank_pairwise_allpairs(&list(2), &Scorer::new(&backend, &ledger)).unwrap();
        let sum: f64 = r.entries.iter().map(|e| e.score).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_pair_scores_one_half() {
        let backend = oracle(0.0);
        let ledger = CallLedger::new();
        let l = list(6);
        let scorer = Scorer::new(&backend, &ledger);
        let r = rank_refrank_single(&l, &scorer, RefPolicy::FixedIndex { rank: 3 }).unwrap();
        let self_entry = r.entries.iter().find(|e| e.doc_id == "d3").unwrap();
        assert_eq!(self_entry.score, 0.5);
    }

    #[test]
    fn strategy_names_parse() {
        for name in StrategyName::ALL {
            assert_eq!(name.as_str().parse::<StrategyName>().unwrap(), name);
        }
        assert!("listwise".parse::<StrategyName>().is_err());
    }
}
