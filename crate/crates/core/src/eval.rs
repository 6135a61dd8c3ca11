//! Ranking-quality metrics and call/latency accounting.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::datamodel::{CallCounts, CallLedger, Qrels, Ranking};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `2^rel - 1`
    #[default]
    Exponential,
    /// `rel`
    Linear,
}

impl Gain {
    pub fn apply(self, grade: u32) -> f64 {
        match self {
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
            Gain::Linear => f64::from(grade),
        }
    }
}

impl FromStr for Gain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" | "exponential" => Ok(Gain::Exponential),
            "linear" | "lin" => Ok(Gain::Linear),
            other => Err(Error::validation(format!("unknown gain mode {other:?}"))),
        }
    }
}

impl fmt::Display for Gain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gain::Exponential => "exponential",
            Gain::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub k: usize,
    pub gain: Gain,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            k: 10,
            gain: Gain::Exponential,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::validation("metric cutoff must be at least 1"));
        }
        Ok(())
    }
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// NDCG@k. The ideal DCG is taken over every judged document of the query,
/// retrieved or not; unjudged documents have grade 0. Zero ideal DCG gives 0.
pub fn ndcg_at_k(ranking: &Ranking, qrels: &Qrels, cfg: MetricConfig) -> f64 {
    let Some(judged) = qrels.judged(&ranking.query_id) else {
        return 0.0;
    };
    let dcg: f64 = ranking
        .entries
        .iter()
        .take(cfg.k)
        .enumerate()
        .map(|(i, e)| cfg.gain.apply(qrels.grade(&ranking.query_id, &e.doc_id)) * discount(i + 1))
        .sum();
    let mut ideal: Vec<u32> = judged.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(cfg.k)
        .enumerate()
        .map(|(i, g)| cfg.gain.apply(*g) * discount(i + 1))
        .sum();
    if idcg == 0.0 { 0.0 } else { dcg / idcg }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetric {
    pub mean: f64,
    pub queries: usize,
    /// Query ids that were evaluated but have no judgments.
    pub excluded: Vec<String>,
}

/// Mean over the queries that have judgments; the rest are reported as excluded.
pub fn mean_metric(per_query: &IndexMap<String, f64>, qrels: &Qrels) -> Result<MeanMetric> {
    if per_query.is_empty() {
        return Err(Error::validation("no per-query values to average"));
    }
    let (kept, excluded): (Vec<_>, Vec<_>) = per_query
        .iter()
        .partition(|(qid, _)| qrels.contains_query(qid));
    let excluded: Vec<String> = excluded.into_iter().map(|(q, _)| q.clone()).collect();
    if !excluded.is_empty() {
        log::warn!("{} evaluated queries have no judgments", excluded.len());
    }
    let mean = if kept.is_empty() {
        0.0
    } else {
        kept.iter().map(|(_, v)| **v).sum::<f64>() / kept.len() as f64
    };
    Ok(MeanMetric {
        mean,
        queries: kept.len(),
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub queries: usize,
    pub calls: CallCounts,
    pub calls_per_query: f64,
    pub pointwise_per_query: f64,
    pub triplet_per_query: f64,
    pub duel_per_query: f64,
    pub setwise_per_query: f64,
    pub prompt_chars: u64,
    pub total_wall_secs: f64,
    pub mean_wall_secs: f64,
    pub per_query_wall_secs: IndexMap<String, f64>,
}

pub fn efficiency_report(ledger: &CallLedger, query_count: usize) -> Result<EfficiencyReport> {
    if query_count == 0 {
        return Err(Error::validation(
            "efficiency report needs at least one query",
        ));
    }
    let calls = ledger.counts();
    let per = |c: u64| c as f64 / query_count as f64;
    let per_query_wall_secs: IndexMap<String, f64> = ledger
        .wall_times()
        .into_iter()
        .map(|(q, d)| (q, d.as_secs_f64()))
        .collect();
    let total_wall_secs: f64 = per_query_wall_secs.values().sum();
    Ok(EfficiencyReport {
        queries: query_count,
        calls,
        calls_per_query: per(calls.total()),
        pointwise_per_query: per(calls.pointwise),
        triplet_per_query: per(calls.triplet),
        duel_per_query: per(calls.duel),
        setwise_per_query: per(calls.setwise),
        prompt_chars: ledger.prompt_chars(),
        total_wall_secs,
        mean_wall_secs: total_wall_secs / query_count as f64,
        per_query_wall_secs,
    })
}

/// Deterministic outcome of one reranking run (no timing data, so identical
/// inputs give identical bytes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub strategy: String,
    pub metric: MetricConfig,
    pub per_query: IndexMap<String, f64>,
    pub mean: Option<MeanMetric>,
    pub calls: CallCounts,
    pub queries: usize,
    pub config: serde_json::Value,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("query_id,ndcg\n");
        for (q, v) in &self.per_query {
            out.push_str(&format!("{q},{v:.6}\n"));
        }
        if let Some(mean) = &self.mean {
            out.push_str(&format!("mean,{:.6}\n", mean.mean));
        }
        out
    }
}
