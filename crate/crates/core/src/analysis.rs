//! Reference-index and ensemble-size sweeps.
//!
//! `N(r)`: mean NDCG when every candidate is scored against the document at
//! first-stage rank `r`. `S(k)`: expected quality when the reference is drawn
//! uniformly from the top `k`, i.e. the prefix mean of `N`. `M(m)`: mean NDCG of
//! the uniform ensemble over the top-`m` references.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{CandidateList, Qrels};
use crate::error::{Error, Result};
use crate::eval::{MetricConfig, ndcg_at_k};
use crate::scorer::Scorer;
use crate::strategies::{EnsembleConfig, RefPolicy, rank_refrank_multiple, rank_refrank_single};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub dataset: String,
    /// Sweep parameter per column (`r` or `m`), starting at 1.
    pub cells: Vec<usize>,
    pub query_ids: Vec<String>,
    /// `per_query[q][c]`: metric of query `q` at cell `c`.
    pub per_query: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl SweepResult {
    fn from_matrix(dataset: &str, query_ids: Vec<String>, per_query: Vec<Vec<f64>>) -> Self {
        let width = per_query.first().map_or(0, Vec::len);
        let mean: Vec<f64> = (0..width)
            .map(|c| per_query.iter().map(|row| row[c]).sum::<f64>() / per_query.len() as f64)
            .collect();
        let normalized = if mean.is_empty() {
            Vec::new()
        } else {
            minmax_normalize(&mean)
        };
        SweepResult {
            dataset: dataset.to_string(),
            cells: (1..=width).collect(),
            query_ids,
            per_query,
            mean,
            normalized,
        }
    }

    /// CSV with columns `cell,<dataset>,normalized`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("cell,{},normalized\n", self.dataset);
        for ((cell, mean), norm) in self.cells.iter().zip(&self.mean).zip(&self.normalized) {
            let _ = writeln!(out, "{cell},{mean:.6},{norm:.6}");
        }
        out
    }
}

fn min_len(lists: &[CandidateList]) -> Result<usize> {
    lists
        .iter()
        .map(CandidateList::len)
        .min()
        .ok_or_else(|| Error::validation("sweep needs at least one query"))
}

fn sweep<F>(dataset: &str, lists: &[CandidateList], width: usize, cell: F) -> Result<SweepResult>
where
    F: Fn(&CandidateList, usize) -> Result<f64> + Sync,
{
    let rows: Vec<Vec<f64>> = lists
        .par_iter()
        .map(|list| {
            (1..=width)
                .map(|c| {
                    cell(list, c).map_err(|e| Error::Sweep {
                        query_id: list.query().id.clone(),
                        cell: c,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let ids = lists.iter().map(|l| l.query().id.clone()).collect();
    Ok(SweepResult::from_matrix(dataset, ids, rows))
}

/// `N(r)` for `r = 1..=depth_r`.
pub fn sweep_reference_quality(
    dataset: &str,
    lists: &[CandidateList],
    scorer: &Scorer<'_>,
    qrels: &Qrels,
    depth_r: usize,
    metric: MetricConfig,
) -> Result<SweepResult> {
    let shortest = min_len(lists)?;
    if depth_r == 0 || depth_r > shortest {
        return Err(Error::validation(format!(
            "reference depth {depth_r} outside 1..={shortest}"
        )));
    }
    sweep(dataset, lists, depth_r, |list, r| {
        let ranking = rank_refrank_single(list, scorer, RefPolicy::FixedIndex { rank: r })?;
        Ok(ndcg_at_k(&ranking, qrels, metric))
    })
}

/// `S(k)` for `k = 1..=k_max`: prefix means of `N`.
pub fn sweep_topk_selection(sweep: &SweepResult, k_max: usize) -> Result<Vec<f64>> {
    if k_max > sweep.mean.len() {
        return Err(Error::validation(format!(
            "k_max {k_max} exceeds sweep length {}",
            sweep.mean.len()
        )));
    }
    let mut acc = 0.0;
    Ok(sweep.mean[..k_max]
        .iter()
        .enumerate()
        .map(|(i, v)| {
            acc += v;
            acc / (i + 1) as f64
        })
        .collect())
}

/// `M(m)` for `m = 1..=m_max` with uniform weights over the top-`m` references.
pub fn sweep_ensemble_size(
    dataset: &str,
    lists: &[CandidateList],
    scorer: &Scorer<'_>,
    qrels: &Qrels,
    m_max: usize,
    metric: MetricConfig,
) -> Result<SweepResult> {
    let shortest = min_len(lists)?;
    if m_max == 0 || m_max > shortest {
        return Err(Error::validation(format!(
            "ensemble size {m_max} outside 1..={shortest}"
        )));
    }
    let configs: Vec<EnsembleConfig> = (1..=m_max)
        .map(EnsembleConfig::uniform)
        .collect::<Result<_>>()?;
    sweep(dataset, lists, m_max, |list, m| {
        let ranking = rank_refrank_multiple(list, scorer, &configs[m - 1])?;
        Ok(ndcg_at_k(&ranking, qrels, metric))
    })
}

/// `(v - min) / (max - min)`; a constant input maps to all zeros.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if span.is_nan() || span <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - min) / span).collect()
}

/// Ranks with ties sharing their average position (1-based).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation. Returns `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minmax_cases() {
        let v = minmax_normalize(&[0.2, 0.5, 0.8]);
        for (got, want) in v.iter().zip([0.0, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{v:?}");
        }
        assert_eq!(minmax_normalize(&[0.4, 0.4]), vec![0.0, 0.0]);
        assert_eq!(minmax_normalize(&[0.7]), vec![0.0]);
        let once = minmax_normalize(&[3.0, 1.0, 2.0]);
        assert_eq!(minmax_normalize(&once), once);
    }

    fn result(mean: Vec<f64>) -> SweepResult {
        SweepResult::from_matrix("d", vec!["q".into()], vec![mean])
    }

    #[test]
    fn topk_prefix_means() {
        let s = sweep_topk_selection(&result(vec![0.8, 0.6]), 2).unwrap();
        assert_eq!(s[0], 0.8);
        assert!((s[1] - 0.7).abs() < 1e-12);
        assert!(sweep_topk_selection(&result(vec![0.8]), 2).is_err());
        let s = sweep_topk_selection(&result(vec![0.9, 0.7, 0.7, 0.2]), 4).unwrap();
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 25.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
        assert_eq!(average_ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn csv_layout() {
        let r = result(vec![0.5, 0.25]);
        assert_eq!(
            r.to_csv(),
            "cell,d,normalized\n1,0.500000,1.000000\n2,0.250000,0.000000\n"
        );
    }
}
