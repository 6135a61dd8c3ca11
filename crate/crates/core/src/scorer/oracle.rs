//! Seeded synthetic judge.
//!
//! Every document has a latent relevance `g` in `[0, 1]`. Label logit gaps are
//! linear in latent differences plus seeded Gaussian noise:
//!
//! * pointwise: `s_yes - s_no = beta * (2 g - 1) + bias_d + sigma * z`
//! * triplet / duel: `s_A - s_B = beta * (g_A - g_B) + sigma * z`
//! * setwise: `logit_k = beta * g_k + sigma * z_k`
//!
//! Noise draws are keyed by the request content, never by call order, so
//! batching and parallelism cannot change results. Comparative noise is
//! antisymmetric in the slot order: swapping A and B negates the gap exactly.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::datamodel::{DocCandidate, Qrels, RequestKind};
use crate::error::{Error, Result};
use crate::scorer::{Backend, BackendReply, LabelLogits, RequestBody, ScoreRequest};

#[derive(Debug, Clone, PartialEq)]
pub enum LatentSource {
    /// Grade divided by the query's maximum grade.
    Qrels(Qrels),
    /// Seeded uniform draw per (query, doc).
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub seed: u64,
    pub latent: LatentSource,
    pub noise_sigma: f64,
    /// Standard deviation of the per-document pointwise bias.
    pub bias: f64,
    pub beta: f64,
    /// Added to the slot-A gap of triplets and duels. Zero gives a symmetric judge.
    pub position_bias: f64,
    /// Triplet noise is scaled by `1 + slope * (1 - g_ref)`, growing as the reference
    /// gets less relevant. Any nonzero slope makes the judge slot-asymmetric.
    pub ref_noise_slope: f64,
}

impl OracleConfig {
    pub fn new(seed: u64, latent: LatentSource) -> Self {
        OracleConfig {
            seed,
            latent,
            noise_sigma: 0.0,
            bias: 0.0,
            beta: 4.0,
            position_bias: 0.0,
            ref_noise_slope: 0.0,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_bias(mut self, bias: f64) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_position_bias(mut self, position_bias: f64) -> Self {
        self.position_bias = position_bias;
        self
    }

    pub fn with_ref_noise_slope(mut self, slope: f64) -> Self {
        self.ref_noise_slope = slope;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.noise_sigma,
            self.bias,
            self.beta,
            self.position_bias,
            self.ref_noise_slope,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("oracle parameters must be finite"));
        }
        if self.noise_sigma < 0.0 || self.bias < 0.0 || self.ref_noise_slope < 0.0 {
            return Err(Error::validation(
                "oracle sigma, bias and reference-noise slope must be nonnegative",
            ));
        }
        if self.beta <= 0.0 {
            return Err(Error::validation("oracle beta must be positive"));
        }
        Ok(())
    }
}

/// FNV-1a over length-prefixed parts; stable across platforms and releases.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            hash ^= u64::from(*b);
            hash = hash.wrapping_mul(PRIME);
        }
    };
    for part in parts {
        feed(&(part.len() as u64).to_le_bytes());
        feed(part);
    }
    hash
}

fn rng_for(seed: u64, domain: &str, parts: &[&[u8]]) -> ChaCha8Rng {
    let mut all: Vec<&[u8]> = Vec::with_capacity(parts.len() + 2);
    let seed_bytes = seed.to_le_bytes();
    all.push(&seed_bytes);
    all.push(domain.as_bytes());
    all.extend_from_slice(parts);
    ChaCha8Rng::seed_from_u64(stable_hash(&all))
}

fn standard_normal(seed: u64, domain: &str, parts: &[&[u8]]) -> f64 {
    StandardNormal.sample(&mut rng_for(seed, domain, parts))
}

/// Seeded uniform latent relevance in `[0, 1)` for a (query, doc) pair.
pub fn synthetic_latent(seed: u64, query_id: &str, doc_id: &str) -> f64 {
    use rand::RngExt;
    rng_for(seed, "latent", &[query_id.as_bytes(), doc_id.as_bytes()]).random::<f64>()
}

/// Latent relevance of `doc` derived from qrels: grade over the query's maximum grade.
pub fn oracle_latent(doc: &DocCandidate, qrels: &Qrels, query_id: &str) -> f64 {
    let max = qrels.max_grade(query_id);
    if max == 0 {
        return 0.0;
    }
    f64::from(qrels.grade(query_id, &doc.doc_id)) / f64::from(max)
}

#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    cfg: OracleConfig,
    max_grades: HashMap<String, u32>,
}

impl SyntheticOracle {
    pub fn new(cfg: OracleConfig) -> Result<Self> {
        cfg.validate()?;
        let max_grades = match &cfg.latent {
            LatentSource::Qrels(qrels) => qrels
                .judged_queries()
                .map(|q| (q.to_string(), qrels.max_grade(q)))
                .collect(),
            LatentSource::Synthetic { .. } => HashMap::new(),
        };
        Ok(SyntheticOracle { cfg, max_grades })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    pub fn latent(&self, query_id: &str, doc: &DocCandidate) -> f64 {
        match &self.cfg.latent {
            LatentSource::Qrels(qrels) => match self.max_grades.get(query_id) {
                Some(&max) if max > 0 => {
                    f64::from(qrels.grade(query_id, &doc.doc_id)) / f64::from(max)
                }
                _ => 0.0,
            },
            LatentSource::Synthetic { seed } => synthetic_latent(*seed, query_id, &doc.doc_id),
        }
    }

    /// Antisymmetric standard-normal draw for an ordered pair.
    fn pair_noise(&self, domain: &str, query_id: &str, a: &str, b: &str) -> f64 {
        if a == b {
            return 0.0;
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        sign * standard_normal(
            self.cfg.seed,
            domain,
            &[query_id.as_bytes(), lo.as_bytes(), hi.as_bytes()],
        )
    }

    fn comparative_gap(
        &self,
        kind: RequestKind,
        query_id: &str,
        a: &DocCandidate,
        b: &DocCandidate,
    ) -> f64 {
        let (ga, gb) = (self.latent(query_id, a), self.latent(query_id, b));
        let sigma = match kind {
            RequestKind::Triplet => {
                self.cfg.noise_sigma * (1.0 + self.cfg.ref_noise_slope * (1.0 - gb))
            }
            _ => self.cfg.noise_sigma,
        };
        let z = self.pair_noise(kind.as_str(), query_id, &a.doc_id, &b.doc_id);
        let position = if a.doc_id == b.doc_id {
            0.0
        } else {
            self.cfg.position_bias
        };
        self.cfg.beta * (ga - gb) + sigma * z + position
    }

    fn logits(&self, request: &ScoreRequest<'_>) -> Vec<f64> {
        let query_id = request.query().id.as_str();
        match &request.body {
            RequestBody::Pointwise { doc, .. } => {
                let g = self.latent(query_id, doc);
                let key = [query_id.as_bytes(), doc.doc_id.as_bytes()];
                let bias = if self.cfg.bias > 0.0 {
                    self.cfg.bias * standard_normal(self.cfg.seed, "bias", &key)
                } else {
                    0.0
                };
                let noise = if self.cfg.noise_sigma > 0.0 {
                    self.cfg.noise_sigma * standard_normal(self.cfg.seed, "pointwise", &key)
                } else {
                    0.0
                };
                let gap = self.cfg.beta * (2.0 * g - 1.0) + bias + noise;
                vec![gap / 2.0, -gap / 2.0]
            }
            RequestBody::Triplet { doc, reference, .. } => {
                let gap = self.comparative_gap(RequestKind::Triplet, query_id, doc, reference);
                vec![gap / 2.0, -gap / 2.0]
            }
            RequestBody::Duel { doc_a, doc_b, .. } => {
                let gap = self.comparative_gap(RequestKind::Duel, query_id, doc_a, doc_b);
                vec![gap / 2.0, -gap / 2.0]
            }
            RequestBody::Setwise { docs, .. } => {
                let mut members: Vec<&[u8]> = docs.iter().map(|d| d.doc_id.as_bytes()).collect();
                members.sort_unstable();
                let group = stable_hash(&members).to_le_bytes();
                docs.iter()
                    .map(|d| {
                        let noise = if self.cfg.noise_sigma > 0.0 {
                            self.cfg.noise_sigma
                                * standard_normal(
                                    self.cfg.seed,
                                    "setwise",
                                    &[query_id.as_bytes(), &group, d.doc_id.as_bytes()],
                                )
                        } else {
                            0.0
                        };
                        self.cfg.beta * self.latent(query_id, d) + noise
                    })
                    .collect()
            }
        }
    }
}

impl Backend for SyntheticOracle {
    fn score(&self, request: &ScoreRequest<'_>) -> Result<BackendReply> {
        LabelLogits::new(request.kind(), self.logits(request)).map(BackendReply::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Query;

    fn doc(id: &str) -> DocCandidate {
        DocCandidate::new(id, "text", 1, 0.0)
    }

    fn qrels_oracle(cfg: impl FnOnce(OracleConfig) -> OracleConfig) -> SyntheticOracle {
        let mut qrels = Qrels::new();
        qrels.insert("q", "a", 3);
        qrels.insert("q", "b", 3);
        qrels.insert("q", "c", 0);
        SyntheticOracle::new(cfg(OracleConfig::new(1, LatentSource::Qrels(qrels)))).unwrap()
    }

    #[test]
    fn triplet_equal_latent_noiseless_is_even() {
        let oracle = qrels_oracle(|c| c);
        let q = Query::new("q", "x").unwrap();
        let (a, b) = (doc("a"), doc("b"));
        let reply = oracle.score(&ScoreRequest::triplet(&q, &a, &b)).unwrap();
        let (sa, sb) = reply.logits.pair();
        assert_eq!(sa, sb);
    }

    #[test]
    fn pointwise_gap_matches_definition() {
        let oracle = qrels_oracle(|c| c.with_beta(1.0));
        let q = Query::new("q", "x").unwrap();
        let a = doc("a");
        let (yes, no) = oracle
            .score(&ScoreRequest::pointwise(&q, &a))
            .unwrap()
            .logits
            .pair();
        assert_eq!(yes - no, 1.0);
    }

    #[test]
    fn seeded_twice_is_bit_identical() {
        let make = || {
            SyntheticOracle::new(
                OracleConfig::new(9, LatentSource::Synthetic { seed: 3 })
                    .with_sigma(0.7)
                    .with_bias(0.3),
            )
            .unwrap()
        };
        let q = Query::new("q", "x").unwrap();
        let (a, b, c) = (doc("a"), doc("b"), doc("c"));
        let reqs = [
            ScoreRequest::pointwise(&q, &a),
            ScoreRequest::triplet(&q, &a, &b),
            ScoreRequest::duel(&q, &b, &c),
            ScoreRequest::setwise(&q, vec![&a, &b, &c]),
        ];
        for r in &reqs {
            assert_eq!(make().score(r).unwrap(), make().score(r).unwrap());
        }
    }

    #[test]
    fn swapping_slots_negates_gap() {
        let oracle = SyntheticOracle::new(
            OracleConfig::new(5, LatentSource::Synthetic { seed: 5 }).with_sigma(1.3),
        )
        .unwrap();
        let q = Query::new("q", "x").unwrap();
        let (a, b) = (doc("a"), doc("b"));
        let (x1, y1) = oracle
            .score(&ScoreRequest::triplet(&q, &a, &b))
            .unwrap()
            .logits
            .pair();
        let (x2, y2) = oracle
            .score(&ScoreRequest::triplet(&q, &b, &a))
            .unwrap()
            .logits
            .pair();
        assert_eq!(x1, y2);
        assert_eq!(y1, x2);
    }

    #[test]
    fn setwise_noise_ignores_slot_order() {
        let oracle = SyntheticOracle::new(
            OracleConfig::new(5, LatentSource::Synthetic { seed: 5 }).with_sigma(1.0),
        )
        .unwrap();
        let q = Query::new("q", "x").unwrap();
        let (a, b, c) = (doc("a"), doc("b"), doc("c"));
        let fwd = oracle
            .score(&ScoreRequest::setwise(&q, vec![&a, &b, &c]))
            .unwrap()
            .logits
            .values;
        let rev = oracle
            .score(&ScoreRequest::setwise(&q, vec![&c, &b, &a]))
            .unwrap()
            .logits
            .values;
        assert_eq!(fwd, rev.into_iter().rev().collect::<Vec<_>>());
    }

    #[test]
    fn qrels_latent_normalization() {
        let mut qrels = Qrels::new();
        for (d, g) in [("d0", 0), ("d1", 1), ("d2", 2), ("d3", 3)] {
            qrels.insert("q", d, g);
        }
        assert_eq!(oracle_latent(&doc("d3"), &qrels, "q"), 1.0);
        assert_eq!(oracle_latent(&doc("d9"), &qrels, "q"), 0.0);
        let mut zeros = Qrels::new();
        zeros.insert("q", "d0", 0);
        zeros.insert("q", "d1", 0);
        assert_eq!(oracle_latent(&doc("d1"), &zeros, "q"), 0.0);
    }

    #[test]
    fn synthetic_latent_in_unit_interval() {
        for i in 0..200 {
            let g = synthetic_latent(11, "q", &format!("d{i}"));
            assert!((0.0..1.0).contains(&g));
        }
        assert_eq!(synthetic_latent(1, "q", "d"), synthetic_latent(1, "q", "d"));
        assert_ne!(synthetic_latent(1, "q", "d"), synthetic_latent(2, "q", "d"));
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = OracleConfig::new(0, LatentSource::Synthetic { seed: 0 });
        assert!(SyntheticOracle::new(base.clone().with_sigma(-1.0)).is_err());
        assert!(SyntheticOracle::new(base.clone().with_beta(0.0)).is_err());
        assert!(SyntheticOracle::new(base.with_beta(f64::NAN)).is_err());
    }
}
