//! Seeded synthetic experiments for exercising the pipeline without external data.
//!
//! Each document's latent relevance is [`synthetic_latent`]; a
//! [`SyntheticOracle`](crate::scorer::SyntheticOracle) built with
//! `LatentSource::Synthetic { seed }` sees the same values. The first-stage
//! score is the latent plus Gaussian noise, so early first-stage ranks are
//! more relevant on average. Qrels grades quantize the latent.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use crate::datamodel::{CandidateList, DocCandidate, Qrels, Query, make_candidate_list};
use crate::error::{Error, Result};
use crate::scorer::{stable_hash, synthetic_latent};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub queries: usize,
    pub docs_per_query: usize,
    /// Standard deviation of the first-stage score around the latent.
    pub first_stage_noise: f64,
}

impl SyntheticSpec {
    pub fn new(seed: u64, queries: usize, docs_per_query: usize) -> Self {
        SyntheticSpec {
            seed,
            queries,
            docs_per_query,
            first_stage_noise: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub lists: Vec<CandidateList>,
    pub qrels: Qrels,
}

/// Grade 3 above 0.95, 2 above 0.85, 1 above 0.7, else 0.
pub fn grade_for_latent(latent: f64) -> u32 {
    match latent {
        g if g >= 0.95 => 3,
        g if g >= 0.85 => 2,
        g if g >= 0.7 => 1,
        _ => 0,
    }
}

pub fn generate(spec: SyntheticSpec) -> Result<Fixture> {
    if spec.queries == 0 || spec.docs_per_query == 0 {
        return Err(Error::validation(
            "synthetic fixture needs queries and documents",
        ));
    }
    if spec.first_stage_noise.is_nan() || spec.first_stage_noise < 0.0 {
        return Err(Error::validation("first-stage noise must be nonnegative"));
    }
    let mut qrels = Qrels::new();
    let mut lists = Vec::with_capacity(spec.queries);
    for qi in 0..spec.queries {
        let qid = format!("q{qi}");
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[
            &spec.seed.to_le_bytes(),
            b"first-stage",
            qid.as_bytes(),
        ]));
        let mut scored: Vec<(String, f64)> = (0..spec.docs_per_query)
            .map(|di| {
                let doc_id = format!("{qid}-d{di}");
                let latent = synthetic_latent(spec.seed, &qid, &doc_id);
                qrels.insert(qid.clone(), doc_id.clone(), grade_for_latent(latent));
                let z: f64 = StandardNormal.sample(&mut rng);
                (doc_id, latent + spec.first_stage_noise * z)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        let docs = scored
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| {
                let text = format!("synthetic passage {doc_id}");
                DocCandidate::new(doc_id, text, i + 1, score)
            })
            .collect();
        let query = Query::new(qid.clone(), format!("synthetic query {qi}"))?;
        lists.push(make_candidate_list(query, docs)?);
    }
    Ok(Fixture { lists, qrels })
}

/// Writes `run.trec`, `corpus.jsonl`, `queries.tsv` and `qrels.txt` into `dir`.
pub fn write_fixture(fixture: &Fixture, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut run = String::new();
    let mut corpus = String::new();
    let mut queries = String::new();
    let mut qrels = String::new();
    for list in &fixture.lists {
        let qid = &list.query().id;
        queries.push_str(&format!("{qid}\t{}\n", list.query().text));
        for doc in list.docs() {
            run.push_str(&format!(
                "{qid} Q0 {} {} {:.6} synthetic\n",
                doc.doc_id, doc.first_stage_rank, doc.first_stage_score
            ));
            corpus.push_str(&json!({"id": doc.doc_id, "contents": doc.text}).to_string());
            corpus.push('\n');
            qrels.push_str(&format!(
                "{qid} 0 {} {}\n",
                doc.doc_id,
                fixture.qrels.grade(qid, &doc.doc_id)
            ));
        }
    }
    for (name, body) in [
        ("run.trec", run),
        ("corpus.jsonl", corpus),
        ("queries.tsv", queries),
        ("qrels.txt", qrels),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
