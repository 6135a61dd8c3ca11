//! Readers and writers for TREC run files, qrels, JSONL corpora and TSV queries.
//!
//! Every parser reports failures with the offending line number. Blank lines are
//! skipped and counted rather than rejected.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::datamodel::{CandidateList, DocCandidate, Qrels, Query, Ranking, make_candidate_list};
use crate::error::{Error, Result};

/// Default candidate depth handed to the rerankers.
pub const DEFAULT_DEPTH: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFileLine {
    pub query_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Parsed run file: queries in first-appearance order, entries sorted by rank.
#[derive(Debug, Clone, Default)]
pub struct RunFile {
    pub queries: IndexMap<String, Vec<RunFileLine>>,
    pub blank_lines: usize,
}

#[derive(Debug, Clone, Default)]
pub struct QrelsFile {
    pub qrels: Qrels,
    pub blank_lines: usize,
    /// Judgments that overwrote an earlier grade for the same pair.
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub contents: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl CorpusRecord {
    /// Passage text, optionally prefixed by the title.
    pub fn text(&self, include_title: bool) -> String {
        match &self.title {
            Some(title) if include_title && !title.is_empty() => {
                format!("{} {}", title, self.contents)
            }
            _ => self.contents.clone(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct QueriesFile {
    pub queries: Vec<Query>,
    pub blank_lines: usize,
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    // lossy decoding keeps arbitrary bytes from aborting the parse; bad fields
    // still surface as structured errors below
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn parse_run_file(path: impl AsRef<Path>) -> Result<RunFile> {
    let path = path.as_ref();
    parse_run_str(path, &read_text(path)?)
}

pub fn parse_run_str(path: &Path, contents: &str) -> Result<RunFile> {
    let mut run = RunFile::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (idx, raw) in contents.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            run.blank_lines += 1;
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let rank: usize = fields[3]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid rank {:?}", fields[3])))?;
        if rank == 0 {
            return Err(parse_err(path, line_no, "rank must be at least 1"));
        }
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid score {:?}", fields[4])))?;
        if !score.is_finite() {
            return Err(parse_err(path, line_no, "score is not finite"));
        }
        let (query_id, doc_id) = (fields[0].to_string(), fields[2].to_string());
        if !seen.insert((query_id.clone(), doc_id.clone())) {
            return Err(Error::DuplicateEntry {
                path: path.to_path_buf(),
                line: line_no,
                query_id,
                doc_id,
            });
        }
        run.queries
            .entry(query_id.clone())
            .or_default()
            .push(RunFileLine {
                query_id,
                doc_id,
                rank,
                score,
                tag: fields[5].to_string(),
            });
    }
    for entries in run.queries.values_mut() {
        // stable: equal ranks keep file order
        entries.sort_by_key(|e| e.rank);
    }
    Ok(run)
}

pub fn parse_qrels(path: impl AsRef<Path>) -> Result<QrelsFile> {
    let path = path.as_ref();
    parse_qrels_str(path, &read_text(path)?)
}

pub fn parse_qrels_str(path: &Path, contents: &str) -> Result<QrelsFile> {
    let mut out = QrelsFile::default();
    for (idx, raw) in contents.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            out.blank_lines += 1;
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let grade: u32 = fields[3].parse().map_err(|_| {
            parse_err(
                path,
                line_no,
                format!("grade {:?} is not a nonnegative integer", fields[3]),
            )
        })?;
        if out.qrels.insert(fields[0], fields[2], grade).is_some() {
            out.duplicates += 1;
        }
    }
    if out.duplicates > 0 {
        log::warn!(
            "{}: {} repeated judgment(s), last value kept",
            path.display(),
            out.duplicates
        );
    }
    Ok(out)
}

#[derive(Deserialize)]
struct RawCorpusRecord {
    id: Option<String>,
    contents: Option<String>,
    title: Option<String>,
}

pub fn parse_corpus_jsonl(path: impl AsRef<Path>) -> Result<IndexMap<String, CorpusRecord>> {
    let path = path.as_ref();
    parse_corpus_str(path, &read_text(path)?)
}

pub fn parse_corpus_str(path: &Path, contents: &str) -> Result<IndexMap<String, CorpusRecord>> {
    let mut corpus = IndexMap::new();
    for (idx, raw) in contents.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: RawCorpusRecord = serde_json::from_str(raw)
            .map_err(|e| parse_err(path, line_no, format!("invalid JSON: {e}")))?;
        let missing = |field| Error::MissingField {
            path: path.to_path_buf(),
            line: line_no,
            field,
        };
        let id = record
            .id
            .filter(|id| !id.is_empty())
            .ok_or_else(|| missing("id"))?;
        let contents = record.contents.ok_or_else(|| missing("contents"))?;
        if corpus.contains_key(&id) {
            return Err(Error::DuplicateDoc(id));
        }
        corpus.insert(
            id.clone(),
            CorpusRecord {
                id,
                contents,
                title: record.title,
            },
        );
    }
    Ok(corpus)
}

pub fn parse_queries_tsv(path: impl AsRef<Path>) -> Result<QueriesFile> {
    let path = path.as_ref();
    parse_queries_str(path, &read_text(path)?)
}

pub fn parse_queries_str(path: &Path, contents: &str) -> Result<QueriesFile> {
    let mut out = QueriesFile::default();
    for (idx, raw) in contents.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            out.blank_lines += 1;
            continue;
        }
        let (id, text) = raw
            .split_once('\t')
            .ok_or_else(|| parse_err(path, line_no, "missing tab separator"))?;
        let query = Query::new(id.trim(), text.trim())
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        out.queries.push(query);
    }
    Ok(out)
}

/// Renders rankings as TREC run lines with scores fixed at 6 decimals.
pub fn format_run(rankings: &[Ranking], tag: &str) -> String {
    let mut out = String::new();
    for ranking in rankings {
        for entry in &ranking.entries {
            out.push_str(&format!(
                "{} Q0 {} {} {:.6} {}\n",
                ranking.query_id, entry.doc_id, entry.rank, entry.score, tag
            ));
        }
    }
    out
}

pub fn write_run_file(rankings: &[Ranking], tag: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return Err(Error::validation(format!(
            "run tag {tag:?} must be a single nonempty token"
        )));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    writer
        .write_all(format_run(rankings, tag).as_bytes())
        .and_then(|_| writer.flush())
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssembleOptions {
    pub depth: usize,
    pub include_title: bool,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions {
            depth: DEFAULT_DEPTH,
            include_title: true,
        }
    }
}

/// Joins a run, corpus and query set into one candidate list per run query.
pub fn assemble_experiment(
    run_path: impl AsRef<Path>,
    corpus_path: impl AsRef<Path>,
    queries_path: impl AsRef<Path>,
    opts: AssembleOptions,
) -> Result<Vec<CandidateList>> {
    if opts.depth == 0 {
        return Err(Error::validation("depth must be at least 1"));
    }
    let run = parse_run_file(run_path)?;
    let corpus = parse_corpus_jsonl(corpus_path)?;
    let queries = parse_queries_tsv(queries_path)?;
    assemble_from_parts(&run, &corpus, &queries.queries, opts)
}

pub fn assemble_from_parts(
    run: &RunFile,
    corpus: &IndexMap<String, CorpusRecord>,
    queries: &[Query],
    opts: AssembleOptions,
) -> Result<Vec<CandidateList>> {
    if opts.depth == 0 {
        return Err(Error::validation("depth must be at least 1"));
    }
    let by_id: HashMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let missing_queries: Vec<String> = run
        .queries
        .keys()
        .filter(|qid| !by_id.contains_key(qid.as_str()))
        .cloned()
        .collect();
    if !missing_queries.is_empty() {
        return Err(Error::MissingQueries(missing_queries));
    }
    let mut missing_docs: Vec<String> = run
        .queries
        .values()
        .flat_map(|entries| entries.iter().take(opts.depth))
        .filter(|e| !corpus.contains_key(&e.doc_id))
        .map(|e| e.doc_id.clone())
        .collect();
    if !missing_docs.is_empty() {
        missing_docs.sort();
        missing_docs.dedup();
        return Err(Error::MissingDocs(missing_docs));
    }

    run.queries
        .iter()
        .map(|(qid, entries)| {
            let docs = entries
                .iter()
                .take(opts.depth)
                .enumerate()
                .map(|(i, e)| {
                    DocCandidate::new(
                        e.doc_id.clone(),
                        corpus[&e.doc_id].text(opts.include_title),
                        i + 1,
                        e.score,
                    )
                })
                .collect();
            make_candidate_list(by_id[qid.as_str()].clone(), docs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::RankEntry;

    fn p() -> &'static Path {
        Path::new("fixture")
    }

    #[test]
    fn run_line_parses() {
        let run = parse_run_str(p(), "q1 Q0 d3 1 14.2 bm25\n").unwrap();
        let e = &run.queries["q1"][0];
        assert_eq!((e.doc_id.as_str(), e.rank, e.score), ("d3", 1, 14.2));
    }

    #[test]
    fn run_short_line_reports_line_number() {
        let mut text = String::new();
        for i in 1..=11 {
            text.push_str(&format!("q1 Q0 d{i} {i} 1.0 t\n"));
        }
        text.push_str("q1 Q0 d12 12 1.0\n");
        let err = parse_run_str(p(), &text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 12, .. }), "{err}");
    }

    #[test]
    fn run_duplicate_pair_is_rejected() {
        let err = parse_run_str(p(), "q1 Q0 d3 1 2.0 t\nq1 Q0 d3 2 1.0 t\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateEntry { line: 2, .. }));
    }

    #[test]
    fn run_sorted_by_rank_and_blank_lines_counted() {
        let run = parse_run_str(p(), "q1 Q0 b 2 1.0 t\n\nq1 Q0 a 1 2.0 t\n").unwrap();
        let ids: Vec<_> = run.queries["q1"]
            .iter()
            .map(|e| e.doc_id.as_str())
            .collect();
        assert_eq!(ids, vec!["a", "b"]);
        assert_eq!(run.blank_lines, 1);
    }

    #[test]
    fn qrels_parse_and_defaults() {
        let parsed = parse_qrels_str(p(), "q1 0 d3 2\nq1 0 d4 0\n\nq1 0 d3 1\n").unwrap();
        assert_eq!(parsed.qrels.grade("q1", "d3"), 1);
        assert_eq!(parsed.qrels.grade("q1", "d9"), 0);
        assert_eq!(parsed.duplicates, 1);
        assert_eq!(parsed.blank_lines, 1);
        let err = parse_qrels_str(p(), "q1 0 d3 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse_qrels_str(p(), "q1 0 d3 -1\n").is_err());
    }

    #[test]
    fn corpus_parse_errors() {
        let corpus = parse_corpus_str(p(), r#"{"id":"d1","contents":"abc"}"#).unwrap();
        assert_eq!(corpus["d1"].contents, "abc");
        let dup = "{\"id\":\"d1\",\"contents\":\"a\"}\n{\"id\":\"d1\",\"contents\":\"b\"}\n";
        assert!(matches!(
            parse_corpus_str(p(), dup).unwrap_err(),
            Error::DuplicateDoc(_)
        ));
        let err = parse_corpus_str(p(), "{\"id\":\"d1\"}\n").unwrap_err();
        assert!(matches!(
            err,
            Error::MissingField {
                field: "contents",
                line: 1,
                ..
            }
        ));
        assert!(matches!(
            parse_corpus_str(p(), "{not json\n").unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn corpus_title_concatenation() {
        let rec = CorpusRecord {
            id: "d".into(),
            contents: "body".into(),
            title: Some("Title".into()),
        };
        assert_eq!(rec.text(true), "Title body");
        assert_eq!(rec.text(false), "body");
    }

    #[test]
    fn queries_tsv() {
        let parsed = parse_queries_str(p(), "q1\twhat is x\n\nq2\ty\n").unwrap();
        assert_eq!(parsed.queries[0], Query::new("q1", "what is x").unwrap());
        assert_eq!(parsed.blank_lines, 1);
        assert!(matches!(
            parse_queries_str(p(), "q1 no tab\n").unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
        assert!(parse_queries_str(p(), "q1\t  \n").is_err());
    }

    #[test]
    fn run_format_matches_trec_layout() {
        let ranking = Ranking {
            query_id: "q1".into(),
            entries: vec![
                RankEntry {
                    doc_id: "d2".into(),
                    score: 0.9,
                    rank: 1,
                },
                RankEntry {
                    doc_id: "d5".into(),
                    score: 0.1,
                    rank: 2,
                },
            ],
            strategy_tag: "x".into(),
        };
        assert_eq!(
            format_run(&[ranking], "tag"),
            "q1 Q0 d2 1 0.900000 tag\nq1 Q0 d5 2 0.100000 tag\n"
        );
        assert_eq!(format_run(&[], "tag"), "");
    }

    #[test]
    fn assemble_truncates_and_checks_references() {
        let mut run_text = String::new();
        for i in 1..=150 {
            run_text.push_str(&format!("q1 Q0 d{i} {i} {} bm25\n", 200 - i));
        }
        let run = parse_run_str(p(), &run_text).unwrap();
        let corpus: IndexMap<String, CorpusRecord> = (1..=150)
            .map(|i| {
                let id = format!("d{i}");
                (
                    id.clone(),
                    CorpusRecord {
                        id,
                        contents: format!("passage {i}"),
                        title: None,
                    },
                )
            })
            .collect();
        let queries = vec![Query::new("q1", "x").unwrap()];
        let lists =
            assemble_from_parts(&run, &corpus, &queries, AssembleOptions::default()).unwrap();
        assert_eq!(lists[0].len(), 100);

        let mut small = corpus.clone();
        small.shift_remove("d99");
        let err =
            assemble_from_parts(&run, &small, &queries, AssembleOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingDocs(ref ids) if ids == &["d99".to_string()]));

        let err = assemble_from_parts(
            &run,
            &corpus,
            &queries,
            AssembleOptions {
                depth: 0,
                include_title: true,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));

        let err = assemble_from_parts(&run, &corpus, &[], AssembleOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingQueries(_)));
    }

    #[test]
    fn assemble_renumbers_ranks() {
        let run = parse_run_str(p(), "q1 Q0 a 3 1.0 t\nq1 Q0 b 7 0.5 t\n").unwrap();
        let corpus = parse_corpus_str(
            p(),
            "{\"id\":\"a\",\"contents\":\"x\"}\n{\"id\":\"b\",\"contents\":\"y\"}\n",
        )
        .unwrap();
        let lists = assemble_from_parts(
            &run,
            &corpus,
            &[Query::new("q1", "x").unwrap()],
            AssembleOptions::default(),
        )
        .unwrap();
        let ranks: Vec<_> = lists[0].docs().iter().map(|d| d.first_stage_rank).collect();
        assert_eq!(ranks, vec![1, 2]);
    }
}
