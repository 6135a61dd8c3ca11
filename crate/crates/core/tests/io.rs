mod common;

use std::fs;

use proptest::prelude::*;

use common::fixture;
use refrank_core::io::{
    AssembleOptions, assemble_experiment, parse_corpus_str, parse_qrels, parse_qrels_str,
    parse_queries_str, parse_run_file, parse_run_str, write_run_file,
};
use refrank_core::synthetic::write_fixture;
use refrank_core::{Error, RankEntry, Ranking};

fn line_of(err: &Error) -> Option<usize> {
    match err {
        Error::Parse { line, .. }
        | Error::DuplicateEntry { line, .. }
        | Error::MissingField { line, .. } => Some(*line),
        _ => None,
    }
}

#[test]
fn fixture_files_reassemble_into_the_same_lists() {
    let f = fixture(8, 4, 25);
    let dir = tempfile::tempdir().unwrap();
    write_fixture(&f, dir.path()).unwrap();
    let lists = assemble_experiment(
        dir.path().join("run.trec"),
        dir.path().join("corpus.jsonl"),
        dir.path().join("queries.tsv"),
        AssembleOptions::default(),
    )
    .unwrap();
    assert_eq!(lists.len(), 4);
    for (got, want) in lists.iter().zip(&f.lists) {
        assert_eq!(got.query(), want.query());
        let ids = |l: &refrank_core::CandidateList| {
            l.docs()
                .iter()
                .map(|d| (d.doc_id.clone(), d.first_stage_rank, d.text.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(got), ids(want));
    }
    let qrels = parse_qrels(dir.path().join("qrels.txt")).unwrap().qrels;
    assert_eq!(qrels.len(), 100);

    let shallow = assemble_experiment(
        dir.path().join("run.trec"),
        dir.path().join("corpus.jsonl"),
        dir.path().join("queries.tsv"),
        AssembleOptions {
            depth: 7,
            include_title: true,
        },
    )
    .unwrap();
    assert!(shallow.iter().all(|l| l.len() == 7));
}

#[test]
fn missing_inputs_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let err = parse_run_file(dir.path().join("nope.trec")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

#[test]
fn run_file_layout_and_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.trec");
    let r = Ranking {
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
    write_run_file(&[r], "tag", &path).unwrap();
    assert_eq!(
        fs::read_to_string(&path).unwrap(),
        "q1 Q0 d2 1 0.900000 tag\nq1 Q0 d5 2 0.100000 tag\n"
    );
    write_run_file(&[], "tag", &path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "");
    assert!(write_run_file(&[], "bad tag", &path).is_err());
    assert!(write_run_file(&[], "t", dir.path().join("missing/dir/x.trec")).is_err());
}

fn arbitrary_text() -> impl Strategy<Value = String> {
    prop_oneof![
        proptest::collection::vec(any::<u8>(), 0..400)
            .prop_map(|b| String::from_utf8_lossy(&b).into_owned()),
        proptest::collection::vec(
            prop_oneof![
                Just("q1".to_string()),
                Just("Q0".to_string()),
                Just("0".to_string()),
                Just("d1".to_string()),
                Just("-3".to_string()),
                Just("1.5".to_string()),
                Just("NaN".to_string()),
                Just("{\"id\":\"d1\",\"contents\":\"x\"}".to_string()),
                Just("\t".to_string()),
                Just("\n".to_string()),
                Just(" ".to_string()),
                "[a-z0-9]{1,4}",
            ],
            0..60
        )
        .prop_map(|parts| parts.join(" ")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn parsers_never_panic(text in arbitrary_text()) {
        let p = std::path::Path::new("fuzz");
        for err in [
            parse_run_str(p, &text).err(),
            parse_qrels_str(p, &text).err(),
            parse_corpus_str(p, &text).err(),
            parse_queries_str(p, &text).err(),
        ]
        .into_iter()
        .flatten()
        {
            // every content error points at a line
            match &err {
                Error::DuplicateDoc(_) | Error::Validation(_) => {}
                other => prop_assert!(line_of(other).is_some_and(|l| l >= 1), "{other:?}"),
            }
        }
    }

    #[test]
    fn write_then_parse_is_identity(
        queries in proptest::collection::vec(
            (proptest::collection::hash_set("[a-zA-Z0-9_.:-]{1,12}", 1..15), proptest::collection::vec(-1e6f64..1e6, 15)),
            1..5,
        )
    ) {
        let rankings: Vec<Ranking> = queries
            .iter()
            .enumerate()
            .map(|(qi, (docs, scores))| {
                let mut scores = scores[..docs.len()].to_vec();
                scores.sort_by(|a, b| b.total_cmp(a));
                Ranking {
                    query_id: format!("q{qi}"),
                    entries: docs
                        .iter()
                        .zip(scores)
                        .enumerate()
                        .map(|(i, (d, s))| RankEntry { doc_id: d.clone(), score: s, rank: i + 1 })
                        .collect(),
                    strategy_tag: "t".into(),
                }
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.trec");
        write_run_file(&rankings, "prop", &path).unwrap();
        let parsed = parse_run_file(&path).unwrap();
        prop_assert_eq!(parsed.queries.len(), rankings.len());
        for (r, (qid, lines)) in rankings.iter().zip(&parsed.queries) {
            prop_assert_eq!(&r.query_id, qid);
            let want: Vec<(&str, usize)> = r.entries.iter().map(|e| (e.doc_id.as_str(), e.rank)).collect();
            let got: Vec<(&str, usize)> = lines.iter().map(|l| (l.doc_id.as_str(), l.rank)).collect();
            prop_assert_eq!(want, got);
            for (e, l) in r.entries.iter().zip(lines) {
                // six decimals, plus representation error at large magnitudes
                prop_assert!((e.score - l.score).abs() <= 5e-7 + e.score.abs() * 1e-15);
                prop_assert_eq!(l.tag.as_str(), "prop");
            }
        }
    }
}
