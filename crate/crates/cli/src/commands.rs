use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Once;
use std::time::Instant;

use anyhow::{Context, Result, bail};
use indexmap::IndexMap;
use log::{info, warn};
use rayon::prelude::*;
use serde_json::{Value, json};

use refrank_core::analysis::{
    SweepResult, minmax_normalize, sweep_ensemble_size, sweep_reference_quality,
    sweep_topk_selection,
};
use refrank_core::eval::{
    ExperimentReport, MetricConfig, efficiency_report, mean_metric, ndcg_at_k,
};
use refrank_core::io::{
    AssembleOptions, assemble_experiment, parse_qrels, parse_run_file, write_run_file,
};
use refrank_core::scorer::{
    Backend, LatentSource, LlmBackend, LlmBackendConfig, OracleConfig, PromptTemplates, Scorer,
    SyntheticOracle,
};
use refrank_core::strategies::{EnsembleConfig, RefPolicy, Strategy, StrategyName};
use refrank_core::synthetic::{SyntheticSpec, generate, write_fixture};
use refrank_core::{CallLedger, CandidateList, Qrels, RankEntry, Ranking};

use crate::args::{
    AnalyzeArgs, BackendArgs, BackendKind, BenchArgs, EvalArgs, InputArgs, LatentKind, MetricArgs,
    RerankArgs, StrategyParams, SynthArgs,
};

/// Invalid flag combinations; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn metric(args: &MetricArgs) -> Result<MetricConfig> {
    let cfg = MetricConfig {
        k: args.cutoff,
        gain: args.gain,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

/// Fails before any work if an output exists and `force` is off.
fn prepare_outputs(dir: &Path, names: &[&str], force: bool) -> Result<Vec<PathBuf>> {
    let paths: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).collect();
    if !force && let Some(existing) = paths.iter().find(|p| p.exists()) {
        bail!(
            "{} already exists (pass --force to overwrite)",
            existing.display()
        );
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(paths)
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn to_json(value: &impl serde::Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load_lists(input: &InputArgs) -> Result<Vec<CandidateList>> {
    let opts = AssembleOptions {
        depth: input.depth,
        include_title: !input.no_title,
    };
    if input.depth == 0 {
        return Err(usage("--depth must be at least 1"));
    }
    let lists = assemble_experiment(&input.run, &input.corpus, &input.queries, opts)?;
    info!(
        "loaded {} queries from {}",
        lists.len(),
        input.run.display()
    );
    Ok(lists)
}

fn load_qrels(path: &Path) -> Result<Qrels> {
    let parsed = parse_qrels(path)?;
    if parsed.duplicates > 0 {
        warn!(
            "{}: {} duplicate judgments, last one kept",
            path.display(),
            parsed.duplicates
        );
    }
    Ok(parsed.qrels)
}

fn pool(concurrency: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = concurrency {
        if n == 0 {
            return Err(usage("--concurrency must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

/// Flag checks that need no input files, so usage errors come before any I/O.
fn check_backend_flags(args: &BackendArgs, has_qrels: bool) -> Result<()> {
    match args.backend {
        BackendKind::Oracle => {
            if args.seed.is_none() {
                return Err(usage("--seed is required with the oracle backend"));
            }
            if args.oracle_latent == Some(LatentKind::Qrels) && !has_qrels {
                return Err(usage("--oracle-latent qrels needs --qrels"));
            }
        }
        BackendKind::Endpoint => {
            if args.endpoint_url.is_none() {
                return Err(usage(
                    "--endpoint-url is required with the endpoint backend",
                ));
            }
            if args.model.is_none() {
                return Err(usage("--model is required with the endpoint backend"));
            }
        }
    }
    if args.concurrency == Some(0) {
        return Err(usage("--concurrency must be at least 1"));
    }
    Ok(())
}

fn build_backend(args: &BackendArgs, qrels: Option<&Qrels>) -> Result<Box<dyn Backend>> {
    match args.backend {
        BackendKind::Oracle => {
            let seed = args
                .seed
                .ok_or_else(|| usage("--seed is required with the oracle backend"))?;
            let latent = match (args.oracle_latent, qrels) {
                (Some(LatentKind::Qrels), Some(q)) | (None, Some(q)) => {
                    LatentSource::Qrels(q.clone())
                }
                (Some(LatentKind::Qrels), None) => {
                    return Err(usage("--oracle-latent qrels needs --qrels"));
                }
                (Some(LatentKind::Synthetic), _) | (None, None) => LatentSource::Synthetic {
                    seed: args.oracle_latent_seed.unwrap_or(seed),
                },
            };
            let cfg = OracleConfig::new(seed, latent)
                .with_sigma(args.oracle_sigma)
                .with_bias(args.oracle_bias)
                .with_beta(args.oracle_beta)
                .with_position_bias(args.oracle_position_bias)
                .with_ref_noise_slope(args.oracle_ref_slope);
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            Ok(Box::new(SyntheticOracle::new(cfg)?))
        }
        BackendKind::Endpoint => {
            let url = args
                .endpoint_url
                .clone()
                .ok_or_else(|| usage("--endpoint-url is required with the endpoint backend"))?;
            let model = args
                .model
                .clone()
                .ok_or_else(|| usage("--model is required with the endpoint backend"))?;
            let mut cfg = LlmBackendConfig::new(url, model);
            cfg.api_key_env = args.api_key_env.clone();
            if let Some(dir) = &args.template_dir {
                cfg.templates = PromptTemplates::load_dir(dir)?;
            }
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            Ok(Box::new(LlmBackend::new(cfg)?))
        }
    }
}

fn backend_snapshot(args: &BackendArgs, has_qrels: bool) -> Value {
    match args.backend {
        BackendKind::Oracle => {
            let latent = match (args.oracle_latent, has_qrels) {
                (Some(LatentKind::Qrels), _) | (None, true) => json!({"source": "qrels"}),
                _ => json!({
                    "source": "synthetic",
                    "seed": args.oracle_latent_seed.or(args.seed),
                }),
            };
            json!({
                "kind": "oracle",
                "latent": latent,
                "sigma": args.oracle_sigma,
                "bias": args.oracle_bias,
                "beta": args.oracle_beta,
                "position_bias": args.oracle_position_bias,
                "ref_noise_slope": args.oracle_ref_slope,
            })
        }
        BackendKind::Endpoint => json!({
            "kind": "endpoint",
            "endpoint_url": args.endpoint_url,
            "model": args.model,
            "api_key_env": args.api_key_env,
            "template_dir": args.template_dir,
        }),
    }
}

/// Strategy with the per-strategy flags applied; flags that do not apply are rejected.
pub fn build_strategy(
    name: StrategyName,
    p: &StrategyParams,
    seed: Option<u64>,
) -> Result<Strategy> {
    let mut unused: Vec<&str> = Vec::new();
    let mut flag = |set: bool, flag: &'static str, allowed: bool| {
        if set && !allowed {
            unused.push(flag);
        }
    };
    use StrategyName as N;
    flag(p.m.is_some(), "--m", name == N::RefRankMultiple);
    flag(p.weights.is_some(), "--weights", name == N::RefRankMultiple);
    flag(
        p.ref_index.is_some(),
        "--ref-index",
        name == N::RefRankSingle,
    );
    flag(p.ref_topk.is_some(), "--ref-topk", name == N::RefRankSingle);
    flag(p.swap_debias, "--swap-debias", name == N::RefRankSingle);
    flag(
        p.k.is_some(),
        "--k",
        matches!(name, N::BubbleSort | N::Setwise),
    );
    flag(p.children.is_some(), "--children", name == N::Setwise);
    flag(p.half_matrix, "--half-matrix", name == N::AllPairs);
    if !unused.is_empty() {
        return Err(usage(format!(
            "{} not valid for strategy {name}",
            unused.join(", ")
        )));
    }
    let strategy = match name {
        N::Pointwise => Strategy::Pointwise,
        N::RefRankSingle => {
            let policy = match (p.ref_index, p.ref_topk) {
                (Some(_), Some(_)) => {
                    return Err(usage("--ref-index and --ref-topk are mutually exclusive"));
                }
                (_, Some(k)) => RefPolicy::RandomTopK {
                    k,
                    seed: seed.ok_or_else(|| usage("--ref-topk requires --seed"))?,
                },
                (rank, None) => RefPolicy::FixedIndex {
                    rank: rank.unwrap_or(1),
                },
            };
            Strategy::RefRankSingle {
                policy,
                swap_debias: p.swap_debias,
            }
        }
        N::RefRankMultiple => {
            let ensemble = match &p.weights {
                Some(w) => {
                    if p.m.is_some_and(|m| m != w.len()) {
                        return Err(usage("--m disagrees with the number of --weights"));
                    }
                    EnsembleConfig::weighted(w.clone())
                }
                None => EnsembleConfig::uniform(p.m.unwrap_or(5)),
            }
            .map_err(|e| usage(e.to_string()))?;
            Strategy::RefRankMultiple { ensemble }
        }
        N::AllPairs => Strategy::AllPairs {
            half_matrix: p.half_matrix,
        },
        N::BubbleSort => Strategy::BubbleSort {
            k: p.k.unwrap_or(10),
        },
        N::Setwise => Strategy::Setwise {
            children: p.children.unwrap_or(3),
            k: p.k.unwrap_or(10),
        },
    };
    if strategy_zero_param(&strategy) {
        return Err(usage(format!(
            "strategy parameters of {name} must be at least 1"
        )));
    }
    Ok(strategy)
}

fn strategy_zero_param(s: &Strategy) -> bool {
    match s {
        Strategy::BubbleSort { k } => *k == 0,
        Strategy::Setwise { children, k } => *k == 0 || *children < 2,
        Strategy::RefRankSingle { policy, .. } => match policy {
            RefPolicy::FixedIndex { rank } => *rank == 0,
            RefPolicy::RandomTopK { k, .. } => *k == 0,
        },
        _ => false,
    }
}

/// Budget warnings are emitted once per process, not once per query.
fn warn_budget(strategy: &Strategy, lists: &[CandidateList]) -> Result<()> {
    static ONCE: Once = Once::new();
    if let Strategy::RefRankMultiple { ensemble } = strategy {
        for list in lists {
            if let Some(msg) = ensemble.validate(list.len())? {
                ONCE.call_once(|| warn!("{msg}"));
                break;
            }
        }
    }
    Ok(())
}

/// Runs the strategy on every list through the worker pool, keeping input order.
fn rerank_all(
    strategy: &Strategy,
    lists: &[CandidateList],
    backend: &dyn Backend,
    ledger: &CallLedger,
    pool: &rayon::ThreadPool,
) -> Result<Vec<Ranking>> {
    warn_budget(strategy, lists)?;
    let scorer = Scorer::new(backend, ledger);
    pool.install(|| {
        lists
            .par_iter()
            .map(|list| {
                let start = Instant::now();
                let ranking = strategy
                    .clamped_to(list.len())
                    .run(list, &scorer)
                    .with_context(|| format!("query {}", list.query().id))?;
                ledger.record_query_time(list.query().id.clone(), start.elapsed());
                Ok(ranking)
            })
            .collect()
    })
}

pub fn rerank(args: RerankArgs) -> Result<()> {
    let metric = metric(&args.metric)?;
    let strategy = build_strategy(args.strategy, &args.params, args.backend.seed)?;
    check_backend_flags(&args.backend, args.qrels.is_some())?;
    let outputs = prepare_outputs(
        &args.out,
        &["run.trec", "report.json", "efficiency.json"],
        args.force,
    )?;
    let lists = load_lists(&args.input)?;
    let qrels = args.qrels.as_deref().map(load_qrels).transpose()?;
    let backend = build_backend(&args.backend, qrels.as_ref())?;
    let pool = pool(args.backend.concurrency)?;

    let ledger = CallLedger::new();
    let rankings = rerank_all(&strategy, &lists, backend.as_ref(), &ledger, &pool)?;

    let (per_query, mean) = match &qrels {
        Some(q) => {
            let per: IndexMap<String, f64> = rankings
                .iter()
                .map(|r| (r.query_id.clone(), ndcg_at_k(r, q, metric)))
                .collect();
            let mean = mean_metric(&per, q)?;
            info!("mean NDCG@{}: {:.4}", metric.k, mean.mean);
            (per, Some(mean))
        }
        None => (IndexMap::new(), None),
    };
    let config = json!({
        "version": VERSION,
        "command": "rerank",
        "run": args.input.run,
        "corpus": args.input.corpus,
        "queries": args.input.queries,
        "qrels": args.qrels,
        "depth": args.input.depth,
        "include_title": !args.input.no_title,
        "strategy": strategy,
        "backend": backend_snapshot(&args.backend, qrels.is_some()),
        "seed": args.backend.seed,
        "concurrency": args.backend.concurrency,
        "metric": metric,
    });
    let report = ExperimentReport {
        strategy: strategy.name().to_string(),
        metric,
        per_query,
        mean,
        calls: ledger.counts(),
        queries: lists.len(),
        config,
    };
    let tag = format!("refrank-{}", strategy.name());
    write_run_file(&rankings, &tag, &outputs[0])?;
    write(&outputs[1], to_json(&report)?)?;
    write(
        &outputs[2],
        to_json(&efficiency_report(&ledger, lists.len())?)?,
    )?;
    info!(
        "{} calls over {} queries; wrote {}",
        report.calls.total(),
        lists.len(),
        args.out.display()
    );
    Ok(())
}

fn sweep_csv(dataset: &str, values: &[f64]) -> String {
    let normalized = minmax_normalize(values);
    let mut out = format!("cell,{dataset},normalized\n");
    for (i, (v, n)) in values.iter().zip(&normalized).enumerate() {
        out.push_str(&format!("{},{v:.6},{n:.6}\n", i + 1));
    }
    out
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let metric = metric(&args.metric)?;
    let k_max = args.k.unwrap_or(args.depth_r);
    if args.depth_r == 0 || args.m == 0 || k_max == 0 {
        return Err(usage("--depth-r, --k and --m must be at least 1"));
    }
    if k_max > args.depth_r {
        return Err(usage("--k cannot exceed --depth-r"));
    }
    check_backend_flags(&args.backend, true)?;
    let outputs = prepare_outputs(
        &args.out,
        &[
            "reference_quality.csv",
            "topk_selection.csv",
            "ensemble_size.csv",
            "analysis.json",
        ],
        args.force,
    )?;
    let lists = load_lists(&args.input)?;
    let qrels = load_qrels(&args.qrels)?;
    let backend = build_backend(&args.backend, Some(&qrels))?;
    let pool = pool(args.backend.concurrency)?;
    let dataset = args.dataset.clone().unwrap_or_else(|| {
        args.input
            .run
            .file_stem()
            .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
    });

    let ledger = CallLedger::new();
    let scorer = Scorer::new(backend.as_ref(), &ledger);
    let (reference, ensemble): (SweepResult, SweepResult) = pool.install(|| -> Result<_> {
        let n = sweep_reference_quality(&dataset, &lists, &scorer, &qrels, args.depth_r, metric)?;
        let m = sweep_ensemble_size(&dataset, &lists, &scorer, &qrels, args.m, metric)?;
        Ok((n, m))
    })?;
    let topk = sweep_topk_selection(&reference, k_max)?;

    write(&outputs[0], reference.to_csv())?;
    write(&outputs[1], sweep_csv(&dataset, &topk))?;
    write(&outputs[2], ensemble.to_csv())?;
    let snapshot = json!({
        "config": {
            "version": VERSION,
            "command": "analyze",
            "run": args.input.run,
            "corpus": args.input.corpus,
            "queries": args.input.queries,
            "qrels": args.qrels,
            "depth": args.input.depth,
            "include_title": !args.input.no_title,
            "depth_r": args.depth_r,
            "k_max": k_max,
            "m_max": args.m,
            "backend": backend_snapshot(&args.backend, true),
            "seed": args.backend.seed,
            "concurrency": args.backend.concurrency,
            "metric": metric,
        },
        "reference_quality": reference,
        "topk_selection": topk,
        "ensemble_size": ensemble,
        "calls": ledger.counts(),
    });
    write(&outputs[3], to_json(&snapshot)?)?;
    info!(
        "wrote sweeps for {} queries to {}",
        lists.len(),
        args.out.display()
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let metric = metric(&args.metric)?;
    let outputs = args
        .out
        .as_deref()
        .map(|dir| prepare_outputs(dir, &["eval.json"], args.force))
        .transpose()?;
    let run = parse_run_file(&args.run)?;
    let qrels = load_qrels(&args.qrels)?;
    let per_query: IndexMap<String, f64> = run
        .queries
        .iter()
        .map(|(qid, lines)| {
            // Order by the file's rank column, ties by file position.
            let mut lines: Vec<_> = lines.iter().collect();
            lines.sort_by_key(|l| l.rank);
            let ranking = Ranking {
                query_id: qid.clone(),
                entries: lines
                    .iter()
                    .enumerate()
                    .map(|(i, l)| RankEntry {
                        doc_id: l.doc_id.clone(),
                        score: l.score,
                        rank: i + 1,
                    })
                    .collect(),
                strategy_tag: "eval".into(),
            };
            (qid.clone(), ndcg_at_k(&ranking, &qrels, metric))
        })
        .collect();
    if per_query.is_empty() {
        bail!("{} contains no rankings", args.run.display());
    }
    let mean = mean_metric(&per_query, &qrels)?;
    if mean.queries == 0 {
        warn!("no run query has judgments; mean NDCG is 0.0");
    }
    for (qid, v) in &per_query {
        println!("ndcg_cut_{}\t{qid}\t{v:.4}", metric.k);
    }
    println!("ndcg_cut_{}\tall\t{:.4}", metric.k, mean.mean);
    if let Some(paths) = outputs {
        let report = json!({
            "config": {
                "version": VERSION,
                "command": "eval",
                "run": args.run,
                "qrels": args.qrels,
                "metric": metric,
            },
            "per_query": per_query,
            "mean": mean,
        });
        write(&paths[0], to_json(&report)?)?;
    }
    Ok(())
}

pub fn bench(args: BenchArgs) -> Result<()> {
    let strategies: Vec<Strategy> = args
        .strategy
        .iter()
        .map(|name| build_strategy_lenient(*name, &args.params, args.backend.seed))
        .collect::<Result<_>>()?;
    check_backend_flags(&args.backend, args.qrels.is_some())?;
    let outputs = args
        .out
        .as_deref()
        .map(|dir| prepare_outputs(dir, &["bench.json"], args.force))
        .transpose()?;
    let (lists, qrels) = match (&args.run, &args.corpus, &args.queries) {
        (Some(run), Some(corpus), Some(queries)) => {
            let input = InputArgs {
                run: run.clone(),
                corpus: corpus.clone(),
                queries: queries.clone(),
                depth: args.depth,
                no_title: false,
            };
            let qrels = args.qrels.as_deref().map(load_qrels).transpose()?;
            (load_lists(&input)?, qrels)
        }
        _ => {
            let seed = args
                .backend
                .seed
                .ok_or_else(|| usage("--seed is required to generate a bench fixture"))?;
            let fixture = generate(SyntheticSpec::new(seed, args.synth_queries, args.depth))
                .map_err(|e| usage(e.to_string()))?;
            info!(
                "generated {} synthetic queries x {} docs",
                args.synth_queries, args.depth
            );
            // The oracle reads the fixture's exact latents rather than its quantized qrels.
            (fixture.lists, None)
        }
    };
    let backend = build_backend(&args.backend, qrels.as_ref())?;
    let pool = pool(args.backend.concurrency)?;

    println!(
        "{:<18} {:>12} {:>10} {:>10} {:>10} {:>10} {:>14}",
        "strategy", "calls/query", "pointwise", "triplet", "duel", "setwise", "wall ms/query"
    );
    let mut rows = Vec::new();
    for strategy in &strategies {
        let ledger = CallLedger::new();
        rerank_all(strategy, &lists, backend.as_ref(), &ledger, &pool)?;
        let eff = efficiency_report(&ledger, lists.len())?;
        println!(
            "{:<18} {:>12.1} {:>10.1} {:>10.1} {:>10.1} {:>10.1} {:>14.3}",
            strategy.name().as_str(),
            eff.calls_per_query,
            eff.pointwise_per_query,
            eff.triplet_per_query,
            eff.duel_per_query,
            eff.setwise_per_query,
            eff.mean_wall_secs * 1e3
        );
        rows.push(json!({"strategy": strategy, "efficiency": eff}));
    }
    if let Some(paths) = outputs {
        let report = json!({
            "config": {
                "version": VERSION,
                "command": "bench",
                "run": args.run,
                "corpus": args.corpus,
                "queries": args.queries,
                "depth": args.depth,
                "synth_queries": args.synth_queries,
                "backend": backend_snapshot(&args.backend, qrels.is_some()),
                "seed": args.backend.seed,
                "concurrency": args.backend.concurrency,
            },
            "results": rows,
        });
        write(&paths[0], to_json(&report)?)?;
    }
    Ok(())
}

/// Bench shares one flag set across strategies, so flags meant for another
/// strategy in the list are ignored rather than rejected.
fn build_strategy_lenient(
    name: StrategyName,
    p: &StrategyParams,
    seed: Option<u64>,
) -> Result<Strategy> {
    use StrategyName as N;
    let own = StrategyParams {
        m: p.m.filter(|_| name == N::RefRankMultiple),
        weights: p.weights.clone().filter(|_| name == N::RefRankMultiple),
        ref_index: p.ref_index.filter(|_| name == N::RefRankSingle),
        ref_topk: p.ref_topk.filter(|_| name == N::RefRankSingle),
        swap_debias: p.swap_debias && name == N::RefRankSingle,
        k: p.k.filter(|_| matches!(name, N::BubbleSort | N::Setwise)),
        children: p.children.filter(|_| name == N::Setwise),
        half_matrix: p.half_matrix && name == N::AllPairs,
    };
    build_strategy(name, &own, seed)
}

pub fn synth(args: SynthArgs) -> Result<()> {
    prepare_outputs(
        &args.out,
        &["run.trec", "corpus.jsonl", "queries.tsv", "qrels.txt"],
        args.force,
    )?;
    let mut spec = SyntheticSpec::new(args.seed, args.num_queries, args.num_docs);
    spec.first_stage_noise = args.first_stage_noise;
    let fixture = generate(spec).map_err(|e| usage(e.to_string()))?;
    write_fixture(&fixture, &args.out)?;
    info!(
        "wrote {} queries x {} docs to {}",
        args.num_queries,
        args.num_docs,
        args.out.display()
    );
    Ok(())
}
