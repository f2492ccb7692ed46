use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kgcbr::records::{parse_query_lines, prediction_records, QuerySpec};
use kgcbr::split::{make_split, InductiveSplit, SplitOptions};
use kgcbr::{
    evaluate_modes, EvalReport, IdfNorm, KnowledgeGraph, Reasoner, RunConfig, ScoreMode, TiePolicy,
};

#[derive(Parser)]
#[command(
    name = "kgcbr",
    version,
    about = "Case-based 2-hop link prediction over knowledge graphs"
)]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load TSV triples and print an index summary.
    Ingest {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Hold out entities to build an inductive split.
    Split {
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long, default_value_t = 500)]
        n_test: usize,
        #[arg(long, default_value_t = 500)]
        n_valid: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Predict the properties of an unseen effect of a cause.
    Predict {
        #[arg(long)]
        train: Vec<PathBuf>,
        /// JSON-lines file of query specs.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long, conflicts_with = "queries")]
        cause: Option<String>,
        #[arg(long)]
        causal_relation: Option<String>,
        #[arg(long = "target-relation")]
        target_relations: Vec<String>,
        /// Extra cause triple as `head<TAB>relation<TAB>tail` or `head,relation,tail`.
        #[arg(long = "extra-triple")]
        extra_triples: Vec<String>,
        /// Candidates printed per record; 0 prints all.
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Evaluate 2-hop link prediction on a split directory.
    Evaluate {
        #[arg(long)]
        split_dir: Option<PathBuf>,
        /// Also evaluate these modes from the same predictions.
        #[arg(long = "also-mode")]
        also_modes: Vec<ScoreMode>,
        /// Rank without filtering other known tails.
        #[arg(long)]
        raw: bool,
        #[arg(long, value_parser = parse_tie_policy)]
        tie_policy: Option<TiePolicy>,
        /// Include raw and filtered metrics and a per-relation breakdown.
        #[arg(long)]
        verbose: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run config; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    subclass_relation: Option<String>,
    #[arg(long)]
    type_relation: Option<String>,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long)]
    cases_head: Option<usize>,
    #[arg(long)]
    cases_cov: Option<usize>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    bag_cap: Option<usize>,
    #[arg(long)]
    mode: Option<ScoreMode>,
    #[arg(long)]
    refine_top_k: Option<usize>,
    #[arg(long, value_parser = parse_idf_norm)]
    idf_norm: Option<IdfNorm>,
    /// Default causal relation for queries that do not name one.
    #[arg(long = "causal-relation-default")]
    causal_relations: Vec<String>,
}

fn parse_tie_policy(s: &str) -> Result<TiePolicy, String> {
    match s {
        "ordinal" => Ok(TiePolicy::Ordinal),
        "expected" => Ok(TiePolicy::Expected),
        _ => Err(format!("unknown tie policy `{s}` (ordinal | expected)")),
    }
}

fn parse_idf_norm(s: &str) -> Result<IdfNorm, String> {
    match s {
        "max" => Ok(IdfNorm::Max),
        "l2" => Ok(IdfNorm::L2),
        "none" => Ok(IdfNorm::None),
        _ => Err(format!("unknown idf norm `{s}` (max | l2 | none)")),
    }
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn base_config(common: &CommonArgs) -> AnyResult<RunConfig> {
    let mut c = match &common.config {
        Some(p) => RunConfig::from_toml_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        c.engine.paths.seed = s;
    }
    if let Some(r) = &common.subclass_relation {
        c.graph.subclass_relation = Some(r.clone());
    }
    if let Some(r) = &common.type_relation {
        c.graph.type_relation = Some(r.clone());
    }
    Ok(c)
}

fn apply_engine(c: &mut RunConfig, e: &EngineArgs) {
    let p = &mut c.engine;
    if let Some(v) = e.cases_head {
        p.cases.n_head = v;
    }
    if let Some(v) = e.cases_cov {
        p.cases.n_cov = v;
    }
    if let Some(v) = e.n_paths {
        p.paths.n_paths = v;
    }
    if let Some(v) = e.epsilon {
        p.paths.epsilon = v;
    }
    if let Some(v) = e.bag_cap {
        p.paths.bag_cap = v;
    }
    if let Some(v) = e.mode {
        p.mode = v;
    }
    if e.refine_top_k.is_some() {
        p.refine_top_k = e.refine_top_k;
    }
    if let Some(v) = e.idf_norm {
        p.stats.idf_norm = v;
    }
    if !e.causal_relations.is_empty() {
        c.causal_relations = e.causal_relations.clone();
    }
}

fn write_output(out: Option<&Path>, text: &str) -> AnyResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_graph(paths: &[PathBuf], config: &RunConfig) -> AnyResult<KnowledgeGraph> {
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    Ok(KnowledgeGraph::from_tsv_files(&refs, &config.graph)?)
}

#[derive(Serialize)]
struct IngestSummary {
    entities: usize,
    relations: usize,
    triples: usize,
    subclass_relation_present: bool,
    type_relation_present: bool,
    triples_per_relation: BTreeMap<String, usize>,
    config: RunConfig,
}

#[derive(Serialize)]
struct SplitSummary {
    train_triples: usize,
    valid_entities: usize,
    valid_connections: usize,
    valid_triples: usize,
    test_entities: usize,
    test_connections: usize,
    test_triples: usize,
    n_test: usize,
    n_valid: usize,
    config: RunConfig,
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    reports: Vec<ReportView<'a>>,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct ReportView<'a> {
    mode: &'static str,
    mrr: f64,
    hits: &'a BTreeMap<usize, f64>,
    n_links: usize,
    n_connections: usize,
    n_test_entities: usize,
    failed_queries: usize,
    skipped_entities: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<&'a EvalReport>,
}

fn parse_extra(s: &str) -> AnyResult<(String, String, String)> {
    let parts: Vec<&str> = if s.contains('\t') {
        s.split('\t').collect()
    } else {
        s.split(',').collect()
    };
    match parts.as_slice() {
        [h, r, t] => Ok((h.to_string(), r.to_string(), t.to_string())),
        _ => Err(format!("extra triple `{s}` must have 3 fields").into()),
    }
}

fn run(cli: Cli) -> AnyResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("thread pool: {e}"))?;
    }
    match cli.command {
        Command::Ingest {
            inputs,
            out,
            common,
        } => {
            let mut config = base_config(&common)?;
            config.data.train = inputs.clone();
            let g = load_graph(&inputs, &config)?;
            let mut per_rel = BTreeMap::new();
            for t in g.triples() {
                *per_rel
                    .entry(g.relation_name(t.relation).to_string())
                    .or_insert(0) += 1;
            }
            let summary = IngestSummary {
                entities: g.entity_count(),
                relations: g.relation_count(),
                triples: g.triple_count(),
                subclass_relation_present: g.subclass_relation().is_some(),
                type_relation_present: g.type_relation().is_some(),
                triples_per_relation: per_rel,
                config,
            };
            write_output(
                out.as_deref(),
                &(serde_json::to_string_pretty(&summary)? + "\n"),
            )
        }
        Command::Split {
            input,
            n_test,
            n_valid,
            out_dir,
            common,
        } => {
            let mut config = base_config(&common)?;
            config.data.train = input.clone();
            config.data.split_dir = Some(out_dir.clone());
            let g = load_graph(&input, &config)?;
            let split = make_split(
                &g,
                &SplitOptions {
                    n_test,
                    n_valid,
                    seed: config.engine.paths.seed,
                    candidates: None,
                },
            )?;
            split.write_dir(&out_dir)?;
            let summary = SplitSummary {
                train_triples: split.train_triples.len(),
                valid_entities: split.valid_entities().len(),
                valid_connections: split.valid_connections.len(),
                valid_triples: split.valid_triples.len(),
                test_entities: split.test_entities().len(),
                test_connections: split.test_connections.len(),
                test_triples: split.test_triples.len(),
                n_test,
                n_valid,
                config,
            };
            write_output(None, &(serde_json::to_string_pretty(&summary)? + "\n"))
        }
        Command::Predict {
            train,
            queries,
            cause,
            causal_relation,
            target_relations,
            extra_triples,
            top_k,
            out,
            common,
            engine,
        } => {
            let mut config = base_config(&common)?;
            apply_engine(&mut config, &engine);
            if !train.is_empty() {
                config.data.train = train;
            }
            if queries.is_some() {
                config.data.queries = queries.clone();
            }
            config.validate()?;
            if config.data.train.is_empty() {
                return Err("no training triples given (--train)".into());
            }
            let specs = match (&config.data.queries, cause) {
                (Some(p), _) => {
                    let text =
                        std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                    parse_query_lines(&text)?
                }
                (None, Some(cause)) => vec![QuerySpec {
                    cause,
                    causal_relation,
                    target_relations,
                    extra_triples: extra_triples
                        .iter()
                        .map(|s| parse_extra(s))
                        .collect::<AnyResult<_>>()?,
                }],
                (None, None) => return Err("give --queries or --cause".into()),
            };
            let base = load_graph(&config.data.train, &config)?;
            let mut text = String::new();
            for spec in &specs {
                let extended;
                let g = if spec.extra_triples.is_empty() {
                    &base
                } else {
                    extended = base.extended(&spec.extra_triples)?;
                    &extended
                };
                let reasoner = Reasoner::new(g, config.engine)?;
                let query = spec.resolve(g, &config)?;
                let preds = reasoner.run(&query)?;
                for rec in prediction_records(g, spec, &preds, &config, top_k) {
                    text.push_str(&serde_json::to_string(&rec)?);
                    text.push('\n');
                }
            }
            write_output(out.as_deref(), &text)
        }
        Command::Evaluate {
            split_dir,
            also_modes,
            raw,
            tie_policy,
            verbose,
            out,
            common,
            engine,
        } => {
            let mut config = base_config(&common)?;
            apply_engine(&mut config, &engine);
            if split_dir.is_some() {
                config.data.split_dir = split_dir;
            }
            if raw {
                config.ranking.filtered = false;
            }
            if let Some(t) = tie_policy {
                config.ranking.tie_policy = t;
            }
            config.verbose_metrics |= verbose;
            config.validate()?;
            let dir = config
                .data
                .split_dir
                .clone()
                .ok_or("no split directory given (--split-dir)")?;
            let split = InductiveSplit::read_dir(&dir)?;
            let mut modes = vec![config.engine.mode];
            for m in also_modes {
                if !modes.contains(&m) {
                    modes.push(m);
                }
            }
            let reports = evaluate_modes(
                &split,
                &config.graph,
                &config.engine,
                &modes,
                config.ranking,
            )?;
            for r in &reports {
                eprintln!(
                    "{}: MRR {:.4}  Hits@1 {:.4}  Hits@10 {:.4}  ({} links, {:.1}s)",
                    r.mode.name(),
                    r.metrics.mrr,
                    r.metrics.hits_at(1),
                    r.metrics.hits_at(10),
                    r.metrics.n_links,
                    r.runtime.as_secs_f64()
                );
            }
            let view = EvalOutput {
                reports: reports
                    .iter()
                    .map(|r| ReportView {
                        mode: r.mode.name(),
                        mrr: r.metrics.mrr,
                        hits: &r.metrics.hits,
                        n_links: r.metrics.n_links,
                        n_connections: r.n_connections,
                        n_test_entities: r.n_test_entities,
                        failed_queries: r.failed_queries,
                        skipped_entities: &r.skipped_entities,
                        detail: config.verbose_metrics.then_some(r),
                    })
                    .collect(),
                config: &config,
            };
            write_output(
                out.as_deref(),
                &(serde_json::to_string_pretty(&view)? + "\n"),
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
