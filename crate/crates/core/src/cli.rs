//! `legacy-translate` subcommands.
//!
//! Exit codes: 0 success, 1 bad input or configuration, 2 when some samples of
//! a `translate` batch aborted without a trace.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};

use crate::agents::{run_pipeline, PipelineInputs, Providers};
use crate::apikb::{extract_api_entries, generate_descriptions, ApiEntry, DescriptionSource};
use crate::evalharness::{
    compute_report, render_report_json, render_report_markdown, CandidateEvaluator, EvalReport,
    SandboxEvaluator,
};
use crate::model::{
    file_stem_for, load_jsonl_corpus, read_run_traces, write_jsonl_corpus, write_run_trace,
    PipelineConfig, ReferencePair, SampleUnit,
};
use crate::provider::{
    ChatProvider, Embedder, HashingEmbedder, OpenAiCompatProvider, RequestSettings,
    ScriptedProvider,
};
use crate::retriever::{ensure_embeddings, rank_references, RelevanceJudgments, RetrievalScores};
use crate::Real;

pub const CONFIG_ENV: &str = "LT_CONFIG";

#[derive(Debug, Parser)]
#[command(
    name = "legacy-translate",
    version,
    about = "API-aware PL/SQL to Java translation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Md,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract public methods of a Java tree into kb.jsonl.
    BuildKb {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fill in one-line descriptions.
        #[arg(long)]
        describe: bool,
        /// Use the template description instead of a model.
        #[arg(long)]
        offline: bool,
        #[arg(long, env = CONFIG_ENV)]
        config: Option<PathBuf>,
    },
    /// Run the pipeline over every sample and write traces.
    Translate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, env = CONFIG_ENV)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        workers: u16,
        /// Write computed reference embeddings back into the refs file.
        #[arg(long)]
        cache_embeddings: bool,
    },
    /// Score a directory of traces and write report.json.
    Evaluate {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sample corpus; samples without a trace count as failures.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// NDCG, MRR and Recall of exemplar retrieval against graded judgments.
    RetrieverEval {
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        offline: bool,
        #[arg(long, env = CONFIG_ENV)]
        config: Option<PathBuf>,
        /// Dimension of the offline embedder.
        #[arg(long, default_value_t = 256)]
        dim: usize,
    },
    /// Render the SV/CR/TPR table for a directory of traces.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, value_enum)]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString>,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => {
                    eprintln!("\n{}", usage_for(args.get(1)));
                    1
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn usage_for(subcommand: Option<&std::ffi::OsString>) -> clap::builder::StyledStr {
    let mut cmd = Cli::command();
    let name = subcommand.and_then(|s| s.to_str()).unwrap_or_default();
    match cmd.find_subcommand_mut(name) {
        Some(sub) => sub
            .clone()
            .bin_name(format!("legacy-translate {name}"))
            .render_usage(),
        None => cmd.render_usage(),
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::BuildKb {
            src,
            out,
            describe,
            offline,
            config,
        } => build_kb(&src, &out, describe, offline, config.as_deref()),
        Command::Translate {
            input,
            refs,
            kb,
            config,
            out,
            workers,
            cache_embeddings,
        } => translate(
            &input,
            &refs,
            &kb,
            &config,
            &out,
            workers as usize,
            cache_embeddings,
        ),
        Command::Evaluate { runs, out, samples } => evaluate(&runs, &out, samples.as_deref()),
        Command::RetrieverEval {
            refs,
            queries,
            qrels,
            k,
            offline,
            config,
            dim,
        } => retriever_eval(&refs, &queries, &qrels, k, offline, config.as_deref(), dim),
        Command::Report { runs, format, out } => report(&runs, format, out.as_deref()),
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    PipelineConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

/// Chat provider named by the config: `script:<path>` (relative to the config
/// file) or an OpenAI-compatible endpoint.
pub fn chat_provider(cfg: &PipelineConfig, config_path: &Path) -> Result<Box<dyn ChatProvider>> {
    if let Some(script) = cfg.provider_endpoint.strip_prefix("script:") {
        let mut p = PathBuf::from(script);
        if p.is_relative() {
            if let Some(dir) = config_path.parent() {
                p = dir.join(p);
            }
        }
        let sp = ScriptedProvider::load(&p)
            .with_context(|| format!("loading script {}", p.display()))?;
        return Ok(Box::new(sp));
    }
    Ok(Box::new(http_provider(cfg)))
}

fn http_provider(cfg: &PipelineConfig) -> OpenAiCompatProvider {
    OpenAiCompatProvider::new(
        &cfg.provider_endpoint,
        &cfg.chat_model_id,
        &cfg.embed_model_id,
    )
    .with_embed_timeout(Duration::from_secs_f64(cfg.request_timeout))
    .with_dimension(Some(cfg.embedding_dim))
}

/// Embedder named by the config: the local hashing embedder for `offline`,
/// else the endpoint's embedding model.
pub fn embedder(cfg: &PipelineConfig) -> Box<dyn Embedder> {
    if cfg.embed_model_id == "offline" {
        Box::new(HashingEmbedder::new(cfg.embedding_dim))
    } else {
        Box::new(http_provider(cfg))
    }
}

fn build_kb(
    src: &Path,
    out: &Path,
    describe: bool,
    offline: bool,
    config: Option<&Path>,
) -> Result<i32> {
    let extraction = extract_api_entries(src)?;
    for w in &extraction.warnings {
        eprintln!("warning: {}: {}", w.path, w.message);
    }
    if extraction.entries.is_empty() {
        eprintln!("warning: no public methods found under {}", src.display());
    }
    let mut entries = extraction.entries;
    let mut failed = None;
    if describe {
        let described = if offline {
            generate_descriptions(entries, DescriptionSource::Offline)
        } else {
            let Some(cfg_path) = config else {
                bail!("--describe without --offline needs --config or {CONFIG_ENV}");
            };
            let cfg = load_config(cfg_path)?;
            let chat = chat_provider(&cfg, cfg_path)?;
            generate_descriptions(
                entries,
                DescriptionSource::Provider {
                    chat: chat.as_ref(),
                    settings: RequestSettings::from_config(&cfg),
                },
            )
        };
        entries = match described {
            Ok(e) => e,
            Err(e) => {
                failed = Some(e.to_string());
                e.partial
            }
        };
    }
    write_jsonl_corpus::<ApiEntry>(out, &entries)?;
    println!("{} entries written to {}", entries.len(), out.display());
    match failed {
        Some(msg) => {
            eprintln!("error: {msg}; partial knowledge base written");
            Ok(1)
        }
        None => Ok(0),
    }
}

fn translate(
    input: &Path,
    refs_path: &Path,
    kb_path: &Path,
    config_path: &Path,
    out: &Path,
    workers: usize,
    cache_embeddings: bool,
) -> Result<i32> {
    let cfg = load_config(config_path)?;
    let samples: Vec<SampleUnit> = load_jsonl_corpus(input)?;
    let mut refs: Vec<ReferencePair> = load_jsonl_corpus(refs_path)?;
    let kb: Vec<ApiEntry> = load_jsonl_corpus(kb_path)?;
    let architecture =
        fs::read_to_string(&cfg.architecture_description_path).with_context(|| {
            format!(
                "reading architecture description {}",
                cfg.architecture_description_path.display()
            )
        })?;
    if architecture.trim().is_empty() {
        bail!(
            "architecture description {} is empty",
            cfg.architecture_description_path.display()
        );
    }
    let chat = chat_provider(&cfg, config_path)?;
    let embed = embedder(&cfg);
    if !refs.is_empty() {
        let computed = ensure_embeddings(&mut refs, embed.as_ref())?;
        if cache_embeddings && computed > 0 {
            write_jsonl_corpus(refs_path, &refs)?;
            log::info!("cached {computed} reference embeddings");
        }
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let evaluator = SandboxEvaluator::new(cfg.clone());
    let inputs = PipelineInputs {
        refs: &refs,
        kb: &kb,
        config: &cfg,
        architecture: &architecture,
        providers: Providers {
            chat: chat.as_ref(),
            embedder: embed.as_ref(),
        },
        evaluator: &evaluator as &dyn CandidateEvaluator,
    };
    let next = AtomicUsize::new(0);
    let aborted = Mutex::new(Vec::new());
    let io_errors = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(samples.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(sample) = samples.get(i) else { break };
                let run = run_pipeline(sample, &inputs);
                let prompts_path = out.join(format!("{}.prompts.json", file_stem_for(&sample.id)));
                let text = serde_json::to_string_pretty(&run.prompts)
                    .expect("prompt log serializes")
                    + "\n";
                if let Err(e) = fs::write(&prompts_path, text) {
                    io_errors
                        .lock()
                        .unwrap()
                        .push(format!("{}: {e}", prompts_path.display()));
                }
                match run.trace {
                    Some(trace) => {
                        if let Some(e) = &run.error {
                            log::warn!("{}: stopped early: {e}", sample.id);
                        }
                        if let Err(e) = write_run_trace(&trace, out) {
                            io_errors.lock().unwrap().push(e.to_string());
                        }
                    }
                    None => {
                        let msg = run.error.map(|e| e.to_string()).unwrap_or_default();
                        aborted.lock().unwrap().push((sample.id.clone(), msg));
                    }
                }
            });
        }
    });
    let io_errors = io_errors.into_inner().unwrap();
    if !io_errors.is_empty() {
        bail!("failed to write outputs: {}", io_errors.join("; "));
    }
    let mut aborted = aborted.into_inner().unwrap();
    aborted.sort();
    for (id, msg) in &aborted {
        eprintln!("sample {id} aborted: {msg}");
    }
    println!(
        "{} of {} samples traced",
        samples.len() - aborted.len(),
        samples.len()
    );
    Ok(if aborted.is_empty() { 0 } else { 2 })
}

fn report_for(runs: &Path, samples: Option<&Path>) -> Result<EvalReport> {
    let traces = read_run_traces(runs)?;
    if traces.is_empty() {
        bail!("no trace files in {}", runs.display());
    }
    let n = match samples {
        Some(p) => load_jsonl_corpus::<SampleUnit>(p)?.len(),
        None => traces.len(),
    };
    Ok(compute_report(&traces, n))
}

fn evaluate(runs: &Path, out: &Path, samples: Option<&Path>) -> Result<i32> {
    let report = report_for(runs, samples)?;
    fs::write(out, render_report_json(&report))
        .with_context(|| format!("writing {}", out.display()))?;
    println!(
        "SV {:.1} CR {:.1} TPR {:.1}",
        report.sv_pct, report.cr_pct, report.tpr_pct
    );
    Ok(0)
}

fn report(runs: &Path, format: ReportFormat, out: Option<&Path>) -> Result<i32> {
    let report = report_for(runs, None)?;
    let text = match format {
        ReportFormat::Json => render_report_json(&report),
        ReportFormat::Md => render_report_markdown(&report),
    };
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn retriever_eval(
    refs_path: &Path,
    queries_path: &Path,
    qrels_path: &Path,
    k: usize,
    offline: bool,
    config: Option<&Path>,
    dim: usize,
) -> Result<i32> {
    let mut refs: Vec<ReferencePair> = load_jsonl_corpus(refs_path)?;
    let queries: Vec<SampleUnit> = load_jsonl_corpus(queries_path)?;
    let qrels: Vec<RelevanceJudgments> = load_jsonl_corpus(qrels_path)?;
    let embed: Box<dyn Embedder> = match (offline, config) {
        (true, _) => Box::new(HashingEmbedder::new(dim)),
        (false, Some(p)) => embedder(&load_config(p)?),
        (false, None) => bail!("retriever-eval needs --offline or --config/{CONFIG_ENV}"),
    };
    ensure_embeddings(&mut refs, embed.as_ref())?;
    let mut runs = Vec::with_capacity(queries.len());
    for q in &queries {
        let Some(j) = qrels.iter().find(|j| j.query_id == q.id) else {
            bail!("no qrels row for query {}", q.id);
        };
        let qv = embed.embed(&q.plsql_source)?;
        let ranked: Vec<String> = rank_references(&qv.values, &refs, k)?
            .into_iter()
            .map(|e| e.pair.id)
            .collect();
        runs.push((ranked, j));
    }
    let s = RetrievalScores::<Real>::mean(&runs, k);
    println!("NDCG@{k} {:.3}", s.ndcg);
    println!("MRR@{k} {:.3}", s.mrr);
    println!("Recall@{k} {:.3}", s.recall);
    Ok(0)
}
