//! Command-line front end. Settings resolve as CLI flag, then environment
//! (endpoint and timeout only), then config file, then builtin default; the
//! resolved values are printed as a `#`-prefixed run header.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::attribution::{
    attribute, load_answers, validate_answer, AnswerRecord, GenerationClient, PromptTemplates,
    RemoteGenerator, ReplayClient,
};
use crate::corpus::{load_attribution_topics, load_corpus, load_gold_labels, load_grounding_topics, Corpus};
use crate::error::{Error, Result};
use crate::evalkit::{
    citation_summary, evaluate_run, format_citation_summary, format_mrr_table, format_prf, MrrMode,
};
use crate::fusion::{
    AdversarialConfig, DEFAULT_CON_THRESHOLD, DEFAULT_CUE_CAP, DEFAULT_GAMMA, DEFAULT_K_RRF,
    DEFAULT_LAMBDA, DEFAULT_POOL_CAP,
};
use crate::grounding::{
    embed_corpus, ground_all, ranking_entries, run_entries, write_run, Granularity, GroundingConfig,
    GroundingContext, GroundingResult, Variant, MAX_SELECTED,
};
use crate::lexindex::{Bm25Params, InvertedIndex, DEFAULT_B, DEFAULT_K1};
use crate::negation::NegationPatternSet;
use crate::scorers::{
    BackendKind, ScorerBackendConfig, DEFAULT_BATCH_SIZE, DEFAULT_MAX_IN_FLIGHT, DEFAULT_RETRIES,
    DEFAULT_TIMEOUT, ENV_ENDPOINT, ENV_TIMEOUT_MS,
};

#[derive(Debug, Parser)]
#[command(
    name = "contraground",
    version,
    about = "Contradiction-aware evidence grounding and citation-checked answer generation"
)]
pub struct Cli {
    /// TOML file supplying defaults for any flag (keys use snake_case flag names)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, help = "Worker threads over topics [default: 1]")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a BM25 index snapshot from a corpus file
    Index(IndexArgs),
    /// Task A: find supporting and contradicting documents for answer sentences
    Ground(GroundArgs),
    /// Task B: retrieve context, generate and validate cited answers
    Attribute(AttributeArgs),
    /// Re-check citation discipline of an answers file
    Validate(ValidateArgs),
    /// Evaluate runs or answers
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Per-class MRR, weighted MRR and selection P/R/F1
    Mrr(EvalMrrArgs),
    /// Citation coverage and density over answers files
    Citations(EvalCitationsArgs),
}

#[derive(Debug, Args)]
pub struct Bm25Args {
    #[arg(long, help = "BM25 term saturation k1 [default: 0.9]")]
    pub k1: Option<f64>,
    #[arg(long, help = "BM25 length normalization b [default: 0.4]")]
    pub b: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long, help = "Corpus JSONL file")]
    pub corpus: Option<PathBuf>,
    #[arg(long, help = "Snapshot output path")]
    pub out: Option<PathBuf>,
    #[arg(long, help = "Overwrite an existing snapshot")]
    pub force: bool,
    #[command(flatten)]
    pub bm25: Bm25Args,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, help = "Scorer backend: mock|remote [default: mock]")]
    pub backend: Option<String>,
    #[arg(long, help = "Inference service base URL (env CONTRAGROUND_ENDPOINT)")]
    pub endpoint: Option<String>,
    #[arg(long, help = "Request timeout in ms (env CONTRAGROUND_TIMEOUT_MS) [default: 30000]")]
    pub timeout_ms: Option<u64>,
    #[arg(long, help = "Items per remote request [default: 32]")]
    pub batch_size: Option<usize>,
    #[arg(long, help = "Concurrent remote requests [default: 4]")]
    pub max_in_flight: Option<usize>,
    #[arg(long, help = "Attempts per request on 5xx/transport errors [default: 2]")]
    pub retries: Option<u32>,
}

#[derive(Debug, Args)]
pub struct GroundArgs {
    #[arg(long, help = "Grounding topics JSONL file")]
    pub topics: Option<PathBuf>,
    #[arg(long, help = "Corpus JSONL file")]
    pub corpus: Option<PathBuf>,
    #[arg(long, help = "Index snapshot; built in memory when omitted")]
    pub index: Option<PathBuf>,
    #[arg(long, help = "Pipeline variant v1|v2|v3|v4|v5 [default: v5]")]
    pub variant: Option<String>,
    #[arg(
        long,
        help = "Support retrieval depth [default: 500 for v1/v2, 100 for v3/v5, 200 for v4]"
    )]
    pub support_depth: Option<usize>,
    #[arg(
        long,
        help = "Contradiction retrieval depth; per-query depth for v4 [default: 500 for v1/v2, 1000 for v3/v5, 200 for v4]"
    )]
    pub contra_depth: Option<usize>,
    #[arg(long, help = "NLI premise unit: sentence|document [default: sentence]")]
    pub granularity: Option<String>,
    #[arg(long, help = "Reciprocal rank fusion constant [default: 60]")]
    pub k_rrf: Option<f64>,
    #[arg(long, help = "Fused candidate pool cap [default: 1200]")]
    pub pool_cap: Option<usize>,
    #[arg(long, help = "v4 entailment penalty weight lambda [default: 0.5]")]
    pub lambda: Option<f64>,
    #[arg(long, help = "v4 negation bonus weight gamma [default: 0.1]")]
    pub gamma: Option<f64>,
    #[arg(long, help = "v4 negation cue cap C [default: 6]")]
    pub cue_cap: Option<usize>,
    #[arg(long, help = "v4 contradiction probability threshold [default: 0.35]")]
    pub con_threshold: Option<f64>,
    #[arg(long, help = "Negation pattern file [default: builtin 23 patterns]")]
    pub patterns: Option<PathBuf>,
    #[arg(long, help = "v4 query template file [default: builtin 25 templates]")]
    pub adversarial_templates: Option<PathBuf>,
    #[arg(long, help = "Run file output (selected documents)")]
    pub out: Option<PathBuf>,
    #[arg(long, help = "Optional run file with full branch rankings")]
    pub ranking_out: Option<PathBuf>,
    #[command(flatten)]
    pub bm25: Bm25Args,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[arg(long, help = "Attribution topics JSONL file")]
    pub topics: Option<PathBuf>,
    #[arg(long, help = "Corpus JSONL file")]
    pub corpus: Option<PathBuf>,
    #[arg(long, help = "Index snapshot; built in memory when omitted")]
    pub index: Option<PathBuf>,
    #[arg(long, help = "Generation mode: replay|remote [default: replay]")]
    pub mode: Option<String>,
    #[arg(long, help = "Replay JSONL of {topic_id, text} (replay mode)")]
    pub replay: Option<PathBuf>,
    #[arg(long, help = "Constraints template file [default: builtin]")]
    pub constraints: Option<PathBuf>,
    #[arg(long, help = "Exemplar template file [default: builtin]")]
    pub exemplar: Option<PathBuf>,
    #[arg(long, help = "Answers JSONL output")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub bm25: Bm25Args,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, help = "Answers JSONL file")]
    pub answers: PathBuf,
    #[arg(long, help = "Exit nonzero when any answer has violations")]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct EvalMrrArgs {
    #[arg(long = "run", required = true, help = "Run file (repeatable)")]
    pub runs: Vec<PathBuf>,
    #[arg(long, help = "Gold labels JSONL file")]
    pub gold: PathBuf,
    #[arg(long, help = "Ranking basis: rank-list|top3 [default: rank-list]")]
    pub mode: Option<String>,
    #[arg(long, help = "Write the structured report as JSON")]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalCitationsArgs {
    #[arg(long = "answers", required = true, help = "Answers JSONL file (repeatable)")]
    pub answers: Vec<PathBuf>,
}

/// Keys accepted in the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub jobs: Option<usize>,
    pub corpus: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub ranking_out: Option<PathBuf>,
    pub variant: Option<String>,
    pub granularity: Option<String>,
    pub support_depth: Option<usize>,
    pub contra_depth: Option<usize>,
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub k_rrf: Option<f64>,
    pub pool_cap: Option<usize>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub cue_cap: Option<usize>,
    pub con_threshold: Option<f64>,
    pub patterns: Option<PathBuf>,
    pub adversarial_templates: Option<PathBuf>,
    pub backend: Option<String>,
    pub endpoint: Option<String>,
    pub timeout_ms: Option<u64>,
    pub batch_size: Option<usize>,
    pub max_in_flight: Option<usize>,
    pub retries: Option<u32>,
    pub mode: Option<String>,
    pub replay: Option<PathBuf>,
    pub constraints: Option<PathBuf>,
    pub exemplar: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Resolves settings by precedence and records where each came from.
#[derive(Debug, Default)]
pub struct Resolver {
    pub header: Vec<String>,
}

impl Resolver {
    pub fn value<T: Display>(&mut self, name: &str, cli: Option<T>, file: Option<T>, default: T) -> T {
        self.layered(name, [(cli, "cli"), (file, "config")], default)
    }

    fn layered<T: Display, const N: usize>(
        &mut self,
        name: &str,
        layers: [(Option<T>, &str); N],
        default: T,
    ) -> T {
        for (v, source) in layers {
            if let Some(v) = v {
                self.header.push(format!("{name} = {v} ({source})"));
                return v;
            }
        }
        self.header.push(format!("{name} = {default} (default)"));
        default
    }

    pub fn optional_path(&mut self, name: &str, cli: Option<PathBuf>, file: Option<PathBuf>) -> Option<PathBuf> {
        let (v, source) = match (cli, file) {
            (Some(p), _) => (Some(p), "cli"),
            (None, Some(p)) => (Some(p), "config"),
            (None, None) => (None, "default"),
        };
        let shown = v.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        self.header.push(format!("{name} = {shown} ({source})"));
        v
    }

    pub fn required_path(&mut self, name: &str, cli: Option<PathBuf>, file: Option<PathBuf>) -> Result<PathBuf> {
        self.optional_path(name, cli, file)
            .ok_or_else(|| Error::Config(format!("missing --{} (or `{name}` in the config file)", name.replace('_', "-"))))
    }

    pub fn print(&self, out: &mut impl Write) -> std::io::Result<()> {
        for line in &self.header {
            writeln!(out, "# {line}")?;
        }
        Ok(())
    }
}

fn backend_config(r: &mut Resolver, args: BackendArgs, file: &FileConfig) -> Result<ScorerBackendConfig> {
    let kind = match r.value("backend", args.backend, file.backend.clone(), "mock".to_string()).as_str() {
        "mock" => BackendKind::Mock,
        "remote" => BackendKind::Remote,
        other => return Err(Error::Config(format!("unknown backend `{other}` (mock|remote)"))),
    };
    let env_endpoint = std::env::var(ENV_ENDPOINT).ok();
    let env_timeout = match std::env::var(ENV_TIMEOUT_MS) {
        Ok(ms) => Some(
            ms.parse::<u64>()
                .map_err(|_| Error::Config(format!("{ENV_TIMEOUT_MS}={ms} is not an integer")))?,
        ),
        Err(_) => None,
    };
    let endpoint = r.layered(
        "endpoint",
        [(args.endpoint, "cli"), (env_endpoint, "env"), (file.endpoint.clone(), "config")],
        "-".to_string(),
    );
    let timeout_ms = r.layered(
        "timeout_ms",
        [(args.timeout_ms, "cli"), (env_timeout, "env"), (file.timeout_ms, "config")],
        DEFAULT_TIMEOUT.as_millis() as u64,
    );
    let config = ScorerBackendConfig {
        kind,
        endpoint: (endpoint != "-").then_some(endpoint),
        timeout: Duration::from_millis(timeout_ms),
        batch_size: r.value("batch_size", args.batch_size, file.batch_size, DEFAULT_BATCH_SIZE),
        max_in_flight: r.value("max_in_flight", args.max_in_flight, file.max_in_flight, DEFAULT_MAX_IN_FLIGHT),
        retries: r.value("retries", args.retries, file.retries, DEFAULT_RETRIES),
    };
    config.validate()?;
    Ok(config)
}

fn bm25_params(r: &mut Resolver, args: &Bm25Args, file: &FileConfig) -> Bm25Params {
    Bm25Params {
        k1: r.value("k1", args.k1, file.k1, DEFAULT_K1),
        b: r.value("b", args.b, file.b, DEFAULT_B),
    }
}

/// Loads a snapshot when given (checked against the corpus), else builds.
fn open_index(corpus: &Corpus, snapshot: Option<&Path>, params: Bm25Params) -> Result<InvertedIndex> {
    let Some(path) = snapshot else {
        return InvertedIndex::build(corpus, params);
    };
    let index = InvertedIndex::load(path)?;
    let consistent = index.doc_count() == corpus.len()
        && (0..index.doc_count()).all(|i| corpus.get(index.doc_id(i)).is_some());
    if !consistent {
        return Err(Error::Snapshot(format!(
            "{} was not built from this corpus",
            path.display()
        )));
    }
    Ok(index)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn resolve_jobs(r: &mut Resolver, cli: Option<usize>, file: &FileConfig) -> Result<usize> {
    let jobs = r.value("jobs", cli, file.jobs, 1);
    if jobs == 0 {
        return Err(Error::Config("--jobs must be >= 1".into()));
    }
    Ok(jobs)
}

pub fn cmd_index(args: IndexArgs, file: &FileConfig, out: &mut impl Write) -> Result<()> {
    let mut r = Resolver::default();
    let corpus_path = r.required_path("corpus", args.corpus, file.corpus.clone())?;
    let out_path = r.required_path("out", args.out, file.out.clone())?;
    let params = bm25_params(&mut r, &args.bm25, file);
    if out_path.exists() && !args.force {
        return Err(Error::Config(format!(
            "{} already exists; pass --force to overwrite",
            out_path.display()
        )));
    }
    let corpus = load_corpus(&corpus_path)?;
    let index = InvertedIndex::build(&corpus, params)?;
    index.save(&out_path)?;
    r.print(out).map_err(|e| Error::io("<stdout>", e))?;
    writeln!(out, "docs={} terms={}", index.doc_count(), index.vocabulary_size())
        .map_err(|e| Error::io("<stdout>", e))
}

/// Asserts the result invariants before anything is written.
pub fn check_result(result: &GroundingResult, old_ids: &BTreeSet<String>) -> Result<()> {
    let supp: BTreeSet<&str> = result.supporting.iter().map(|e| e.doc_id.as_str()).collect();
    let ok = result.supporting.len() <= MAX_SELECTED
        && result.contradicting.len() <= MAX_SELECTED
        && supp.iter().all(|d| !old_ids.contains(*d))
        && result.contradicting.iter().all(|e| !supp.contains(e.doc_id.as_str()));
    if ok {
        Ok(())
    } else {
        Err(Error::Evaluation(format!(
            "grounding result for topic `{}` violates the selection invariants",
            result.topic_id
        )))
    }
}

pub fn cmd_ground(args: GroundArgs, jobs: Option<usize>, file: &FileConfig, out: &mut impl Write) -> Result<()> {
    let mut r = Resolver::default();
    let topics_path = r.required_path("topics", args.topics, file.topics.clone())?;
    let corpus_path = r.required_path("corpus", args.corpus, file.corpus.clone())?;
    let index_path = r.optional_path("index", args.index, file.index.clone());
    let out_path = r.required_path("out", args.out, file.out.clone())?;
    let ranking_path = r.optional_path("ranking_out", args.ranking_out, file.ranking_out.clone());
    let variant: Variant = r
        .value("variant", args.variant, file.variant.clone(), "v5".to_string())
        .parse()?;
    let jobs = resolve_jobs(&mut r, jobs, file)?;
    let params = bm25_params(&mut r, &args.bm25, file);

    let mut config = GroundingConfig::new(variant);
    let defaults = config.variant;
    config.variant.support_depth =
        r.value("support_depth", args.support_depth, file.support_depth, defaults.support_depth);
    config.variant.contra_depth =
        r.value("contra_depth", args.contra_depth, file.contra_depth, defaults.contra_depth);
    config.variant.granularity = r
        .value("granularity", args.granularity, file.granularity.clone(), "sentence".to_string())
        .parse::<Granularity>()?;
    config.rrf.k_rrf = r.value("k_rrf", args.k_rrf, file.k_rrf, DEFAULT_K_RRF);
    config.rrf.pool_cap = r.value("pool_cap", args.pool_cap, file.pool_cap, DEFAULT_POOL_CAP);

    let mut adversarial = match r.optional_path(
        "adversarial_templates",
        args.adversarial_templates,
        file.adversarial_templates.clone(),
    ) {
        Some(p) => AdversarialConfig::default().with_template_file(p)?,
        None => AdversarialConfig::default(),
    };
    adversarial.lambda = r.value("lambda", args.lambda, file.lambda, DEFAULT_LAMBDA);
    adversarial.gamma = r.value("gamma", args.gamma, file.gamma, DEFAULT_GAMMA);
    adversarial.cue_cap = r.value("cue_cap", args.cue_cap, file.cue_cap, DEFAULT_CUE_CAP);
    adversarial.con_threshold =
        r.value("con_threshold", args.con_threshold, file.con_threshold, DEFAULT_CON_THRESHOLD);
    adversarial.per_query_depth = config.variant.contra_depth;
    adversarial.rrf = config.rrf;
    config.adversarial = adversarial;
    config.validate()?;

    let patterns = match r.optional_path("patterns", args.patterns, file.patterns.clone()) {
        Some(p) => NegationPatternSet::from_file(p)?,
        None => NegationPatternSet::builtin(),
    };
    let backend = backend_config(&mut r, args.backend, file)?;

    let topics = load_grounding_topics(&topics_path)?;
    let corpus = load_corpus(&corpus_path)?;
    let index = open_index(&corpus, index_path.as_deref(), params)?;
    let scorers = backend.build()?;
    let dense = if variant.needs_embedder() {
        Some(embed_corpus(&corpus, scorers.embedder.as_ref())?)
    } else {
        None
    };
    let ctx = GroundingContext {
        corpus: &corpus,
        index: &index,
        patterns: &patterns,
        scorers: &scorers,
        dense: dense.as_ref(),
    };
    let results = ground_all(&topics, &ctx, &config, jobs)?;
    for (t, res) in topics.iter().zip(&results) {
        check_result(res, &t.old_ids)?;
    }

    let mut w = create(&out_path)?;
    write_run(&mut w, &results.iter().flat_map(run_entries).collect::<Vec<_>>())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&out_path, e))?;
    if let Some(path) = &ranking_path {
        let mut w = create(path)?;
        write_run(&mut w, &results.iter().flat_map(ranking_entries).collect::<Vec<_>>())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))?;
    }

    let io = |e| Error::io("<stdout>", e);
    r.print(out).map_err(io)?;
    let supp: usize = results.iter().map(|r| r.supporting.len()).sum();
    let contra: usize = results.iter().map(|r| r.contradicting.len()).sum();
    let with_contra = results.iter().filter(|r| !r.contradicting.is_empty()).count();
    writeln!(
        out,
        "variant={variant} topics={} supporting={supp} contradicting={contra} topics_with_contradiction={with_contra}",
        results.len()
    )
    .map_err(io)
}

pub fn cmd_attribute(args: AttributeArgs, jobs: Option<usize>, file: &FileConfig, out: &mut impl Write) -> Result<()> {
    use rayon::prelude::*;

    let mut r = Resolver::default();
    let topics_path = r.required_path("topics", args.topics, file.topics.clone())?;
    let corpus_path = r.required_path("corpus", args.corpus, file.corpus.clone())?;
    let index_path = r.optional_path("index", args.index, file.index.clone());
    let out_path = r.required_path("out", args.out, file.out.clone())?;
    let jobs = resolve_jobs(&mut r, jobs, file)?;
    let params = bm25_params(&mut r, &args.bm25, file);
    let mode = r.value("mode", args.mode, file.mode.clone(), "replay".to_string());
    let constraints = r.optional_path("constraints", args.constraints, file.constraints.clone());
    let exemplar = r.optional_path("exemplar", args.exemplar, file.exemplar.clone());
    let templates = match (constraints, exemplar) {
        (None, None) => PromptTemplates::default(),
        (c, e) => {
            let d = PromptTemplates::default();
            let read = |p: PathBuf| {
                std::fs::read_to_string(&p)
                    .map(|s| s.trim_end().to_string())
                    .map_err(|e| Error::Config(format!("cannot read template {}: {e}", p.display())))
            };
            PromptTemplates {
                constraints: c.map(read).transpose()?.unwrap_or(d.constraints),
                exemplar: e.map(read).transpose()?.unwrap_or(d.exemplar),
            }
        }
    };
    let backend = backend_config(&mut r, args.backend, file)?;
    let client: Box<dyn GenerationClient> = match mode.as_str() {
        "replay" => {
            let path = r.required_path("replay", args.replay, file.replay.clone())?;
            Box::new(ReplayClient::from_file(path)?)
        }
        "remote" => Box::new(RemoteGenerator::new(&backend)?),
        other => return Err(Error::Config(format!("unknown mode `{other}` (replay|remote)"))),
    };

    let topics = load_attribution_topics(&topics_path)?;
    let corpus = load_corpus(&corpus_path)?;
    let index = open_index(&corpus, index_path.as_deref(), params)?;
    let scorers = backend.build()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let records: Vec<AnswerRecord> = pool.install(|| {
        topics
            .par_iter()
            .map(|t| attribute(t, &corpus, &index, scorers.reranker.as_ref(), &templates, client.as_ref()))
            .collect::<Result<_>>()
    })?;
    crate::corpus::write_records(&out_path, &records)?;

    let io = |e| Error::io("<stdout>", e);
    r.print(out).map_err(io)?;
    for rec in records.iter().filter(|r| r.empty_context) {
        writeln!(out, "warning: topic {} had no retrieved evidence", rec.topic_id).map_err(io)?;
    }
    write!(out, "{}", format_citation_summary(&citation_summary(&records))).map_err(io)
}

pub fn cmd_validate(args: ValidateArgs, out: &mut impl Write) -> Result<bool> {
    let io = |e| Error::io("<stdout>", e);
    let records = load_answers(&args.answers)?;
    let mut clean = true;
    for rec in &records {
        let report = validate_answer(&rec.answer());
        if !report.violations.is_empty() {
            clean = false;
            let kinds: Vec<String> = report
                .violations
                .iter()
                .map(|v| match v.sentence {
                    Some(i) => format!("{}@{}", v.kind, i + 1),
                    None => v.kind.to_string(),
                })
                .collect();
            writeln!(out, "{}\t{}", rec.topic_id, kinds.join(",")).map_err(io)?;
        }
    }
    write!(out, "{}", format_citation_summary(&citation_summary(&records))).map_err(io)?;
    Ok(clean || !args.strict)
}

pub fn cmd_eval_mrr(args: EvalMrrArgs, out: &mut impl Write) -> Result<()> {
    let io = |e| Error::io("<stdout>", e);
    let mode: MrrMode = args.mode.as_deref().unwrap_or("rank-list").parse()?;
    let gold = load_gold_labels(&args.gold)?;
    let mut evaluations = Vec::new();
    for path in &args.runs {
        let name = path
            .file_stem()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        evaluations.push((name, evaluate_run(&crate::grounding::load_run(path)?, &gold, mode)?));
    }
    let rows: Vec<_> = evaluations.iter().map(|(n, e)| (n.clone(), e.mrr.clone())).collect();
    writeln!(out, "# mode = {}", mode.as_str()).map_err(io)?;
    write!(out, "{}", format_mrr_table(&rows)).map_err(io)?;
    for (name, ev) in &evaluations {
        writeln!(out, "\n{name}").map_err(io)?;
        write!(out, "{}", format_prf(&ev.selection)).map_err(io)?;
    }
    let records: Vec<_> = evaluations
        .iter()
        .map(|(name, ev)| serde_json::json!({ "run": name, "evaluation": ev }))
        .collect();
    if let Some(path) = &args.json_out {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &records)
            .map_err(|e| Error::Evaluation(e.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn cmd_eval_citations(args: EvalCitationsArgs, out: &mut impl Write) -> Result<()> {
    let io = |e| Error::io("<stdout>", e);
    for path in &args.answers {
        let records = load_answers(path)?;
        writeln!(out, "== {}", path.display()).map_err(io)?;
        write!(out, "{}", format_citation_summary(&citation_summary(&records))).map_err(io)?;
    }
    Ok(())
}

/// Runs a parsed command line. `Ok(false)` means a check failed without an
/// error (e.g. `validate --strict`).
pub fn run(cli: Cli, out: &mut impl Write) -> Result<bool> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Index(a) => cmd_index(a, &file, out).map(|_| true),
        Command::Ground(a) => cmd_ground(a, cli.jobs, &file, out).map(|_| true),
        Command::Attribute(a) => cmd_attribute(a, cli.jobs, &file, out).map(|_| true),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Eval(EvalCommand::Mrr(a)) => cmd_eval_mrr(a, out).map(|_| true),
        Command::Eval(EvalCommand::Citations(a)) => cmd_eval_citations(a, out).map(|_| true),
    }
}
