use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use intent_collide::bench::{self, BenchConfig};
use intent_collide::confusion::{
    classification_distribution, detect_collision_confusion, save_model, train_classifier, ClassificationDistribution,
    ConfusionConfig,
};
use intent_collide::corpus::{insert_corpus, load_corpus, Corpus, Format, Intent, IntentRef};
use intent_collide::coverage::{score_prepared_pairs, CoverageConfig, PairAggregation, PreparedIntent};
use intent_collide::evaluation::{run_confusion_experiment, run_coverage_experiment, ExperimentConfig, Method};
use intent_collide::graph::{annotate_kinds, connected_components, load_meta, validate_against_corpora, CollisionGraph};
use intent_collide::merge::{
    self, assemble_oos, build_from_plan, load_oos, plan_merge, BuildConfig, MergePlan, OosSet, PlanOptions,
};
use intent_collide::similarity::{load_embeddings, EmbeddingStore, NGramConfig, SimilarityKind};

use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "intent-collide", version, about = "Detect and resolve intent collisions across datasets")]
pub struct Cli {
    /// Worker threads for parallel scoring (default: one per core)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Seed for every random choice
    #[arg(long, global = true, default_value_t = 13)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert corpora to canonical JSONL, one file per dataset
    Ingest(IngestArgs),
    /// Score intent pairs for collisions
    #[command(subcommand)]
    Detect(DetectCommand),
    /// Measure detector AUC against a collision meta-dataset
    Eval(EvalArgs),
    /// Canonicalize, annotate and check a collision meta-dataset
    Graph(GraphArgs),
    /// Plan, apply and build merged corpora
    #[command(subcommand)]
    Merge(MergeCommand),
    /// In-scope accuracy and out-of-scope detection benchmark
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
enum DetectCommand {
    /// Data coverage between intents
    Coverage(CoverageArgs),
    /// Confusion of a classifier trained on one dataset
    Confusion(ConfusionArgs),
}

#[derive(Debug, Subcommand)]
enum MergeCommand {
    /// Write an editable merge plan
    Plan(PlanArgs),
    /// Materialize a merge plan as one corpus
    Apply(ApplyArgs),
    /// Build a split benchmark corpus (arbitrated or naive)
    Build(BuildArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SimArg {
    Ngram,
    Embedding,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum AggregationArg {
    Directed,
    MaxOfBoth,
    MeanOfBoth,
}

impl From<AggregationArg> for PairAggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Directed => PairAggregation::Directed,
            AggregationArg::MaxOfBoth => PairAggregation::MaxOfBoth,
            AggregationArg::MeanOfBoth => PairAggregation::MeanOfBoth,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum MethodArg {
    Coverage,
    Confusion,
}

#[derive(Debug, Args, Serialize)]
struct CorpusArgs {
    /// Corpus file, optionally prefixed with its dataset id (required for CSV)
    #[arg(long = "corpus", value_name = "[DATASET=]PATH", required = true)]
    corpora: Vec<String>,

    /// Input format (default: from the file extension)
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Args, Serialize)]
struct SimArgs {
    #[arg(long, value_enum, default_value_t = SimArg::Ngram)]
    sim: SimArg,

    /// Highest n-gram order for the n-gram similarity
    #[arg(long, default_value_t = 3)]
    ngram_order: usize,

    /// Embedding matrix file
    #[arg(long)]
    embeddings: Option<PathBuf>,

    /// JSONL index mapping matrix rows to query ids
    #[arg(long)]
    embedding_index: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long, default_value_t = 10)]
    epochs: usize,

    #[arg(long)]
    learning_rate: Option<f64>,

    #[arg(long)]
    l2: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct IngestArgs {
    #[command(flatten)]
    input: CorpusArgs,

    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CoverageArgs {
    #[command(flatten)]
    input: CorpusArgs,

    #[command(flatten)]
    sim: SimArgs,

    /// Collision threshold on the aggregated coverage (strict)
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,

    #[arg(long, value_enum, default_value_t = AggregationArg::MaxOfBoth)]
    aggregation: AggregationArg,

    /// Also score pairs of intents from the same dataset
    #[arg(long)]
    within: bool,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ConfusionArgs {
    /// Corpus the classifier is trained on
    #[arg(long, value_name = "[DATASET=]PATH")]
    train: String,

    #[command(flatten)]
    input: CorpusArgs,

    /// Collision threshold on the confusion score (strict)
    #[arg(long, default_value_t = 0.5)]
    tau: f64,

    #[command(flatten)]
    training: TrainArgs,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Collision meta-dataset JSON
    #[arg(long)]
    meta: PathBuf,

    #[command(flatten)]
    input: CorpusArgs,

    #[arg(long, value_enum, default_value_t = MethodArg::Coverage)]
    method: MethodArg,

    #[command(flatten)]
    sim: SimArgs,

    #[arg(long, value_enum, default_value_t = AggregationArg::MaxOfBoth)]
    aggregation: AggregationArg,

    #[command(flatten)]
    training: TrainArgs,

    /// Intents with fewer queries are left out
    #[arg(long, default_value_t = 10)]
    min_queries: usize,

    /// Number of non-colliding pairs to sample
    #[arg(long, default_value_t = 300)]
    n_sample: usize,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct GraphArgs {
    #[arg(long)]
    meta: PathBuf,

    #[command(flatten)]
    input: CorpusArgs,

    /// Fill in missing edge kinds from n-gram coverage
    #[arg(long)]
    annotate: bool,

    /// Coverage ratio above which an edge counts as hierarchical
    #[arg(long, default_value_t = 2.0)]
    rho: f64,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PlanOpts {
    /// Drop the broader endpoint of every hierarchical edge
    #[arg(long)]
    drop_hierarchical: bool,

    /// Rename an output intent
    #[arg(long = "rename", value_name = "DEFAULT=NEW")]
    renames: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
struct PlanArgs {
    #[arg(long)]
    meta: PathBuf,

    #[command(flatten)]
    input: CorpusArgs,

    #[command(flatten)]
    plan: PlanOpts,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ApplyArgs {
    #[arg(long)]
    plan: PathBuf,

    #[command(flatten)]
    input: CorpusArgs,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct BuildArgs {
    #[command(flatten)]
    input: CorpusArgs,

    /// Concatenate without arbitration (cap defaults to 150)
    #[arg(long, conflicts_with_all = ["meta", "plan"])]
    naive: bool,

    /// Collision meta-dataset used to plan the merge
    #[arg(long, conflicts_with = "plan")]
    meta: Option<PathBuf>,

    /// Use an existing (possibly edited) merge plan
    #[arg(long)]
    plan: Option<PathBuf>,

    #[command(flatten)]
    plan_opts: PlanOpts,

    #[arg(long, default_value_t = 50)]
    min_queries: usize,

    /// Maximum queries per intent
    #[arg(long)]
    cap: Option<usize>,

    #[arg(long, default_value_t = 0.85)]
    train_fraction: f64,

    /// Out-of-scope candidate files (JSONL with "text" and optional "source")
    #[arg(long)]
    oos: Vec<PathBuf>,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct BenchArgs {
    /// Split-tagged corpus, as written by `merge build`
    #[arg(long, conflicts_with_all = ["train", "test"], required_unless_present = "train")]
    corpus: Option<PathBuf>,

    #[arg(long, requires = "test")]
    train: Option<PathBuf>,

    #[arg(long, requires = "train")]
    test: Option<PathBuf>,

    /// Out-of-scope queries; without it only in-scope metrics are reported
    #[arg(long)]
    oos: Option<PathBuf>,

    /// Decision threshold on the top probability (inclusive)
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,

    #[command(flatten)]
    training: TrainArgs,

    /// Evaluate externally produced scores instead of training a model
    #[arg(long)]
    import_scores: Option<PathBuf>,

    /// Collision meta-dataset for the per-collision-count breakdown
    #[arg(long)]
    meta: Option<PathBuf>,

    #[arg(long)]
    out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            pool.install(|| dispatch(&cli))
        }
        None => dispatch(&cli),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Ingest(a) => ingest(a, seed),
        Command::Detect(DetectCommand::Coverage(a)) => detect_coverage(a, seed),
        Command::Detect(DetectCommand::Confusion(a)) => detect_confusion(a, seed),
        Command::Eval(a) => eval(a, seed),
        Command::Graph(a) => graph(a, seed),
        Command::Merge(MergeCommand::Plan(a)) => merge_plan(a, seed),
        Command::Merge(MergeCommand::Apply(a)) => merge_apply(a, seed),
        Command::Merge(MergeCommand::Build(a)) => merge_build(a, seed),
        Command::Bench(a) => bench_cmd(a, seed),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut w = create(path)?;
    corpus.write_jsonl(&mut w)?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

/// Splits `[DATASET=]PATH`.
fn parse_spec(spec: &str) -> (Option<&str>, &Path) {
    match spec.split_once('=') {
        Some((d, p)) if !d.is_empty() && !d.contains(['/', '\\']) => (Some(d), Path::new(p)),
        _ => (None, Path::new(spec)),
    }
}

fn load_one(spec: &str, format: Option<FormatArg>, m: &mut RunManifest) -> Result<Corpus> {
    let (dataset, path) = parse_spec(spec);
    let format = match format {
        Some(FormatArg::Jsonl) => Format::Jsonl,
        Some(FormatArg::Csv) => Format::Csv,
        None => Format::from_path(path),
    };
    m.input(path)?;
    Ok(load_corpus(path, format, dataset)?)
}

fn load_corpora(args: &CorpusArgs, m: &mut RunManifest) -> Result<Vec<Corpus>> {
    let mut out = Vec::new();
    for spec in &args.corpora {
        insert_corpus(&mut out, load_one(spec, args.format, m)?)?;
    }
    Ok(out)
}

fn load_graph(path: &Path, m: &mut RunManifest) -> Result<CollisionGraph> {
    m.input(path)?;
    Ok(load_meta(path)?)
}

fn load_store(args: &SimArgs, m: &mut RunManifest) -> Result<Option<EmbeddingStore>> {
    match (args.sim, &args.embeddings, &args.embedding_index) {
        (SimArg::Ngram, _, _) => Ok(None),
        (SimArg::Embedding, Some(matrix), Some(index)) => {
            m.input(matrix)?;
            m.input(index)?;
            Ok(Some(load_embeddings(matrix, index)?))
        }
        (SimArg::Embedding, _, _) => bail!("--sim embedding needs --embeddings and --embedding-index"),
    }
}

fn similarity<'a>(args: &SimArgs, store: Option<&'a EmbeddingStore>) -> Result<SimilarityKind<'a>> {
    Ok(match store {
        Some(s) => SimilarityKind::EmbeddingCosine(s),
        None => SimilarityKind::NGram(NGramConfig::new(args.ngram_order)?),
    })
}

fn confusion_config(t: &TrainArgs, tau: f64, seed: u64) -> ConfusionConfig {
    let d = ConfusionConfig::default();
    ConfusionConfig {
        tau,
        epochs: t.epochs,
        learning_rate: t.learning_rate.unwrap_or(d.learning_rate),
        l2: t.l2.unwrap_or(d.l2),
        seed,
    }
}

fn ingest(a: &IngestArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("ingest", seed, a)?;
    let corpora = load_corpora(&a.input, &mut m)?;
    prepare_out(&a.out)?;
    for c in &corpora {
        let path = a.out.join(format!("{}.jsonl", c.dataset_id));
        write_corpus(&path, c)?;
        m.outputs.push(path);
    }
    m.write(&a.out)
}

fn detect_coverage(a: &CoverageArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("detect coverage", seed, a)?;
    let corpora = load_corpora(&a.input, &mut m)?;
    let store = load_store(&a.sim, &mut m)?;
    let kind = similarity(&a.sim, store.as_ref())?;
    let cfg = CoverageConfig::new(kind, a.kappa, a.aggregation.into())?;

    let mut intents: Vec<&Intent> = corpora.iter().flat_map(|c| c.intents.values()).collect();
    intents.sort_by_key(|i| i.intent_ref());
    let prepared = intents
        .iter()
        .map(|i| PreparedIntent::new(i, &kind))
        .collect::<intent_collide::Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for (i, x) in prepared.iter().enumerate() {
        for y in &prepared[i + 1..] {
            if a.within || x.intent_ref.dataset != y.intent_ref.dataset {
                pairs.push((x, y));
            }
        }
    }
    let results = score_prepared_pairs(&pairs, &cfg);

    prepare_out(&a.out)?;
    let path = a.out.join("detect.json");
    write_json(&path, &results)?;
    m.outputs.push(path);
    m.write(&a.out)
}

#[derive(Serialize)]
struct ConfusionRow {
    candidate: IntentRef,
    target: IntentRef,
    score: f64,
    collide: bool,
    distribution: ClassificationDistribution,
}

#[derive(Serialize)]
struct ConfusionReport {
    trained_on: String,
    tau: f64,
    results: Vec<ConfusionRow>,
}

fn detect_confusion(a: &ConfusionArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("detect confusion", seed, a)?;
    let train = load_one(&a.train, a.input.format, &mut m)?;
    let candidates = load_corpora(&a.input, &mut m)?;
    let cfg = confusion_config(&a.training, a.tau, seed);
    cfg.validate()?;
    let model = train_classifier(&train, &cfg)?;

    let mut results = Vec::new();
    for c in candidates.iter().filter(|c| c.dataset_id != train.dataset_id) {
        for intent in c.intents.values() {
            let r = detect_collision_confusion(&model, intent, &cfg)?;
            results.push(ConfusionRow {
                candidate: intent.intent_ref(),
                target: IntentRef::new(&train.dataset_id, r.target),
                score: r.score,
                collide: r.collide,
                distribution: classification_distribution(&model, intent)?,
            });
        }
    }
    let report = ConfusionReport {
        trained_on: train.dataset_id.clone(),
        tau: a.tau,
        results,
    };

    prepare_out(&a.out)?;
    let path = a.out.join("detect.json");
    write_json(&path, &report)?;
    let (header, matrix) = (a.out.join("model.json"), a.out.join("model.emb"));
    save_model(&model, &header, &matrix)?;
    m.outputs.extend([path, header, matrix]);
    m.write(&a.out)
}

fn eval(a: &EvalArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("eval", seed, a)?;
    let graph = load_graph(&a.meta, &mut m)?;
    let corpora = load_corpora(&a.input, &mut m)?;
    let store = load_store(&a.sim, &mut m)?;
    let method = match a.method {
        MethodArg::Coverage => Method::Coverage {
            kind: similarity(&a.sim, store.as_ref())?,
            aggregation: a.aggregation.into(),
        },
        MethodArg::Confusion => Method::Confusion(confusion_config(&a.training, ConfusionConfig::default().tau, seed)),
    };
    let cfg = ExperimentConfig {
        min_queries: a.min_queries,
        n_non_collision_sample: a.n_sample,
        seed,
        method,
    };
    let report = match a.method {
        MethodArg::Coverage => run_coverage_experiment(&graph, &corpora, &cfg)?,
        MethodArg::Confusion => run_confusion_experiment(&graph, &corpora, &cfg)?,
    };

    prepare_out(&a.out)?;
    let json = a.out.join("eval.json");
    write_json(&json, &report)?;
    let csv = a.out.join("eval.csv");
    let mut w = create(&csv)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    m.outputs.extend([json, csv]);
    m.write(&a.out)
}

fn graph(a: &GraphArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("graph", seed, a)?;
    let mut graph = load_graph(&a.meta, &mut m)?;
    let corpora = load_corpora(&a.input, &mut m)?;
    if a.annotate {
        let kind = SimilarityKind::NGram(NGramConfig::default());
        graph = annotate_kinds(&graph, &corpora, &kind, a.rho)?;
    }

    prepare_out(&a.out)?;
    let meta = a.out.join("meta.json");
    fs::write(&meta, graph.to_json_string()).with_context(|| format!("writing {}", meta.display()))?;
    let components = a.out.join("components.json");
    write_json(&components, &connected_components(&graph))?;
    let validation = a.out.join("validation.json");
    write_json(&validation, &validate_against_corpora(&graph, &corpora))?;
    m.outputs.extend([meta, components, validation]);
    m.write(&a.out)
}

fn plan_options(p: &PlanOpts) -> Result<PlanOptions> {
    let mut renames = BTreeMap::new();
    for r in &p.renames {
        let Some((from, to)) = r.split_once('=') else {
            bail!("--rename expects DEFAULT=NEW, got `{r}`");
        };
        if renames.insert(from.to_string(), to.to_string()).is_some() {
            bail!("`{from}` renamed twice");
        }
    }
    Ok(PlanOptions {
        drop_hierarchical: p.drop_hierarchical,
        renames,
        ngram: NGramConfig::default(),
    })
}

fn read_plan(path: &Path, m: &mut RunManifest) -> Result<MergePlan> {
    m.input(path)?;
    let json = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MergePlan::from_json_str(&json).with_context(|| format!("parsing plan {}", path.display()))
}

fn merge_plan(a: &PlanArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("merge plan", seed, a)?;
    let graph = load_graph(&a.meta, &mut m)?;
    let corpora = load_corpora(&a.input, &mut m)?;
    let plan = plan_merge(&graph, &corpora, &plan_options(&a.plan)?)?;

    prepare_out(&a.out)?;
    let path = a.out.join("plan.json");
    fs::write(&path, plan.to_json_string()).with_context(|| format!("writing {}", path.display()))?;
    m.outputs.push(path);
    m.write(&a.out)
}

fn merge_apply(a: &ApplyArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("merge apply", seed, a)?;
    let plan = read_plan(&a.plan, &mut m)?;
    let corpora = load_corpora(&a.input, &mut m)?;
    let merged = merge::apply_merge(&plan, &corpora)?;

    prepare_out(&a.out)?;
    let path = a.out.join("merged.jsonl");
    write_corpus(&path, &merged)?;
    m.outputs.push(path);
    m.write(&a.out)
}

fn merge_build(a: &BuildArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("merge build", seed, a)?;
    let corpora = load_corpora(&a.input, &mut m)?;
    let base = if a.naive {
        BuildConfig::naive()
    } else {
        BuildConfig::arbitrated()
    };
    let cfg = BuildConfig {
        min_queries: a.min_queries,
        cap: a.cap.or(base.cap),
        train_fraction: a.train_fraction,
        seed,
    };
    cfg.validate()?;
    let opts = plan_options(&a.plan_opts)?;
    let plan = match (&a.plan, &a.meta) {
        (Some(p), _) => read_plan(p, &mut m)?,
        (None, Some(meta)) => plan_merge(&load_graph(meta, &mut m)?, &corpora, &opts)?,
        (None, None) if a.naive => plan_merge(&CollisionGraph::new(), &corpora, &opts)?,
        (None, None) => bail!("an arbitrated build needs --meta or --plan (or pass --naive)"),
    };
    let split = build_from_plan(&plan, &corpora, &cfg)?;

    prepare_out(&a.out)?;
    let corpus_path = a.out.join("corpus.jsonl");
    write_corpus(&corpus_path, &split.to_tagged_corpus())?;
    m.outputs.push(corpus_path);
    if !a.naive {
        let plan_path = a.out.join("plan.json");
        fs::write(&plan_path, plan.to_json_string())?;
        m.outputs.push(plan_path);
    }
    if !a.oos.is_empty() {
        let mut sources = Vec::new();
        for p in &a.oos {
            m.input(p)?;
            sources.extend(load_oos(p)?);
        }
        let oos = assemble_oos(&sources, &[&split.train, &split.test]);
        let oos_path = a.out.join("oos.jsonl");
        let mut w = create(&oos_path)?;
        oos.write_jsonl(&mut w)?;
        w.flush()?;
        m.outputs.push(oos_path);
    }
    m.write(&a.out)
}

fn bench_cmd(a: &BenchArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("bench", seed, a)?;
    let (train, test) = match (&a.corpus, &a.train, &a.test) {
        (Some(c), _, _) => {
            m.input(c)?;
            load_corpus(c, Format::Jsonl, None)?.partition_by_split()
        }
        (None, Some(tr), Some(te)) => {
            m.input(tr)?;
            m.input(te)?;
            (load_corpus(tr, Format::Jsonl, None)?, load_corpus(te, Format::Jsonl, None)?)
        }
        _ => bail!("bench needs --corpus or both --train and --test"),
    };
    if test.is_empty() {
        bail!("no test queries");
    }
    let oos: Option<OosSet> = match &a.oos {
        Some(p) => {
            m.input(p)?;
            Some(assemble_oos(&load_oos(p)?, &[&train, &test]))
        }
        None => None,
    };
    let defaults = BenchConfig::default();
    let cfg = BenchConfig {
        threshold: a.threshold,
        epochs: a.training.epochs,
        learning_rate: a.training.learning_rate.unwrap_or(defaults.learning_rate),
        l2: a.training.l2.unwrap_or(defaults.l2),
        seed,
    };
    cfg.validate()?;

    let mut report = match &a.import_scores {
        Some(p) => {
            m.input(p)?;
            let scores = bench::load_scores(p)?;
            let (t, o) = bench::scores_from_external(&scores, &test, oos.as_ref())?;
            bench::build_report(&t, o.as_deref(), cfg.threshold)?
        }
        None => bench::run_bench(&train, &test, oos.as_ref(), &cfg)?,
    };
    if let Some(meta) = &a.meta {
        let graph = load_graph(meta, &mut m)?;
        let names = bench::provenance_map(&test);
        report.per_collision_count = Some(bench::accuracy_by_collision_count(
            &report.per_intent_accuracy,
            &graph,
            &names,
        ));
    }

    prepare_out(&a.out)?;
    let path = a.out.join("bench.json");
    write_json(&path, &report)?;
    m.outputs.push(path);
    m.write(&a.out)
}
