use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use lcr::baselines::{
    catalog_matrix, cooccurrence_matrix, nmf, select_gamma, truncated_svd, ContentScorer, CooccurrenceMode,
    CooccurrenceOptions, FactorPair, LsiModel, MixedModel, MixedScorer, GAMMA_GRID, NMF_ITERATIONS,
    SVD_POWER_ITERATIONS,
};
use lcr::config::{Config, TrainSettings};
use lcr::data::{ingest, load_features, ExtractConfig, FeatureNormalization, KeyIndex, SplitConfig};
use lcr::eval::{render_table, DEFAULT_KS};
use lcr::grid::{build_model, experiment_grid, DataShape, GridSpec};
use lcr::persist::{load_model, save_model, SavedModel};
use lcr::{
    recall_at_k, train, Dataset, Error, EvalReport, FeatureCatalog, FeatureContext, LcrScorer, LossKind,
    Representation, Scorer, Task, Triple, Variant,
};

#[derive(Parser)]
#[command(name = "lcr", version, about = "Train, evaluate and query latent collaborative retrieval models")]
struct Cli {
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a listening-event TSV into a split dataset cache.
    Ingest(IngestArgs),
    /// Train a model on the train split, early-stopping on validation.
    Train(TrainArgs),
    /// Recall@k of a saved model on one split.
    Evaluate(EvaluateArgs),
    /// Top-k items for a (query, user) pair.
    Recommend(RecommendArgs),
    /// Fit and evaluate a baseline.
    Baseline(BaselineArgs),
    /// Hyperparameter sweep from a config file; the winner is evaluated on test.
    Grid(GridArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Tab-separated events: user, timestamp, artist id, artist name[, track id, track name].
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 3600)]
    window_seconds: i64,
    #[arg(long, default_value_t = 5)]
    split_modulus: i64,
    #[arg(long, default_value_t = 4)]
    test_residue: i64,
    /// Day residue held out for validation [default: test residue + 1].
    #[arg(long, conflicts_with = "no_validation")]
    validation_residue: Option<i64>,
    #[arg(long)]
    no_validation: bool,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    /// Use tracks rather than artists as queries and items.
    #[arg(long)]
    track_level: bool,
    /// Skip pairs whose two plays are the same artist (or track).
    #[arg(long)]
    drop_self_transitions: bool,
}

/// Item feature file shared by several commands.
#[derive(Args, Clone)]
struct FeatureArgs {
    /// Feature file (`dim <n>` header, then `key idx:val ...` lines).
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Normalization::None)]
    normalize: Normalization,
}

#[derive(Clone, Copy, ValueEnum)]
enum Normalization {
    None,
    L1,
    L2,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Warp,
    Auc,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    Identity,
    Diagonal,
    Lowrank,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Qui,
    Qi,
    Ui,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReprArg {
    Index,
    Features,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(short, long)]
    data: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// History CSV [default: <output>.history.csv].
    #[arg(long)]
    history: Option<PathBuf>,
    /// Config file; its [train] section sits below command-line flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    dim: Option<usize>,
    /// Rank of the low-rank factor [default: ceil(dim / 4)].
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Norm-ball radius of embedding columns.
    #[arg(long = "C")]
    constraint: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, value_enum)]
    query_repr: Option<ReprArg>,
    #[arg(long, value_enum)]
    item_repr: Option<ReprArg>,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS)]
    ks: Vec<usize>,
    /// Scoring terms [default: the model's own].
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(short, long)]
    model: PathBuf,
    /// Dataset whose vocabulary names the ids.
    #[arg(short, long)]
    data: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long)]
    user: String,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineKind {
    Svd,
    Nmf,
    Mixed,
    Cosine,
    Lsi,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(value_enum)]
    kind: BaselineKind,
    #[arg(short, long)]
    data: PathBuf,
    /// Save the fitted model (svd, nmf, mixed, lsi).
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, value_delimiter = ',', default_values_t = GAMMA_GRID)]
    gamma_grid: Vec<f64>,
    /// gamma is chosen on validation recall@k.
    #[arg(long, default_value_t = 30)]
    selection_k: usize,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS)]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = NMF_ITERATIONS)]
    iterations: usize,
    #[arg(long)]
    log_damping: bool,
    #[arg(long)]
    row_normalize: bool,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Args)]
struct GridArgs {
    /// Config with [train] defaults and [grid] comma lists.
    #[arg(long)]
    config: PathBuf,
    #[arg(short, long)]
    data: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS)]
    ks: Vec<usize>,
    #[command(flatten)]
    features: FeatureArgs,
}

/// Exit 1 for usage problems, 2 for everything the data or files caused.
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(msg) => Failure::Usage(msg),
            e => Failure::Data(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(Error::Io(e))
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Recommend(a) => cmd_recommend(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Grid(a) => cmd_grid(a),
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Data(Error::InvalidInput(format!("{}: {e}", path.display()))))
}

fn emit(text: &str) -> CliResult {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> CliResult {
    let extract = ExtractConfig {
        window_seconds: a.window_seconds,
        keep_self_transitions: !a.drop_self_transitions,
        track_level: a.track_level,
    };
    if a.window_seconds < 0 {
        return Err(Failure::Usage("--window-seconds must be non-negative".into()));
    }
    let mut split = SplitConfig::new(a.split_modulus, a.test_residue);
    if a.no_validation {
        split.validation_residue = None;
    } else if a.validation_residue.is_some() {
        split.validation_residue = a.validation_residue;
    }
    split.validate()?;
    let (data, report) = ingest(open(&a.input)?, &extract, &split, a.min_count)?;
    if report.parse.malformed() > 0 {
        warn!(
            "skipped {} malformed lines ({} too few fields, {} bad timestamps, {} empty keys)",
            report.parse.malformed(),
            report.parse.too_few_fields,
            report.parse.bad_timestamp,
            report.parse.empty_key
        );
    }
    data.save(&a.output)?;
    let s = &data.split;
    emit(&format!(
        "lines={} parsed={} triples={} dropped_rare={} users={} items={} train={} validation={} test={}\nsplit={}\n",
        report.parse.lines,
        report.parse.parsed,
        report.triples,
        report.dropped_rare,
        data.vocab.num_users(),
        data.vocab.num_items(),
        s.train.len(),
        s.validation.len(),
        s.test.len(),
        s.provenance
    ))
}

fn loss_kind(l: LossArg) -> LossKind {
    match l {
        LossArg::Warp => LossKind::Warp,
        LossArg::Auc => LossKind::Auc,
    }
}

fn variant(v: VariantArg) -> Variant {
    match v {
        VariantArg::Full => Variant::Full,
        VariantArg::Identity => Variant::Identity,
        VariantArg::Diagonal => Variant::Diagonal,
        VariantArg::Lowrank => Variant::LowRankPlusDiag,
    }
}

fn task(m: ModeArg) -> Task {
    match m {
        ModeArg::Qui => Task::QueryUserItem,
        ModeArg::Qi => Task::QueryItem,
        ModeArg::Ui => Task::UserItem,
    }
}

fn representation(r: ReprArg) -> Representation {
    match r {
        ReprArg::Index => Representation::Index,
        ReprArg::Features => Representation::Features,
        ReprArg::Both => Representation::Both,
    }
}

fn split_of(data: &Dataset, s: SplitArg) -> &[Triple] {
    match s {
        SplitArg::Train => &data.split.train,
        SplitArg::Validation => &data.split.validation,
        SplitArg::Test => &data.split.test,
    }
}

fn split_name(s: SplitArg) -> &'static str {
    match s {
        SplitArg::Train => "train",
        SplitArg::Validation => "validation",
        SplitArg::Test => "test",
    }
}

/// Item and query catalogs read from one feature file.
#[derive(Default)]
struct Catalogs {
    items: Option<FeatureCatalog>,
    queries: Option<FeatureCatalog>,
}

impl Catalogs {
    fn load(args: &FeatureArgs, data: &Dataset) -> CliResult<Catalogs> {
        let Some(path) = &args.features else {
            return Ok(Catalogs::default());
        };
        let norm = match args.normalize {
            Normalization::None => FeatureNormalization::None,
            Normalization::L1 => FeatureNormalization::L1,
            Normalization::L2 => FeatureNormalization::L2,
        };
        let read = |index: &KeyIndex| -> CliResult<FeatureCatalog> {
            let (catalog, report) = load_features(open(path)?, index, norm)?;
            if report.malformed > 0 {
                warn!("{}: skipped {} malformed feature lines", path.display(), report.malformed);
            }
            info!("{}: {} of {} feature rows matched the vocabulary", path.display(), report.loaded, report.lines);
            Ok(catalog)
        };
        let items = read(&data.vocab.items)?;
        // queries and items share a vocabulary for ingested data
        let queries = if data.vocab.queries == data.vocab.items { items.clone() } else { read(&data.vocab.queries)? };
        Ok(Catalogs { items: Some(items), queries: Some(queries) })
    }

    fn ctx(&self) -> FeatureContext<'_> {
        FeatureContext { items: self.items.as_ref(), queries: self.queries.as_ref() }
    }

    fn require(&self, what: &str) -> CliResult<(&FeatureCatalog, &FeatureCatalog)> {
        match (&self.queries, &self.items) {
            (Some(q), Some(i)) => Ok((q, i)),
            _ => Err(Failure::Usage(format!("{what} needs --features"))),
        }
    }
}

fn shape_of(data: &Dataset, settings: &TrainSettings, catalogs: &Catalogs) -> CliResult<DataShape> {
    let mut shape = DataShape::new(data.vocab.num_queries(), data.vocab.num_users(), data.vocab.num_items());
    if settings.layout.item.uses_features() {
        shape.item_feature_dim = catalogs.items.as_ref().map(FeatureCatalog::dim).ok_or_else(|| {
            Failure::Usage("item representation uses features but no --features file was given".into())
        })?;
    }
    if settings.layout.query.uses_features() {
        shape.query_feature_dim = catalogs.queries.as_ref().map(FeatureCatalog::dim).ok_or_else(|| {
            Failure::Usage("query representation uses features but no --features file was given".into())
        })?;
    }
    Ok(shape)
}

fn load_settings(path: Option<&Path>) -> CliResult<TrainSettings> {
    match path {
        Some(p) => Ok(TrainSettings::from_config(&Config::load(p)?)?),
        None => Ok(TrainSettings::default()),
    }
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let mut s = load_settings(a.config.as_deref())?;
    if let Some(v) = a.loss {
        s.train.loss = loss_kind(v);
    }
    if let Some(v) = a.variant {
        s.variant = variant(v);
    }
    if let Some(v) = a.mode {
        s.task = task(v);
    }
    if let Some(v) = a.dim {
        s.dim = v;
    }
    if let Some(v) = a.rank {
        s.lowrank_rank = v;
    }
    if let Some(v) = a.lr {
        s.train.learning_rate = v;
    }
    if let Some(v) = a.constraint {
        s.train.constraint = v;
    }
    if let Some(v) = a.epochs {
        s.train.epochs = v;
    }
    if let Some(v) = a.seed {
        s.train.seed = v;
    }
    if let Some(v) = a.patience {
        s.train.patience = v;
    }
    if let Some(v) = a.query_repr {
        s.layout.query = representation(v);
    }
    if let Some(v) = a.item_repr {
        s.layout.item = representation(v);
    }

    let data = Dataset::load(&a.data)?;
    if data.split.train.is_empty() {
        return Err(Failure::Data(Error::EmptyDataset("train split")));
    }
    let catalogs = Catalogs::load(&a.features, &data)?;
    let shape = shape_of(&data, &s, &catalogs)?;
    let model = build_model(&s, &shape)?;
    info!(
        "training {} ({}) dim={} on {} triples, {} validation",
        s.variant.name(),
        s.train.loss.name(),
        s.dim,
        data.split.train.len(),
        data.split.validation.len()
    );
    let (model, history) = train(model, &data.split.train, &data.split.validation, catalogs.ctx(), &s.train)?;
    save_model(&a.output, &model)?;
    let history_path = a.history.unwrap_or_else(|| {
        let mut p = a.output.clone().into_os_string();
        p.push(".history.csv");
        p.into()
    });
    std::fs::write(&history_path, history.to_csv())?;
    let mut summary = format!("steps={} stopped_early={}", history.total_steps, history.stopped_early);
    if let Some(best) = &history.best {
        summary.push_str(&format!(" best_step={} validation_recall@{}={}", best.step, best.k, best.recall));
    }
    emit(&format!("{summary}\nmodel={}\nhistory={}\n", a.output.display(), history_path.display()))
}

/// A loaded model behind the common scorer interface.
fn scorer_for<'a>(
    saved: &'a SavedModel,
    mode: Option<ModeArg>,
    catalogs: &'a Catalogs,
) -> CliResult<Box<dyn Scorer + 'a>> {
    Ok(match saved {
        SavedModel::Lcr(m) => {
            let scorer = LcrScorer::new(m, catalogs.ctx())?;
            Box::new(match mode {
                Some(mode) => scorer.with_task(task(mode)),
                None => scorer,
            })
        }
        SavedModel::Mixed(m) => {
            m.validate()?;
            Box::new(MixedScorer::new(m, mode.map_or(Task::QueryUserItem, task)))
        }
        SavedModel::Lsi(m) => {
            let (q, i) = catalogs.require("an LSI model")?;
            Box::new(ContentScorer::lsi(m, q, i)?)
        }
    })
}

/// Ids of a model must cover the dataset's vocabulary.
fn check_coverage(saved: &SavedModel, data: &Dataset, catalogs: &Catalogs) -> CliResult {
    let (q, u, d) = match saved {
        SavedModel::Lcr(m) => (m.dims.num_queries, m.dims.num_users, m.dims.num_items),
        SavedModel::Mixed(m) => (m.qi.left.ncols(), m.ui.left.ncols(), m.num_items()),
        SavedModel::Lsi(_) => {
            let i = catalogs.items.as_ref().map_or(0, FeatureCatalog::num_entities);
            let q = catalogs.queries.as_ref().map_or(0, FeatureCatalog::num_entities);
            (q, data.vocab.num_users(), i)
        }
    };
    let v = &data.vocab;
    if (q, u, d) != (v.num_queries(), v.num_users(), v.num_items()) {
        return Err(Failure::Data(Error::Inconsistent(format!(
            "model covers {q} queries, {u} users, {d} items; dataset has {}, {}, {}",
            v.num_queries(),
            v.num_users(),
            v.num_items()
        ))));
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult {
    let saved = load_model(&a.model)?;
    let data = Dataset::load(&a.data)?;
    let catalogs = Catalogs::load(&a.features, &data)?;
    let scorer = scorer_for(&saved, a.mode, &catalogs)?;
    check_coverage(&saved, &data, &catalogs)?;
    let test = split_of(&data, a.split);
    if test.is_empty() {
        return Err(Failure::Data(Error::EmptyDataset("evaluation split")));
    }
    let report = recall_at_k(scorer.as_ref(), test, &a.ks)?;
    info!("evaluated {} triples in {:.3}s", report.num_triples, report.seconds);
    emit(&format_reports(&[report], split_name(a.split)))
}

/// Table followed by `key=value` records; nothing time-dependent.
fn format_reports(reports: &[EvalReport], split: &str) -> String {
    let mut out = render_table(reports);
    out.push('\n');
    for r in reports {
        for line in r.to_records().lines() {
            out.push_str(&format!("split={split} {line}\n"));
        }
    }
    out
}

fn cmd_recommend(a: RecommendArgs) -> CliResult {
    let saved = load_model(&a.model)?;
    let data = Dataset::load(&a.data)?;
    let catalogs = Catalogs::load(&a.features, &data)?;
    let scorer = scorer_for(&saved, a.mode, &catalogs)?;
    check_coverage(&saved, &data, &catalogs)?;
    let lookup = |index: &KeyIndex, key: &str, what: &str| {
        index
            .id(key)
            .map(|id| id as usize)
            .ok_or_else(|| Failure::Data(Error::InvalidInput(format!("unknown {what} `{key}`"))))
    };
    let q = lookup(&data.vocab.queries, &a.query, "query")?;
    let u = lookup(&data.vocab.users, &a.user, "user")?;
    let scores = scorer.score_all(q, u)?.0;
    let mut k = a.k;
    if k > scores.len() {
        warn!("k = {k} exceeds the {} items; returning all of them", scores.len());
        k = scores.len();
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]).then(x.cmp(&y)));
    let mut out = String::new();
    for (rank, &d) in order[..k].iter().enumerate() {
        let key = data.vocab.items.key(d as u32).unwrap_or("?");
        out.push_str(&format!("{}\t{key}\t{}\n", rank + 1, scores[d]));
    }
    emit(&out)
}

fn cmd_baseline(a: BaselineArgs) -> CliResult {
    let data = Dataset::load(&a.data)?;
    let catalogs = Catalogs::load(&a.features, &data)?;
    let test = split_of(&data, a.split);
    if test.is_empty() {
        return Err(Failure::Data(Error::EmptyDataset("evaluation split")));
    }
    let (reports, saved) = match a.kind {
        BaselineKind::Cosine => {
            let (q, i) = catalogs.require("the cosine baseline")?;
            if a.output.is_some() {
                warn!("the cosine baseline has no parameters; nothing is saved");
            }
            (vec![recall_at_k(&ContentScorer::cosine(q, i)?, test, &a.ks)?], None)
        }
        BaselineKind::Lsi => {
            let (q, i) = catalogs.require("the LSI baseline")?;
            let lsi = LsiModel::fit(&catalog_matrix(i), a.dim, a.seed, SVD_POWER_ITERATIONS)?;
            let report = recall_at_k(&ContentScorer::lsi(&lsi, q, i)?, test, &a.ks)?;
            (vec![report], Some(SavedModel::Lsi(lsi)))
        }
        kind => factorization_baselines(&a, kind, &data, test)?,
    };
    if let (Some(path), Some(model)) = (&a.output, &saved) {
        save_model(path, model.as_ref())?;
        info!("saved {} model to {}", model.kind(), path.display());
    }
    emit(&format_reports(&reports, split_name(a.split)))
}

fn factorization_baselines(
    a: &BaselineArgs,
    kind: BaselineKind,
    data: &Dataset,
    test: &[Triple],
) -> CliResult<(Vec<EvalReport>, Option<SavedModel>)> {
    let v = &data.vocab;
    let options = CooccurrenceOptions { log_damping: a.log_damping, row_normalize: a.row_normalize };
    let train = &data.split.train;
    let qi = cooccurrence_matrix(train, CooccurrenceMode::QueryItem, v.num_queries(), v.num_items(), options)?;
    let ui = cooccurrence_matrix(train, CooccurrenceMode::UserItem, v.num_users(), v.num_items(), options)?;
    let fit = |method: BaselineKind| -> CliResult<(FactorPair, FactorPair)> {
        Ok(match method {
            BaselineKind::Nmf => (nmf(&qi, a.dim, a.iterations, a.seed)?.factors, nmf(&ui, a.dim, a.iterations, a.seed)?.factors),
            _ => (
                truncated_svd(&qi, a.dim, a.seed, SVD_POWER_ITERATIONS)?.factor_pair(),
                truncated_svd(&ui, a.dim, a.seed, SVD_POWER_ITERATIONS)?.factor_pair(),
            ),
        })
    };
    let methods: &[BaselineKind] = match kind {
        BaselineKind::Mixed => &[BaselineKind::Svd, BaselineKind::Nmf],
        BaselineKind::Nmf => &[BaselineKind::Nmf],
        _ => &[BaselineKind::Svd],
    };
    let mut reports = Vec::new();
    let mut best: Option<(f64, MixedModel)> = None;
    for &method in methods {
        let name = if method == BaselineKind::Nmf { "nmf" } else { "svd" };
        let (fq, fu) = fit(method)?;
        let (gamma, curve) = select_gamma(&fq, &fu, &data.split.validation, &a.gamma_grid, a.selection_k)?;
        for (g, r) in &curve {
            info!("{name} gamma={g}: validation recall@{} = {r:.4}", a.selection_k);
        }
        let selected = curve.iter().find(|c| c.0 == gamma).map_or(0.0, |c| c.1);
        let model = MixedModel { qi: fq, ui: fu, gamma };
        for (task, label) in [
            (Task::QueryItem, format!("{name}-qi")),
            (Task::UserItem, format!("{name}-ui")),
            (Task::QueryUserItem, format!("{name}-mixed(gamma={gamma})")),
        ] {
            reports.push(recall_at_k(&MixedScorer::new(&model, task).named(label), test, &a.ks)?);
        }
        if best.as_ref().is_none_or(|(r, _)| selected > *r) {
            best = Some((selected, model));
        }
    }
    Ok((reports, best.map(|(_, m)| SavedModel::Mixed(m))))
}

fn cmd_grid(a: GridArgs) -> CliResult {
    let config = Config::load(&a.config)?;
    let base = TrainSettings::from_config(&config)?;
    let spec = GridSpec::from_config(&config, &base)?;
    let data = Dataset::load(&a.data)?;
    let catalogs = Catalogs::load(&a.features, &data)?;
    let shape = shape_of(&data, &base, &catalogs)?;
    let s = &data.split;
    let outcome = experiment_grid(&base, &spec, &shape, &s.train, &s.validation, &s.test, &a.ks, catalogs.ctx())?;
    if let Some(path) = &a.output {
        save_model(path, &outcome.model)?;
    }
    let mut out = outcome.render_table();
    if let Some(report) = &outcome.test {
        out.push('\n');
        out.push_str(&format_reports(std::slice::from_ref(report), "test"));
    }
    emit(&out)
}
