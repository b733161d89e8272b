//! Command-line front end: `score`, `combine`, `evaluate`, `sweep`, `fixture`.
//!
//! Exit codes: 0 on success, 1 on data errors, 2 on usage errors. Every
//! output file is written to a temporary sibling and renamed into place.

pub mod config;
pub mod prediction;

use std::{
    ffi::OsString,
    fs,
    io::Write as _,
    path::{Path, PathBuf},
};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::warn;

use crate::{
    dataset::{self, BehaviorSet, Catalog},
    ensemble::{self, FusionSpec, Member, Transform},
    fixture::{self, FixtureSizes},
    learners::{self, LearnerKind, ScoreTable},
    metrics::{self, MetricReport, Objective},
};
use config::RunConfig;
use prediction::PredictionLine;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "mind-ensemble",
    version,
    about = "Offline news-recommendation ensembles over MIND-format logs"
)]
pub struct Cli {
    /// Run config (key = value lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for per-impression work.
    #[arg(long, global = true, value_parser = config::parse_workers)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every impression with one configured learner.
    Score {
        #[arg(long)]
        learner: String,
    },
    /// Fuse member score files into a prediction file.
    Combine(FusionArgs),
    /// Compute AUC, MRR, nDCG@5 and nDCG@10 for a prediction or score file.
    Evaluate {
        /// Prediction file or score TSV (default: <out>/prediction.txt).
        input: Option<PathBuf>,
        /// Also write per-impression values.
        #[arg(long)]
        per_impression: bool,
    },
    /// Grid-search fusion weights on the configured behaviors.
    Sweep {
        #[command(flatten)]
        fusion: FusionArgs,
        #[arg(long, value_parser = parse_objective)]
        objective: Option<Objective>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Write a synthetic dataset with planted content and cohort signals.
    Fixture {
        #[arg(long, default_value_t = 50)]
        users: usize,
        #[arg(long, default_value_t = 200)]
        articles: usize,
        #[arg(long, default_value_t = 500)]
        impressions: usize,
    },
}

#[derive(Debug, Args)]
pub struct FusionArgs {
    /// Member learners, comma-separated (default: fusion.members from the config).
    #[arg(long, value_delimiter = ',')]
    pub members: Option<Vec<String>>,
    /// Member weights in member order.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_transform)]
    pub transform: Option<Transform>,
    /// File with fusion.members / fusion.transform lines, e.g. a sweep result.
    #[arg(long)]
    pub fusion: Option<PathBuf>,
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse()
}

fn parse_transform(s: &str) -> Result<Transform, String> {
    s.parse()
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(usage)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(w) = cli.workers {
        config.workers = Some(w);
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| CliError::Data(e.into()))?;
    pool.install(|| dispatch(cli.command, config))
}

fn dispatch(command: Command, config: RunConfig) -> CliResult<()> {
    match command {
        Command::Score { learner } => cmd_score(&config, &learner),
        Command::Combine(fusion) => cmd_combine(&config, &fusion),
        Command::Evaluate { input, per_impression } => cmd_evaluate(&config, input.as_deref(), per_impression),
        Command::Sweep {
            fusion,
            objective,
            step,
        } => cmd_sweep(&config, &fusion, objective, step),
        Command::Fixture {
            users,
            articles,
            impressions,
        } => cmd_fixture(&config, users, articles, impressions),
    }
}

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn scores_path(config: &RunConfig, learner: &str) -> PathBuf {
    config.out.join("scores").join(format!("{learner}.tsv"))
}

fn default_prediction_path(config: &RunConfig) -> PathBuf {
    config.out.join("prediction.txt")
}

fn check_inputs(config: &RunConfig) -> CliResult<()> {
    if config.behaviors.is_none() {
        return Err(usage("no behaviors file configured (set `behaviors` in --config)"));
    }
    let missing = config.missing_paths();
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
        return Err(CliError::Data(anyhow!("missing input files: {}", list.join(", "))));
    }
    Ok(())
}

fn load_behaviors(config: &RunConfig) -> CliResult<BehaviorSet> {
    check_inputs(config)?;
    let path = config.behaviors.as_ref().expect("checked above");
    Ok(dataset::parse_behaviors(path).context("reading behaviors")?)
}

fn load_catalog(config: &RunConfig, behaviors: &BehaviorSet) -> CliResult<Catalog> {
    let path = config
        .news
        .as_ref()
        .ok_or_else(|| usage("no news file configured (set `news` in --config)"))?;
    let catalog = dataset::parse_news(path).context("reading news")?;
    let report = dataset::validate(&catalog, behaviors);
    if !report.missing_ids.is_empty() {
        warn!(
            "{} article ids referenced by impressions are missing from the catalog",
            report.missing_ids.len()
        );
    }
    if !report.no_clicks.is_empty() {
        warn!(
            "{} impressions have no clicks and are excluded from every metric",
            report.no_clicks.len()
        );
    }
    Ok(catalog)
}

fn cmd_score(config: &RunConfig, learner: &str) -> CliResult<()> {
    let spec = config.learner(learner).ok_or_else(|| {
        usage(format!(
            "unknown learner {learner:?}; configured learners: {}",
            config.learner_names().join(", ")
        ))
    })?;
    let behaviors = load_behaviors(config)?;
    let catalog = match spec.kind {
        LearnerKind::Tfidf { .. } => load_catalog(config, &behaviors)?,
        _ => Catalog::default(),
    };
    let model = spec
        .build(&catalog, &behaviors, config.seed)
        .with_context(|| format!("building learner {learner}"))?;
    let (table, report) = learners::score_behaviors(model.as_ref(), &behaviors).context("scoring")?;

    let path = scores_path(config, learner);
    write_atomic(&path, &table.to_tsv())?;
    write_atomic(&path.with_extension("report.txt"), &report.to_string())?;
    print!("{report}");
    println!("wrote {}", path.display());
    Ok(())
}

/// Scores of `name`: its score file under `<out>/scores`, or the configured
/// external file.
fn load_member_scores(config: &RunConfig, name: &str, behaviors: &BehaviorSet) -> CliResult<ScoreTable> {
    let path = scores_path(config, name);
    let source = if path.exists() {
        path
    } else {
        match config.learner(name).map(|s| &s.kind) {
            Some(LearnerKind::External { path }) => path.clone(),
            Some(_) => {
                return Err(CliError::Data(anyhow!(
                    "no score file for member {name} at {}; run `score --learner {name}` first",
                    path.display()
                )))
            }
            None => {
                return Err(usage(format!(
                    "unknown member {name:?}; configured learners: {}",
                    config.learner_names().join(", ")
                )))
            }
        }
    };
    Ok(learners::load_external_scores(&source, name, behaviors)
        .with_context(|| format!("loading scores of member {name}"))?)
}

fn resolve_members(config: &RunConfig, args: &FusionArgs) -> CliResult<(Vec<Member>, Transform)> {
    let mut members = config.fusion_members.clone();
    let mut transform = config.transform;
    if let Some(path) = &args.fusion {
        let mut overlay = config.clone();
        overlay
            .apply(
                &fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?,
                path.parent().unwrap_or(Path::new(".")),
            )
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        members = overlay.fusion_members;
        transform = overlay.transform;
    }
    if let Some(names) = &args.members {
        members = names
            .iter()
            .map(|n| Member {
                name: n.trim().to_owned(),
                weight: 1.0,
            })
            .collect();
    }
    if let Some(weights) = &args.weights {
        if weights.len() != members.len() {
            return Err(usage(format!(
                "{} weights given for {} members",
                weights.len(),
                members.len()
            )));
        }
        for (m, &w) in members.iter_mut().zip(weights) {
            m.weight = w;
        }
    }
    if let Some(t) = args.transform {
        transform = t;
    }
    if members.is_empty() {
        return Err(usage(
            "no fusion members (use --members or fusion.members in the config)",
        ));
    }
    Ok((members, transform))
}

fn cmd_combine(config: &RunConfig, args: &FusionArgs) -> CliResult<()> {
    let (members, transform) = resolve_members(config, args)?;
    let spec = FusionSpec::new(members, transform).map_err(|e| usage(e.to_string()))?;
    let behaviors = load_behaviors(config)?;
    let tables = spec
        .members()
        .iter()
        .map(|m| load_member_scores(config, &m.name, &behaviors))
        .collect::<CliResult<Vec<_>>>()?;
    let lists = ensemble::fuse_tables(&tables, &behaviors, &spec).context("fusing")?;
    let lines = prediction::from_ranked_lists(&lists, &behaviors).map_err(|e| anyhow!(e))?;

    let path = default_prediction_path(config);
    write_atomic(&path, &prediction::render(&lines))?;
    println!(
        "fused {} impressions with {} ({}) into {}",
        lines.len(),
        spec.members_string(),
        spec.transform(),
        path.display()
    );
    Ok(())
}

fn is_score_file(text: &str) -> bool {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.contains('\t'))
}

fn cmd_evaluate(config: &RunConfig, input: Option<&Path>, per_impression: bool) -> CliResult<()> {
    let input = input.map_or_else(|| default_prediction_path(config), Path::to_path_buf);
    let behaviors = load_behaviors(config)?;
    let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let label = input
        .file_stem()
        .map_or_else(|| "model".to_owned(), |s| s.to_string_lossy().into_owned());

    let report: MetricReport = if is_score_file(&text) {
        let table = learners::parse_external_scores(&text, &input.display().to_string(), &label, &behaviors)
            .context("reading score file")?;
        metrics::evaluate_scores(&table, &behaviors).context("evaluating")?
    } else {
        let lines: Vec<PredictionLine> = prediction::parse(&text).map_err(|e| anyhow!("{}: {e}", input.display()))?;
        let pairs: Vec<(&str, &[usize])> = lines
            .iter()
            .map(|l| (l.impression_id.as_str(), l.ranks.as_slice()))
            .collect();
        metrics::evaluate_ranks(&pairs, &behaviors).with_context(|| format!("evaluating {}", input.display()))?
    };

    let dir = config.out.join("eval");
    let text_report = report.render_text(&label);
    write_atomic(&dir.join(format!("{label}.txt")), &text_report)?;
    write_atomic(&dir.join(format!("{label}.kv")), &report.render_kv(&label))?;
    if per_impression {
        write_atomic(
            &dir.join(format!("{label}.per_impression.tsv")),
            &report.render_per_impression(),
        )?;
    }
    print!("{text_report}");
    Ok(())
}

fn cmd_sweep(config: &RunConfig, args: &FusionArgs, objective: Option<Objective>, step: Option<f64>) -> CliResult<()> {
    let step = step.unwrap_or(config.step);
    if !(step > 0.0 && step <= 1.0) {
        return Err(usage(format!("--step must lie in (0, 1], got {step}")));
    }
    ensemble::simplex_grid(1, step).map_err(|e| usage(e.to_string()))?;
    let objective = objective.unwrap_or(config.objective);
    let (members, transform) = resolve_members(config, args)?;
    if members.len() < 2 {
        return Err(usage(format!(
            "sweep needs at least two members, got {}",
            members.len()
        )));
    }
    let names: Vec<String> = members.into_iter().map(|m| m.name).collect();
    FusionSpec::uniform(&names, transform).map_err(|e| usage(e.to_string()))?;

    let behaviors = load_behaviors(config)?;
    let tables = names
        .iter()
        .map(|n| load_member_scores(config, n, &behaviors))
        .collect::<CliResult<Vec<_>>>()?;
    let result =
        ensemble::sweep_weights(&tables, &names, &behaviors, objective, transform, step).context("sweeping weights")?;

    let table = result.render();
    write_atomic(&config.out.join("sweep.txt"), &table)?;
    let best = format!(
        "# best {} = {:.4} over {} grid points on {}\nfusion.members = {}\nfusion.transform = {}\n",
        result.objective,
        result.best_value,
        result.grid.len(),
        config
            .behaviors
            .as_deref()
            .and_then(Path::file_name)
            .map_or_else(|| behaviors.source().to_owned(), |n| n.to_string_lossy().into_owned()),
        result.best.members_string(),
        result.best.transform()
    );
    write_atomic(&config.out.join("best_fusion.conf"), &best)?;
    print!("{table}");
    Ok(())
}

fn cmd_fixture(config: &RunConfig, users: usize, articles: usize, impressions: usize) -> CliResult<()> {
    if users == 0 || articles == 0 || impressions == 0 {
        return Err(usage("fixture sizes must be positive"));
    }
    let f = fixture::generate(
        FixtureSizes {
            users,
            articles,
            impressions,
        },
        config.seed,
    );
    let out = &config.out;
    write_atomic(&out.join("news.tsv"), &f.catalog.to_tsv())?;
    write_atomic(&out.join("behaviors.tsv"), &f.behaviors.to_tsv())?;
    write_atomic(
        &out.join(format!("{}_scores.tsv", fixture::COLLAB_LEARNER)),
        &f.collaborative.to_tsv(),
    )?;
    write_atomic(&out.join("embeddings.txt"), &f.embeddings.to_text())?;
    let run_conf = format!(
        "# synthetic fixture, seed {seed}\n\
         news = news.tsv\n\
         behaviors = behaviors.tsv\n\
         out = run\n\
         seed = {seed}\n\
         learner.tfidf = tfidf\n\
         learner.tfidf_max = tfidf aggregation=max\n\
         learner.embedding = embedding path=embeddings.txt\n\
         learner.{collab} = external path={collab}_scores.tsv\n\
         learner.random = random\n\
         fusion.members = tfidf:1,{collab}:1\n\
         fusion.transform = reciprocal_rank\n",
        seed = config.seed,
        collab = fixture::COLLAB_LEARNER,
    );
    write_atomic(&out.join("run.conf"), &run_conf)?;
    println!(
        "wrote {} articles, {} impressions to {}",
        f.catalog.len(),
        f.behaviors.len(),
        out.display()
    );
    Ok(())
}
