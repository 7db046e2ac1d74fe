use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use lpaudit::audit::{load_options, load_truth, run_audit, train_weights_from, AuditError, Resources};
use lpaudit::baseline::HeuristicId;
use lpaudit::config::{AuditConfig, CacheScope, ConfigError, Stages};
use lpaudit::ingest::load_dataset;
use lpaudit::model::SourceApp;
use lpaudit::score::{read_predictions, score};
use lpaudit::synthgen::{generate_corpus, CorpusSpec};

#[derive(Parser)]
#[command(name = "lpaudit", version, about = "Audit geotagged post timelines for location leakage")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infer key and sensitive locations and write a JSONL report.
    Audit(AuditArgs),
    /// Compare a report against ground truth.
    Score {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Print the table as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic corpus with its geocode, venue and time-zone
    /// databases and ground truth.
    Synth {
        /// JSON corpus spec; flags below override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        weeks: Option<u32>,
        #[arg(long)]
        night_shift_users: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Learn hour weights for H9 to H11 from a labeled sample.
    TrainWeights {
        #[command(flatten)]
        audit: AuditArgs,
        #[arg(long)]
        truth: PathBuf,
        /// Share of labeled users used for training.
        #[arg(long, default_value_t = 0.22)]
        fraction: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Global,
    PerUser,
}

#[derive(Args)]
struct AuditArgs {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    geocode_db: Option<PathBuf>,
    #[arg(long)]
    authoritative_db: Option<PathBuf>,
    #[arg(long)]
    venue_db: Option<PathBuf>,
    #[arg(long)]
    category_map: Option<PathBuf>,
    #[arg(long)]
    wordlists_dir: Option<PathBuf>,
    #[arg(long)]
    tz_db: Option<PathBuf>,
    /// Hour-weight CSV for H9 to H11.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Comma-separated: keyloc, sensitive, policy, all.
    #[arg(long)]
    stages: Option<String>,
    /// Comma-separated heuristic ids, e.g. H1,H15.
    #[arg(long, value_delimiter = ',')]
    baselines: Option<Vec<HeuristicId>>,
    /// Comma-separated source apps kept at load time.
    #[arg(long, value_delimiter = ',')]
    sources: Option<Vec<String>>,
    #[arg(long, value_enum)]
    cache_scope: Option<ScopeArg>,
    #[arg(long)]
    cache_m: Option<f64>,
    #[arg(long)]
    eps_m: Option<f64>,
    #[arg(long)]
    merge_m: Option<f64>,
    #[arg(long)]
    venue_m: Option<f64>,
    #[arg(long)]
    home_top: Option<usize>,
    #[arg(long)]
    work_top: Option<usize>,
    #[arg(long)]
    shift_max_min: Option<i64>,
    #[arg(long)]
    shift_end_min: Option<u32>,
    #[arg(long)]
    long_day_min: Option<i64>,
    #[arg(long)]
    long_day_frac: Option<f64>,
    #[arg(long)]
    top_terms: Option<usize>,
    #[arg(long)]
    visit_gap_min: Option<i64>,
    #[arg(long)]
    visit_span_min: Option<i64>,
    #[arg(long)]
    pass_by_min: Option<i64>,
    #[arg(long, value_delimiter = ',')]
    cutoff_offsets_weeks: Option<Vec<u32>>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fail on the first malformed record.
    #[arg(long)]
    strict: bool,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl AuditArgs {
    fn into_config(self) -> Result<AuditConfig, ConfigError> {
        let mut c = match &self.config {
            Some(p) => AuditConfig::load(p)?,
            None => AuditConfig::default(),
        };
        for (dst, src) in [
            (&mut c.dataset, self.dataset),
            (&mut c.geocode_db, self.geocode_db),
            (&mut c.authoritative_db, self.authoritative_db),
            (&mut c.venue_db, self.venue_db),
            (&mut c.category_map, self.category_map),
            (&mut c.wordlists_dir, self.wordlists_dir),
            (&mut c.tz_db, self.tz_db),
            (&mut c.weights, self.weights),
            (&mut c.out, self.out),
        ] {
            if src.is_some() {
                *dst = src;
            }
        }
        if let Some(s) = &self.stages {
            c.stages = Stages::parse(s)?;
        } else if self.config.is_none() && c.venue_db.is_some() {
            c.stages.sensitive = true;
        }
        set!(c.baselines, self.baselines);
        if let Some(names) = self.sources {
            c.sources = names
                .iter()
                .map(|n| SourceApp::parse(n.trim()).ok_or_else(|| ConfigError::Invalid(format!("unknown source {n:?}"))))
                .collect::<Result<_, _>>()?;
        }
        if let Some(s) = self.cache_scope {
            c.cache_scope = match s {
                ScopeArg::Global => CacheScope::Global,
                ScopeArg::PerUser => CacheScope::PerUser,
            };
        }
        let p = &mut c.pipeline;
        set!(p.cache_m, self.cache_m);
        set!(p.eps_m, self.eps_m);
        set!(p.merge_m, self.merge_m);
        set!(p.keyloc.home_candidates, self.home_top);
        set!(p.keyloc.work_candidates, self.work_top);
        set!(p.keyloc.shift.max_shift_minutes, self.shift_max_min);
        set!(p.keyloc.shift.latest_end_minute, self.shift_end_min);
        set!(p.keyloc.long_day_minutes, self.long_day_min);
        set!(p.keyloc.max_long_day_fraction, self.long_day_frac);
        set!(c.sensitive.venue_radius_m, self.venue_m);
        set!(c.sensitive.top_terms, self.top_terms);
        set!(c.sensitive.duration.max_gap_minutes, self.visit_gap_min);
        set!(c.sensitive.duration.min_span_minutes, self.visit_span_min);
        set!(c.sensitive.duration.pass_by_minutes, self.pass_by_min);
        set!(c.policy.offsets_weeks, self.cutoff_offsets_weeks);
        set!(c.seed, self.seed);
        c.strict |= self.strict;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Other(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn audit(args: AuditArgs) -> Result<(), CliError> {
    let cfg = args.into_config()?;
    let report = run_audit(&cfg)?;
    match &cfg.out {
        Some(p) => {
            report.write_jsonl(create(p)?)?;
            info!("report written to {}", p.display());
        }
        None => report.write_jsonl(io::stdout().lock())?,
    }
    eprint!("{}", report.summary());
    Ok(())
}

fn score_cmd(report: &Path, truth: &Path, json: bool) -> Result<(), CliError> {
    let preds = read_predictions(BufReader::new(File::open(report)?)).map_err(other)?;
    let truth = load_truth(truth)?;
    let table = score(&preds, &truth).map_err(other)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&table).map_err(other)?);
    } else {
        print!("{table}");
    }
    Ok(())
}

fn synth(
    spec: Option<PathBuf>,
    users: Option<usize>,
    seed: Option<u64>,
    weeks: Option<u32>,
    night: Option<usize>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let mut s = match spec {
        Some(p) => serde_json::from_str(&fs::read_to_string(&p)?).map_err(other)?,
        None => CorpusSpec::default(),
    };
    set!(s.users, users);
    set!(s.seed, seed);
    set!(s.weeks, weeks);
    set!(s.night_shift_users, night);
    let corpus = generate_corpus(&s).map_err(other)?;
    let paths = corpus.write_to_dir(out_dir).map_err(other)?;
    eprintln!("dataset:   {}", paths.dataset.display());
    eprintln!("geocode:   {}", paths.geocode_db.display());
    eprintln!("venues:    {}", paths.venue_db.display());
    eprintln!("timezones: {}", paths.tz_db.display());
    eprintln!("truth:     {}", paths.truth.display());
    Ok(())
}

fn train(args: AuditArgs, truth: &Path, fraction: f64) -> Result<(), CliError> {
    let mut cfg = args.into_config()?;
    cfg.baselines.clear();
    cfg.stages.sensitive = false;
    let res = Resources::load(&cfg)?;
    let dataset = load_dataset(cfg.dataset.as_deref().expect("validated"), &load_options(&cfg)).map_err(AuditError::from)?;
    let truth = load_truth(truth)?;
    let (weights, sample) = train_weights_from(&dataset, &truth, &res, &cfg, fraction, cfg.seed).map_err(other)?;
    info!("trained on {} users", sample.len());
    let csv = weights.to_csv();
    match &cfg.out {
        Some(p) => create(p)?.write_all(csv.as_bytes())?,
        None => io::stdout().lock().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Audit(a) => audit(a),
        Command::Score { report, truth, json } => score_cmd(&report, &truth, json),
        Command::Synth { spec, users, seed, weeks, night_shift_users, out_dir } => {
            synth(spec, users, seed, weeks, night_shift_users, &out_dir)
        }
        Command::TrainWeights { audit, truth, fraction } => train(audit, &truth, fraction),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Config(_) | CliError::Audit(AuditError::Config(_)) => 2,
                _ => 1,
            })
        }
    }
}
