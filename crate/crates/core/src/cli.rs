//! `socemo` command line.
//!
//! Exit codes: 0 success, 2 usage, 3 unreadable or unwritable file,
//! 4 invalid input data, 5 backend unreachable, 6 service or storage error.
//! Failures print `{"error":{"code":..,"message":..}}` on stderr.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::backend::{Classifier, Generator, HttpBackend, HttpBackendConfig, LabelPredictor};
use crate::corpus::{
    build_samples_with, corpus_stats, parse_corpus_with, read_samples_jsonl, write_samples_jsonl, CodeTable,
    CorpusSplit, SampleConfig, SplitName,
};
use crate::metrics::{Averaging, MetricReport};
use crate::mock::{EchoPredictor, KeywordClassifier, TemplateGenerator};
use crate::pipeline::{
    read_records_jsonl, run_split, Approach, Backends, ConditioningMode, GenerationConfig, NoCdSource, RunRecordWriter,
    RunStatus,
};
use crate::planning::{evaluate_planner, OraclePlanner, Planner, RandomPlanner, RemotePlanner};
use crate::protocol::{agreement_report, score_report, AgreementUnit, QuestionnaireSpec};
use crate::service::campaign::CampaignConfig;
use crate::service::http::{CreateCampaignRequest, Service};
use crate::service::log::EventLog;
use crate::service::{Bundle, CampaignHandle, ServiceConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io { path: PathBuf, message: String },
    Invalid(String),
    Backend(String),
    Service(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Invalid(_) => 4,
            CliError::Backend(_) => 5,
            CliError::Service(_) => 6,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Invalid(_) => "invalid_input",
            CliError::Backend(_) => "backend_unreachable",
            CliError::Service(_) => "service",
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Invalid(m) | CliError::Backend(m) | CliError::Service(m) => m.clone(),
            CliError::Io { path, message } => format!("{}: {message}", path.display()),
        }
    }

    pub fn to_json(&self) -> String {
        json!({"error": {"code": self.code(), "message": self.message()}}).to_string()
    }
}

impl From<crate::service::ServiceError> for CliError {
    fn from(e: crate::service::ServiceError) -> Self {
        use crate::service::ServiceError as E;
        match e {
            E::InvalidConfig(_) | E::Protocol(_) | E::Bundle { .. } | E::ValidationFailed(_) => {
                CliError::Invalid(e.to_string())
            }
            other => CliError::Service(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "socemo", version, about = "Socio-emotional response planning and human evaluation workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the three parallel corpus files into context samples (JSON lines).
    Ingest(IngestArgs),
    /// Sample count, mean gold length and label frequencies of a sample file.
    Stats(StatsArgs),
    /// Score a next-label planner against the gold labels.
    PlanEval(PlanEvalArgs),
    /// Generate and select responses for every sample; writes run records.
    Run(RunArgs),
    /// Build an annotation campaign from run records.
    CampaignCreate(CampaignCreateArgs),
    /// Start the annotation service.
    Serve(ServeArgs),
    /// Human-evaluation scores from an export bundle.
    Score(ScoreArgs),
    /// Inter-annotator agreement from an export bundle.
    Agree(AgreeArgs),
    /// Export a stored campaign as a bundle.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub dialogues: PathBuf,
    #[arg(long)]
    pub acts: PathBuf,
    #[arg(long)]
    pub emotions: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    /// Shortest leading context to emit; defaults to the window size.
    #[arg(long)]
    pub min_context: Option<usize>,
    /// TOML table mapping the corpus integer codes to labels.
    #[arg(long)]
    pub codes: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlannerChoice {
    Random,
    Oracle,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Mock,
    Http,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "mock")]
    pub backend: BackendChoice,
    /// Base URL of a v1 backend; required with `--backend http`.
    #[arg(long, env = "SOCEMO_BACKEND_URL")]
    pub backend_url: Option<String>,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
}

impl BackendArgs {
    fn http(&self) -> Result<Arc<HttpBackend>, CliError> {
        let url = self
            .backend_url
            .clone()
            .ok_or_else(|| CliError::Usage("--backend http needs --backend-url".into()))?;
        HttpBackend::new(HttpBackendConfig {
            base_url: url,
            timeout_ms: self.timeout_ms,
            retries: self.retries,
            ..Default::default()
        })
        .map(Arc::new)
        .map_err(|e| CliError::Backend(e.to_string()))
    }
}

#[derive(Debug, Args)]
pub struct PlanEvalArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, value_enum)]
    pub planner: PlannerChoice,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
    /// Averaging for precision, recall and F1.
    #[arg(long, value_enum, default_value = "samples")]
    pub average: AverageChoice,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AverageChoice {
    Micro,
    Macro,
    Samples,
}

impl From<AverageChoice> for Averaging {
    fn from(a: AverageChoice) -> Self {
        match a {
            AverageChoice::Micro => Averaging::Micro,
            AverageChoice::Macro => Averaging::Macro,
            AverageChoice::Samples => Averaging::Samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    Nocd,
    CdPred,
    CdGt,
}

impl From<ModeChoice> for ConditioningMode {
    fn from(m: ModeChoice) -> Self {
        match m {
            ModeChoice::Nocd => ConditioningMode::NoCd,
            ModeChoice::CdPred => ConditioningMode::CdPred,
            ModeChoice::CdGt => ConditioningMode::CdGt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApproachChoice {
    Reranking,
    Pb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoCdChoice {
    Separate,
    Pool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeChoice,
    #[arg(long, value_enum, default_value = "reranking")]
    pub approach: ApproachChoice,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Name recorded in run records.
    #[arg(long, default_value = "mock")]
    pub model: String,
    #[arg(long = "n", default_value_t = 10)]
    pub n_candidates: usize,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 0.7)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "separate")]
    pub nocd_source: NoCdChoice,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
    /// Only the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CampaignCreateArgs {
    /// Run-record files, one per system.
    #[arg(long, required = true, num_args = 1..)]
    pub records: Vec<PathBuf>,
    /// Campaign settings (TOML); flags below override it.
    #[arg(long)]
    pub campaign: Option<PathBuf>,
    /// Questionnaire (TOML).
    #[arg(long)]
    pub questionnaire: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub annotators: Option<Vec<String>>,
    #[arg(long)]
    pub contexts: Option<usize>,
    #[arg(long)]
    pub step3: Option<usize>,
    #[arg(long)]
    pub practice: Option<usize>,
    #[command(flatten)]
    pub service: ServiceArgs,
}

#[derive(Debug, Args)]
pub struct ServiceArgs {
    /// Service config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

impl ServiceArgs {
    fn load(&self) -> Result<ServiceConfig, CliError> {
        if let Some(p) = &self.config {
            check_readable(p)?;
        }
        let mut config = ServiceConfig::load(self.config.as_deref())?;
        if let Some(d) = &self.data_dir {
            config.data_dir = d.clone();
        }
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub service: ServiceArgs,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Skip missing step-3 ratings instead of failing.
    #[arg(long)]
    pub partial: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitChoice {
    ResponseIds,
    ModelKeys,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, value_enum, default_value = "response-ids")]
    pub unit: UnitChoice,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub campaign: String,
    #[command(flatten)]
    pub service: ServiceArgs,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn check_readable(path: &Path) -> Result<(), CliError> {
    fs::metadata(path).map(|_| ()).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn open(path: &Path) -> Result<BufReader<fs::File>, CliError> {
    fs::File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

fn emit(out: &mut dyn Write, text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

fn load_split(path: &Path) -> Result<CorpusSplit, CliError> {
    let samples = read_samples_jsonl(open(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    Ok(CorpusSplit {
        name: SplitName::Test,
        samples,
    })
}

/// Fixed-width planner table: Jaccard, precision, recall, F1, NLS, mean length.
pub fn metric_table(rows: &[(String, &MetricReport)], averaging: Averaging) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).chain([5]).max().unwrap_or(5);
    let mut out = format!(
        "{:<name_w$}  {:>7}  {:>9}  {:>6}  {:>4}  {:>4}  {:>6}\n",
        "model", "jaccard", "precision", "recall", "f1", "nls", "mean_l"
    );
    for (name, r) in rows {
        let p = r.prf(averaging);
        let nls = r.nls.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{name:<name_w$}  {:>7.2}  {:>9.2}  {:>6.2}  {:>4.2}  {nls:>4}  {:>6.2}\n",
            r.jaccard, p.precision, p.recall, p.f1, r.mean_len
        ));
    }
    out
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Parses `args` and runs the command, writing results to `out`.
pub async fn run(args: Vec<String>, out: &mut dyn Write) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                return emit(out, &e.to_string(), None);
            }
            return Err(CliError::Usage(e.to_string().trim().to_string()));
        }
    };
    match cli.command {
        Command::Ingest(a) => ingest(a, out),
        Command::Stats(a) => stats(a, out),
        Command::PlanEval(a) => plan_eval(a, out).await,
        Command::Run(a) => run_pipeline(a, out).await,
        Command::CampaignCreate(a) => campaign_create(a, out),
        Command::Serve(a) => serve(a).await,
        Command::Score(a) => score(a, out),
        Command::Agree(a) => agree(a, out),
        Command::Export(a) => export(a, out),
    }
}

/// Entry point for the binary: runs and maps errors to exit codes.
pub async fn main_with(args: Vec<String>) -> ExitCode {
    let mut stdout = std::io::stdout().lock();
    match run(args, &mut stdout).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

fn ingest(a: IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let codes = match &a.codes {
        Some(p) => CodeTable::from_toml(&read(p)?).map_err(|e| CliError::Invalid(e.to_string()))?,
        None => CodeTable::default(),
    };
    let conversations = parse_corpus_with(&read(&a.dialogues)?, &read(&a.acts)?, &read(&a.emotions)?, &codes)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    if a.window == 0 {
        return Err(CliError::Usage("--window must be at least 1".into()));
    }
    let config = SampleConfig {
        min_context: a.min_context.unwrap_or(a.window),
        ..SampleConfig::with_window(a.window)
    };
    let split = build_samples_with(a.split, &conversations, config);
    let mut buf = Vec::new();
    write_samples_jsonl(&mut buf, &split.samples).map_err(|e| CliError::Invalid(e.to_string()))?;
    emit(out, &String::from_utf8(buf).expect("JSON is UTF-8"), a.out.as_deref())?;
    tracing::info!(conversations = conversations.len(), samples = split.samples.len(), "ingested");
    Ok(())
}

fn stats(a: StatsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let split = load_split(&a.samples)?;
    let s = corpus_stats(&split).map_err(|e| CliError::Invalid(e.to_string()))?;
    let text = match a.format {
        Format::Json => to_json(&s),
        Format::Text => {
            let mut t = format!("samples           {}\nmean gold length  {:.2}\n", s.samples, s.mean_gold_length);
            for (label, n) in &s.label_frequency {
                t.push_str(&format!("{:<17} {n}\n", label.as_str()));
            }
            t
        }
    };
    emit(out, &text, None)
}

fn predictor(backend: &BackendArgs) -> Result<Arc<dyn LabelPredictor>, CliError> {
    Ok(match backend.backend {
        BackendChoice::Mock => Arc::new(EchoPredictor),
        BackendChoice::Http => backend.http()?,
    })
}

async fn plan_eval(a: PlanEvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let split = load_split(&a.samples)?;
    let planner: Box<dyn Planner> = match a.planner {
        PlannerChoice::Random => Box::new(RandomPlanner { seed: a.seed }),
        PlannerChoice::Oracle => Box::new(OraclePlanner),
        PlannerChoice::Remote => Box::new(RemotePlanner::new(predictor(&a.backend)?)),
    };
    let report = evaluate_planner(planner.as_ref(), &split, a.jobs).await.map_err(|e| match e {
        crate::planning::PlanningError::Backend { .. } => CliError::Backend(e.to_string()),
        other => CliError::Invalid(other.to_string()),
    })?;
    let name = format!("{:?}", a.planner).to_lowercase();
    let text = match a.format {
        Format::Json => to_json(&json!({"planner": name, "report": report})),
        Format::Text => metric_table(&[(name, &report)], a.average.into()),
    };
    emit(out, &text, None)
}

async fn run_pipeline(a: RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut split = load_split(&a.samples)?;
    if let Some(n) = a.limit {
        split.samples.truncate(n);
    }
    let config = GenerationConfig {
        model: a.model.clone(),
        n_candidates: a.n_candidates,
        window: a.window,
        classifier_threshold: a.threshold,
        mode: a.mode.into(),
        approach: match a.approach {
            ApproachChoice::Reranking => Approach::Reranking,
            ApproachChoice::Pb => Approach::PromptBased,
        },
        nocd_source: match a.nocd_source {
            NoCdChoice::Separate => NoCdSource::Separate,
            NoCdChoice::Pool => NoCdSource::Pool,
        },
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (generator, classifier): (Arc<dyn Generator>, Arc<dyn Classifier>) = match a.backend.backend {
        BackendChoice::Mock => (Arc::new(TemplateGenerator::new(a.seed)), Arc::new(KeywordClassifier)),
        BackendChoice::Http => {
            let http = a.backend.http()?;
            (http.clone(), http)
        }
    };
    let backends = Backends {
        generator,
        classifier: Some(classifier),
        planner: Some(Arc::new(RemotePlanner::new(predictor(&a.backend)?))),
    };
    let records = run_split(&split.samples, &config, &backends, a.jobs).await;

    let failed: Vec<&str> = records
        .iter()
        .filter_map(|r| match &r.status {
            RunStatus::Failed { cause } => Some(cause.as_str()),
            _ => None,
        })
        .collect();
    if !records.is_empty() && failed.len() == records.len() && a.backend.backend == BackendChoice::Http {
        return Err(CliError::Backend(format!("every context failed; first cause: {}", failed[0])));
    }
    let mut w = RunRecordWriter::new(Vec::new());
    for r in &records {
        w.append(r).map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    emit(out, &String::from_utf8(w.into_inner()).expect("JSON is UTF-8"), a.out.as_deref())?;
    tracing::info!(records = records.len(), failed = failed.len(), "run finished");
    Ok(())
}

fn campaign_create(a: CampaignCreateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config = match &a.campaign {
        Some(p) => toml::from_str::<CampaignConfig>(&read(p)?).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?,
        None => CampaignConfig::default(),
    };
    if let Some(p) = &a.questionnaire {
        config.questionnaire = QuestionnaireSpec::from_toml(&read(p)?).map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(x) = a.annotators.clone() {
        config.annotators = x;
    }
    if a.contexts.is_some() {
        config.contexts = a.contexts;
    }
    if let Some(n) = a.step3 {
        config.step3_contexts = n;
    }
    if let Some(n) = a.practice {
        config.practice_contexts = n;
    }
    let mut records = Vec::new();
    for p in &a.records {
        records.extend(read_records_jsonl(open(p)?).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?);
    }
    let service = Service::open(a.service.load()?, None)?;
    let created = service.create_campaign(CreateCampaignRequest { config, records })?;
    emit(out, &to_json(&created), None)
}

async fn serve(a: ServeArgs) -> Result<(), CliError> {
    let mut config = a.service.load()?;
    if let Some(p) = a.port {
        config.port = p;
    }
    if let Some(b) = a.bind {
        config.bind = b;
    }
    crate::service::http::serve(config).await?;
    Ok(())
}

fn load_bundle(path: &Path) -> Result<Bundle, CliError> {
    Bundle::from_jsonl(open(path)?).map_err(CliError::from)
}

fn score(a: ScoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bundle = load_bundle(&a.bundle)?;
    let report = score_report(&bundle.data(), !a.partial).map_err(|e| CliError::Invalid(e.to_string()))?;
    let text = match a.format {
        Format::Json => to_json(&report),
        Format::Text => report.to_table(),
    };
    emit(out, &text, None)
}

fn agree(a: AgreeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bundle = load_bundle(&a.bundle)?;
    let data = bundle.data();
    let unit = match a.unit {
        UnitChoice::ResponseIds => AgreementUnit::ResponseIds,
        UnitChoice::ModelKeys => AgreementUnit::ModelKeys,
    };
    let report = agreement_report(&data.pools, &data.step1, unit).map_err(|e| CliError::Invalid(e.to_string()))?;
    let text = match a.format {
        Format::Json => to_json(&report),
        Format::Text => report.to_table(),
    };
    emit(out, &text, None)
}

fn export(a: ExportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = a.service.load()?;
    let dir = config.data_dir.join("campaigns").join(&a.campaign);
    if !dir.join(crate::service::log::DEFINITION_FILE).exists() {
        return Err(CliError::Service(format!("unknown campaign `{}`", a.campaign)));
    }
    let (def, state, log) = EventLog::open(&dir, 0)?;
    let handle = CampaignHandle::new(def, state, log, None);
    emit(out, &handle.export(), a.out.as_deref())
}
