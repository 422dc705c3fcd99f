//! `ucc` command-line front end.
//!
//! Every subcommand reads explicit input paths and writes JSON to `--out`
//! or stdout. Exit codes are listed in [`exit`].

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use ucc_core::corpus::{load_app, load_provision, load_use_case};
use ucc_core::eval::{render_text, similarity_report, EvalOptions, EvalReport};
use ucc_core::gateway::GatewayConfig;
use ucc_core::pipeline::{buffered_in_order, ItemError, ModificationGate, Outcome, Stage};
use ucc_core::{
    apply, diff, parse_annotations, serialize_change_list, ChangeList, Corpus, Gateway, GatewayMode,
    ModelSettings, ModificationMode, ModificationResult, Pipeline, PipelineError, RunConfig, SelectionMode,
    SelectionResult, TemplateSet,
};

pub mod exit {
    pub const OK: i32 = 0;
    pub const FATAL: i32 = 1;
    /// Bad flags, bad config file, missing cache or credential.
    pub const CONFIG: i32 = 2;
    /// Output was written but some items failed.
    pub const ITEM_FAILURES: i32 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "ucc", version, about = "Use-case generation, compliance selection, modification and evaluation")]
pub struct Cli {
    /// JSON config file. Relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log filter, e.g. `info` or `ucc_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// App description to user stories to use cases.
    Generate(GenerateArgs),
    /// Classify every use case in a corpus against a provision.
    Select(SelectArgs),
    /// Modify the use cases a selection answered yes (plus forced ids).
    Modify(ModifyArgs),
    /// Selection followed by modification, persisted as one run document.
    Run(RunArgs),
    /// Change list turning one use case into another.
    Diff(DiffArgs),
    /// Apply a change list to a use case.
    Apply(ApplyArgs),
    /// Score a run against expert annotations.
    Eval(EvalArgs),
    /// Render an evaluation report as text tables.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct GatewayArgs {
    /// live, record or replay.
    #[arg(long)]
    pub mode: Option<GatewayMode>,
    /// Exchange cache (JSONL).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Maximum concurrent model requests.
    #[arg(long)]
    pub permits: Option<usize>,
    /// Directory of prompt templates overriding the bundled ones.
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CorpusArgs {
    /// Corpus manifest listing use-case files and app descriptions.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Legal provision JSON.
    #[arg(long)]
    pub provision: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub app: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub gateway: GatewayArgs,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub selection_mode: Option<SelectionMode>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub gateway: GatewayArgs,
}

#[derive(Debug, Args)]
pub struct ModifyArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output of `select`.
    #[arg(long)]
    pub selections: PathBuf,
    #[arg(long)]
    pub modification_mode: Option<ModificationMode>,
    /// Use case ids modified regardless of their selection answer.
    #[arg(long, value_delimiter = ',')]
    pub forced_ids: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub gateway: GatewayArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub selection_mode: Option<SelectionMode>,
    /// Extra selection modes recorded for comparison only.
    #[arg(long, value_delimiter = ',')]
    pub comparison_modes: Option<Vec<SelectionMode>>,
    #[arg(long)]
    pub modification_mode: Option<ModificationMode>,
    #[arg(long, value_delimiter = ',')]
    pub forced_ids: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub gateway: GatewayArgs,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub to: PathBuf,
    /// Print the canonical line form instead of JSON.
    #[arg(long)]
    pub lines: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub use_case: PathBuf,
    #[arg(long)]
    pub changes: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run document written by `run`.
    #[arg(long)]
    pub run: PathBuf,
    /// Annotation JSONL.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Fail instead of listing exclusions.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the text tables here.
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report written by `eval`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of `--config`. Every field is optional and flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub mode: Option<GatewayMode>,
    pub base_url: Option<String>,
    pub model_name: Option<String>,
    pub temperature: Option<f64>,
    pub cache_path: Option<PathBuf>,
    pub permits: Option<usize>,
    pub max_retries: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub templates_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub provision: Option<PathBuf>,
    pub selection_mode: Option<SelectionMode>,
    pub comparison_modes: Option<Vec<SelectionMode>>,
    pub modification_mode: Option<ModificationMode>,
    pub forced_ids: Option<Vec<String>>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::config(anyhow!("reading config {}: {e}", path.display())))?;
        let mut cfg: CliConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::config(anyhow!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.cache_path,
            &mut cfg.templates_dir,
            &mut cfg.manifest,
            &mut cfg.provision,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn gateway(&self, flags: &GatewayArgs) -> GatewayConfig {
        let d = GatewayConfig::default();
        GatewayConfig {
            mode: flags.mode.or(self.mode).unwrap_or(d.mode),
            base_url: flags.base_url.clone().or(self.base_url.clone()).unwrap_or(d.base_url),
            model_name: flags.model.clone().or(self.model_name.clone()).unwrap_or(d.model_name),
            temperature: flags.temperature.or(self.temperature).unwrap_or(d.temperature),
            permits: flags.permits.or(self.permits).unwrap_or(d.permits),
            cache_path: flags.cache.clone().or(self.cache_path.clone()),
            max_retries: self.max_retries.unwrap_or(d.max_retries),
            timeout_secs: self.timeout_secs.unwrap_or(d.timeout_secs),
        }
    }
}

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: anyhow::Error) -> Self {
        Self {
            code: exit::CONFIG,
            error,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self {
            code: exit::FATAL,
            error,
        }
    }
}

type CliResult = Result<i32, Failure>;

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn execute<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log))
        .with_writer(std::io::stderr)
        .try_init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    let cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    match cli.command {
        Command::Generate(a) => generate(&cfg, a),
        Command::Select(a) => select(&cfg, a),
        Command::Modify(a) => modify(&cfg, a),
        Command::Run(a) => run(&cfg, a),
        Command::Diff(a) => diff_cmd(a),
        Command::Apply(a) => apply_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, Failure> {
    Ok(fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    Ok(tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")?)
}

fn pipeline(cfg: &CliConfig, flags: &GatewayArgs) -> Result<Pipeline, Failure> {
    let gw_cfg = cfg.gateway(flags);
    if gw_cfg.mode == GatewayMode::Replay && gw_cfg.cache_path.is_none() {
        return Err(Failure::config(anyhow!("replay mode needs --cache or cache_path")));
    }
    let gateway = Gateway::from_config(&gw_cfg).map_err(|e| {
        let err = anyhow!(e.clone());
        if e.is_config_error() {
            Failure::config(err)
        } else {
            Failure::from(err)
        }
    })?;
    let templates = match flags.templates.clone().or(cfg.templates_dir.clone()) {
        Some(dir) => TemplateSet::load_dir(&dir).map_err(|e| Failure::config(anyhow!(e)))?,
        None => TemplateSet::default(),
    };
    let model = ModelSettings {
        model_name: gw_cfg.model_name,
        temperature: gw_cfg.temperature,
    };
    Ok(Pipeline::new(gateway, templates, model))
}

fn corpus_inputs(
    cfg: &CliConfig,
    flags: &CorpusArgs,
) -> Result<(Corpus, ucc_core::LegalProvision), Failure> {
    let manifest = flags
        .manifest
        .clone()
        .or(cfg.manifest.clone())
        .ok_or_else(|| Failure::config(anyhow!("--manifest is required")))?;
    let provision = flags
        .provision
        .clone()
        .or(cfg.provision.clone())
        .ok_or_else(|| Failure::config(anyhow!("--provision is required")))?;
    let corpus = Corpus::load(&manifest).map_err(|e| anyhow!(e))?;
    let provision = load_provision(&provision).map_err(|e| anyhow!(e))?;
    Ok((corpus, provision))
}

fn config_or_fatal(e: PipelineError) -> Failure {
    let code = match &e {
        PipelineError::Config(_) => exit::CONFIG,
        PipelineError::Gateway(g) if g.is_config_error() => exit::CONFIG,
        _ => exit::FATAL,
    };
    Failure {
        code,
        error: anyhow!(e),
    }
}

fn generate(cfg: &CliConfig, a: GenerateArgs) -> CliResult {
    let app = load_app(&a.app).map_err(|e| anyhow!(e))?;
    let p = pipeline(cfg, &a.gateway)?;
    let generated = runtime()?.block_on(p.generate(&app)).map_err(config_or_fatal)?;
    let json = serde_json::to_string_pretty(&generated).context("serializing output")?;
    write_output(a.out.as_deref(), &json)?;
    Ok(if generated.errors.is_empty() {
        exit::OK
    } else {
        exit::ITEM_FAILURES
    })
}

fn select(cfg: &CliConfig, a: SelectArgs) -> CliResult {
    let (corpus, provision) = corpus_inputs(cfg, &a.corpus)?;
    let p = pipeline(cfg, &a.gateway)?;
    let mode = a.selection_mode.or(cfg.selection_mode).unwrap_or(SelectionMode::Cot);
    let rt = runtime()?;
    let outcomes: Vec<Outcome<SelectionResult>> = rt.block_on(buffered_in_order(
        corpus.entries.iter().collect(),
        p.gateway().permit_limit(),
        |entry| {
            let (p, provision) = (&p, &provision);
            async move {
                let id = entry.use_case.id();
                p.select(&entry.use_case, provision, &entry.app, mode)
                    .await
                    .map_err(|e| ItemError::new(id, Stage::Selection, &e))
                    .into()
            }
        },
    ));
    let failed = outcomes.iter().any(|o| o.error().is_some());
    let json = serde_json::to_string_pretty(&outcomes).context("serializing output")?;
    write_output(a.out.as_deref(), &json)?;
    Ok(if failed { exit::ITEM_FAILURES } else { exit::OK })
}

fn modify(cfg: &CliConfig, a: ModifyArgs) -> CliResult {
    let (corpus, provision) = corpus_inputs(cfg, &a.corpus)?;
    let selections: Vec<Outcome<SelectionResult>> = serde_json::from_str(&read(&a.selections)?)
        .with_context(|| format!("parsing {}", a.selections.display()))?;
    let forced = a.forced_ids.clone().or(cfg.forced_ids.clone()).unwrap_or_default();
    if let Some(id) = forced.iter().find(|id| !corpus.contains(id)) {
        return Err(Failure::config(anyhow!("forced id `{id}` is not in the corpus")));
    }
    let mode = a
        .modification_mode
        .or(cfg.modification_mode)
        .unwrap_or(ModificationMode::Editscript);
    let p = pipeline(cfg, &a.gateway)?;

    let mut work = Vec::new();
    for entry in &corpus.entries {
        let id = entry.use_case.id();
        let sel = selections
            .iter()
            .filter_map(Outcome::ok)
            .find(|s| s.use_case_id == id && s.answer.is_yes());
        let is_forced = forced.iter().any(|f| f == id);
        if sel.is_some() || is_forced {
            work.push((entry, sel, is_forced));
        }
    }
    let rt = runtime()?;
    let outcomes: Vec<Outcome<ModificationResult>> =
        rt.block_on(buffered_in_order(work, p.gateway().permit_limit(), |(entry, sel, is_forced)| {
            let (p, provision) = (&p, &provision);
            async move {
                let gate = match (is_forced, sel) {
                    (false, Some(s)) => ModificationGate::Selected(s),
                    _ => ModificationGate::Forced,
                };
                let id = entry.use_case.id();
                p.modify(&entry.use_case, provision, &entry.app, mode, gate)
                    .await
                    .map_err(|e| ItemError::new(id, Stage::Modification, &e))
                    .into()
            }
        }));
    let failed = outcomes.iter().any(|o| o.error().is_some());
    let json = serde_json::to_string_pretty(&outcomes).context("serializing output")?;
    write_output(a.out.as_deref(), &json)?;
    Ok(if failed { exit::ITEM_FAILURES } else { exit::OK })
}

fn run(cfg: &CliConfig, a: RunArgs) -> CliResult {
    let (corpus, provision) = corpus_inputs(cfg, &a.corpus)?;
    let p = pipeline(cfg, &a.gateway)?;
    let d = RunConfig::default();
    let run_cfg = RunConfig {
        provision_id: provision.provision_id.clone(),
        selection_mode: a.selection_mode.or(cfg.selection_mode).unwrap_or(d.selection_mode),
        comparison_modes: a
            .comparison_modes
            .clone()
            .or(cfg.comparison_modes.clone())
            .unwrap_or_default(),
        modification_mode: a
            .modification_mode
            .or(cfg.modification_mode)
            .unwrap_or(d.modification_mode),
        forced_ids: a.forced_ids.clone().or(cfg.forced_ids.clone()).unwrap_or_default(),
    };
    let result = runtime()?
        .block_on(p.run(&corpus, &provision, &run_cfg))
        .map_err(config_or_fatal)?;
    write_output(a.out.as_deref(), &result.to_json())?;
    eprintln!(
        "{} use cases, {} flagged, {} modified, {} item errors",
        result.items.len(),
        result.flagged(),
        result.modifications().count(),
        result.errors().count()
    );
    Ok(if result.has_item_errors() {
        exit::ITEM_FAILURES
    } else {
        exit::OK
    })
}

fn diff_cmd(a: DiffArgs) -> CliResult {
    let from = load_use_case(&a.from).map_err(|e| anyhow!(e))?;
    let to = load_use_case(&a.to).map_err(|e| anyhow!(e))?;
    let cl = diff(&from, &to);
    let text = if a.lines {
        serialize_change_list(&cl)
    } else {
        serde_json::to_string_pretty(&cl).context("serializing change list")?
    };
    write_output(a.out.as_deref(), &text)?;
    Ok(exit::OK)
}

fn apply_cmd(a: ApplyArgs) -> CliResult {
    let uc = load_use_case(&a.use_case).map_err(|e| anyhow!(e))?;
    let cl = ChangeList::from_json(&read(&a.changes)?)
        .with_context(|| format!("parsing change list {}", a.changes.display()))?;
    let out = apply(&cl, &uc).map_err(|e| anyhow!(e))?;
    write_output(a.out.as_deref(), &ucc_core::usecase::serialize_use_case_pretty(&out))?;
    Ok(exit::OK)
}

fn eval_cmd(a: EvalArgs) -> CliResult {
    let run = ucc_core::PipelineRun::from_json(&read(&a.run)?)
        .with_context(|| format!("parsing run {}", a.run.display()))?;
    let annotations = parse_annotations(&read(&a.annotations)?).map_err(|e| anyhow!(e))?;
    let report = similarity_report(&run, &annotations, EvalOptions { strict: a.strict }).map_err(|e| anyhow!(e))?;
    write_output(a.out.as_deref(), &report.to_json())?;
    if let Some(t) = &a.text {
        write_output(Some(t), &render_text(&report))?;
    }
    Ok(exit::OK)
}

fn report_cmd(a: ReportArgs) -> CliResult {
    let report = EvalReport::from_json(&read(&a.report)?)
        .with_context(|| format!("parsing report {}", a.report.display()))?;
    write_output(a.out.as_deref(), &render_text(&report))?;
    Ok(exit::OK)
}
