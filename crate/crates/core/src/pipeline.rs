//! Generation, selection and modification stages.
//!
//! Every stage renders a prompt, sends it through the [`Gateway`] and parses
//! the reply into domain types. Per-item failures are returned as data so a
//! run over imperfect model output always completes.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusEntry};
use crate::editscript::{apply, diff, ApplyError, ChangeList, EditOp};
use crate::extract::{first_json_object, get_ci};
use crate::gateway::{Gateway, GatewayError, GatewayMode, LlmRequest, DEFAULT_MODEL};
use crate::prompts::{PromptError, TemplateName, TemplateSet};
use crate::usecase::{
    serialize_use_case, use_case_from_value, AppDescription, LegalProvision, UseCase, UseCaseError,
    UserStory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    YesNo,
    Cot,
}

impl SelectionMode {
    pub fn template(self) -> TemplateName {
        match self {
            SelectionMode::YesNo => TemplateName::YesNo,
            SelectionMode::Cot => TemplateName::Cot,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMode::YesNo => "yes_no",
            SelectionMode::Cot => "cot",
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "yes_no" | "yes-no" | "yesno" => Ok(SelectionMode::YesNo),
            "cot" => Ok(SelectionMode::Cot),
            other => Err(format!("unknown selection mode `{other}` (expected yes_no or cot)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModificationMode {
    Editscript,
    Direct,
}

impl ModificationMode {
    pub fn template(self) -> TemplateName {
        match self {
            ModificationMode::Editscript => TemplateName::ModificationEditscript,
            ModificationMode::Direct => TemplateName::ModificationDirect,
        }
    }
}

impl FromStr for ModificationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "editscript" => Ok(ModificationMode::Editscript),
            "direct" => Ok(ModificationMode::Direct),
            other => Err(format!("unknown modification mode `{other}` (expected editscript or direct)")),
        }
    }
}

/// Yes: the use case should be inspected and modified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn is_yes(self) -> bool {
        self == Answer::Yes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub use_case_id: String,
    pub mode: SelectionMode,
    pub answer: Answer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub raw_text: String,
}

/// A modification in both representations. `apply(change_list, original)`
/// always equals `modified`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModificationResult {
    pub use_case_id: String,
    pub mode: ModificationMode,
    pub change_list: ChangeList,
    pub modified: UseCase,
    pub raw_text: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no JSON object found")]
    NoJsonObject,
    #[error("`Answer` key missing")]
    MissingAnswer,
    #[error("`Answer` value {0} is not Yes or No")]
    InvalidAnswer(String),
    #[error("`Rationale` missing or empty")]
    MissingRationale,
    #[error("change list: {0}")]
    InvalidChangeList(String),
    #[error("use case: {0}")]
    InvalidUseCase(UseCaseError),
    #[error("no user stories found")]
    NoStories,
}

impl ParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::NoJsonObject => "no_json_object",
            ParseError::MissingAnswer => "missing_answer",
            ParseError::InvalidAnswer(_) => "invalid_answer",
            ParseError::MissingRationale => "missing_rationale",
            ParseError::InvalidChangeList(_) => "invalid_change_list",
            ParseError::InvalidUseCase(_) => "invalid_use_case",
            ParseError::NoStories => "no_stories",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unparseable model output: {error}")]
    Parse { error: ParseError, raw_text: String },
    #[error("model change list does not apply: {error}")]
    Apply { error: ApplyError, raw_text: String },
    #[error("app description is empty")]
    EmptyDescription,
    #[error("user story is empty")]
    EmptyStory,
    #[error("use case `{0}` was not selected for modification")]
    GateClosed(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl PipelineError {
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Prompt(_) => "prompt",
            PipelineError::Gateway(e) => e.kind(),
            PipelineError::Parse { error, .. } => error.kind(),
            PipelineError::Apply { .. } => "apply",
            PipelineError::EmptyDescription => "empty_description",
            PipelineError::EmptyStory => "empty_story",
            PipelineError::GateClosed(_) => "gate_closed",
            PipelineError::Config(_) => "config",
        }
    }

    pub fn raw_text(&self) -> Option<&str> {
        match self {
            PipelineError::Parse { raw_text, .. } | PipelineError::Apply { raw_text, .. } => Some(raw_text),
            _ => None,
        }
    }

    pub fn op(&self) -> Option<&EditOp> {
        match self {
            PipelineError::Apply { error, .. } => error.op(),
            _ => None,
        }
    }
}

/// Reads the answer (and, in CoT mode, the rationale) from model output.
pub fn parse_selection(raw_text: &str, mode: SelectionMode) -> Result<(Answer, Option<String>), ParseError> {
    let obj = first_json_object(raw_text).ok_or(ParseError::NoJsonObject)?;
    let answer = match get_ci(&obj, "answer") {
        None | Some(Value::Null) => return Err(ParseError::MissingAnswer),
        Some(Value::String(s)) => match s.trim().to_lowercase().as_str() {
            "yes" => Answer::Yes,
            "no" => Answer::No,
            _ => return Err(ParseError::InvalidAnswer(format!("{s:?}"))),
        },
        Some(other) => return Err(ParseError::InvalidAnswer(other.to_string())),
    };
    let rationale = match mode {
        SelectionMode::YesNo => None,
        SelectionMode::Cot => match get_ci(&obj, "rationale") {
            Some(Value::String(s)) if !s.trim().is_empty() => Some(s.trim().to_string()),
            _ => return Err(ParseError::MissingRationale),
        },
    };
    Ok((answer, rationale))
}

/// Reads `{"ops": [...]}` from model output.
pub fn parse_change_list(raw_text: &str) -> Result<ChangeList, ParseError> {
    let obj = first_json_object(raw_text).ok_or(ParseError::NoJsonObject)?;
    let ops = get_ci(&obj, "ops").ok_or_else(|| ParseError::InvalidChangeList("`ops` key missing".into()))?;
    let ops: Vec<EditOp> =
        serde_json::from_value(ops.clone()).map_err(|e| ParseError::InvalidChangeList(e.to_string()))?;
    Ok(ChangeList::new(ops))
}

/// Reads a use case document from model output.
pub fn parse_use_case_output(raw_text: &str) -> Result<UseCase, ParseError> {
    let obj = first_json_object(raw_text).ok_or(ParseError::NoJsonObject)?;
    use_case_from_value(&Value::Object(obj)).map_err(ParseError::InvalidUseCase)
}

fn strip_list_marker(line: &str) -> (&str, bool) {
    let t = line.trim();
    for marker in ["- ", "* ", "• ", "+ "] {
        if let Some(rest) = t.strip_prefix(marker) {
            return (rest.trim(), true);
        }
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return (rest.trim(), true);
        }
    }
    (t, false)
}

/// One story per list item or line. Lines that do not match the story
/// pattern are kept with empty structured fields.
pub fn parse_user_stories(raw_text: &str) -> Result<Vec<UserStory>, ParseError> {
    let lines: Vec<(&str, bool)> = raw_text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim().starts_with("```"))
        .map(strip_list_marker)
        .map(|(t, m)| (t.trim_matches('"'), m))
        .collect();
    let marked = lines.iter().any(|(_, m)| *m);
    let stories: Vec<UserStory> = lines
        .into_iter()
        .filter(|(text, m)| {
            let lower = text.to_lowercase();
            *m || !marked || lower.starts_with("as a ") || lower.starts_with("as an ")
        })
        .map(|(text, _)| UserStory::parse(text))
        .filter(|s| !s.raw_text.is_empty())
        .collect();
    if stories.is_empty() {
        Err(ParseError::NoStories)
    } else {
        Ok(stories)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub model_name: String,
    pub temperature: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            model_name: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
        }
    }
}

/// Whether a modification may proceed.
#[derive(Debug, Clone, Copy)]
pub enum ModificationGate<'a> {
    /// The use case was answered yes by selection.
    Selected(&'a SelectionResult),
    /// The caller deliberately modifies regardless of selection.
    Forced,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    gateway: Gateway,
    templates: TemplateSet,
    model: ModelSettings,
}

impl Pipeline {
    pub fn new(gateway: Gateway, templates: TemplateSet, model: ModelSettings) -> Self {
        Self {
            gateway,
            templates,
            model,
        }
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn model(&self) -> &ModelSettings {
        &self.model
    }

    fn request(&self, prompt: String) -> LlmRequest {
        LlmRequest::new(prompt).with_model(self.model.model_name.clone(), self.model.temperature)
    }

    pub fn user_stories_request(&self, app: &AppDescription) -> Result<LlmRequest, PipelineError> {
        if app.full_text.trim().is_empty() {
            return Err(PipelineError::EmptyDescription);
        }
        Ok(self.request(self.templates.render_user_stories(app)?))
    }

    pub fn use_case_request(&self, story: &UserStory, app: &AppDescription) -> Result<LlmRequest, PipelineError> {
        if story.raw_text.trim().is_empty() {
            return Err(PipelineError::EmptyStory);
        }
        Ok(self.request(self.templates.render_use_case_generation(story, app)?))
    }

    pub fn selection_request(
        &self,
        uc: &UseCase,
        provision: &LegalProvision,
        app: &AppDescription,
        mode: SelectionMode,
    ) -> Result<LlmRequest, PipelineError> {
        let prompt = self.templates.get(mode.template()).render(provision, app, uc)?;
        Ok(self.request(prompt))
    }

    pub fn modification_request(
        &self,
        uc: &UseCase,
        provision: &LegalProvision,
        app: &AppDescription,
        mode: ModificationMode,
    ) -> Result<LlmRequest, PipelineError> {
        let prompt = self.templates.get(mode.template()).render(provision, app, uc)?;
        Ok(self.request(prompt))
    }

    pub async fn generate_user_stories(&self, app: &AppDescription) -> Result<Vec<UserStory>, PipelineError> {
        let req = self.user_stories_request(app)?;
        let raw = self.gateway.complete(&req).await?;
        parse_user_stories(&raw).map_err(|error| PipelineError::Parse { error, raw_text: raw })
    }

    /// Generates one use case for `story`, assigning it `id`.
    pub async fn generate_use_case(
        &self,
        story: &UserStory,
        app: &AppDescription,
        id: &str,
    ) -> Result<UseCase, PipelineError> {
        let req = self.use_case_request(story, app)?;
        let raw = self.gateway.complete(&req).await?;
        parse_use_case_output(&raw)
            .map(|uc| uc.with_id(id))
            .map_err(|error| PipelineError::Parse { error, raw_text: raw })
    }

    pub async fn select(
        &self,
        uc: &UseCase,
        provision: &LegalProvision,
        app: &AppDescription,
        mode: SelectionMode,
    ) -> Result<SelectionResult, PipelineError> {
        let req = self.selection_request(uc, provision, app, mode)?;
        let raw = self.gateway.complete(&req).await?;
        match parse_selection(&raw, mode) {
            Ok((answer, rationale)) => Ok(SelectionResult {
                use_case_id: uc.id().to_string(),
                mode,
                answer,
                rationale,
                raw_text: raw,
            }),
            Err(error) => Err(PipelineError::Parse { error, raw_text: raw }),
        }
    }

    pub async fn modify(
        &self,
        uc: &UseCase,
        provision: &LegalProvision,
        app: &AppDescription,
        mode: ModificationMode,
        gate: ModificationGate<'_>,
    ) -> Result<ModificationResult, PipelineError> {
        if let ModificationGate::Selected(sel) = gate {
            if !sel.answer.is_yes() || sel.use_case_id != uc.id() {
                return Err(PipelineError::GateClosed(uc.id().to_string()));
            }
        }
        let req = self.modification_request(uc, provision, app, mode)?;
        let raw = self.gateway.complete(&req).await?;
        let (change_list, modified) = match mode {
            ModificationMode::Editscript => {
                let cl = parse_change_list(&raw).map_err(|error| PipelineError::Parse {
                    error,
                    raw_text: raw.clone(),
                })?;
                let modified = apply(&cl, uc).map_err(|error| PipelineError::Apply {
                    error,
                    raw_text: raw.clone(),
                })?;
                (cl, modified)
            }
            ModificationMode::Direct => {
                let modified = parse_use_case_output(&raw)
                    .map_err(|error| PipelineError::Parse {
                        error,
                        raw_text: raw.clone(),
                    })?
                    .with_id(uc.id())
                    .with_title(uc.title().map(str::to_string));
                (diff(uc, &modified), modified)
            }
        };
        Ok(ModificationResult {
            use_case_id: uc.id().to_string(),
            mode,
            change_list,
            modified,
            raw_text: raw,
        })
    }

    /// Generates user stories for `app` and one use case per story. Ids are
    /// `<app_id>-<nn>`.
    pub async fn generate(&self, app: &AppDescription) -> Result<Generated, PipelineError> {
        let stories = self.generate_user_stories(app).await?;
        let permits = self.gateway.permit_limit();
        let results: Vec<_> = stream::iter(stories.iter().enumerate())
            .map(|(i, story)| async move {
                let id = format!("{}-{:02}", app.app_id, i + 1);
                let result = self.generate_use_case(story, app, &id).await;
                (id, result)
            })
            .buffered(permits)
            .collect()
            .await;
        let mut use_cases = Vec::new();
        let mut errors = Vec::new();
        for (id, r) in results {
            match r {
                Ok(uc) => use_cases.push(uc),
                Err(e) => errors.push(ItemError::new(&id, Stage::Generation, &e)),
            }
        }
        Ok(Generated {
            stories,
            use_cases,
            errors,
        })
    }

    async fn run_item(
        &self,
        entry: &CorpusEntry,
        provision: &LegalProvision,
        cfg: &RunConfig,
    ) -> RunItem {
        let uc = &entry.use_case;
        let id = uc.id();
        let selection: Outcome<SelectionResult> = self
            .select(uc, provision, &entry.app, cfg.selection_mode)
            .await
            .map_err(|e| ItemError::new(id, Stage::Selection, &e))
            .into();
        let mut comparison_selections = Vec::new();
        for &mode in &cfg.comparison_modes {
            comparison_selections.push(
                self.select(uc, provision, &entry.app, mode)
                    .await
                    .map_err(|e| ItemError::new(id, Stage::Selection, &e))
                    .into(),
            );
        }
        let forced = cfg.forced_ids.iter().any(|f| f == id);
        let gate = match (&selection, forced) {
            (_, true) => Some(ModificationGate::Forced),
            (Outcome::Ok(sel), false) if sel.answer.is_yes() => Some(ModificationGate::Selected(sel)),
            _ => None,
        };
        let modification = match gate {
            Some(gate) => Some(
                self.modify(uc, provision, &entry.app, cfg.modification_mode, gate)
                    .await
                    .map_err(|e| ItemError::new(id, Stage::Modification, &e))
                    .into(),
            ),
            None => None,
        };
        RunItem {
            use_case_id: id.to_string(),
            app_id: entry.app.app_id.clone(),
            use_case: uc.clone(),
            forced,
            selection,
            comparison_selections,
            modification,
        }
    }

    /// Selection over the whole corpus, then modification of every use case
    /// answered yes plus any forced ids. Items are processed concurrently up
    /// to the gateway permit count and joined in corpus order.
    pub async fn run(
        &self,
        corpus: &Corpus,
        provision: &LegalProvision,
        cfg: &RunConfig,
    ) -> Result<PipelineRun, PipelineError> {
        if provision.text.trim().is_empty() {
            return Err(PipelineError::Config("provision text is empty".into()));
        }
        if cfg.provision_id != provision.provision_id {
            return Err(PipelineError::Config(format!(
                "configured provision `{}` but loaded `{}`",
                cfg.provision_id, provision.provision_id
            )));
        }
        if cfg.comparison_modes.contains(&cfg.selection_mode) {
            return Err(PipelineError::Config(format!(
                "comparison modes repeat the primary selection mode `{}`",
                cfg.selection_mode
            )));
        }
        let unknown: Vec<_> = cfg.forced_ids.iter().filter(|id| !corpus.contains(id)).collect();
        if !unknown.is_empty() {
            return Err(PipelineError::Config(format!("forced ids not in corpus: {unknown:?}")));
        }

        let permits = self.gateway.permit_limit();
        let items: Vec<RunItem> = stream::iter(&corpus.entries)
            .map(|entry| self.run_item(entry, provision, cfg))
            .buffered(permits)
            .collect()
            .await;

        let run_id = run_id(corpus, provision, cfg, &self.model);
        Ok(PipelineRun {
            run_id,
            created_at: Utc::now(),
            provision_id: provision.provision_id.clone(),
            model: self.model.clone(),
            gateway_mode: self.gateway.mode(),
            selection_mode: cfg.selection_mode,
            comparison_modes: cfg.comparison_modes.clone(),
            modification_mode: cfg.modification_mode,
            forced_ids: cfg.forced_ids.clone(),
            items,
        })
    }
}

/// Runs `f` over `inputs` with at most `limit` futures in flight and
/// returns the outputs in input order.
pub async fn buffered_in_order<T, F, Fut>(inputs: Vec<T>, limit: usize, f: F) -> Vec<Fut::Output>
where
    F: Fn(T) -> Fut,
    Fut: std::future::Future,
{
    stream::iter(inputs).map(f).buffered(limit.max(1)).collect().await
}

fn run_id(corpus: &Corpus, provision: &LegalProvision, cfg: &RunConfig, model: &ModelSettings) -> String {
    let mut h = Sha256::new();
    h.update(provision.provision_id.as_bytes());
    h.update(provision.text.as_bytes());
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(serde_json::to_vec(model).expect("model serializes"));
    for e in &corpus.entries {
        h.update(serialize_use_case(&e.use_case).as_bytes());
        h.update(e.app.summary.as_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub stories: Vec<UserStory>,
    pub use_cases: Vec<UseCase>,
    pub errors: Vec<ItemError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub provision_id: String,
    pub selection_mode: SelectionMode,
    /// Additional selection modes run for comparison only; they never gate
    /// modification.
    pub comparison_modes: Vec<SelectionMode>,
    pub modification_mode: ModificationMode,
    pub forced_ids: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            provision_id: String::new(),
            selection_mode: SelectionMode::Cot,
            comparison_modes: Vec::new(),
            modification_mode: ModificationMode::Editscript,
            forced_ids: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generation,
    Selection,
    Modification,
}

/// A per-item failure recorded in a run instead of aborting it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemError {
    pub use_case_id: String,
    pub stage: Stage,
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<EditOp>,
}

impl ItemError {
    pub fn new(use_case_id: &str, stage: Stage, err: &PipelineError) -> Self {
        Self {
            use_case_id: use_case_id.to_string(),
            stage,
            kind: err.kind().to_string(),
            message: err.to_string(),
            raw_text: err.raw_text().map(str::to_string),
            op: err.op().cloned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Ok(T),
    Error(ItemError),
}

impl<T> Outcome<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Outcome::Ok(t) => Some(t),
            Outcome::Error(_) => None,
        }
    }

    pub fn error(&self) -> Option<&ItemError> {
        match self {
            Outcome::Ok(_) => None,
            Outcome::Error(e) => Some(e),
        }
    }
}

impl<T> From<Result<T, ItemError>> for Outcome<T> {
    fn from(r: Result<T, ItemError>) -> Self {
        match r {
            Ok(t) => Outcome::Ok(t),
            Err(e) => Outcome::Error(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunItem {
    pub use_case_id: String,
    pub app_id: String,
    pub use_case: UseCase,
    pub forced: bool,
    pub selection: Outcome<SelectionResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparison_selections: Vec<Outcome<SelectionResult>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modification: Option<Outcome<ModificationResult>>,
}

impl RunItem {
    pub fn errors(&self) -> impl Iterator<Item = &ItemError> {
        std::iter::once(&self.selection)
            .chain(&self.comparison_selections)
            .filter_map(Outcome::error)
            .chain(self.modification.iter().filter_map(Outcome::error))
    }
}

/// Everything one pipeline run produced, persisted as a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub provision_id: String,
    pub model: ModelSettings,
    pub gateway_mode: GatewayMode,
    pub selection_mode: SelectionMode,
    #[serde(default)]
    pub comparison_modes: Vec<SelectionMode>,
    pub modification_mode: ModificationMode,
    #[serde(default)]
    pub forced_ids: Vec<String>,
    pub items: Vec<RunItem>,
}

impl PipelineRun {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The document without `run_id` and `created_at`, for comparing runs.
    pub fn comparison_form(&self) -> String {
        let mut v = serde_json::to_value(self).expect("run serializes");
        if let Value::Object(map) = &mut v {
            map.remove("run_id");
            map.remove("created_at");
        }
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    /// Primary-mode selections that succeeded.
    pub fn selections(&self) -> impl Iterator<Item = &SelectionResult> {
        self.items.iter().filter_map(|i| i.selection.ok())
    }

    /// Successful selections for `mode`, primary or comparison.
    pub fn selections_for(&self, mode: SelectionMode) -> Vec<&SelectionResult> {
        self.items
            .iter()
            .flat_map(|i| std::iter::once(&i.selection).chain(&i.comparison_selections))
            .filter_map(Outcome::ok)
            .filter(|s| s.mode == mode)
            .collect()
    }

    pub fn modifications(&self) -> impl Iterator<Item = (&RunItem, &ModificationResult)> {
        self.items
            .iter()
            .filter_map(|i| i.modification.as_ref().and_then(Outcome::ok).map(|m| (i, m)))
    }

    pub fn flagged(&self) -> usize {
        self.selections().filter(|s| s.answer.is_yes()).count()
    }

    pub fn errors(&self) -> impl Iterator<Item = &ItemError> {
        self.items.iter().flat_map(RunItem::errors)
    }

    pub fn has_item_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    /// Checks the gate and consistency invariants, returning offending ids.
    pub fn invariant_violations(&self) -> Vec<String> {
        let yes: HashSet<&str> = self
            .selections()
            .filter(|s| s.answer.is_yes())
            .map(|s| s.use_case_id.as_str())
            .collect();
        let mut bad = Vec::new();
        for item in &self.items {
            let Some(m) = item.modification.as_ref() else { continue };
            if !item.forced && !yes.contains(item.use_case_id.as_str()) {
                bad.push(format!("{}: modified without selection", item.use_case_id));
            }
            if let Outcome::Ok(m) = m {
                match apply(&m.change_list, &item.use_case) {
                    Ok(out) if out == m.modified => {}
                    _ => bad.push(format!("{}: change list inconsistent", item.use_case_id)),
                }
            }
        }
        bad
    }
}
