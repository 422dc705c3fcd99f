//! Prompt templates and rendering.
//!
//! Templates are plain UTF-8 files with `{name}` placeholders. The default
//! set ships in `templates/` and is compiled in; [`TemplateSet::load_dir`]
//! replaces any of them from a directory at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::usecase::{serialize_use_case, AppDescription, LegalProvision, UseCase, UserStory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    YesNo,
    Cot,
    ModificationEditscript,
    ModificationDirect,
    UserStories,
    UseCaseGeneration,
}

impl TemplateName {
    pub const ALL: [TemplateName; 6] = [
        TemplateName::YesNo,
        TemplateName::Cot,
        TemplateName::ModificationEditscript,
        TemplateName::ModificationDirect,
        TemplateName::UserStories,
        TemplateName::UseCaseGeneration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::YesNo => "yes_no",
            TemplateName::Cot => "cot",
            TemplateName::ModificationEditscript => "modification_editscript",
            TemplateName::ModificationDirect => "modification_direct",
            TemplateName::UserStories => "user_stories",
            TemplateName::UseCaseGeneration => "use_case_generation",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str())
    }

    /// Placeholders the template body must contain, each exactly once.
    pub fn placeholders(self) -> &'static [Placeholder] {
        use Placeholder::*;
        match self {
            TemplateName::YesNo
            | TemplateName::Cot
            | TemplateName::ModificationEditscript
            | TemplateName::ModificationDirect => &[LegalText, AppSummary, UseCase],
            TemplateName::UserStories => &[AppDescription],
            TemplateName::UseCaseGeneration => &[AppSummary, UserStory],
        }
    }

    fn default_body(self) -> &'static str {
        match self {
            TemplateName::YesNo => include_str!("../templates/yes_no.txt"),
            TemplateName::Cot => include_str!("../templates/cot.txt"),
            TemplateName::ModificationEditscript => {
                include_str!("../templates/modification_editscript.txt")
            }
            TemplateName::ModificationDirect => include_str!("../templates/modification_direct.txt"),
            TemplateName::UserStories => include_str!("../templates/user_stories.txt"),
            TemplateName::UseCaseGeneration => include_str!("../templates/use_case_generation.txt"),
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Placeholder {
    LegalText,
    AppSummary,
    UseCase,
    AppDescription,
    UserStory,
}

impl Placeholder {
    const ALL: [Placeholder; 5] = [
        Placeholder::LegalText,
        Placeholder::AppSummary,
        Placeholder::UseCase,
        Placeholder::AppDescription,
        Placeholder::UserStory,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Placeholder::LegalText => "legal_text",
            Placeholder::AppSummary => "app_summary",
            Placeholder::UseCase => "use_case",
            Placeholder::AppDescription => "app_description",
            Placeholder::UserStory => "user_story",
        }
    }

    fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.key() == key)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}`: unknown placeholder `{{{placeholder}}}`")]
    UnknownPlaceholder { template: TemplateName, placeholder: String },
    #[error("template `{template}`: placeholder `{{{placeholder}}}` appears {count} times, expected once")]
    PlaceholderCount {
        template: TemplateName,
        placeholder: &'static str,
        count: usize,
    },
    #[error("provision text is empty")]
    EmptyProvision,
    #[error("no value supplied for `{{{0}}}`")]
    MissingValue(&'static str),
    #[error("reading template `{path}`: {message}")]
    Io { path: String, message: String },
}

/// A `{name}` occurrence in a template body.
#[derive(Debug, Clone, PartialEq)]
struct Slot {
    start: usize,
    end: usize,
    key: String,
}

/// `{` + `[a-z_]+` + `}`. Anything else, such as the `{'Answer': ...}`
/// answer-format examples, is literal text.
fn scan_slots(body: &str) -> Vec<Slot> {
    let bytes = body.as_bytes();
    let mut slots = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_lowercase() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                slots.push(Slot {
                    start: i,
                    end: j + 1,
                    key: body[i + 1..j].to_string(),
                });
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    slots
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    name: TemplateName,
    body: String,
}

impl PromptTemplate {
    /// Checks that every placeholder is known and each required one appears
    /// exactly once.
    pub fn new(name: TemplateName, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into().trim_end().to_string();
        let mut counts: BTreeMap<Placeholder, usize> = BTreeMap::new();
        for slot in scan_slots(&body) {
            match Placeholder::from_key(&slot.key) {
                Some(p) if name.placeholders().contains(&p) => *counts.entry(p).or_insert(0) += 1,
                _ => {
                    return Err(PromptError::UnknownPlaceholder {
                        template: name,
                        placeholder: slot.key,
                    })
                }
            }
        }
        for &p in name.placeholders() {
            let count = counts.get(&p).copied().unwrap_or(0);
            if count != 1 {
                return Err(PromptError::PlaceholderCount {
                    template: name,
                    placeholder: p.key(),
                    count,
                });
            }
        }
        Ok(Self { name, body })
    }

    pub fn name(&self) -> TemplateName {
        self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Substitutes placeholders in one left-to-right pass; injected text is
    /// never rescanned.
    pub fn render_values(&self, values: &PromptValues<'_>) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len() + values.total_len());
        let mut last = 0;
        for slot in scan_slots(&self.body) {
            let p = Placeholder::from_key(&slot.key).expect("validated at construction");
            let value = values.get(p).ok_or(PromptError::MissingValue(p.key()))?;
            out.push_str(&self.body[last..slot.start]);
            out.push_str(value);
            last = slot.end;
        }
        out.push_str(&self.body[last..]);
        Ok(out)
    }

    /// Renders a selection or modification prompt.
    pub fn render(
        &self,
        provision: &LegalProvision,
        app: &AppDescription,
        uc: &UseCase,
    ) -> Result<String, PromptError> {
        if provision.text.trim().is_empty() {
            return Err(PromptError::EmptyProvision);
        }
        let use_case = serialize_use_case(uc);
        self.render_values(&PromptValues {
            legal_text: Some(provision.text.trim()),
            app_summary: Some(app.summary.trim()),
            use_case: Some(&use_case),
            ..Default::default()
        })
    }
}

/// Values injected at each placeholder.
#[derive(Debug, Clone, Default)]
pub struct PromptValues<'a> {
    pub legal_text: Option<&'a str>,
    pub app_summary: Option<&'a str>,
    pub use_case: Option<&'a str>,
    pub app_description: Option<&'a str>,
    pub user_story: Option<&'a str>,
}

impl<'a> PromptValues<'a> {
    fn get(&self, p: Placeholder) -> Option<&'a str> {
        match p {
            Placeholder::LegalText => self.legal_text,
            Placeholder::AppSummary => self.app_summary,
            Placeholder::UseCase => self.use_case,
            Placeholder::AppDescription => self.app_description,
            Placeholder::UserStory => self.user_story,
        }
    }

    fn total_len(&self) -> usize {
        Placeholder::ALL
            .into_iter()
            .filter_map(|p| self.get(p))
            .map(str::len)
            .sum()
    }
}

/// All templates the pipeline needs, keyed by name.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateName, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates = TemplateName::ALL
            .into_iter()
            .map(|n| {
                let t = PromptTemplate::new(n, n.default_body()).expect("bundled templates are valid");
                (n, t)
            })
            .collect();
        Self { templates }
    }
}

impl TemplateSet {
    /// Starts from the bundled templates and replaces each one for which
    /// `<dir>/<name>.txt` exists.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::default();
        for name in TemplateName::ALL {
            let path = dir.join(name.file_name());
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            set.templates.insert(name, PromptTemplate::new(name, body)?);
        }
        Ok(set)
    }

    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        &self.templates[&name]
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.name, template);
    }

    pub fn render_user_stories(&self, app: &AppDescription) -> Result<String, PromptError> {
        self.get(TemplateName::UserStories).render_values(&PromptValues {
            app_description: Some(app.full_text.trim()),
            ..Default::default()
        })
    }

    pub fn render_use_case_generation(
        &self,
        story: &UserStory,
        app: &AppDescription,
    ) -> Result<String, PromptError> {
        self.get(TemplateName::UseCaseGeneration).render_values(&PromptValues {
            app_summary: Some(app.summary.trim()),
            user_story: Some(story.raw_text.trim()),
            ..Default::default()
        })
    }
}
