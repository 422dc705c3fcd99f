//! Use-case compliance pipeline.
//!
//! Use cases are generated from app descriptions, classified against a
//! legal provision by prompting a language model, modified through
//! declarative edit scripts and scored against expert annotations.

pub mod corpus;
pub mod editscript;
pub mod eval;
pub mod extract;
pub mod gateway;
pub mod pipeline;
pub mod prompts;
pub mod textmetrics;
pub mod usecase;

pub use corpus::{Corpus, CorpusEntry, CorpusError, CorpusManifest};
pub use editscript::{apply, canonicalize, diff, serialize_change_list, ApplyError, ChangeList, EditOp};
pub use eval::{
    parse_annotations, render_text, selection_accuracy, similarity_report, AnnotationRecord, EvalError,
    EvalOptions, EvalReport,
};
pub use gateway::{
    request_hash, ExchangeCache, ExchangeRecord, Gateway, GatewayConfig, GatewayError, GatewayMode,
    HttpTransport, LlmRequest, Transport,
};
pub use pipeline::{
    parse_selection, Answer, ModificationMode, ModificationResult, ModelSettings, ParseError, Pipeline,
    PipelineError, PipelineRun, RunConfig, SelectionMode, SelectionResult,
};
pub use prompts::{PromptError, PromptTemplate, TemplateName, TemplateSet};
pub use textmetrics::{bleu, rouge1, rouge_l, tokenize, RougeScore, TokenSequence};
pub use usecase::{
    parse_use_case, serialize_use_case, validate, AppDescription, LegalProvision, UseCase, UseCaseError,
    UserStory, Violation,
};
