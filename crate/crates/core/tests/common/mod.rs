#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::{TimeZone, Utc};
use ucc_core::corpus::{load_app, load_provision, load_use_case};
use ucc_core::gateway::ExchangeCache;
use ucc_core::{
    AppDescription, ExchangeRecord, Gateway, LegalProvision, LlmRequest, ModelSettings, Pipeline, TemplateSet,
    UseCase,
};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn opt_in_provision() -> LegalProvision {
    load_provision(&fixtures().join("provisions/ccpa-7028a.json")).unwrap()
}

pub fn app(id: &str) -> AppDescription {
    load_app(&fixtures().join(format!("opt-in/apps/{id}.json"))).unwrap()
}

pub fn corpus_use_case(id: &str) -> UseCase {
    load_use_case(&fixtures().join(format!("opt-in/use_cases/{id}.json"))).unwrap()
}

pub fn discover_use_case() -> UseCase {
    load_use_case(&fixtures().join("worked-example/discover_use_case.json")).unwrap()
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(fixtures().join(rel)).unwrap()
}

/// A pipeline whose gateway replays exactly `script`.
pub fn scripted_pipeline(script: impl IntoIterator<Item = (LlmRequest, String)>) -> Pipeline {
    let at = Utc.with_ymd_and_hms(2024, 6, 1, 0, 0, 0).unwrap();
    let records = script
        .into_iter()
        .map(|(req, text)| ExchangeRecord::new(req, text, at));
    Pipeline::new(
        Gateway::replay(ExchangeCache::in_memory(records)),
        TemplateSet::default(),
        ModelSettings::default(),
    )
}

/// Pipeline used only to build requests.
pub fn request_builder() -> Pipeline {
    scripted_pipeline([])
}
