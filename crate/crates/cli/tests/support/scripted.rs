//! Builds exchange records from the scripted responses shipped with the
//! fixture corpus. Prompts are rendered with the bundled templates, so the
//! cache stays in sync with them.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use serde::Deserialize;
use ucc_core::corpus::load_provision;
use ucc_core::gateway::ExchangeCache;
use ucc_core::{
    Corpus, ExchangeRecord, Gateway, ModelSettings, ModificationMode, Pipeline, SelectionMode, TemplateSet,
};

#[derive(Debug, Deserialize)]
pub struct ScriptedResponses {
    pub cot: String,
    pub yes_no: String,
    #[serde(default)]
    pub modification: Option<String>,
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn opt_in_dir() -> PathBuf {
    fixtures_dir().join("opt-in")
}

pub fn recorded_at() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 6, 1, 0, 0, 0).unwrap()
}

pub fn offline_pipeline() -> Pipeline {
    Pipeline::new(
        Gateway::replay(ExchangeCache::default()),
        TemplateSet::default(),
        ModelSettings::default(),
    )
}

/// One record per scripted response, in corpus order.
pub fn opt_in_records() -> Vec<ExchangeRecord> {
    let dir = opt_in_dir();
    let corpus = Corpus::load(&dir.join("manifest.json")).expect("fixture corpus loads");
    let provision =
        load_provision(&fixtures_dir().join("provisions/ccpa-7028a.json")).expect("fixture provision loads");
    let text = std::fs::read_to_string(dir.join("responses.json")).expect("responses.json readable");
    let responses: BTreeMap<String, ScriptedResponses> =
        serde_json::from_str(&text).expect("responses.json parses");
    let pipeline = offline_pipeline();

    let mut records = Vec::new();
    for entry in &corpus.entries {
        let uc = &entry.use_case;
        let r = &responses[uc.id()];
        for (mode, raw) in [(SelectionMode::Cot, &r.cot), (SelectionMode::YesNo, &r.yes_no)] {
            let req = pipeline
                .selection_request(uc, &provision, &entry.app, mode)
                .expect("selection prompt renders");
            records.push(ExchangeRecord::new(req, raw.clone(), recorded_at()));
        }
        if let Some(raw) = &r.modification {
            let req = pipeline
                .modification_request(uc, &provision, &entry.app, ModificationMode::Editscript)
                .expect("modification prompt renders");
            records.push(ExchangeRecord::new(req, raw.clone(), recorded_at()));
        }
    }
    records
}

pub fn to_jsonl(records: &[ExchangeRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}
