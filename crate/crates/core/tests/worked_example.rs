mod common;

use common::{app, opt_in_provision, read, discover_use_case};
use sha2::{Digest, Sha256};
use ucc_core::prompts::TemplateName;
use ucc_core::usecase::serialize_use_case_pretty;
use ucc_core::{
    apply, canonicalize, diff, parse_use_case, request_hash, serialize_change_list, serialize_use_case,
    validate, ChangeList, EditOp, LlmRequest, TemplateSet, UserStory,
};

fn opt_in_changes() -> ChangeList {
    ChangeList::from_json(&read("worked-example/discover_opt_in_changes.json")).unwrap()
}

#[test]
fn discover_use_case_shape() {
    let uc = discover_use_case();
    assert_eq!(uc.preconditions().len(), 3);
    assert_eq!(uc.flow().len(), 7);
    assert_eq!(uc.postconditions().len(), 3);
    assert!(validate(&uc).is_empty());
    assert!(uc
        .preconditions()
        .contains(&"The user has downloaded and installed the mobile app.".to_string()));
}

#[test]
fn discover_serialization_is_a_fixed_point() {
    let once = serialize_use_case(&discover_use_case());
    let twice = serialize_use_case(&parse_use_case(&once).unwrap());
    assert_eq!(once, twice);
    assert!(once.starts_with(r#"{"preconditions":["#));
}

#[test]
fn opt_in_changes_reproduce_modified_use_case() {
    let out = apply(&opt_in_changes(), &discover_use_case()).unwrap();
    let expected = read("worked-example/discover_opt_in_modified.json");
    assert_eq!(serialize_use_case_pretty(&out) + "\n", expected);
    assert_eq!(out.flow()[6], "The user clearly requests to opt-in to the sale or sharing of their personal information.");
    assert_eq!(
        out.flow()[7],
        "The user separately confirms their choice to opt-in to the sale or sharing of their personal information."
    );
}

#[test]
fn diff_recovers_opt_in_changes() {
    let out = apply(&opt_in_changes(), &discover_use_case()).unwrap();
    let recovered = diff(&discover_use_case(), &out);
    assert_eq!(canonicalize(&recovered), canonicalize(&opt_in_changes()));
    assert_eq!(
        serialize_change_list(&recovered),
        serialize_change_list(&opt_in_changes())
    );
}

#[test]
fn opt_in_changes_line_form() {
    let lines = serialize_change_list(&opt_in_changes());
    let first: Vec<&str> = lines.lines().map(|l| l.split(' ').next().unwrap()).collect();
    assert_eq!(
        first,
        ["insert_pre", "insert_flow", "insert_flow", "insert_flow", "insert_flow", "insert_post"]
    );
    assert!(lines.contains("\ninsert_flow 6 The user clearly requests"));
}

#[test]
fn discover_user_story_parses() {
    let s = UserStory::parse(read("worked-example/discover_user_story.txt").trim());
    assert!(s.is_structured());
    assert_eq!(s.actor, "user");
    assert_eq!(s.action, "discover a variety of audiobooks, podcasts, and App Originals");
    assert_eq!(s.goal, "I can enjoy diverse storytelling");
}

#[test]
fn rendered_selection_prompts() {
    let templates = TemplateSet::default();
    let p = opt_in_provision();
    let a = app("audiobooks");
    for name in [TemplateName::YesNo, TemplateName::Cot] {
        let prompt = templates.get(name).render(&p, &a, &discover_use_case()).unwrap();
        assert!(prompt.starts_with("Task: Read the following legal text"));
        assert_eq!(prompt.matches("two-step opt-in process").count(), 1);
        assert!(prompt.contains(&format!("Use Case: {}", serialize_use_case(&discover_use_case()))));
        assert!(prompt.contains(&format!("App Description Summary: {}", a.summary)));
        assert!(prompt.ends_with("Answer:"));
    }
}

#[test]
fn rendered_prompt_golden_hash() {
    let prompt = TemplateSet::default()
        .get(TemplateName::YesNo)
        .render(&opt_in_provision(), &app("audiobooks"), &discover_use_case())
        .unwrap();
    let digest = hex::encode(Sha256::digest(prompt.as_bytes()));
    assert_eq!(digest, GOLDEN_YES_NO, "prompt:\n{prompt}");
}

const GOLDEN_YES_NO: &str = "2114525dcf0746190ed97c0f94cfa258ccbcfc940dd02306b83e93b7f673b370";

#[test]
fn request_hash_matches_hand_built_canonical_json() {
    let req = LlmRequest::new("Say \"hi\"\nplease");
    let canonical = format!(
        r#"{{"model_name":"gpt-4o-2024-05-13","prompt":{},"temperature":0.0}}"#,
        serde_json::to_string("Say \"hi\"\nplease").unwrap()
    );
    assert_eq!(request_hash(&req), hex::encode(Sha256::digest(canonical.as_bytes())));
}

#[test]
fn change_list_json_names_ops() {
    let cl = ChangeList::new(vec![EditOp::insert_flow(5, "x")]);
    assert_eq!(cl.to_json(), r#"{"ops":[{"op":"insert_flow","at_index":5,"text":"x"}]}"#);
}
