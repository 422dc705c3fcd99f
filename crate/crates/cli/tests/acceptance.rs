//! Acceptance suite. Prints one PASS/FAIL line per criterion; run with
//! `cargo test -p ucc-cli --test acceptance -- --nocapture` to see them.

mod support;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRng, TestRunner};
use serde::Deserialize;
use support::oracles::{all_sequences, edit_distances, SeqSpace};
use support::scripted::{fixtures_dir, opt_in_dir};
use ucc_core::editscript::ApplyError;
use ucc_core::eval::EvalReport;
use ucc_core::pipeline::{parse_change_list, parse_use_case_output, parse_user_stories, ParseError};
use ucc_core::textmetrics::{modified_precision, similarity};
use ucc_core::usecase::serialize_use_case_pretty;
use ucc_core::{
    apply, bleu, diff, parse_annotations, parse_selection, parse_use_case, rouge1, rouge_l, selection_accuracy,
    tokenize, Answer, ChangeList, PipelineRun, SelectionMode, SelectionResult, UseCase,
};

const ROUND_TRIP_PAIRS: u32 = 1000;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(10);
const ORACLE_BUDGET: Duration = Duration::from_secs(30);
const METRIC_TOL: f64 = 1e-9;
const ACCURACY_TOL: f64 = 1e-3;
const MIN_ADVERSARIAL: usize = 20;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ucc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ucc"))
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("ucc binary runs")
}

// 1 ------------------------------------------------------------------------

const CONDITIONS: [&str; 8] = [
    "The user is logged in.",
    "The user has opted out.",
    "The app is installed.",
    "Location services are enabled.",
    "The user has a paid plan.",
    "Notifications are enabled.",
    "The device is online.",
    "The user is over 16.",
];
const STEPS: [&str; 5] = [
    "The user opens the app.",
    "The app shows a list.",
    "The user selects an item.",
    "The app shares data with a partner.",
    "The user confirms.",
];

fn use_case_strategy() -> impl Strategy<Value = UseCase> {
    let conds = || proptest::sample::subsequence(CONDITIONS.to_vec(), 0..=6).prop_shuffle();
    let flow = proptest::collection::vec(proptest::sample::select(STEPS.to_vec()), 1..=12);
    (conds(), flow, conds()).prop_map(|(pre, flow, post)| UseCase::new("", pre, flow, post).unwrap())
}

fn criterion_round_trip() -> Verdict {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: ROUND_TRIP_PAIRS,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let count = std::cell::Cell::new(0u32);
    let start = Instant::now();
    let outcome = runner.run(&(use_case_strategy(), use_case_strategy()), |(a, b)| {
        count.set(count.get() + 1);
        let out = apply(&diff(&a, &b), &a).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(out.flow(), b.flow());
        prop_assert_eq!(&out, &b);
        Ok(())
    });
    let elapsed = start.elapsed();
    outcome.map_err(|e| e.to_string())?;
    let count = count.get();
    check(count >= ROUND_TRIP_PAIRS, || format!("only {count} pairs ran"))?;
    check(elapsed < ROUND_TRIP_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{count} random pairs, apply(diff(A,B),A) == B, {elapsed:.2?}"))
}

// 2 ------------------------------------------------------------------------

fn flow_case(seq: &[u8]) -> UseCase {
    let names = ["x", "y", "z"];
    UseCase::new("", [""; 0], seq.iter().map(|&s| names[s as usize]), [""; 0]).unwrap()
}

fn criterion_minimality() -> Verdict {
    let start = Instant::now();
    let flows = all_sequences(3, 1..=4);
    let mut pairs = 0usize;
    for a in &flows {
        // A shortest script has at most |a|+|b| ops, so no intermediate flow
        // needs to be longer than |a| + 4.
        let space = SeqSpace::new(3, a.len() + 4);
        let dist = edit_distances(&space, a);
        let ua = flow_case(a);
        for b in &flows {
            let ub = flow_case(b);
            let cl = diff(&ua, &ub);
            let expected = dist[space.index(b)] as usize;
            check(cl.len() == expected, || {
                format!("{a:?} -> {b:?}: diff has {} ops, oracle {expected}", cl.len())
            })?;
            check(apply(&cl, &ua).as_ref() == Ok(&ub), || format!("{a:?} -> {b:?}: script does not apply"))?;
            pairs += 1;
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < ORACLE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{pairs} flow pairs match the BFS oracle exactly, {elapsed:.2?}"))
}

// 3 ------------------------------------------------------------------------

fn criterion_worked_example() -> Verdict {
    let dir = fixtures_dir().join("worked-example");
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).unwrap();
    let original = parse_use_case(&read("discover_use_case.json")).map_err(|e| e.to_string())?;
    let cl = ChangeList::from_json(&read("discover_opt_in_changes.json")).map_err(|e| e.to_string())?;
    let expected = parse_use_case(&read("discover_opt_in_modified.json")).map_err(|e| e.to_string())?;

    let count = |name: &str| cl.iter().filter(|op| op.name() == name).count();
    check(
        (count("insert_pre"), count("insert_flow"), count("insert_post"), cl.len()) == (1, 4, 1, 6),
        || "change list shape is not 1 insert_pre, 4 insert_flow, 1 insert_post".into(),
    )?;
    let out = apply(&cl, &original).map_err(|e| e.to_string())?;
    check(
        out.preconditions() == expected.preconditions()
            && out.flow() == expected.flow()
            && out.postconditions() == expected.postconditions(),
        || "applied use case differs from the expected document".into(),
    )?;

    let tmp = tempfile::tempdir().unwrap();
    let out_path = tmp.path().join("modified.json");
    let o = ucc(&[
        "apply",
        "--use-case",
        dir.join("discover_use_case.json").to_str().unwrap(),
        "--changes",
        dir.join("discover_opt_in_changes.json").to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    check(o.status.code() == Some(0), || format!("ucc apply exited {:?}", o.status.code()))?;
    let written = std::fs::read_to_string(&out_path).unwrap();
    check(written == read("discover_opt_in_modified.json"), || "ucc apply output is not byte-identical".into())?;
    check(serialize_use_case_pretty(&out) + "\n" == written, || "library and CLI disagree".into())?;
    Ok("6-op change list on the 3/7/3 use case yields the 4/11/4 document verbatim".into())
}

// 4 ------------------------------------------------------------------------

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= METRIC_TOL
}

fn criterion_metrics() -> Verdict {
    let t = tokenize;
    let (clipped, total) = modified_precision(&t("the the the the the the the"), &t("the cat is on the mat"), 1);
    check((clipped, total) == (2, 7), || format!("unigram precision {clipped}/{total}, expected 2/7"))?;
    check(close(clipped as f64 / total as f64, 2.0 / 7.0), || "2/7".into())?;

    let r1 = rouge1(&t("the cat sat"), &t("the cat ran"));
    for v in [r1.precision, r1.recall, r1.f1] {
        check(close(v, 2.0 / 3.0), || format!("rouge1 {r1:?}, expected 2/3 throughout"))?;
    }

    let rl = rouge_l(&t("a b c d"), &t("a c b d"));
    check(close(rl.recall, 0.75) && close(rl.precision, 0.75) && close(rl.f1, 0.75), || {
        format!("rougeL {rl:?}, expected LCS 3 of 4")
    })?;

    // p1..p4 = 4/5, 3/4, 2/3, 1/2 and no brevity penalty.
    let b = bleu(&t("a b c d e"), &t("a b c d f"), 4);
    let expected = (4.0 / 5.0 * 3.0 / 4.0 * 2.0 / 3.0 * 1.0 / 2.0f64).powf(0.25);
    check(close(b, expected), || format!("bleu {b}, expected {expected}"))?;
    // All precisions 1, brevity penalty exp(1 - 6/4).
    let b = bleu(&t("a b c d"), &t("a b c d e f"), 4);
    check(close(b, (-0.5f64).exp()), || format!("bleu with brevity penalty {b}"))?;

    let text = "insert_flow 5 The user clearly requests to opt-in.";
    let same = similarity(text, text);
    check(
        same.bleu == 1.0 && same.rouge1.f1 == 1.0 && same.rouge_l.f1 == 1.0,
        || format!("identity scores {same:?}"),
    )?;
    let apart = similarity("alpha beta gamma delta", "one two three four");
    check(
        apart.bleu == 0.0 && apart.rouge1.f1 == 0.0 && apart.rouge_l.f1 == 0.0,
        || format!("disjoint scores {apart:?}"),
    )?;
    Ok(format!("hand-derived values within {METRIC_TOL:e}; identity 1.0, disjoint 0.0"))
}

// 5 ------------------------------------------------------------------------

fn accuracy_for(correct: usize, total: usize) -> f64 {
    let ids: Vec<String> = (0..total).map(|i| format!("u{i}")).collect();
    let annotations = ids
        .iter()
        .map(|id| format!(r#"{{"use_case_id":"{id}","relevant":"yes"}}"#))
        .collect::<Vec<_>>()
        .join("\n");
    let annotations = parse_annotations(&annotations).unwrap();
    let preds: Vec<SelectionResult> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| SelectionResult {
            use_case_id: id.clone(),
            mode: SelectionMode::YesNo,
            answer: if i < correct { Answer::Yes } else { Answer::No },
            rationale: None,
            raw_text: String::new(),
        })
        .collect();
    let refs: Vec<&SelectionResult> = preds.iter().collect();
    selection_accuracy(&refs, &annotations).unwrap()
}

fn criterion_accuracy() -> Verdict {
    let a16 = accuracy_for(16, 30);
    let a20 = accuracy_for(20, 30);
    check((a16 - 0.533).abs() <= ACCURACY_TOL, || format!("16/30 -> {a16}"))?;
    check((a20 - 0.667).abs() <= ACCURACY_TOL, || format!("20/30 -> {a20}"))?;
    check(accuracy_for(0, 30) == 0.0, || "0/30 is not 0".into())?;
    Ok(format!("16/30 -> {a16:.4}, 20/30 -> {a20:.4} (tolerance {ACCURACY_TOL})"))
}

// 6 ------------------------------------------------------------------------

fn replay_once(dir: &Path) -> Result<(PipelineRun, String, EvalReport, String), String> {
    let config = opt_in_dir().join("ucc.json");
    let run_path = dir.join("run.json");
    let report_path = dir.join("report.json");
    let o = ucc(&[
        "--config",
        config.to_str().unwrap(),
        "run",
        "--mode",
        "replay",
        "--out",
        run_path.to_str().unwrap(),
    ]);
    check(o.status.code() == Some(0), || {
        format!("run exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr))
    })?;
    let o = ucc(&[
        "eval",
        "--run",
        run_path.to_str().unwrap(),
        "--annotations",
        opt_in_dir().join("annotations.jsonl").to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    check(o.status.code() == Some(0), || format!("eval exited {:?}", o.status.code()))?;
    let run_text = std::fs::read_to_string(&run_path).unwrap();
    let report_text = std::fs::read_to_string(&report_path).unwrap();
    let run = PipelineRun::from_json(&run_text).map_err(|e| e.to_string())?;
    let report = EvalReport::from_json(&report_text).map_err(|e| e.to_string())?;
    Ok((run, run_text, report, report_text))
}

fn criterion_determinism() -> Verdict {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (run1, _, report1, report_text1) = replay_once(d1.path())?;
    let (run2, _, _, report_text2) = replay_once(d2.path())?;
    check(run1.comparison_form() == run2.comparison_form(), || "run documents differ".into())?;
    check(report_text1 == report_text2, || "report documents differ".into())?;
    check(run1.items.len() == 30, || format!("{} items", run1.items.len()))?;
    check(run1.flagged() == 12, || format!("{} flagged", run1.flagged()))?;
    check(!run1.has_item_errors(), || "run has item errors".into())?;
    check(run1.invariant_violations().is_empty(), || format!("{:?}", run1.invariant_violations()))?;
    let m = &report1.modification;
    check(m.total == 12 && m.scored == 12, || format!("{} modified, {} scored", m.total, m.scored))?;
    check(m.non_violative == 8, || format!("{} non-violative", m.non_violative))?;
    check(m.non_violative_and_self_consistent == 2, || {
        format!("{} non-violative and self-consistent", m.non_violative_and_self_consistent)
    })?;
    let acc = |mode| {
        report1
            .selection
            .iter()
            .find(|s| s.mode == Some(mode))
            .map(|s| s.accuracy)
            .unwrap_or(f64::NAN)
    };
    check((acc(SelectionMode::YesNo) - 0.533).abs() <= ACCURACY_TOL, || "yes/no accuracy".into())?;
    check((acc(SelectionMode::Cot) - 0.667).abs() <= ACCURACY_TOL, || "cot accuracy".into())?;
    Ok("two replay runs identical modulo timestamps; 12 flagged, 8 non-violative, 2 also self-consistent".into())
}

// 7 ------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct AdversarialCase {
    name: String,
    kind: String,
    raw: String,
    expect: serde_json::Value,
}

fn apply_error_kind(e: &ApplyError) -> &'static str {
    match e {
        ApplyError::IndexOutOfRange { .. } => "index_out_of_range",
        ApplyError::MissingCondition { .. } => "missing_condition",
        ApplyError::DuplicateCondition { .. } => "duplicate_condition",
        ApplyError::EmptyText { .. } => "empty_text",
        ApplyError::InvalidResult(_) => "invalid_result",
    }
}

fn apply_error_position(e: &ApplyError) -> Option<usize> {
    match e {
        ApplyError::IndexOutOfRange { position, .. }
        | ApplyError::MissingCondition { position, .. }
        | ApplyError::DuplicateCondition { position, .. }
        | ApplyError::EmptyText { position, .. } => Some(*position),
        ApplyError::InvalidResult(_) => None,
    }
}

fn run_case(case: &AdversarialCase, base: &UseCase) -> Result<(), String> {
    let expect = &case.expect;
    let want_err = expect.get("error").and_then(|v| v.as_str());
    let parse_err = |r: Result<(), ParseError>| -> Result<(), String> {
        match (r, want_err) {
            (Ok(()), None) => Ok(()),
            (Err(e), Some(k)) if e.kind() == k => Ok(()),
            (Err(e), _) => Err(format!("got error {}, expected {expect}", e.kind())),
            (Ok(()), Some(k)) => Err(format!("parsed, expected error {k}")),
        }
    };
    match case.kind.as_str() {
        "yes_no" | "cot" => {
            let mode = if case.kind == "cot" { SelectionMode::Cot } else { SelectionMode::YesNo };
            parse_err(parse_selection(&case.raw, mode).map(|(answer, rationale)| {
                let want = expect["answer"].as_str().unwrap_or_default();
                assert_eq!(answer == Answer::Yes, want == "yes", "{}: answer", case.name);
                assert_eq!(rationale.is_some(), mode == SelectionMode::Cot, "{}: rationale", case.name);
            }))
        }
        "change_list" => {
            let cl = match parse_change_list(&case.raw) {
                Ok(cl) => cl,
                Err(e) => return parse_err(Err(e)),
            };
            if let Some(n) = expect.get("ops") {
                check(cl.len() as u64 == n.as_u64().unwrap(), || format!("{} ops", cl.len()))?;
            }
            match (apply(&cl, base), expect.get("apply_error").and_then(|v| v.as_str())) {
                (Ok(_), None) => Ok(()),
                (Err(e), Some(k)) if apply_error_kind(&e) == k => {
                    let pos = expect.get("position").and_then(|v| v.as_u64()).map(|p| p as usize);
                    check(pos.is_none() || apply_error_position(&e) == pos, || format!("position {e}"))?;
                    check(pos.is_none() || e.op().is_some(), || "error does not carry the op".into())
                }
                (Err(e), _) => Err(format!("apply error {e}, expected {expect}")),
                (Ok(_), Some(k)) => Err(format!("applied, expected {k}")),
            }
        }
        "use_case" => parse_err(parse_use_case_output(&case.raw).map(|uc| {
            if let Some(n) = expect.get("flow") {
                assert_eq!(uc.flow().len() as u64, n.as_u64().unwrap());
            }
        })),
        "user_stories" => parse_err(parse_user_stories(&case.raw).map(|s| {
            if let Some(n) = expect.get("stories") {
                assert_eq!(s.len() as u64, n.as_u64().unwrap());
            }
        })),
        other => Err(format!("unknown case kind {other}")),
    }
}

fn criterion_parser_robustness() -> Verdict {
    let text = std::fs::read_to_string(fixtures_dir().join("adversarial/cases.json")).unwrap();
    let cases: Vec<AdversarialCase> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let base = parse_use_case(
        &std::fs::read_to_string(fixtures_dir().join("worked-example/discover_use_case.json")).unwrap(),
    )
    .unwrap();
    check(cases.len() >= MIN_ADVERSARIAL, || format!("only {} cases", cases.len()))?;
    let names: BTreeSet<&str> = cases.iter().map(|c| c.name.as_str()).collect();
    check(names.len() == cases.len(), || "duplicate case names".into())?;
    let mut failures = Vec::new();
    for case in &cases {
        match catch_unwind(AssertUnwindSafe(|| run_case(case, &base))) {
            Ok(Ok(())) => {}
            Ok(Err(msg)) => failures.push(format!("{}: {msg}", case.name)),
            Err(_) => failures.push(format!("{}: panicked", case.name)),
        }
    }
    check(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("{} adversarial outputs parsed or rejected with the expected typed error", cases.len()))
}

// 8 ------------------------------------------------------------------------

fn criterion_offline() -> Verdict {
    // Every proxy points at a closed local port, so any outbound request
    // from the subprocess would fail.
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run.json");
    let config = opt_in_dir().join("ucc.json");
    let dead = "http://127.0.0.1:9";
    let o = Command::new(env!("CARGO_BIN_EXE_ucc"))
        .args([
            "--config",
            config.to_str().unwrap(),
            "run",
            "--mode",
            "replay",
            "--base-url",
            dead,
            "--out",
            out.to_str().unwrap(),
        ])
        .env_remove("OPENAI_API_KEY")
        .env("HTTP_PROXY", dead)
        .env("HTTPS_PROXY", dead)
        .env("ALL_PROXY", dead)
        .output()
        .unwrap();
    check(o.status.code() == Some(0), || {
        format!("replay run without network exited {:?}", o.status.code())
    })?;

    let o = Command::new(env!("CARGO_BIN_EXE_ucc"))
        .args(["--config", config.to_str().unwrap(), "run", "--mode", "live", "--base-url", dead])
        .env_remove("OPENAI_API_KEY")
        .output()
        .unwrap();
    check(o.status.code() == Some(2), || {
        format!("live mode without credential exited {:?}, expected 2", o.status.code())
    })?;

    let run = PipelineRun::from_json(&std::fs::read_to_string(&out).unwrap()).map_err(|e| e.to_string())?;
    check(run.gateway_mode == ucc_core::GatewayMode::Replay, || "run not in replay mode".into())?;
    Ok("replay run succeeds with every route to the network dead; live mode refuses without a credential".into())
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("edit-script round trip", criterion_round_trip),
        ("diff minimality", criterion_minimality),
        ("worked example", criterion_worked_example),
        ("metric oracles", criterion_metrics),
        ("accuracy formula", criterion_accuracy),
        ("replay determinism", criterion_determinism),
        ("parser robustness", criterion_parser_robustness),
        ("offline", criterion_offline),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let verdict = catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                println!("FAIL {} {name}: {why}", i + 1);
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
