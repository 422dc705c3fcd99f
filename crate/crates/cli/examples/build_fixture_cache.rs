//! Regenerates `fixtures/opt-in/cache.jsonl` from `responses.json`.
//!
//! cargo run -p ucc-cli --example build_fixture_cache

#[path = "../tests/support/scripted.rs"]
mod scripted;

fn main() {
    let records = scripted::opt_in_records();
    let path = scripted::opt_in_dir().join("cache.jsonl");
    std::fs::write(&path, scripted::to_jsonl(&records)).expect("cache written");
    println!("wrote {} records to {}", records.len(), path.display());
}
