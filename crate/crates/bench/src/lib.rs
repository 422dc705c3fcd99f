//! Synthetic inputs for the benchmarks.

use ucc_core::UseCase;

/// A valid use case with `n` flow steps and `n / 2` conditions per side.
/// `variant` perturbs every third step so two variants diff non-trivially.
pub fn synthetic_use_case(n: usize, variant: u32) -> UseCase {
    let flow: Vec<String> = (0..n)
        .map(|i| {
            if variant > 0 && i % 3 == 0 {
                format!("Step {i}: the app asks for confirmation, revision {variant}.")
            } else {
                format!("Step {i}: the user reviews the data sharing settings.")
            }
        })
        .collect();
    let conds = |side: &str| -> Vec<String> {
        (0..n / 2)
            .map(|i| format!("{side} condition {} holds.", i + variant as usize))
            .collect()
    };
    UseCase::new("bench", conds("Pre"), flow, conds("Post")).expect("synthetic use case is valid")
}

/// Roughly `words` tokens of change-list-like text.
pub fn synthetic_text(words: usize, seed: usize) -> String {
    const VOCAB: [&str; 12] = [
        "insert_flow", "the", "user", "opts", "in", "to", "sale", "of", "personal", "information", "confirms", ".",
    ];
    (0..words)
        .map(|i| VOCAB[(i * 7 + seed * 3 + i / 5) % VOCAB.len()])
        .collect::<Vec<_>>()
        .join(" ")
}
