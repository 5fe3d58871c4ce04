//! Sørensen-Dice text similarity over character bigrams.

use std::collections::HashMap;

/// Collapse whitespace runs to one space, trim, and lowercase.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn bigrams(chars: &[char]) -> HashMap<(char, char), usize> {
    let mut counts = HashMap::new();
    for w in chars.windows(2) {
        *counts.entry((w[0], w[1])).or_insert(0) += 1;
    }
    counts
}

/// `2·|A ∩ B| / (|A| + |B|)` where A and B are the bigram multisets of the
/// normalized inputs.
///
/// Strings shorter than two characters have no bigrams, so they compare by
/// equality instead.
pub fn dice(a: &str, b: &str) -> f64 {
    let a: Vec<char> = normalize_text(a).chars().collect();
    let b: Vec<char> = normalize_text(b).chars().collect();
    if a.len() < 2 || b.len() < 2 {
        return if a == b { 1.0 } else { 0.0 };
    }
    let ga = bigrams(&a);
    let gb = bigrams(&b);
    let shared: usize = ga
        .iter()
        .map(|(k, &n)| n.min(gb.get(k).copied().unwrap_or(0)))
        .sum();
    let total = (a.len() - 1) + (b.len() - 1);
    2.0 * shared as f64 / total as f64
}
