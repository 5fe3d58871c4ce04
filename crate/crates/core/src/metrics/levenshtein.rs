//! Code similarity from unit-cost edit distance.

/// Levenshtein distance over Unicode scalar values (insert, delete and
/// substitute all cost 1).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    // Keep the shorter sequence on the inner loop.
    let (outer, inner) = if a.len() >= b.len() { (&a, &b) } else { (&b, &a) };

    let mut row: Vec<usize> = (0..=inner.len()).collect();
    for (i, oc) in outer.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, ic) in inner.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(oc != ic);
            row[j + 1] = (above + 1).min(row[j] + 1).min(diag + cost);
            diag = above;
        }
    }
    row[inner.len()]
}

/// `1 - distance / (len(a) + len(b))` with lengths in code points.
///
/// The denominator is the sum of both lengths, not the maximum. Two empty
/// strings are identical and score 1.
pub fn code_similarity(generated: &str, reference: &str) -> f64 {
    let total = generated.chars().count() + reference.chars().count();
    if total == 0 {
        return 1.0;
    }
    1.0 - levenshtein(generated, reference) as f64 / total as f64
}
