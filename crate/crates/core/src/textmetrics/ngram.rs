use std::collections::HashMap;
use std::hash::Hash;

pub(crate) fn ngram_counts<T: Eq + Hash>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || items.len() < n {
        return counts;
    }
    for window in items.windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    counts
}

/// Clipped overlap `sum(min(count_a, count_b))`.
pub(crate) fn clipped_overlap<T: Eq + Hash>(
    a: &HashMap<&[T], usize>,
    b: &HashMap<&[T], usize>,
) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .map(|(gram, &count)| count.min(large.get(gram).copied().unwrap_or(0)))
        .sum()
}

pub(crate) fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom <= 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}
