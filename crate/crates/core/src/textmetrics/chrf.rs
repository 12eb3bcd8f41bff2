use super::ngram::{clipped_overlap, f_beta, ngram_counts};

/// Character n-gram F-beta, averaged over orders `1..=max_order`.
///
/// Whitespace is removed before extracting n-grams. Orders where neither side has any
/// n-gram are left out of the average; if that leaves no order, the score is 0.
pub fn chrf(prediction: &str, reference: &str, max_order: usize, beta: f64) -> f64 {
    let pred: Vec<char> = prediction.chars().filter(|c| !c.is_whitespace()).collect();
    let refs: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();

    let mut total = 0.0;
    let mut orders = 0usize;
    for n in 1..=max_order {
        let pred_counts = ngram_counts(&pred, n);
        let ref_counts = ngram_counts(&refs, n);
        let pred_total: usize = pred_counts.values().sum();
        let ref_total: usize = ref_counts.values().sum();
        if pred_total == 0 && ref_total == 0 {
            continue;
        }
        orders += 1;
        if pred_total == 0 || ref_total == 0 {
            continue;
        }
        let matches = clipped_overlap(&pred_counts, &ref_counts) as f64;
        total += f_beta(
            matches / pred_total as f64,
            matches / ref_total as f64,
            beta,
        );
    }
    if orders == 0 {
        0.0
    } else {
        total / orders as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one() {
        let msg = "Bump version to 1.2.3";
        assert!((chrf(msg, msg, 6, 2.0) - 1.0).abs() < 1e-12);
        assert!((chrf("ab", "ab", 6, 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_alphabets_zero() {
        assert_eq!(chrf("abc abc", "xyz", 6, 2.0), 0.0);
    }

    #[test]
    fn single_order_hand_counts() {
        // pred {a,b,c}, ref {a,b,d}: 2 matches of 3 on each side.
        let (p, r) = (2.0 / 3.0, 2.0 / 3.0);
        let expected = 5.0 * p * r / (4.0 * p + r);
        assert!((chrf("abc", "abd", 1, 2.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn whitespace_ignored() {
        assert!((chrf("a b c", "abc", 3, 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sides() {
        assert_eq!(chrf("", "", 6, 2.0), 0.0);
        assert_eq!(chrf("abc", "", 6, 2.0), 0.0);
    }

    #[test]
    fn case_sensitive() {
        assert!(chrf("ABC", "abc", 6, 2.0) < 1e-12);
    }
}
