use super::ngram::{clipped_overlap, ngram_counts};
use super::tokenize::tokenize;

/// Stand-in for a zero unigram precision so the geometric mean stays defined.
pub const ZERO_PRECISION_FLOOR: f64 = 1e-9;

/// Sentence-level BLEU over whitespace/punctuation tokens.
///
/// Unigram precision is floored at [`ZERO_PRECISION_FLOOR`]; higher orders use add-one
/// smoothing on both the clipped match count and the candidate n-gram count, so orders the
/// prediction is too short for contribute a precision of 1. Brevity penalty is
/// `exp(1 - |ref| / |pred|)` when the prediction is shorter than the reference.
pub fn bleu(prediction: &str, reference: &str, max_order: usize, lowercase: bool) -> f64 {
    let pred = tokenize(prediction, lowercase);
    let refs = tokenize(reference, lowercase);
    if pred.is_empty() || max_order == 0 {
        return 0.0;
    }

    let mut log_sum = 0.0;
    for n in 1..=max_order {
        let pred_counts = ngram_counts(&pred, n);
        let ref_counts = ngram_counts(&refs, n);
        let matches = clipped_overlap(&pred_counts, &ref_counts) as f64;
        let total = pred.len().saturating_sub(n - 1) as f64;
        let precision = if n == 1 {
            if matches == 0.0 {
                ZERO_PRECISION_FLOOR
            } else {
                matches / total
            }
        } else {
            (matches + 1.0) / (total + 1.0)
        };
        log_sum += precision.ln();
    }

    let (c, r) = (pred.len() as f64, refs.len() as f64);
    let brevity = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    (brevity * (log_sum / max_order as f64).exp()).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one() {
        let msg = "Add retry logic to the HTTP client and cover it with tests";
        assert!((bleu(msg, msg, 4, true) - 1.0).abs() < 1e-12);
        assert!((bleu("fix", "fix", 4, true) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_hits_the_floor() {
        let pred = "alpha beta gamma delta epsilon zeta eta theta iota kappa";
        let refs = "one two three four five six seven eight nine ten";
        let score = bleu(pred, refs, 4, true);
        assert!(score > 0.0 && score < 0.05, "{score}");
    }

    #[test]
    fn short_prefix_hand_table() {
        // pred: the cat sat (3 tokens); ref: the cat sat on the mat (6 tokens)
        // order | clipped matches | pred n-grams | precision
        //   1   |        3        |      3       | 3/3
        //   2   |        2        |      2       | (2+1)/(2+1)
        //   3   |        1        |      1       | (1+1)/(1+1)
        //   4   |        0        |      0       | (0+1)/(0+1)
        let table = [
            (3.0, 3.0, false),
            (2.0, 2.0, true),
            (1.0, 1.0, true),
            (0.0, 0.0, true),
        ];
        let log_mean: f64 = table
            .iter()
            .map(|&(m, t, smooth): &(f64, f64, bool)| {
                if smooth {
                    ((m + 1.0) / (t + 1.0)).ln()
                } else {
                    (m / t).ln()
                }
            })
            .sum::<f64>()
            / 4.0;
        let expected = (1.0f64 - 6.0 / 3.0).exp() * log_mean.exp();
        let got = bleu("the cat sat", "the cat sat on the mat", 4, true);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn empty_prediction_scores_zero() {
        assert_eq!(bleu("", "something", 4, true), 0.0);
        assert_eq!(bleu(" ", "", 4, true), 0.0);
    }

    #[test]
    fn case_folding() {
        assert!((bleu("Fix Bug", "fix bug", 4, true) - 1.0).abs() < 1e-12);
        assert!(bleu("Fix Bug", "fix bug", 4, false) < 0.01);
    }
}
