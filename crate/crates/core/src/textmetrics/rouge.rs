use super::edit::lcs_len;
use super::ngram::{clipped_overlap, f_beta, ngram_counts};
use super::tokenize::tokenize;

/// ROUGE-N F1 over clipped n-gram counts.
///
/// When neither side has an n-gram of order `n` (both shorter than `n` tokens), the score is
/// 1.0 for identical non-empty token sequences and 0.0 otherwise.
pub fn rouge_n(prediction: &str, reference: &str, n: usize, lowercase: bool) -> f64 {
    let pred = tokenize(prediction, lowercase);
    let refs = tokenize(reference, lowercase);
    let pred_counts = ngram_counts(&pred, n);
    let ref_counts = ngram_counts(&refs, n);
    let pred_total: usize = pred_counts.values().sum();
    let ref_total: usize = ref_counts.values().sum();
    if pred_total == 0 && ref_total == 0 {
        return if !pred.is_empty() && pred == refs {
            1.0
        } else {
            0.0
        };
    }
    if pred_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let overlap = clipped_overlap(&pred_counts, &ref_counts) as f64;
    f_beta(overlap / pred_total as f64, overlap / ref_total as f64, 1.0)
}

/// ROUGE-L F1 from the token-level longest common subsequence.
pub fn rouge_l(prediction: &str, reference: &str, lowercase: bool) -> f64 {
    let pred = tokenize(prediction, lowercase);
    let refs = tokenize(reference, lowercase);
    if pred.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&pred, &refs) as f64;
    f_beta(lcs / pred.len() as f64, lcs / refs.len() as f64, 1.0)
}
