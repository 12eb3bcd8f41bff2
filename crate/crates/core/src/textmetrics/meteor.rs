use super::porter::stem;
use super::tokenize::tokenize;

/// Unigram alignment between prediction and reference tokens.
///
/// Built in two stages, exact surface match then Porter-stem match over the tokens left
/// unaligned. Each stage tiles greedily: the longest contiguous run of matching unaligned
/// tokens is aligned first, which exhausts every possible match (maximal matching) while
/// keeping runs intact (few chunks).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// For each prediction token, the aligned reference position.
    pub pred_to_ref: Vec<Option<usize>>,
}

impl Alignment {
    pub fn matches(&self) -> usize {
        self.pred_to_ref.iter().flatten().count()
    }

    /// Runs of aligned tokens that are adjacent in both sequences.
    pub fn chunks(&self) -> usize {
        let mut chunks = 0;
        let mut prev: Option<usize> = None;
        for slot in &self.pred_to_ref {
            match (prev, slot) {
                (Some(p), Some(r)) if *r == p + 1 => {}
                (_, Some(_)) => chunks += 1,
                _ => {}
            }
            prev = *slot;
        }
        chunks
    }
}

fn tile<K: PartialEq>(
    pred: &[K],
    refs: &[K],
    pred_to_ref: &mut [Option<usize>],
    ref_used: &mut [bool],
) {
    let (n, m) = (pred.len(), refs.len());
    loop {
        // run[i][j]: length of the matching unaligned run starting at (i, j).
        let mut run = vec![0usize; (n + 1) * (m + 1)];
        let idx = |i: usize, j: usize| i * (m + 1) + j;
        let mut longest = 0;
        for i in (0..n).rev() {
            for j in (0..m).rev() {
                if pred_to_ref[i].is_none() && !ref_used[j] && pred[i] == refs[j] {
                    let len = run[idx(i + 1, j + 1)] + 1;
                    run[idx(i, j)] = len;
                    longest = longest.max(len);
                }
            }
        }
        if longest == 0 {
            return;
        }
        // Take every non-overlapping run of the maximal length, scanning in order.
        for i in 0..n {
            for j in 0..m {
                if run[idx(i, j)] < longest {
                    continue;
                }
                let free = (0..longest).all(|k| pred_to_ref[i + k].is_none() && !ref_used[j + k]);
                if free {
                    for k in 0..longest {
                        pred_to_ref[i + k] = Some(j + k);
                        ref_used[j + k] = true;
                    }
                }
            }
        }
    }
}

pub fn align(pred: &[String], refs: &[String]) -> Alignment {
    let mut pred_to_ref = vec![None; pred.len()];
    let mut ref_used = vec![false; refs.len()];
    tile(pred, refs, &mut pred_to_ref, &mut ref_used);
    let pred_stems: Vec<String> = pred.iter().map(|t| stem(t)).collect();
    let ref_stems: Vec<String> = refs.iter().map(|t| stem(t)).collect();
    tile(&pred_stems, &ref_stems, &mut pred_to_ref, &mut ref_used);
    Alignment { pred_to_ref }
}

/// METEOR without the synonym stage: `Fmean * (1 - 0.5 * (chunks / matches)^3)` with
/// `Fmean = 10PR / (R + 9P)`.
pub fn meteor(prediction: &str, reference: &str, lowercase: bool) -> f64 {
    let pred = tokenize(prediction, lowercase);
    let refs = tokenize(reference, lowercase);
    let alignment = align(&pred, &refs);
    let matches = alignment.matches();
    if matches == 0 {
        return 0.0;
    }
    let precision = matches as f64 / pred.len() as f64;
    let recall = matches as f64 / refs.len() as f64;
    let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let fragmentation = alignment.chunks() as f64 / matches as f64;
    let penalty = 0.5 * fragmentation.powi(3);
    fmean * (1.0 - penalty)
}
