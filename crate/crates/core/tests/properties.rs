use std::collections::{HashMap, HashSet};
use std::sync::Mutex;

use proptest::prelude::*;

use cmgeval_core::corpus::{
    derive_pairs, CommitRecord, DerivationEdge, DerivationMethod, MessageNode, NodeSource,
    PairPolicy,
};
use cmgeval_core::distcheck::{filter_zero, ks_statistic, TelemetryLog, TelemetryRecord};
use cmgeval_core::stats::spearman;
use cmgeval_core::synthgen::{
    added_fraction, generate, removed_fraction, Direction, GenerationJob, MockClient,
};
use cmgeval_core::textmetrics::{
    bleu, chrf, edit_distance, edit_similarity, embedding_score, meteor, rouge_l, rouge_n,
    tokenize, EmbeddingProvider, MetricError,
};

/// Plain recursive Levenshtein; only usable on short strings.
fn brute_ed(a: &[char], b: &[char]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = brute_ed(ra, rb) + usize::from(x != y);
            sub.min(brute_ed(ra, b) + 1).min(brute_ed(a, rb) + 1)
        }
    }
}

fn unigram_f1(pred: &str, reference: &str) -> f64 {
    let count = |s: &str| {
        let mut m: HashMap<String, usize> = HashMap::new();
        for t in tokenize(s, true).iter() {
            *m.entry(t.clone()).or_default() += 1;
        }
        m
    };
    let (p, r) = (count(pred), count(reference));
    let (np, nr): (usize, usize) = (p.values().sum(), r.values().sum());
    if np == 0 || nr == 0 {
        return 0.0;
    }
    let overlap: usize = p
        .iter()
        .map(|(t, c)| (*c).min(*r.get(t).unwrap_or(&0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let (prec, rec) = (overlap as f64 / np as f64, overlap as f64 / nr as f64);
    2.0 * prec * rec / (prec + rec)
}

/// A fresh one-hot vector per distinct token, so distinct tokens are orthogonal.
#[derive(Default)]
struct OneHot(Mutex<HashMap<String, usize>>);

const DIM: usize = 64;

impl EmbeddingProvider for OneHot {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f32>>, MetricError> {
        let mut ids = self.0.lock().unwrap();
        Ok(tokens
            .iter()
            .map(|t| {
                let next = ids.len();
                let id = *ids.entry(t.clone()).or_insert(next);
                let mut v = vec![0.0; DIM];
                v[id] = 1.0;
                v
            })
            .collect())
    }
}

fn message() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec![
            "fix", "add", "bug", "parser", "test", "docs", "Fix", "the", "in", ".",
        ]),
        0..8,
    )
    .prop_map(|w| w.join(" "))
}

fn non_empty_message() -> impl Strategy<Value = String> {
    message().prop_filter("non-empty", |m| !m.trim().is_empty())
}

/// Messages whose (lowercased) tokens are pairwise distinct.
fn distinct_words() -> impl Strategy<Value = String> {
    prop::sample::subsequence(
        vec![
            "fix", "add", "bug", "parser", "test", "docs", "cache", "api",
        ],
        1..6,
    )
    .prop_shuffle()
    .prop_map(|w| w.join(" "))
}

fn abc(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!['a', 'b', 'c']), 0..=max)
        .prop_map(|v| v.into_iter().collect())
}

/// A commit with model messages, expert edits, backward messages and forward edits, wired
/// to random parents.
fn commit() -> impl Strategy<Value = CommitRecord> {
    (
        1usize..4,
        prop::collection::vec(any::<u8>(), 0..5),
        prop::collection::vec(any::<u8>(), 0..3),
        prop::collection::vec(any::<u8>(), 0..4),
    )
        .prop_filter_map("needs an edit", |(n_model, experts, backward, forward)| {
            if experts.is_empty() {
                return None;
            }
            let mut nodes = Vec::new();
            let mut edges = Vec::new();
            for i in 0..n_model {
                nodes.push(MessageNode::new(
                    format!("g{i}"),
                    NodeSource::Model,
                    format!("gen {i}"),
                ));
            }
            for (i, p) in experts.iter().enumerate() {
                let parent = format!("g{}", *p as usize % n_model);
                nodes.push(MessageNode::new(
                    format!("e{i}"),
                    NodeSource::Expert,
                    format!("edit {i}"),
                ));
                edges.push(DerivationEdge::new(
                    parent,
                    format!("e{i}"),
                    DerivationMethod::HumanEdit,
                ));
            }
            for (i, p) in backward.iter().enumerate() {
                let parent = format!("e{}", *p as usize % experts.len());
                nodes.push(MessageNode::new(
                    format!("b{i}"),
                    NodeSource::SyntheticBackward,
                    format!("back {i}"),
                ));
                edges.push(DerivationEdge::new(
                    parent,
                    format!("b{i}"),
                    DerivationMethod::LlmBackward,
                ));
            }
            let generated: Vec<String> = nodes
                .iter()
                .filter(|n| matches!(n.source, NodeSource::Model | NodeSource::SyntheticBackward))
                .map(|n| n.node_id.clone())
                .collect();
            for (i, p) in forward.iter().enumerate() {
                let parent = generated[*p as usize % generated.len()].clone();
                nodes.push(MessageNode::new(
                    format!("f{i}"),
                    NodeSource::SyntheticForward,
                    format!("fwd {i}"),
                ));
                edges.push(DerivationEdge::new(
                    parent,
                    format!("f{i}"),
                    DerivationMethod::LlmForward,
                ));
            }
            let record = CommitRecord {
                commit_id: "c".into(),
                diff: String::new(),
                original_message: "original".into(),
                summary: None,
                nodes,
                edges,
            };
            record.validate().expect("generator builds valid records");
            Some(record)
        })
}

fn policy() -> impl Strategy<Value = PairPolicy> {
    prop_oneof![Just(PairPolicy::Direct), Just(PairPolicy::Closure)]
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn edit_distance_matches_brute_force(a in abc(5), b in abc(5)) {
        let (ca, cb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        prop_assert_eq!(edit_distance(&a, &b), brute_ed(&ca, &cb));
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
    }

    #[test]
    fn edit_distance_triangle_inequality(a in ".{0,12}", b in ".{0,12}", c in ".{0,12}") {
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
    }

    #[test]
    fn edit_similarity_bounds(a in abc(7), b in abc(7)) {
        let s = edit_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(edit_similarity(&a, &a), 1.0);
    }

    #[test]
    fn metric_bounds_and_identity(a in non_empty_message(), b in message()) {
        for (name, s) in [
            ("bleu", bleu(&a, &b, 4, true)),
            ("rouge-1", rouge_n(&a, &b, 1, true)),
            ("rouge-2", rouge_n(&a, &b, 2, true)),
            ("rouge-l", rouge_l(&a, &b, true)),
            ("meteor", meteor(&a, &b, true)),
            ("chrf", chrf(&a, &b, 6, 2.0)),
        ] {
            prop_assert!((0.0..=1.0).contains(&s), "{name} = {s}");
        }
        for (name, s) in [
            ("bleu", bleu(&a, &a, 4, true)),
            ("rouge-1", rouge_n(&a, &a, 1, true)),
            ("rouge-2", rouge_n(&a, &a, 2, true)),
            ("rouge-l", rouge_l(&a, &a, true)),
            ("chrf", chrf(&a, &a, 6, 2.0)),
        ] {
            prop_assert!((s - 1.0).abs() < 1e-12, "{name}(x, x) = {s}");
        }
        // a perfect alignment is one chunk: Fmean = 1, penalty 0.5 / m^3
        let m = tokenize(&a, true).len() as f64;
        prop_assert!((meteor(&a, &a, true) - (1.0 - 0.5 / m.powi(3))).abs() < 1e-12);
    }

    #[test]
    fn rouge1_matches_unigram_f1(a in message(), b in message()) {
        prop_assert!((rouge_n(&a, &b, 1, true) - unigram_f1(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_embeddings_reduce_to_rouge1(a in distinct_words(), b in distinct_words()) {
        let provider = OneHot::default();
        let e = embedding_score(&a, &b, &provider, true).unwrap();
        prop_assert!((e - rouge_n(&a, &b, 1, true)).abs() < 1e-9, "{e}");
    }

    #[test]
    fn fraction_duality(a in ".{0,30}", b in ".{0,30}") {
        match (added_fraction(&a, &b), removed_fraction(&b, &a)) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x, y);
                prop_assert!((0.0..=1.0).contains(&x));
            }
            (Err(_), Err(_)) => prop_assert!(b.is_empty()),
            _ => prop_assert!(false, "only one side failed"),
        }
    }

    #[test]
    fn threshold_monotonicity(input in "[a-z ]{1,30}", output in "[a-z ]{1,30}", t in 0.0f64..1.0, dt in 0.0f64..1.0) {
        for direction in [Direction::Backward, Direction::Forward] {
            let reply = output.clone();
            let client = MockClient::new(move |_| Ok(reply.clone()));
            let job = |threshold: f64| GenerationJob {
                direction,
                commit_id: "c".into(),
                input_node: "n".into(),
                output_node: "n~x1".into(),
                icl_examples: vec![],
                max_attempts: 1,
                threshold,
            };
            let low = generate(&client, &job(t), &input, None).unwrap();
            let high = generate(&client, &job((t + dt).min(1.0)), &input, None).unwrap();
            if low.is_accepted() {
                prop_assert!(high.is_accepted());
            }
        }
    }

    #[test]
    fn attempt_budget_respected(attempts in 1u32..6, accept_on in 1u32..8) {
        let client = MockClient::new(move |r| {
            if r.attempt >= accept_on { Ok(r.target.clone()) } else { Ok(format!("{} plus a long tail of new words", r.target)) }
        });
        let job = GenerationJob {
            direction: Direction::Backward,
            commit_id: "c".into(),
            input_node: "n".into(),
            output_node: "n~bw1".into(),
            icl_examples: vec![],
            max_attempts: attempts,
            threshold: 0.5,
        };
        let r = generate(&client, &job, "fix it", None).unwrap();
        prop_assert!(client.calls() <= attempts as usize);
        prop_assert_eq!(r.is_accepted(), accept_on <= attempts);
    }

    #[test]
    fn spearman_invariants(
        pairs in prop::collection::vec((-100i32..100, -100i32..100), 3..20),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        let (Ok(r), Ok(r_swapped)) = (spearman(&x, &y), spearman(&y, &x)) else {
            return Ok(()); // constant input
        };
        prop_assert!((-1.0..=1.0).contains(&r.coefficient));
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert!((r.coefficient - r_swapped.coefficient).abs() < 1e-12);
        // strictly increasing transform keeps ranks
        let cubed: Vec<f64> = x.iter().map(|v| v.powi(3) + 5.0).collect();
        prop_assert!((spearman(&cubed, &y).unwrap().coefficient - r.coefficient).abs() < 1e-12);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        prop_assert!((spearman(&x, &neg).unwrap().coefficient + r.coefficient).abs() < 1e-12);
    }

    #[test]
    fn ks_properties(a in prop::collection::vec(0u32..1000, 1..40), b in prop::collection::vec(0u32..1000, 1..40), r in 0.1f64..5.0) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let d = ks_statistic(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_statistic(&b, &a).unwrap());
        let sa: Vec<f64> = a.iter().map(|v| v * r).collect();
        let sa2: Vec<f64> = a.iter().map(|v| v * r).collect();
        prop_assert_eq!(ks_statistic(&sa, &sa2).unwrap(), 0.0);
        let sb: Vec<f64> = b.iter().map(|v| v * r).collect();
        prop_assert!((ks_statistic(&sa, &sb).unwrap() - d).abs() < 1e-12);
    }

    #[test]
    fn filter_zero_idempotent(rows in prop::collection::vec((0u64..4, 1u64..100), 0..50)) {
        let log = TelemetryLog::new(
            rows.into_iter().map(|(ed_value, gen_length)| TelemetryRecord { ed_value, gen_length }).collect(),
            1000,
        ).unwrap();
        let (once, _) = filter_zero(&log);
        let (twice, report) = filter_zero(&once);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(report.removed, 0);
    }

    #[test]
    fn pairs_partition_generated_by_edited(record in commit(), policy in policy()) {
        let pairs = derive_pairs(&record, policy, true);
        let n_g = record.generated().count();
        let n_e = record.edited().count();
        let independent_edited = pairs.independent.iter().filter(|(_, r)| r.node_id().is_some()).count();
        prop_assert_eq!(pairs.related.len() + independent_edited, n_g * n_e);
        let related: HashSet<_> = pairs.related.iter().collect();
        for (g, r) in &pairs.independent {
            if let Some(e) = r.node_id() {
                prop_assert!(!related.contains(&(g.clone(), e.to_string())));
            }
        }
        let originals = pairs.independent.len() - independent_edited;
        prop_assert_eq!(originals, n_g);
    }

    #[test]
    fn pairs_ignore_node_order(record in commit(), policy in policy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = record.clone();
        shuffled.nodes.shuffle(&mut rng);
        shuffled.edges.shuffle(&mut rng);
        prop_assert_eq!(derive_pairs(&record, policy, true), derive_pairs(&shuffled, policy, true));
    }

    #[test]
    fn closure_relates_at_least_direct(record in commit()) {
        let direct = derive_pairs(&record, PairPolicy::Direct, false);
        let closure = derive_pairs(&record, PairPolicy::Closure, false);
        let c: HashSet<_> = closure.related.iter().collect();
        prop_assert!(direct.related.iter().all(|p| c.contains(p)));
    }
}
