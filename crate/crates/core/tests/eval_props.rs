use std::collections::HashMap;

use nolor_core::audio::AudioClip;
use nolor_core::eval::{self, EvalItem, SpeedupEntry, Transcriber};
use nolor_core::orthography::Orthography;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Textbook recursion, memoised on suffix lengths.
fn oracle(a: &[u8], b: &[u8]) -> usize {
    fn go(a: &[u8], b: &[u8], memo: &mut [Vec<Option<usize>>]) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        if let Some(d) = memo[a.len()][b.len()] {
            return d;
        }
        let d = if a[0] == b[0] {
            go(&a[1..], &b[1..], memo)
        } else {
            1 + go(&a[1..], b, memo)
                .min(go(a, &b[1..], memo))
                .min(go(&a[1..], &b[1..], memo))
        };
        memo[a.len()][b.len()] = Some(d);
        d
    }
    go(a, b, &mut vec![vec![None; b.len() + 1]; a.len() + 1])
}

fn all_strings(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier: Vec<Vec<u8>> = vec![vec![]];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s| {
                (0..3u8).map(move |c| {
                    let mut n = s.clone();
                    n.push(c);
                    n
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

#[test]
fn dp_matches_recursion_exhaustively() {
    let strings = all_strings(7);
    for a in &strings {
        for b in &strings {
            assert_eq!(eval::edit_distance(a, b), oracle(a, b), "{a:?} {b:?}");
        }
    }
}

#[test]
fn dp_matches_recursion_on_sampled_long_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let la = rng.random_range(8..=30);
        let lb = rng.random_range(8..=30);
        let a: Vec<u8> = (0..la).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<u8> = (0..lb).map(|_| rng.random_range(0..4)).collect();
        assert_eq!(eval::edit_distance(&a, &b), oracle(&a, &b));
    }
}

proptest! {
    #[test]
    fn metric_axioms(
        a in prop::collection::vec(0u8..4, 0..15),
        b in prop::collection::vec(0u8..4, 0..15),
        c in prop::collection::vec(0u8..4, 0..15),
    ) {
        let ab = eval::edit_distance(&a, &b);
        prop_assert_eq!(ab, eval::edit_distance(&b, &a));
        prop_assert_eq!(eval::edit_distance(&a, &a), 0);
        prop_assert!(ab <= eval::edit_distance(&a, &c) + eval::edit_distance(&c, &b));
        prop_assert!(ab >= a.len().abs_diff(b.len()));
        prop_assert!(ab <= a.len().max(b.len()));
    }
}

struct Lookup(HashMap<usize, String>);

impl Transcriber for Lookup {
    fn transcribe(&self, clip: &AudioClip) -> Result<String, String> {
        self.0
            .get(&clip.len())
            .cloned()
            .ok_or_else(|| "unknown clip".into())
    }
}

#[test]
fn aggregate_is_micro_averaged() {
    let orth = Orthography::parse("a\tvowel\nb\tconsonant\n").unwrap();
    let clip = |n| AudioClip::new(vec![0.0; n], 16_000).unwrap();
    let model = Lookup(HashMap::from([
        (10, "ab".to_string()),
        (20, "aaaaaaaaaa".to_string()),
    ]));
    let items = vec![
        EvalItem {
            id: "short".into(),
            clip: clip(10),
            transcript: "aa".into(),
        },
        EvalItem {
            id: "long".into(),
            clip: clip(20),
            transcript: "aaaaaaaaaa".into(),
        },
    ];
    let report = eval::evaluate(&model, &items, &orth).unwrap();
    assert_eq!(report.segments[0].cer, 0.5);
    assert_eq!(report.segments[1].cer, 0.0);
    // 1 edit over 12 graphemes, not the mean of 0.5 and 0.0
    assert!((report.aggregate_cer - 1.0 / 12.0).abs() < 1e-12);
    assert!(report.to_table().contains("TOTAL"));
    assert_eq!(report.to_jsonl().lines().count(), 3);
    assert!(matches!(
        eval::evaluate(&model, &[], &orth),
        Err(eval::EvalError::EmptyTestSplit)
    ));
}

#[test]
fn speedup_rows_render() {
    let entries = vec![SpeedupEntry {
        sample_id: "s1".into(),
        length_s: 15.0,
        time_without_s: 180.0,
        time_with_s: 89.0,
        cer_without: 0.05,
        cer_with: 0.04,
    }];
    let table = eval::speedup_report(&entries).unwrap();
    assert!(
        table.contains("3min") && table.contains("89sec") && table.contains("2.0×"),
        "{table}"
    );
    let json = eval::speedup_jsonl(&entries).unwrap();
    let v: serde_json::Value = serde_json::from_str(json.trim()).unwrap();
    assert_eq!(v["speedup"], 2.0);
}
