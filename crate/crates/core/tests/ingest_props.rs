use std::collections::HashSet;

use dekgci::ingest::{label_ratings, sample_negatives, split_examples, split_sizes, LabeledExample, RawRating};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rows(pairs: &[(u8, u8, u8)]) -> Vec<RawRating> {
    pairs
        .iter()
        .map(|&(u, i, r)| RawRating { user_raw: format!("u{u}"), item_raw: format!("i{i}"), rating: r as f64 })
        .collect()
}

proptest! {
    #[test]
    fn ids_round_trip(pairs in prop::collection::vec((0u8..20, 0u8..30, 1u8..6), 1..200)) {
        let r = label_ratings(&rows(&pairs), Some(3.0), None);
        let mut seen = HashSet::new();
        for p in &r.positives {
            let ext = r.maps.user_external(p.user).unwrap().to_string();
            prop_assert_eq!(r.maps.users.get(p.user).map(String::as_str), Some(ext.as_str()));
            let item = r.maps.item_external(p.item).unwrap();
            prop_assert!(item.starts_with('i'));
            prop_assert!(seen.insert((p.user, p.item)), "duplicate positive");
        }
        for u in 0..r.maps.num_users() {
            let ext = r.maps.user_external(u).unwrap();
            prop_assert_eq!(r.maps.users.iter().filter(|x| x.as_str() == ext).count(), 1);
        }
    }

    #[test]
    fn negatives_never_collide(pairs in prop::collection::vec((0u8..15, 0u8..25, 1u8..6), 1..150), seed in any::<u64>()) {
        let r = label_ratings(&rows(&pairs), Some(3.0), None);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (neg, short) = sample_negatives(&r.positives, &r.item_universe, &r.below_threshold, &mut rng);
        let observed: HashSet<(usize, usize)> = r.positives.iter().map(|p| (p.user, p.item))
            .chain(r.below_threshold.iter().copied()).collect();
        let mut drawn = HashSet::new();
        for n in &neg {
            prop_assert_eq!(n.label, 0);
            prop_assert!(!observed.contains(&(n.user, n.item)));
            prop_assert!(drawn.insert((n.user, n.item)));
        }
        let wanted = r.positives.len();
        let missing: usize = short.iter().map(|s| s.wanted - s.got).sum();
        prop_assert_eq!(neg.len() + missing, wanted);
    }

    #[test]
    fn split_is_a_deterministic_partition(n in 5usize..400, seed in any::<u64>()) {
        let ex: Vec<LabeledExample> = (0..n).map(|i| LabeledExample::new(i, i % 7, (i % 2) as u8)).collect();
        let a = split_examples(&ex, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = split_examples(&ex, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        let (tr, ev, te) = split_sizes(n);
        prop_assert_eq!((a.train.len(), a.eval.len(), a.test.len()), (tr, ev, te));
        prop_assert_eq!(tr, n * 6 / 10);
        prop_assert_eq!(ev, n * 2 / 10);
        let mut all: Vec<_> = a.train.iter().chain(&a.eval).chain(&a.test).copied().collect();
        all.sort();
        let mut orig = ex.clone();
        orig.sort();
        prop_assert_eq!(all, orig);
    }
}
