use std::collections::BTreeSet;

use proptest::prelude::*;

use qdr_core::baselines::{linear_scan, relaxed_keywords};
use qdr_core::bitmap::{encode, relax_query, relevance_phi, KeywordBitmap};
use qdr_core::clustering::ClusterParams;
use qdr_core::dataset::{Direction, Normalizer};
use qdr_core::drtree::{DrParams, DrTree};
use qdr_core::metric::KeywordDistance;
use qdr_core::model::{weighted_sum, ScoreParams};
use qdr_core::search::node_bound;
use qdr_core::skyline::{compress_skyline, compute_skyline, dominates, min_weighted_attribute};
use qdr_core::{EmbeddingStore, GeoObject, IndexParams, KeywordMetric, MetricParams, Point, QdrIndex, Query};

const WORDS: [&str; 12] = [
    "cafe", "cake", "coffee", "cider", "bar", "beer", "bread", "bagel", "tea", "teahouse", "tapas", "toffee",
];

fn metric(delta: f64) -> KeywordMetric {
    KeywordMetric::new(MetricParams::new(delta).unwrap(), EmbeddingStore::new(8))
}

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

fn point_set(max_dim: usize, max_len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_dim).prop_flat_map(move |d| prop::collection::vec(prop::collection::vec(unit(), d), 1..=max_len))
}

fn objects(dim: usize, max: usize) -> impl Strategy<Value = Vec<GeoObject>> {
    prop::collection::vec(
        (
            0.0..1000.0f64,
            0.0..1000.0f64,
            prop::sample::subsequence(WORDS.to_vec(), 1..4),
            prop::collection::vec(unit(), dim),
        ),
        1..=max,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (x, y, k, a))| GeoObject::new(format!("o{i:03}"), Point::new(x, y), k, a).unwrap())
            .collect()
    })
}

fn query(dim: usize) -> impl Strategy<Value = Query> {
    (
        0.0..1000.0f64,
        0.0..1000.0f64,
        prop::sample::subsequence(WORDS.to_vec(), 1..3),
        prop::collection::vec(0.01..1.0f64, dim),
        1..8usize,
        0.0..0.6f64,
    )
        .prop_map(move |(x, y, k, w, kappa, tau)| {
            let s: f64 = w.iter().sum();
            let mut q = Query::new(Point::new(x, y), k, w.iter().map(|v| v / s).collect(), kappa, 1414.3);
            q.tau_relax = tau;
            q
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn score_is_monotone_in_each_component(
        alpha in 0.01..0.99f64, beta in 0.01..0.99f64,
        d in 0.0..100.0f64, dd in 0.0..50.0f64,
        phi in 1u32..6, a in unit(), da in 0.0..0.5f64,
    ) {
        let p = ScoreParams::new(alpha, beta, 100.0).unwrap();
        let base = p.combine(d, phi, a);
        prop_assert!(p.combine(d + dd, phi, a) >= base);
        prop_assert!(p.combine(d, phi + 1, a) <= base);
        prop_assert!(p.combine(d, phi, a + da) >= base);
        prop_assert_eq!(p.combine(d, 0, a), f64::INFINITY);
    }

    #[test]
    fn score_scales_coherently_with_d_max(
        d in 0.0..100.0f64, phi in 1u32..6, a in unit(), c in 0.5..4.0f64,
    ) {
        let p = ScoreParams::new(0.5, 0.67, 100.0).unwrap();
        let scaled = ScoreParams::new(0.5, 0.67, 100.0 * c).unwrap();
        prop_assert!((p.combine(d, phi, a) - scaled.combine(d * c, phi, a)).abs() < 1e-12);
    }

    #[test]
    fn keyword_metric_is_symmetric_bounded_and_reflexive(
        a in "[a-e]{1,6}", b in "[a-e]{1,6}", delta in unit(),
    ) {
        let m = metric(delta);
        let ab = m.distance(&a, &b);
        prop_assert!((ab - m.distance(&b, &a)).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!(m.distance(&a, &a).abs() < 1e-12);
    }

    #[test]
    fn relaxation_grows_with_tau(
        kws in prop::sample::subsequence(WORDS.to_vec(), 1..4),
        t1 in unit(), t2 in unit(), o in prop::sample::subsequence(WORDS.to_vec(), 1..5),
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let m = metric(0.5);
        let universe: Vec<String> = WORDS.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>().into_iter().collect();
        let small = relax_query(&kws, &universe, lo, &m);
        let big = relax_query(&kws, &universe, hi, &m);
        prop_assert!(encode(&kws, &universe).is_subset(&small));
        prop_assert!(small.is_subset(&big));
        let ob = encode(&o, &universe);
        prop_assert!(relevance_phi(&ob, &small).unwrap() <= relevance_phi(&ob, &big).unwrap());
        let set: BTreeSet<String> = relaxed_keywords(&kws.iter().map(|k| k.to_string()).collect::<Vec<_>>(), &universe, hi, &m).into_iter().map(String::from).collect();
        let from_bits: BTreeSet<String> = big.iter_ones().map(|i| universe[i].clone()).collect();
        prop_assert_eq!(set, from_bits);
    }

    #[test]
    fn skyline_matches_brute_force(points in point_set(6, 60)) {
        let sky = compute_skyline(&points);
        let mut expected: BTreeSet<Vec<u64>> = BTreeSet::new();
        for p in &points {
            let dominated = points.iter().any(|q| {
                q.iter().zip(p).all(|(a, b)| a <= b) && q.iter().zip(p).any(|(a, b)| a < b)
            });
            if !dominated {
                expected.insert(p.iter().map(|v| v.to_bits()).collect());
            }
        }
        let got: BTreeSet<Vec<u64>> = sky.points.iter().map(|p| p.iter().map(|v| v.to_bits()).collect()).collect();
        prop_assert_eq!(got, expected);
        for a in &sky.points {
            for b in &sky.points {
                prop_assert!(!dominates(a, b).unwrap());
            }
        }
    }

    #[test]
    fn compression_keeps_a_lower_bound(
        points in point_set(6, 60), tau in prop::sample::select(vec![0.9, 0.99, 1.0]),
        w in prop::collection::vec(0.0..1.0f64, 6),
    ) {
        let sky = compute_skyline(&points);
        let c = compress_skyline(&sky, tau);
        prop_assert!(c.len() <= sky.len());
        for p in &points {
            prop_assert!(c.lower_bounds(p));
        }
        let w = &w[..points[0].len()];
        let raw = points.iter().map(|p| weighted_sum(w, p)).fold(f64::INFINITY, f64::min);
        prop_assert!(min_weighted_attribute(&c, w).unwrap() <= raw + 1e-12);
    }

    #[test]
    fn normalization_is_idempotent(rows in point_set(4, 30), flip in any::<bool>()) {
        let dim = rows[0].len();
        let dirs = vec![if flip { Direction::HigherBetter } else { Direction::LowerBetter }; dim];
        let n = Normalizer::fit(rows.iter().map(Vec::as_slice), &dirs).unwrap();
        let once: Vec<Vec<f64>> = rows.iter().map(|r| n.apply(r)).collect();
        let again = Normalizer::fit(once.iter().map(Vec::as_slice), &vec![Direction::LowerBetter; dim]).unwrap();
        for r in &once {
            prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
            for (a, b) in again.apply(r).iter().zip(r) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bitmap_bytes_round_trip(bits in prop::collection::vec(any::<bool>(), 0..200)) {
        let mut b = KeywordBitmap::zeros(bits.len());
        for (i, &s) in bits.iter().enumerate() {
            if s {
                b.set(i);
            }
        }
        prop_assert_eq!(b.count_ones() as usize, bits.iter().filter(|&&s| s).count());
        prop_assert_eq!(KeywordBitmap::from_bytes(bits.len(), &b.to_bytes()).unwrap(), b);
    }

    #[test]
    fn node_bounds_never_exceed_descendant_scores(
        objs in objects(3, 150), q in query(3), m in 2usize..8,
    ) {
        let universe: Vec<String> = objs.iter().flat_map(|o| o.keywords.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
        let tree = DrTree::bulk_build(objs.iter().enumerate().map(|(i, o)| (i as u32, o)), &universe, DrParams { max_entries: m, tau_merge: 0.9 });
        let metric = metric(0.5);
        let bmr = relax_query(&q.keywords, &universe, q.tau_relax, &metric);
        let params = q.score_params();
        for (id, node) in tree.nodes().iter().enumerate() {
            let bound = node_bound(&q, &params, &bmr, node);
            for e in tree.descendant_entries(id as u32) {
                let e = tree.entry(e);
                let phi = relevance_phi(&e.kb, &bmr).unwrap();
                let d = ((e.location.x - q.location.x).powi(2) + (e.location.y - q.location.y).powi(2)).sqrt();
                prop_assert!(bound <= params.combine(d, phi, weighted_sum(&q.weights, &e.attributes)));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn search_is_deterministic_and_exact_on_one_leaf(objs in objects(2, 120), q in query(2)) {
        let params = IndexParams {
            cluster: ClusterParams { tau_cluster: 2.0, ..Default::default() },
            ..Default::default()
        };
        let index = QdrIndex::build(objs.clone(), EmbeddingStore::new(8), params).unwrap();
        let (a, _) = index.search(&q).unwrap();
        let (b, _) = index.search(&q).unwrap();
        prop_assert_eq!(&a, &b);
        let expected = linear_scan(&q, index.objects(), index.metric()).unwrap();
        prop_assert_eq!(a.len(), expected.len());
        for (g, e) in a.iter().zip(&expected) {
            prop_assert_eq!(&g.id, &e.id);
            prop_assert!((g.score - e.score).abs() <= 1e-9);
        }
    }
}
