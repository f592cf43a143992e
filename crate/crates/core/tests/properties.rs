//! Property tests for the crate-wide invariants: archive round-trips, delta
//! arithmetic laws, dominance as a strict partial order, hypervolume
//! monotonicity and route agreement, and merge-operator contracts.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mmmo_core::merge::{dare_sparsify, dare_ties_merge, ties_merge, MergeConfig};
use mmmo_core::moo::{dominates, hypervolume, pareto_front, EvaluationRecord};
use mmmo_core::params::{apply_delta, compute_delta, sparsity_metric, TensorArchive};

fn tensor_name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_.]{0,12}"
}

fn small_tensor() -> impl Strategy<Value = (Vec<u64>, Vec<f32>)> {
    (1usize..=3).prop_flat_map(|rank| {
        prop::collection::vec(1u64..=4, rank).prop_flat_map(|shape| {
            let count = shape.iter().product::<u64>() as usize;
            (
                Just(shape),
                prop::collection::vec(-100.0f32..100.0, count..=count),
            )
        })
    })
}

fn archive_strategy() -> impl Strategy<Value = TensorArchive> {
    prop::collection::btree_map(tensor_name(), small_tensor(), 0..5).prop_map(|entries| {
        let mut archive = TensorArchive::new();
        for (name, (shape, data)) in entries {
            archive.insert(&name, shape, data).unwrap();
        }
        archive
    })
}

proptest! {
    #[test]
    fn archive_round_trips_bit_exactly(archive in archive_strategy()) {
        let decoded = TensorArchive::decode(&archive.encode()).unwrap();
        prop_assert_eq!(&decoded, &archive);
        prop_assert_eq!(decoded.encode(), archive.encode());
    }

    #[test]
    fn sparsity_scales_linearly_with_delta_scale(
        archive in archive_strategy(),
        scale in -4.0f64..4.0,
    ) {
        prop_assume!(!archive.is_empty());
        let zero = apply_delta(&archive, &archive, -1.0).unwrap(); // base - base = 0 layout
        let delta = compute_delta(&archive, &zero).unwrap();
        let at_one = sparsity_metric(&apply_delta(&zero, &delta, 1.0).unwrap(), &zero).unwrap();
        let at_s = sparsity_metric(&apply_delta(&zero, &delta, scale).unwrap(), &zero).unwrap();
        let expect = scale.abs() * at_one;
        prop_assert!((at_s - expect).abs() <= 1e-5 * expect.max(1e-9) + 1e-7,
            "at_s {} expect {}", at_s, expect);
    }

    #[test]
    fn delta_apply_inverts_compute(archive in archive_strategy()) {
        // Use a shifted copy as the base so deltas are nontrivial.
        let base = apply_delta(&archive, &archive, -0.5).unwrap();
        let delta = compute_delta(&archive, &base).unwrap();
        let rebuilt = apply_delta(&base, &delta, 1.0).unwrap();
        // f32 rounding in base + (model - base) allows 1-ulp differences.
        for (name, t) in archive.iter() {
            let r = &rebuilt.get(name).unwrap().data;
            for (a, b) in t.data.iter().zip(r) {
                prop_assert!((a - b).abs() <= f32::EPSILON * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn dominance_is_a_strict_partial_order(
        a in prop::collection::vec(0.0f64..1.0, 3),
        b in prop::collection::vec(0.0f64..1.0, 3),
        c in prop::collection::vec(0.0f64..1.0, 3),
    ) {
        // Irreflexive.
        prop_assert!(!dominates(&a, &a).unwrap());
        // Antisymmetric.
        if dominates(&a, &b).unwrap() {
            prop_assert!(!dominates(&b, &a).unwrap());
        }
        // Transitive.
        if dominates(&a, &b).unwrap() && dominates(&b, &c).unwrap() {
            prop_assert!(dominates(&a, &c).unwrap());
        }
    }

    #[test]
    fn front_is_idempotent(points in prop::collection::vec(
        prop::collection::vec(0.0f64..1.0, 2), 1..32)) {
        let records: Vec<EvaluationRecord> = points
            .iter()
            .enumerate()
            .map(|(i, p)| EvaluationRecord {
                id: i as u64,
                iteration: 0,
                config: MergeConfig::new(vec![0.5], vec![0.5]).unwrap(),
                raw: p.clone(),
                canonical: p.clone(),
                seed: 0,
            })
            .collect();
        let front = pareto_front(&records).unwrap();
        let front_records: Vec<EvaluationRecord> =
            front.iter().map(|&i| records[i].clone()).collect();
        let again = pareto_front(&front_records).unwrap();
        prop_assert_eq!(again.len(), front_records.len());
    }

    #[test]
    fn hypervolume_is_monotone_and_route_consistent(
        points in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 0..14),
        extra in prop::collection::vec(0.0f64..1.0, 3),
    ) {
        let r = vec![1.0, 1.0, 1.0];
        let hv = hypervolume(&points, &r).unwrap();
        let mut more = points.clone();
        more.push(extra);
        let hv_more = hypervolume(&more, &r).unwrap();
        prop_assert!(hv_more >= hv - 1e-12);

        // Splitting the set and computing the union must match: HV of the
        // whole set equals HV via the improvement identity.
        if !points.is_empty() {
            let (head, tail) = points.split_at(points.len() / 2);
            let hv_head = hypervolume(head, &r).unwrap();
            let hvi = mmmo_core::moo::hvi(tail, head, &r).unwrap();
            prop_assert!((hv_head + hvi - hv).abs() < 1e-10);
        }
    }

    #[test]
    fn dare_full_density_is_identity_and_merge_is_pure(
        values in prop::collection::vec(-10.0f32..10.0, 1..24),
        seed in any::<u64>(),
        density in 0.05f64..1.0,
    ) {
        let mut delta = TensorArchive::new();
        delta.insert("w", vec![values.len() as u64], values.clone()).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let full = dare_sparsify(&delta, 1.0, &mut rng).unwrap();
        prop_assert_eq!(&full, &delta);

        // Purity: same seed, same result; kept elements are rescaled copies.
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        let a = dare_sparsify(&delta, density, &mut r1).unwrap();
        let b = dare_sparsify(&delta, density, &mut r2).unwrap();
        prop_assert_eq!(&a, &b);
        for (kept, original) in a.get("w").unwrap().data.iter().zip(&values) {
            if *kept != 0.0 {
                let expect = (*original as f64 / density) as f32;
                prop_assert_eq!(*kept, expect);
            }
        }
    }

    #[test]
    fn ties_merged_elements_stay_within_contribution_range(
        d1 in prop::collection::vec(-5.0f32..5.0, 8),
        d2 in prop::collection::vec(-5.0f32..5.0, 8),
        d3 in prop::collection::vec(-5.0f32..5.0, 8),
        w in prop::collection::vec(0.05f64..1.0, 3),
        density in 0.2f64..1.0,
    ) {
        let zeros = {
            let mut a = TensorArchive::new();
            a.insert("w", vec![8], vec![0.0; 8]).unwrap();
            a
        };
        let mk = |v: &Vec<f32>| {
            let mut a = TensorArchive::new();
            a.insert("w", vec![8], v.clone()).unwrap();
            a
        };
        let deltas = [mk(&d1), mk(&d2), mk(&d3)];
        let densities = vec![density; 3];
        let merged = ties_merge(&zeros, &deltas, &w, &densities).unwrap();
        for (e, m) in merged.get("w").unwrap().data.iter().enumerate() {
            let contributions: Vec<f64> = (0..3)
                .map(|i| w[i] * deltas[i].get("w").unwrap().data[e] as f64)
                .collect();
            let lo = contributions.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0);
            let hi = contributions.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);
            prop_assert!((lo - 1e-5..=hi + 1e-5).contains(&(*m as f64)),
                "element {} = {} outside [{}, {}]", e, m, lo, hi);
        }
    }

    #[test]
    fn dare_ties_is_a_pure_function_of_config_and_seed(
        seed in any::<u64>(),
        w1 in 0.1f64..1.0,
        w2 in 0.1f64..1.0,
        den1 in 0.1f64..1.0,
        den2 in 0.1f64..1.0,
    ) {
        let mut base = TensorArchive::new();
        base.insert("w", vec![6], vec![0.5; 6]).unwrap();
        let mut da = TensorArchive::new();
        da.insert("w", vec![6], vec![1.0, -2.0, 3.0, -1.0, 0.5, 2.5]).unwrap();
        let mut db = TensorArchive::new();
        db.insert("w", vec![6], vec![-1.0, 2.0, 1.0, -3.0, 1.5, -0.5]).unwrap();
        let deltas = [da, db];
        let config = MergeConfig::new(vec![w1, w2], vec![den1, den2]).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        let a = dare_ties_merge(&base, &deltas, &config, &mut r1).unwrap();
        let b = dare_ties_merge(&base, &deltas, &config, &mut r2).unwrap();
        prop_assert_eq!(a, b);
    }
}
