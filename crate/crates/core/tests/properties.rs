use casm::conservative::{bootstrap_conservativeness, chernoff_bound, sample_signed_distance, SignedDistanceSample, SignedDistanceTable, TailBoundConfig};
use casm::fem::theta_from_unit;
use casm::function::Domain;
use casm::reduced::pullback;
use casm::rng::{derive_seed, Stream};
use casm::surrogate::{fit_gpr, BiasedSurrogate, KernelConfig, LinearSurrogate, TrainingSet};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn unit_column(v: &[f64]) -> Option<DMatrix<f64>> {
    let m = DMatrix::from_column_slice(v.len(), 1, v);
    let n = m.norm();
    (n > 1e-3).then(|| m / n)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn pullback_hits_targets_taken_from_the_box(
        u in prop::collection::vec(-1.0f64..1.0, 4),
        w in prop::collection::vec(-1.0f64..1.0, 4),
        x0 in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let (Some(u1), Some(w1)) = (unit_column(&u), unit_column(&w)) else { return Ok(()) };
        let x = DVector::from_column_slice(&x0);
        let y_f = [(u1.transpose() * &x)[0]];
        let y_g = [(w1.transpose() * &x)[0]];
        let dom = Domain::cube(4, -1.0, 1.0).unwrap();
        let r = pullback(&y_f, &y_g, &u1, &w1, &dom).unwrap();
        prop_assert!(r.feasible, "{r:?}");
        prop_assert!(r.residual_yf <= 1e-8 && r.residual_yg <= 1e-8 && r.box_dist <= 1e-12);
        let norm = r.x_star.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm <= x.norm() + 1e-9);
    }

    #[test]
    fn signed_distances_grow_with_the_bias(
        f in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 2..12),
        b1 in 0.0f64..3.0,
        db in 0.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let y: Vec<Vec<f64>> = (0..f.len()).map(|k| vec![k as f64 * 0.3 - 1.0]).collect();
        let table = SignedDistanceTable::new(y, f.clone()).unwrap();
        let m = LinearSurrogate { slope: vec![0.7], intercept: -0.2, bias: b1 };
        let lo = sample_signed_distance(&table, &m, 3 * f.len(), seed).unwrap();
        let hi = sample_signed_distance(&table, &LinearSurrogate { bias: b1 + db, ..m.clone() }, 3 * f.len(), seed).unwrap();
        // same seed, same pairs: every draw moves up by exactly the bias step
        for (a, b) in lo.values.iter().zip(&hi.values) {
            prop_assert!((b - a - db).abs() <= 1e-12);
        }
        // 3·s draws are exactly one epoch: every pair once
        let mut sorted = lo.values.clone();
        sorted.sort_by(f64::total_cmp);
        let mut expected: Vec<f64> = f
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().map(move |v| (k, *v)))
            .map(|(k, v)| m.predict(&[k as f64 * 0.3 - 1.0]) - v)
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in sorted.iter().zip(&expected) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn estimators_stay_in_the_unit_interval(
        values in prop::collection::vec(-5.0f64..5.0, 1..60),
        eps in 1e-3f64..5.0,
        seed in any::<u64>(),
    ) {
        let s = SignedDistanceSample { values, beta: 0.0, seed };
        let cfg = TailBoundConfig { bootstrap_resamples: 200, ..Default::default() };
        let chi = chernoff_bound(&s, eps, 0.0, &cfg).unwrap();
        let chi_wider = chernoff_bound(&s, eps * 1.5, 0.0, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&chi));
        prop_assert!(chi_wider <= chi + 1e-12);
        let p = bootstrap_conservativeness(&s, 200, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn gpr_bias_shift_is_linear(
        f in prop::collection::vec(-3.0f64..3.0, 3..15),
        beta in 0.0f64..4.0,
        q in -3.0f64..3.0,
    ) {
        let y: Vec<Vec<f64>> = (0..f.len()).map(|k| vec![k as f64 * 0.5]).collect();
        let tr = TrainingSet::new(y, f).unwrap();
        let k = KernelConfig::new(1.0, 1e-2).unwrap();
        let m = fit_gpr(&tr, &k).unwrap();
        let shifted = fit_gpr(&tr.shifted(beta), &k).unwrap();
        let biased = m.clone().with_bias(beta);
        prop_assert!((biased.predict(&[q]) - shifted.predict(&[q])).abs() <= 1e-9);
        prop_assert!((biased.predict(&[q]) - m.predict(&[q]) - beta * m.bias_weight(&[q])).abs() <= 1e-12);
    }

    #[test]
    fn projections_of_box_points_lie_in_the_projected_interval(
        w in prop::collection::vec(-1.0f64..1.0, 3),
        x in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let dom = Domain::cube(3, -1.0, 1.0).unwrap();
        let (lo, hi) = dom.projected_interval(&w);
        let y: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        prop_assert!(lo - 1e-12 <= y && y <= hi + 1e-12);
    }

    #[test]
    fn unit_box_maps_onto_material_fractions(x in prop::collection::vec(-1.0f64..1.0, 1..20)) {
        prop_assert!(theta_from_unit(&x).iter().all(|t| (0.0..=1.0).contains(t)));
    }

    #[test]
    fn seed_streams_do_not_collide(master in any::<u64>(), i in 0u64..1000) {
        let a = derive_seed(master, Stream::Training, i);
        prop_assert_ne!(a, derive_seed(master, Stream::Slice, i));
        prop_assert_ne!(a, derive_seed(master, Stream::Training, i + 1));
        prop_assert_eq!(a, derive_seed(master, Stream::Training, i));
    }
}
