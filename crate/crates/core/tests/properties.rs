use std::io::BufReader;

use plcert::bounds::{
    bound_map, convergence_ratios, max_randomized_count, min_unlabeled_self_consistent,
    mixture_constraint_holds, optimal_split, ratt_bound_relaxed, ratt_bound_theorem1,
    self_consistent_rhs, supervised_ceiling, ConvergenceSpec, EmpiricalErrors, ProblemSpec,
    SplitSpec,
};
use plcert::datagen::{self, DataDistribution, Dataset, Provenance};
use plcert::learners::{load_model, model_to_string, LogisticModel, Model, NearestCentroidModel};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = ProblemSpec> {
    (2usize..12, 0.001f64..0.5, 0.0f64..0.2, 0.01f64..0.95)
        .prop_map(|(k, delta, eps, dt)| ProblemSpec::new(k, delta, eps, dt).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

proptest! {
    #[test]
    fn optimal_split_is_maximal_and_admissible(total in 2u64..1_000_000_000_000, dt in 0.01f64..0.99) {
        if let Ok(s) = optimal_split(total, dt) {
            prop_assert_eq!(s.m() + s.n(), total);
            prop_assert!(s.ratio_at_most(dt));
            if s.m() + 1 < total {
                let bigger = SplitSpec::new(s.m() + 1, total - s.m() - 1).unwrap();
                prop_assert!(!bigger.ratio_at_most(dt));
            }
        }
    }

    #[test]
    fn randomized_cap_satisfies_mixture(total in 10u64..100_000_000, dt in 0.01f64..0.99, frac in 0.0f64..0.999) {
        let gamma = frac * dt / (1.0 + dt);
        let cap = max_randomized_count(total, gamma, dt).unwrap();
        prop_assert!(cap < total);
        prop_assert!(mixture_constraint_holds(total, cap, gamma, dt));
        prop_assert!(!mixture_constraint_holds(total, cap + 1, gamma, dt));
    }

    #[test]
    fn randomized_cap_shrinks_with_gamma(total in 10u64..100_000_000, dt in 0.01f64..0.99, a in 0.0f64..0.999, b in 0.0f64..0.999) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let g = |f: f64| f * dt / (1.0 + dt);
        prop_assert!(max_randomized_count(total, g(hi), dt).unwrap() <= max_randomized_count(total, g(lo), dt).unwrap());
    }

    #[test]
    fn infeasible_gamma_is_rejected(spec in spec_strategy(), over in 0.0f64..0.5) {
        let gamma = spec.gamma_threshold() + over;
        prop_assert!(bound_map(&spec, 1000, gamma).is_err());
        prop_assert!(max_randomized_count(1000, gamma, spec.delta_tilde()).is_err());
    }

    #[test]
    fn bound_map_reduces_to_ceiling_and_increases(spec in spec_strategy(), total in 1_000u64..1_000_000_000_000, a in 0.0f64..0.999, b in 0.0f64..0.999) {
        let e = supervised_ceiling(&spec, total).unwrap();
        prop_assert!(rel(bound_map(&spec, total, 0.0).unwrap(), e) <= 1e-12);
        let t = spec.gamma_threshold();
        let (lo, hi) = if a < b { (a * t, b * t) } else { (b * t, a * t) };
        prop_assume!(lo < hi);
        prop_assert!(bound_map(&spec, total, lo).unwrap() < bound_map(&spec, total, hi).unwrap());
        prop_assert!(bound_map(&spec, total, lo).unwrap() >= e);
    }

    #[test]
    fn relaxed_dominates_theorem1(k in 2usize..12, n in 2u64..10_000_000, mf in 0.0f64..1.0, delta in 0.001f64..0.5, ec in 0.0f64..1.0, er in 0.0f64..1.0) {
        let m = ((mf * (n - 1) as f64) as u64).max(1);
        let spec = ProblemSpec::new(k, delta, 0.0, 0.5).unwrap();
        let split = SplitSpec::new(m, n).unwrap();
        let errs = EmpiricalErrors::new(ec, er).unwrap();
        let t1 = ratt_bound_theorem1(&spec, &split, &errs);
        let rl = ratt_bound_relaxed(&spec, &split, &errs).unwrap();
        prop_assert!(rl.total >= t1.total);
        prop_assert_eq!(rl.term_clean, t1.term_clean);
        prop_assert_eq!(rl.term_random, t1.term_random);
        prop_assert_eq!(rl.vacuous, rl.total > 1.0);
    }

    #[test]
    fn concentration_shrinks_in_m(k in 2usize..12, m in 1u64..1_000_000, delta in 0.001f64..0.5) {
        let spec = ProblemSpec::new(k, delta, 0.0, 0.5).unwrap();
        let errs = EmpiricalErrors::new(0.1, 0.5).unwrap();
        let n = 10_000_000;
        let a = ratt_bound_relaxed(&spec, &SplitSpec::new(m, n).unwrap(), &errs).unwrap();
        let b = ratt_bound_relaxed(&spec, &SplitSpec::new(m + 1, n).unwrap(), &errs).unwrap();
        prop_assert!(b.term_concentration < a.term_concentration);
    }

    #[test]
    fn convergence_ratios_shape(values in proptest::collection::vec(0.2f64..1.0, 2..20)) {
        let r = convergence_ratios(&values, 0.1).unwrap();
        prop_assert_eq!(r.len(), values.len() - 1);
        prop_assert!(convergence_ratios(&values, 1.0).is_err());
    }

    #[test]
    fn randomize_and_mislabel_counts(count in 1usize..400, frac in 0.0f64..1.0, k in 2usize..6, seed in any::<u64>()) {
        let dist = DataDistribution::axis_aligned(k, 3, 2.0, 1.0).unwrap();
        let data = datagen::sample(&dist, count, seed).unwrap();
        let m = (frac * count as f64) as usize;
        let r = datagen::randomize_labels(&data, m, k, seed ^ 1).unwrap();
        prop_assert_eq!(r.count(Provenance::Randomized), m);
        for (before, after) in data.examples.iter().zip(&r.examples) {
            prop_assert!(after.label < k);
            prop_assert_eq!(&before.features, &after.features);
            prop_assert_eq!(before.true_label, after.true_label);
        }
        let w = datagen::mislabel(&data, m, k, seed ^ 2).unwrap();
        prop_assert_eq!(w.count(Provenance::Mislabeled), m);
        prop_assert!(w.examples.iter().filter(|e| e.provenance == Provenance::Mislabeled).all(|e| e.label != e.true_label));
    }

    #[test]
    fn sampling_is_seed_deterministic(seed in any::<u64>()) {
        let dist = DataDistribution::axis_aligned(3, 2, 1.0, 1.0).unwrap();
        prop_assert_eq!(datagen::sample(&dist, 50, seed).unwrap(), datagen::sample(&dist, 50, seed).unwrap());
    }

    #[test]
    fn dataset_csv_round_trip(count in 1usize..60, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let dist = DataDistribution::axis_aligned(4, 2, 1.5, 0.7).unwrap();
        let data = datagen::sample(&dist, count, seed).unwrap();
        let data = datagen::randomize_labels(&data, (frac * count as f64) as usize, 4, seed).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        prop_assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn model_files_round_trip(weights in proptest::collection::vec(-5.0f64..5.0, 9), bias in proptest::collection::vec(-1.0f64..1.0, 3), points in proptest::collection::vec((-4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0), 1..30)) {
        let lg = LogisticModel::new(3, 3, weights.clone(), bias).unwrap();
        let nc = NearestCentroidModel::new(3, vec![Some(weights[0..3].to_vec()), None, Some(weights[3..6].to_vec())]).unwrap();
        for model in [&lg as &dyn Model, &nc as &dyn Model] {
            let text = model_to_string(model);
            let back = load_model(BufReader::new(text.as_bytes())).unwrap();
            prop_assert_eq!(model_to_string(back.as_ref()), text);
            for &(a, b, c) in &points {
                prop_assert_eq!(back.predict(&[a, b, c]).unwrap(), model.predict(&[a, b, c]).unwrap());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn self_consistent_threshold_is_minimal(k in 2usize..5, eps in 0.0f64..0.02, dt in 0.15f64..0.6, p in 0.3f64..0.9, c1 in 0.005f64..0.05, extra in 0.02f64..0.1) {
        let spec = ProblemSpec::new(k, 0.05, eps, dt).unwrap();
        let conv = ConvergenceSpec::new(p, c1, c1 + extra).unwrap();
        if let Ok(n) = min_unlabeled_self_consistent(&spec, &conv, 1_000_000_000_000_000) {
            prop_assert!(n as f64 >= self_consistent_rhs(&spec, &conv, n).unwrap());
            if n > 1 {
                let below = self_consistent_rhs(&spec, &conv, n - 1);
                prop_assert!(below.map_or(true, |rhs| ((n - 1) as f64) < rhs));
            }
        }
    }
}
