use dp_decode::simplex::{bounds_for_size, perturb, Distribution, PerturbationParams, Vocabulary};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

/// Probability vector built from small integer weights, so each entry has
/// an exact rational value `w_k / W`.
fn weighted(max_len: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..20, 2..=max_len).prop_filter("needs positive total", |w| w.iter().any(|&x| x > 0))
}

fn to_distribution(weights: &[u32]) -> Distribution {
    let total: u32 = weights.iter().sum();
    Distribution::new(weights.iter().map(|&w| w as f64 / total as f64).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Exact rational evaluation of lambda*q + (1-lambda)*u agrees with the
    /// float result to within float rounding.
    #[test]
    fn perturbation_lies_on_segment_to_uniform(weights in weighted(12), lambda_num in 0u32..=64) {
        let q = to_distribution(&weights);
        let lambda = lambda_num as f64 / 64.0;
        let p = q.perturb(PerturbationParams::new(lambda).unwrap());
        let n = BigInt::from(q.len());
        let l = exact(lambda);
        let one = BigRational::from_integer(BigInt::from(1));
        for (k, &m) in p.mass().iter().enumerate() {
            let oracle = &l * exact(q.mass()[k]) + (&one - &l) / BigRational::from_integer(n.clone());
            let diff = exact(m) - oracle;
            let tol = exact(1e-15);
            prop_assert!(diff <= tol && diff >= -tol.clone(), "entry {k}");
        }
    }

    #[test]
    fn entries_stay_within_floor_and_ceiling(weights in weighted(12), lambda in 0.0f64..=1.0) {
        let q = to_distribution(&weights);
        let params = PerturbationParams::new(lambda).unwrap();
        let (floor, ceiling) = bounds_for_size(params, q.len());
        let p = q.perturb(params);
        for (k, &m) in p.mass().iter().enumerate() {
            prop_assert!(m >= floor - 1e-15 && m <= ceiling + 1e-15);
            if q.mass()[k] == 0.0 {
                prop_assert_eq!(m, floor);
            } else if lambda > 1e-6 {
                prop_assert!(m > floor);
            }
            if q.mass()[k] == 1.0 {
                prop_assert_eq!(m, ceiling);
            } else if lambda > 1e-6 {
                prop_assert!(m < ceiling);
            }
        }
    }

    #[test]
    fn mass_is_preserved(weights in weighted(40), lambda in 0.0f64..=1.0) {
        let q = to_distribution(&weights);
        let p = q.perturb(PerturbationParams::new(lambda).unwrap());
        prop_assert!((p.mass().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn repeated_perturbation_multiplies_lambdas(weights in weighted(12), l1 in 0.0f64..=1.0, l2 in 0.0f64..=1.0) {
        let q = to_distribution(&weights);
        let twice = q
            .perturb(PerturbationParams::new(l1).unwrap())
            .into_distribution()
            .perturb(PerturbationParams::new(l2).unwrap());
        let once = q.perturb(PerturbationParams::new(l1 * l2).unwrap());
        for (a, b) in twice.mass().iter().zip(once.mass()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn vocabulary_checked_perturb_matches_size(weights in weighted(6), extra in 1usize..3) {
        let q = to_distribution(&weights);
        let same = Vocabulary::new((0..q.len()).map(|i| i.to_string())).unwrap();
        let other = Vocabulary::new((0..q.len() + extra).map(|i| i.to_string())).unwrap();
        let params = PerturbationParams::new(0.5).unwrap();
        prop_assert!(perturb(&same, &q, params).is_ok());
        prop_assert!(perturb(&other, &q, params).is_err());
    }
}
