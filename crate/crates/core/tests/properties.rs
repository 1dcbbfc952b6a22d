//! Property tests over the exact scalar field, the spectral transforms,
//! and the lattice closure.

use proptest::prelude::*;
use svcl_core::exact::ExactScalar;
use svcl_core::field::{project_high, project_low, sobolev_norm, SpectralField, TrigTransform};
use svcl_core::kvec::KVec;
use svcl_core::lattice::{reachable_set, FluxPoly, NoiseSet};

fn scalar_strategy() -> impl Strategy<Value = ExactScalar> {
    // Sums of up to three terms q * sqrt(m) with small rationals.
    prop::collection::vec(
        ((-9i64..=9), (1i64..=4), prop::sample::select(vec![1u64, 2, 3, 5, 6, 7, 10, 15])),
        0..3,
    )
    .prop_map(|terms| {
        terms
            .into_iter()
            .fold(ExactScalar::zero(), |acc, (num, den, m)| {
                acc.add(&ExactScalar::sqrt(m).scale(&num::BigRational::new(
                    num.into(),
                    den.into(),
                )))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_scalars_form_a_commutative_ring(
        a in scalar_strategy(),
        b in scalar_strategy(),
        c in scalar_strategy(),
    ) {
        prop_assert_eq!(a.add(&b), b.add(&a));
        prop_assert_eq!(a.mul(&b), b.mul(&a));
        prop_assert_eq!(a.add(&b).add(&c), a.add(&b.add(&c)));
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        prop_assert!(a.sub(&a).is_zero());
        // Zero test is consistent with floating evaluation at coarse scale.
        if a.to_f64().abs() > 1e-6 {
            prop_assert!(!a.is_zero());
        }
    }

    #[test]
    fn spectral_round_trip_is_lossless(
        coeffs in prop::collection::vec(-2.0..2.0f64, 9),
    ) {
        // One-dimensional field with cutoff 4 on a 9-point grid.
        let mut f = SpectralField::zeros(1, 4);
        for (i, v) in coeffs.iter().enumerate() {
            let k = i as i32 - 4;
            if k != 0 {
                f.set(&KVec::new(vec![k]), *v);
            }
        }
        let t = TrigTransform::new(1, 9);
        let grid = t.synthesize(f.modes());
        let amps = t.analyze(&grid);
        for (k, v) in f.modes() {
            let got = t.mode_from_amplitudes(&amps, &k);
            prop_assert!((got - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn projections_reassemble_and_are_idempotent(
        coeffs in prop::collection::vec(-2.0..2.0f64, 9),
        n in 0.5..4.5f64,
    ) {
        let mut f = SpectralField::zeros(1, 4);
        for (i, v) in coeffs.iter().enumerate() {
            let k = i as i32 - 4;
            if k != 0 {
                f.set(&KVec::new(vec![k]), *v);
            }
        }
        let low = project_low(&f, n);
        let high = project_high(&f, n);
        prop_assert_eq!(low.add(&high), f.clone());
        prop_assert_eq!(project_low(&low, n), low.clone());
        prop_assert_eq!(project_low(&high, n).norm(), 0.0);
        // Pythagoras in the orthonormal coordinates.
        let total = sobolev_norm(&f, 0.0).powi(2);
        let split = sobolev_norm(&low, 0.0).powi(2) + sobolev_norm(&high, 0.0).powi(2);
        prop_assert!((total - split).abs() <= 1e-12 * total.max(1.0));
    }

    #[test]
    fn reachable_sets_are_symmetric_and_margin_monotone(
        c1 in -3i64..=3,
        c2 in -3i64..=3,
        degree in 2usize..=3,
        pair in 0usize..3,
    ) {
        prop_assume!(c1 != 0 || c2 != 0);
        let flux = FluxPoly::pure_power(
            degree,
            vec![ExactScalar::from_int(c1), ExactScalar::from_int(c2)],
        );
        let base = [
            vec![KVec::new(vec![1, 0]), KVec::new(vec![-1, 0])],
            vec![KVec::new(vec![0, 1]), KVec::new(vec![0, -1])],
            vec![
                KVec::new(vec![1, 1]),
                KVec::new(vec![-1, -1]),
                KVec::new(vec![1, 0]),
                KVec::new(vec![-1, 0]),
            ],
        ][pair]
            .clone();
        let noise = NoiseSet::uniform(base, 1.0);
        let (small, _) = reachable_set(&flux, &noise, 4, 1).unwrap();
        let (big, _) = reachable_set(&flux, &noise, 4, 4).unwrap();
        for k in &small {
            prop_assert!(small.contains(&k.neg()));
            prop_assert!(big.contains(k));
        }
    }
}
