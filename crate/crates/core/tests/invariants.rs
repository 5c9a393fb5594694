//! Structural properties of the working distribution, perturbations, the
//! support and the recency restriction.

mod common;

use common::*;
use deductive_core::sim::generate;
use deductive_core::{build_support, FitOptions, Variant, WorkingModelFit};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn assembled_distributions_are_normalized(
        k in 1u8..=2,
        stream in 0u64..1000,
        lognormal in any::<bool>(),
        alphas in prop::collection::vec(-5.0f64..5.0, 20),
    ) {
        let variant = if lognormal { Variant::LogNormal } else { Variant::Cox };
        check_normalization(k, stream, variant, &alphas).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn alpha_zero_is_the_unextended_distribution() {
    for (k, stream) in [(1, 0), (1, 1), (2, 0), (2, 5)] {
        check_alpha_zero(k, stream).unwrap();
    }
}

#[test]
fn extension_is_continuous_at_zero() {
    let data = generate(gm(1), 120, 17, 3);
    let sup = build_support(&data);
    for variant in [Variant::Cox, Variant::LogNormal] {
        let fit = WorkingModelFit::fit(&data, &sup, FitOptions { variant, ..Default::default() }).unwrap();
        let g0 = fit.assemble(0.0).unwrap();
        let g1 = fit.assemble(1e-9).unwrap();
        let diff = g0.probs().iter().zip(g1.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "{variant:?}: {diff}");
        assert_eq!(fit.xdelta_tables(0.0).unwrap().tables, fit.xdelta_tables(-0.0).unwrap().tables);
    }
}

#[test]
fn point_mass_is_a_perturbation_fixed_point() {
    for stream in 0..3 {
        check_fixed_point(stream).unwrap();
    }
}

#[test]
fn every_observed_record_is_in_the_support() {
    for rep in 0..100u64 {
        check_membership(1 + (rep % 2) as u8, rep).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gamma_restriction_is_idempotent_and_monotone(
        k in 1u8..=2,
        stream in 0u64..10_000,
        g1 in 0.01f64..3.0,
        g2 in 0.01f64..3.0,
    ) {
        check_gamma(k, stream, g1, g2).map_err(TestCaseError::fail)?;
    }
}
