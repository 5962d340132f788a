mod common;

use esw::estimator::{build_design, mse_g, sensitivity_h, EstimatorSpec, FeatureMap, Point, TestPointDistribution};
use esw::mechanism::{payment_slope, EffortCurve};
use esw::optimizer::{budget_efforts, min_cost_matching, optimal_effort};
use esw::simulator::effort_grid;
use proptest::prelude::*;

fn curve() -> impl Strategy<Value = EffortCurve> {
    (any::<bool>(), 0.3f64..2.0, 0.4f64..1.6, 0.0f64..0.5, 1.0f64..4.0).prop_map(|(power, scale, shape, lo, width)| {
        if power {
            EffortCurve::power_decay(scale, shape, lo, lo + width)
        } else {
            EffortCurve::exponential_decay(scale, shape, lo, lo + width)
        }
    })
}

/// Degree, design points, test support and noise levels for a 1-d polynomial fit.
fn design() -> impl Strategy<Value = (u32, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (0u32..=3).prop_flat_map(|degree| {
        let m = degree as usize + 1;
        (m..=10).prop_flat_map(move |k| {
            (
                Just(degree),
                prop::collection::vec(0.0f64..1.0, k),
                prop::collection::vec(-0.5f64..1.5, 1..4),
                prop::collection::vec(0.0f64..2.0, k),
            )
        })
    })
}

fn build(degree: u32, xs: &[f64], support: &[f64]) -> Option<(EstimatorSpec, esw::estimator::DesignBundle)> {
    let spec = EstimatorSpec::ordinary(FeatureMap::polynomial(degree, 1));
    let points: Vec<Point> = xs.iter().map(|&x| Point::scalar(x)).collect();
    let dist = TestPointDistribution::uniform(support.iter().map(|&x| Point::scalar(x)).collect()).ok()?;
    let bundle = build_design(&spec, &points, &dist).ok()?;
    Some((spec, bundle))
}

proptest! {
    #[test]
    fn separability_identity((degree, xs, support, sigmas) in design()) {
        // Nearly coincident points make the design singular; those are rejected.
        let Some((spec, bundle)) = build(degree, &xs, &support) else { return Ok(()) };
        let g = mse_g(&spec, &bundle, &sigmas).unwrap();
        let h = sensitivity_h(&spec, &bundle).unwrap();
        let separated: f64 = h.iter().zip(&sigmas).map(|(h, s)| h * s * s).sum();
        prop_assert!((g - separated).abs() <= 1e-10 * (1.0 + g), "{g} vs {separated}");
        prop_assert!(h.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn mse_grows_with_any_noise_level((degree, xs, support, sigmas) in design(), bump in 0.01f64..1.0, at in any::<prop::sample::Index>()) {
        let Some((spec, bundle)) = build(degree, &xs, &support) else { return Ok(()) };
        let i = at.index(sigmas.len());
        let mut more = sigmas.clone();
        more[i] += bump;
        prop_assert!(mse_g(&spec, &bundle, &more).unwrap() >= mse_g(&spec, &bundle, &sigmas).unwrap() - 1e-12);
    }

    #[test]
    fn hungarian_matches_permutation_brute_force(n in 1usize..=6, seed in any::<u64>(), integer in any::<bool>()) {
        let mut r = common::rng(seed);
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| {
                use rand::Rng;
                if integer { r.random_range(0..5) as f64 } else { r.random_range(-3.0..3.0) }
            }).collect())
            .collect();
        let m = min_cost_matching(&cost).unwrap();
        let best = common::injections(n, n)
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        prop_assert!((m.total - best).abs() <= 1e-12 * (1.0 + best.abs()));
        let mut cols = m.row_to_col.clone();
        cols.sort();
        prop_assert_eq!(cols, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn optimal_effort_beats_every_grid_point(c in curve(), h in 0.0f64..3.0, eta in 0.001f64..2.0) {
        let best = optimal_effort(h, &c, eta);
        prop_assert!(c.contains(best.effort));
        for e in effort_grid(&c, 2000) {
            prop_assert!(best.cost <= h * c.variance(e) + eta * e + 1e-9);
        }
    }

    #[test]
    fn payment_slope_places_the_optimum_at_target(c in curve(), t in 0.0f64..1.0) {
        let target = c.effort_min + t * (c.effort_max - c.effort_min);
        let d = payment_slope(&c, target).unwrap();
        prop_assert!(d > 0.0);
        prop_assert!((2.0 * d * c.sigma(target) * c.slope(target) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_is_never_exceeded(curves in prop::collection::vec(curve(), 1..6), seed in any::<u64>(), extra in 0.0f64..10.0) {
        use rand::Rng;
        let mut r = common::rng(seed);
        let h: Vec<f64> = curves.iter().map(|_| r.random_range(0.0..2.0)).collect();
        let budget = curves.iter().map(|c| c.effort_min).sum::<f64>() + extra;
        let sol = budget_efforts(&curves, &h, budget).unwrap();
        prop_assert!(sol.efforts.iter().sum::<f64>() <= budget + 1e-9);
        prop_assert!(sol.multiplier >= 0.0);
        for (c, e) in curves.iter().zip(&sol.efforts) {
            prop_assert!(c.contains(*e));
        }
    }

    #[test]
    fn synthesized_contracts_have_zero_surplus_and_dominant_targets(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let case = common::random_case(&mut r, 5, 2);
        let (_, contract) = common::solve_and_synthesize(&case.problem);
        let targets = contract.targets();
        for (i, t) in contract.terms.iter().enumerate() {
            prop_assert!(t.slope > 0.0);
            prop_assert!(contract.analytic_utility(i, t.target_effort, &targets).unwrap().abs() <= 1e-9);
            for opp in [contract.min_profile(), contract.max_profile()] {
                prop_assert!((contract.best_response(i, &opp).unwrap() - t.target_effort).abs() <= 1e-6);
            }
        }
    }
}
