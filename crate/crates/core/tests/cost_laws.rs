use infoscreen_core::costs::{
    entropy_info_cost, expected_info_cost, exp_quality_cost, quadratic_info_cost, InfoCost, QualityCost,
};
use infoscreen_core::dist::{pool_pair, Grid, PosteriorDist};
use proptest::prelude::*;

const H: f64 = 1e-5;

/// Third derivative written out by hand, used to bound the central-difference error.
fn third_derivative(cost: &InfoCost, theta: f64) -> f64 {
    match *cost {
        InfoCost::Entropy { scale, .. } => scale * (1.0 / (1.0 - theta).powi(2) - 1.0 / (theta * theta)),
        InfoCost::Quadratic { .. } => 0.0,
    }
}

fn info_costs() -> impl Strategy<Value = InfoCost> {
    prop_oneof![
        (0.1f64..5.0, -1.0f64..1.0).prop_map(|(s, o)| entropy_info_cost(s, o).unwrap()),
        (0.1f64..5.0, 0.0f64..1.0).prop_map(|(a, c)| quadratic_info_cost(a, c).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn slope_matches_central_difference(cost in info_costs(), theta in 0.01f64..0.99) {
        let fd = (cost.c(theta + H) - cost.c(theta - H)) / (2.0 * H);
        let m3 = third_derivative(&cost, theta - H).abs().max(third_derivative(&cost, theta + H).abs());
        let rounding = 4.0 * f64::EPSILON * (1.0 + cost.c(theta).abs()) / H;
        prop_assert!((fd - cost.c_prime(theta)).abs() <= m3 / 6.0 * H * H * 1.01 + rounding);
    }

    #[test]
    fn pooling_lowers_expected_cost(
        cost in info_costs(),
        w in prop::collection::vec(1u32..50, 9),
        i in 1usize..10, j in 1usize..10,
    ) {
        prop_assume!(i.abs_diff(j) >= 2);
        let grid = Grid::uniform(0.0, 1.0, 11).unwrap();
        // End nodes stay empty: the entropy cost rejects mass where its slope is infinite.
        let mass = std::iter::once(0.0).chain(w.iter().map(|x| *x as f64)).chain(std::iter::once(0.0)).collect();
        let f = PosteriorDist::normalized(grid, mass).unwrap();
        let pooled = pool_pair(&f, i, j, 1.0).unwrap();
        prop_assert!(expected_info_cost(&pooled, &cost).unwrap() < expected_info_cost(&f, &cost).unwrap());
    }

    #[test]
    fn marginal_cost_inverse_round_trips(q_frac in 0.0f64..=1.0, slope in 0.5f64..4.0, quadratic in any::<bool>()) {
        let kappa = if quadratic {
            QualityCost::Quadratic { slope, q_bar: 2.0 * slope }
        } else {
            exp_quality_cost(1.0)
        };
        let q = q_frac * kappa.q_bar();
        prop_assert!((kappa.kappa_prime_inverse(kappa.kappa_prime(q)).unwrap() - q).abs() <= 1e-10);
    }
}
