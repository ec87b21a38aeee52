use infoscreen_core::buyer::{solve_buyer, BuyerOptions, BuyerProblem, TieBreak};
use infoscreen_core::dist::{pool_segments, Grid, PosteriorDist};
use proptest::prelude::*;

fn no_tie_break() -> BuyerOptions {
    BuyerOptions { tie_break: TieBreak::None, ..BuyerOptions::default() }
}

fn prior_strategy(n: usize) -> impl Strategy<Value = PosteriorDist> {
    proptest::collection::vec(1u32..20, n).prop_map(move |w| {
        let grid = Grid::uniform(0.0, 1.0, n).unwrap();
        PosteriorDist::normalized(grid, w.into_iter().map(f64::from).collect()).unwrap()
    })
}

/// Concave bump plus a few convex kinks.
fn objective(grid: &Grid, curvature: f64, kinks: &[(f64, f64)]) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|&t| -curvature * (t - 0.4).powi(2) + kinks.iter().map(|(at, w)| w * (t - at).abs()).sum::<f64>())
        .collect()
}

fn instance() -> impl Strategy<Value = (PosteriorDist, Vec<f64>, Vec<(usize, usize)>)> {
    (3usize..30).prop_flat_map(|n| {
        (
            prior_strategy(n),
            0.0f64..3.0,
            proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..3),
            proptest::collection::vec((0..n, 0..n), 0..4),
        )
            .prop_map(|(prior, curvature, kinks, pools)| {
                let phi = objective(prior.grid(), curvature, &kinks);
                let segments = pools.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
                (prior, phi, segments)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn duality_holds_against_other_signals((prior, phi, segments) in instance()) {
        let problem = BuyerProblem::new(prior.clone(), phi.clone(), false).unwrap();
        let solution = solve_buyer(&problem, &no_tie_break()).unwrap();
        let dual = prior.expect(&solution.price.values);
        prop_assert!((solution.value - solution.dist.expect(&phi)).abs() <= 1e-9);
        prop_assert!((solution.value - dual).abs() <= 1e-7, "residual {}", solution.value - dual);
        prop_assert!(solution.certificate.passed(), "{}", solution.certificate.summary());
        // Disjoint segments only; overlapping ones are merged into their union.
        let mut merged: Vec<(usize, usize)> = Vec::new();
        let mut sorted = segments.clone();
        sorted.sort();
        for (a, b) in sorted {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        let alternative = pool_segments(&prior, &merged).unwrap();
        let slack = solution.certificate.worst_slack().max(0.0);
        prop_assert!(alternative.expect(&phi) <= dual + slack + 1e-9);
        prop_assert!(prior.expect(&phi) <= dual + slack + 1e-9);
    }

    #[test]
    fn convex_kink_at_the_mean_is_split(half in 2usize..12, weights in proptest::collection::vec(1u32..20, 12), w in 0.05f64..1.0, share in 0.0f64..0.9) {
        let n = 2 * half + 1;
        let grid = Grid::uniform(0.0, 1.0, n).unwrap();
        // Symmetric prior, so its mean is the middle node.
        let mass: Vec<f64> = (0..n).map(|k| f64::from(weights[k.min(n - 1 - k)])).collect();
        let prior = PosteriorDist::normalized(grid.clone(), mass).unwrap();
        let mid = half;
        // The kink must dominate the concave part over one cell for a split to pay on this grid.
        let delta = grid.width(mid);
        let curvature = share * w / delta;
        prop_assert!((prior.mean() - grid.theta(mid)).abs() < 1e-12);
        let phi: Vec<f64> = grid.nodes().iter().map(|&t| {
            let d = t - grid.theta(mid);
            -curvature * d * d + w * d.abs()
        }).collect();
        let solution = solve_buyer(&BuyerProblem::new(prior, phi.clone(), false).unwrap(), &BuyerOptions::default()).unwrap();
        // Splitting a small share onto the two neighbours already gains in proportion to this.
        let margin = (w * delta - curvature * delta * delta) * 1e-3;
        prop_assert!(solution.value > phi[mid] + margin, "{} vs {}", solution.value, phi[mid]);
        prop_assert!(solution.dist.mass()[mid] < 1.0 - 1e-9);
    }
}
