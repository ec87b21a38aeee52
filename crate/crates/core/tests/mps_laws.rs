use infoscreen_core::dist::{
    integral_fn, is_mpc_of_prior, mps_compare, pool_pair, pool_segments, Grid, MpsOrdering, PosteriorDist,
};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (3usize..=25)
        .prop_flat_map(|n| (prop::collection::vec(0.05f64..1.0, n - 1), 0.0f64..1.0))
        .prop_map(|(steps, start)| {
            let mut nodes = vec![start];
            for s in steps {
                let last = *nodes.last().unwrap();
                nodes.push(last + s);
            }
            Grid::new(nodes).unwrap()
        })
}

fn dist_on(grid: Grid) -> impl Strategy<Value = PosteriorDist> {
    let n = grid.len();
    prop::collection::vec(0u32..100, n).prop_filter_map("all-zero masses", move |w| {
        if w.iter().all(|x| *x == 0) {
            return None;
        }
        PosteriorDist::normalized(grid.clone(), w.iter().map(|x| *x as f64).collect()).ok()
    })
}

fn pair() -> impl Strategy<Value = (PosteriorDist, PosteriorDist)> {
    grid_strategy().prop_flat_map(|g| (dist_on(g.clone()), dist_on(g)))
}

/// Left Riemann sums of `F0 − F` on a grid refined `factor` times, with both CDFs rebuilt
/// from scratch on the fine grid.
fn refined_integral(dist: &PosteriorDist, prior: &PosteriorDist, factor: usize) -> Vec<f64> {
    let coarse = dist.grid();
    let fine = coarse.refine(factor).unwrap();
    let embed = |d: &PosteriorDist| {
        let mut m = vec![0.0; fine.len()];
        for (k, w) in d.mass().iter().enumerate() {
            m[k * factor] = *w;
        }
        m
    };
    let (mf, m0) = (embed(dist), embed(prior));
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for j in 0..fine.len() - 1 {
        let big_f: f64 = mf[..=j].iter().sum();
        let big_f0: f64 = m0[..=j].iter().sum();
        acc += (big_f0 - big_f) * (fine.theta(j + 1) - fine.theta(j));
        if (j + 1) % factor == 0 {
            out.push(acc);
        }
    }
    out
}

fn spreads(f: &PosteriorDist, g: &PosteriorDist) -> bool {
    matches!(mps_compare(f, g).unwrap(), MpsOrdering::FirstSpreadsSecond | MpsOrdering::Equal)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn integral_matches_refined_riemann_sum((f, f0) in pair()) {
        let exact = integral_fn(&f, &f0).unwrap();
        let oracle = refined_integral(&f, &f0, 10);
        for (k, v) in oracle.iter().enumerate() {
            prop_assert!((exact.at(k) - v).abs() <= 1e-12, "node {k}: {} vs {v}", exact.at(k));
        }
        let last = exact.values[exact.values.len() - 1];
        prop_assert!((last - (f.mean() - f0.mean())).abs() <= 1e-12);
    }

    #[test]
    fn feasibility_agrees_with_order((f, g) in pair(), i in 0usize..25, j in 0usize..25, frac in 0.0f64..=1.0) {
        let n = g.len();
        let pooled = pool_pair(&g, i % n, j % n, frac).unwrap();
        for candidate in [&f, &pooled] {
            let feasible = is_mpc_of_prior(candidate, &g, 1e-9).unwrap();
            prop_assert_eq!(feasible, spreads(&g, candidate));
        }
        prop_assert!(is_mpc_of_prior(&pooled, &g, 1e-9).unwrap());
    }

    #[test]
    fn order_is_reflexive_and_antisymmetric((f, g) in pair()) {
        prop_assert_eq!(mps_compare(&f, &f).unwrap(), MpsOrdering::Equal);
        let swapped = match mps_compare(&f, &g).unwrap() {
            MpsOrdering::FirstSpreadsSecond => MpsOrdering::SecondSpreadsFirst,
            MpsOrdering::SecondSpreadsFirst => MpsOrdering::FirstSpreadsSecond,
            other => other,
        };
        prop_assert_eq!(mps_compare(&g, &f).unwrap(), swapped);
    }

    #[test]
    fn order_is_transitive_along_poolings(
        f in grid_strategy().prop_flat_map(dist_on),
        a in 0usize..25, b in 0usize..25, c in 0usize..25, d in 0usize..25,
    ) {
        let n = f.len();
        let (a, b) = ((a % n).min(b % n), (a % n).max(b % n));
        let once = pool_segments(&f, &[(a, b)]).unwrap();
        let twice = pool_pair(&once, c % n, d % n, 0.5).unwrap();
        prop_assert!(spreads(&f, &once));
        prop_assert!(spreads(&once, &twice));
        prop_assert!(spreads(&f, &twice));
        prop_assert!((twice.mean() - f.mean()).abs() <= 1e-12);
    }
}
