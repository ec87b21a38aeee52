//! Random signals and shadow derivatives shared by the F-ICC suites.
#![allow(dead_code)]

pub mod oracle;

use infoscreen_core::costs::{entropy_info_cost, quadratic_info_cost, InfoCost};
use infoscreen_core::dist::{integral_fn, pool_pair, pool_segments, Grid, PosteriorDist};
use infoscreen_core::ficc::ShadowDerivative;
use rand::Rng;

pub const N: usize = 41;
pub const Q_BAR: f64 = 3.0;

pub fn priors(grid: &Grid) -> Vec<(&'static str, PosteriorDist)> {
    vec![
        ("binary", PosteriorDist::uniform_on(grid.clone(), &[3, N - 4]).unwrap()),
        ("uniform", PosteriorDist::uniform_on(grid.clone(), &(1..N - 1).collect::<Vec<_>>()).unwrap()),
        ("beta", {
            // End nodes emptied so the support hull stays inside the entropy cost's domain.
            let mut mass = PosteriorDist::beta(grid.clone(), 2.0, 3.0).unwrap().mass().to_vec();
            mass[0] = 0.0;
            mass[N - 1] = 0.0;
            PosteriorDist::normalized(grid.clone(), mass).unwrap()
        }),
    ]
}

pub fn random_cost(rng: &mut impl Rng, entropy: bool) -> InfoCost {
    if entropy {
        entropy_info_cost(rng.gen_range(0.1..0.35), 0.0).unwrap()
    } else {
        quadratic_info_cost(rng.gen_range(0.2..1.0), 0.5).unwrap()
    }
}

/// A random contraction of the prior: a few poolings of node ranges and of atom pairs.
pub fn random_signal(rng: &mut impl Rng, prior: &PosteriorDist) -> PosteriorDist {
    let mut f = prior.clone();
    for _ in 0..rng.gen_range(0..=3) {
        if rng.gen_bool(0.5) {
            let a = rng.gen_range(0..N);
            let b = rng.gen_range(a..N);
            f = pool_segments(&f, &[(a, b)]).unwrap();
        } else {
            let support = f.support(0.0).unwrap().nodes;
            let i = support[rng.gen_range(0..support.len())];
            let j = support[rng.gen_range(0..support.len())];
            f = pool_pair(&f, i, j, rng.gen_range(0.1..=1.0)).unwrap();
        }
    }
    f
}

/// Increasing step function that only jumps where `I_F` binds inside the support hull, with
/// levels chosen so that `0 ≤ p + c′ ≤ q̄` at the two ends of the support.
pub fn random_shadow_derivative(
    rng: &mut impl Rng,
    grid: &Grid,
    dist: &PosteriorDist,
    prior: &PosteriorDist,
    cost: &InfoCost,
) -> ShadowDerivative {
    let support = dist.support(0.0).unwrap();
    let (lo, hi) = (support.min(), support.max());
    let integral = integral_fn(dist, prior).unwrap();
    let binding: Vec<usize> = (lo + 1..=hi).filter(|&k| k < N - 1 && integral.at(k) <= 1e-12).collect();
    let room = Q_BAR - cost.c_prime(grid.theta(hi)) + cost.c_prime(grid.theta(lo));
    assert!(room > 0.0, "no admissible level for {cost:?} on nodes {lo}..{hi}");
    let total = if binding.is_empty() { 0.0 } else { rng.gen_range(0.0..0.6) * room };
    let mut jumps = vec![0.0; N];
    for _ in 0..rng.gen_range(1..=3) {
        if let Some(&k) = binding.get(rng.gen_range(0..binding.len().max(1))) {
            jumps[k] += 1.0;
        }
    }
    let weight: f64 = jumps.iter().sum();
    if weight > 0.0 {
        jumps.iter_mut().for_each(|j| *j *= total / weight);
    }
    let base = -cost.c_prime(grid.theta(lo)) + rng.gen_range(0.0..1.0) * (room - total);
    let cells = (0..N - 1).map(|c| base + jumps[..=c].iter().sum::<f64>()).collect();
    let points = (0..N).map(|k| base + jumps[..k].iter().sum::<f64>()).collect();
    ShadowDerivative::new(grid.clone(), cells, points).unwrap()
}
