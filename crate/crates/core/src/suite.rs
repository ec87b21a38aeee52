//! Regression instances: every combination of five priors, five information costs and two
//! production costs on a uniform grid over `[0, 1]`.
//!
//! Entropy costs with scale near 2 need a few hundred nodes before the underprovision margin
//! is resolved: on coarser grids the secant cells around a support node span more than the
//! distortion.

use crate::costs::{entropy_info_cost, exp_quality_cost, quadratic_info_cost, InfoCost, QualityCost};
use crate::dist::{Grid, PosteriorDist};
use crate::error::Result;
use crate::seller::SellerProblem;

pub const REGRESSION_GRID: usize = 401;

#[derive(Clone, Debug)]
pub struct RegressionInstance {
    pub name: String,
    pub problem: SellerProblem,
}

pub fn regression_priors(grid: &Grid) -> Result<Vec<(&'static str, PosteriorDist)>> {
    let n = grid.len();
    let mut asym = vec![0.0; n];
    asym[n / 5] = 0.3;
    asym[9 * n / 10] = 0.7;
    Ok(vec![
        ("binary", PosteriorDist::uniform_on(grid.clone(), &[1, n - 2])?),
        ("binary_asym", PosteriorDist::new(grid.clone(), asym)?),
        ("uniform", PosteriorDist::uniform_on(grid.clone(), &(1..n - 1).collect::<Vec<_>>())?),
        ("beta22", PosteriorDist::beta(grid.clone(), 2.0, 2.0)?),
        ("beta25", PosteriorDist::beta(grid.clone(), 2.0, 5.0)?),
    ])
}

pub fn regression_info_costs() -> Result<Vec<(&'static str, InfoCost)>> {
    Ok(vec![
        ("entropy0.5", entropy_info_cost(0.5, 0.0)?),
        ("entropy1", entropy_info_cost(1.0, 0.0)?),
        ("entropy2", entropy_info_cost(2.0, 0.0)?),
        ("quadratic0.5", quadratic_info_cost(0.5, 0.5)?),
        ("quadratic2", quadratic_info_cost(2.0, 0.5)?),
    ])
}

pub fn regression_quality_costs() -> Vec<(&'static str, QualityCost)> {
    vec![("exp", exp_quality_cost(1.0)), ("quadratic", QualityCost::Quadratic { slope: 1.0, q_bar: 2.0 })]
}

pub fn regression_instances(n: usize) -> Result<Vec<RegressionInstance>> {
    let grid = Grid::uniform(0.0, 1.0, n)?;
    let mut out = Vec::new();
    for (pn, prior) in regression_priors(&grid)? {
        for (cn, cost) in regression_info_costs()? {
            for (kn, kappa) in regression_quality_costs() {
                out.push(RegressionInstance {
                    name: format!("{pn}/{cn}/{kn}"),
                    problem: SellerProblem::new(prior.clone(), cost.clone(), kappa)?,
                });
            }
        }
    }
    Ok(out)
}
