//! The binary-prior example with entropy cost and `κ(q) = e^q − q − 1`, in closed form.
//!
//! With types 0 and 1 equally likely, `c(θ) = θ ln θ + (1−θ) ln(1−θ)` and a constant shadow
//! derivative `p = −c′(t)`, the buyer does not learn and the seller's profit as a function of
//! the threshold type `t` is `ln 2 + 2 ln(1−t) − ln t − (1−t)/t + 1`.

use serde::{Deserialize, Serialize};

use crate::costs::{entropy_info_cost, exp_quality_cost, InfoCost, QualityCost};
use crate::dist::{Grid, PosteriorDist};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormExample {
    pub theta_q_low: f64,
    pub profit: f64,
    pub value_at_half: f64,
    pub quality_at_half: f64,
    pub efficient_quality: f64,
    pub distortion: f64,
}

fn profit_of_threshold(t: f64) -> f64 {
    std::f64::consts::LN_2 + 2.0 * (1.0 - t).ln() - t.ln() - (1.0 - t) / t + 1.0
}

fn profit_slope(t: f64) -> f64 {
    -2.0 / (1.0 - t) - 1.0 / t + 1.0 / (t * t)
}

/// Maximizes the threshold profit by bisection on its derivative over `(0, 0.5)`.
pub fn solve_example_closed_form() -> ClosedFormExample {
    let (mut lo, mut hi) = (1e-9, 0.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if profit_slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let c = entropy_info_cost(1.0, 0.0).expect("valid scale");
    let kappa = exp_quality_cost(1.0);
    let quality = c.c_prime(0.5) - c.c_prime(t);
    let value = c.c(0.5) - c.c(t) - c.c_prime(t) * (0.5 - t);
    let efficient = kappa.efficient(0.5);
    ClosedFormExample {
        theta_q_low: t,
        profit: profit_of_threshold(t),
        value_at_half: value,
        quality_at_half: quality,
        efficient_quality: efficient,
        distortion: efficient - quality,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub theta_q_low: f64,
    pub mesh: Vec<f64>,
    pub values: Vec<f64>,
    pub max_value: f64,
    pub all_negative: bool,
}

/// Second derivative of the pointwise profit for threshold `t`.
pub fn profit_curvature(t: f64, theta: f64) -> f64 {
    2.0 / (1.0 - theta).powi(2) - 1.0 / (theta * theta) - ((1.0 - t) / t) * 2.0 / (1.0 - theta).powi(3)
}

/// Evaluates the curvature on the interior mesh `k / (points + 1)`.
pub fn concavity_report_example(t: f64, points: usize) -> ConcavityReport {
    let mesh: Vec<f64> = (1..=points).map(|k| k as f64 / (points + 1) as f64).collect();
    let values: Vec<f64> = mesh.iter().map(|&x| profit_curvature(t, x)).collect();
    let max_value = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ConcavityReport { theta_q_low: t, mesh, values, max_value, all_negative: max_value < 0.0 }
}

/// Grid version of the example: uniform grid on `[0, 1]` with the prior split between the
/// two nodes adjacent to the ends.
pub struct ExampleInstance {
    pub prior: PosteriorDist,
    pub info_cost: InfoCost,
    pub quality_cost: QualityCost,
}

pub fn example_instance(n: usize) -> Result<ExampleInstance> {
    let grid = Grid::uniform(0.0, 1.0, n)?;
    let prior = PosteriorDist::uniform_on(grid, &[1, n - 2])?;
    Ok(ExampleInstance {
        prior,
        info_cost: entropy_info_cost(1.0, std::f64::consts::LN_2)?,
        quality_cost: exp_quality_cost(1.0),
    })
}
