//! Information-cost and production-cost primitives.

use serde::{Deserialize, Serialize};

use crate::dist::{Grid, PosteriorDist};
use crate::error::{Error, Result};

/// Stand-in for an infinite boundary slope. Finite so that downstream clamps stay defined.
pub const SLOPE_SENTINEL: f64 = 1e300;

/// Convex posterior-mean cost `c`; signals cost `∫ c dF`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InfoCost {
    /// `scale·(θ ln θ + (1−θ) ln(1−θ)) + offset` on `[0, 1]`.
    Entropy { scale: f64, offset: f64 },
    /// `a·(θ − center)²`.
    Quadratic { a: f64, center: f64 },
}

pub fn entropy_info_cost(scale: f64, theta0_offset: f64) -> Result<InfoCost> {
    if !(scale > 0.0) || !scale.is_finite() || !theta0_offset.is_finite() {
        return Err(Error::Config("entropy cost needs a positive finite scale".into()));
    }
    Ok(InfoCost::Entropy { scale, offset: theta0_offset })
}

pub fn quadratic_info_cost(a: f64, center: f64) -> Result<InfoCost> {
    if !(a > 0.0) || !a.is_finite() || !center.is_finite() {
        return Err(Error::Config("quadratic cost needs a positive finite curvature".into()));
    }
    Ok(InfoCost::Quadratic { a, center })
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

impl InfoCost {
    pub fn c(&self, theta: f64) -> f64 {
        match *self {
            InfoCost::Entropy { scale, offset } => scale * (xlnx(theta) + xlnx(1.0 - theta)) + offset,
            InfoCost::Quadratic { a, center } => a * (theta - center).powi(2),
        }
    }

    /// Derivative; at the edges of the entropy domain returns `∓SLOPE_SENTINEL`.
    pub fn c_prime(&self, theta: f64) -> f64 {
        match *self {
            InfoCost::Entropy { scale, .. } => {
                if theta <= 0.0 {
                    -SLOPE_SENTINEL
                } else if theta >= 1.0 {
                    SLOPE_SENTINEL
                } else {
                    scale * (theta / (1.0 - theta)).ln()
                }
            }
            InfoCost::Quadratic { a, center } => 2.0 * a * (theta - center),
        }
    }

    pub fn c_double_prime(&self, theta: f64) -> f64 {
        match *self {
            InfoCost::Entropy { scale, .. } => {
                if theta <= 0.0 || theta >= 1.0 {
                    SLOPE_SENTINEL
                } else {
                    scale / (theta * (1.0 - theta))
                }
            }
            InfoCost::Quadratic { a, .. } => 2.0 * a,
        }
    }

    /// Whether slopes diverge at the domain edge, so boundary nodes are never optimal supports.
    pub fn boundary_steep(&self) -> bool {
        matches!(self, InfoCost::Entropy { .. })
    }

    /// Inverse of `c′` on the open domain, used to map a zero-quality type to a price level.
    pub fn c_prime_inverse(&self, slope: f64) -> f64 {
        match *self {
            InfoCost::Entropy { scale, .. } => {
                let e = (slope / scale).exp();
                e / (1.0 + e)
            }
            InfoCost::Quadratic { a, center } => center + slope / (2.0 * a),
        }
    }

    pub fn check_domain(&self, grid: &Grid) -> Result<()> {
        if let InfoCost::Entropy { .. } = self {
            if grid.theta_min() < 0.0 || grid.theta_max() > 1.0 {
                return Err(Error::Config("entropy cost is defined on [0, 1] only".into()));
            }
        }
        Ok(())
    }

    pub fn node_values(&self, grid: &Grid) -> Vec<f64> {
        grid.nodes().iter().map(|&t| self.c(t)).collect()
    }

    /// Secant slopes `(c(θ_{k+1}) − c(θ_k)) / (θ_{k+1} − θ_k)`, one per cell.
    pub fn secant_slopes(&self, grid: &Grid) -> Vec<f64> {
        let c = self.node_values(grid);
        (0..grid.len() - 1).map(|k| (c[k + 1] - c[k]) / grid.width(k)).collect()
    }
}

/// `C(F) = Σ mass_i·c(θ_i)`.
pub fn expected_info_cost(dist: &PosteriorDist, cost: &InfoCost) -> Result<f64> {
    let grid = dist.grid();
    let last = grid.len() - 1;
    if cost.boundary_steep() {
        for node in [0, last] {
            let t = grid.theta(node);
            let at_edge = t <= 0.0 || t >= 1.0;
            let mass = dist.mass()[node];
            if at_edge && mass > 0.0 {
                return Err(Error::BoundarySupport { node, mass });
            }
        }
    }
    Ok(dist.expect(&cost.node_values(grid)))
}

/// Convex production cost `κ` with an upper quality bound `q̄`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum QualityCost {
    /// `κ(q) = e^q − q − 1`.
    Exponential { q_bar: f64 },
    /// `κ(q) = q² / (2·slope)`.
    Quadratic { slope: f64, q_bar: f64 },
}

/// Exponential quality cost with `q̄` chosen so that `κ′(q̄) > θ_max`.
pub fn exp_quality_cost(theta_max: f64) -> QualityCost {
    QualityCost::Exponential { q_bar: (2.0 + 2.0 * theta_max).ln() }
}

impl QualityCost {
    pub fn q_bar(&self) -> f64 {
        match *self {
            QualityCost::Exponential { q_bar } | QualityCost::Quadratic { q_bar, .. } => q_bar,
        }
    }

    pub fn kappa(&self, q: f64) -> f64 {
        match *self {
            QualityCost::Exponential { .. } => q.exp_m1() - q,
            QualityCost::Quadratic { slope, .. } => q * q / (2.0 * slope),
        }
    }

    pub fn kappa_prime(&self, q: f64) -> f64 {
        match *self {
            QualityCost::Exponential { .. } => q.exp_m1(),
            QualityCost::Quadratic { slope, .. } => q / slope,
        }
    }

    pub fn kappa_prime_inverse(&self, m: f64) -> Result<f64> {
        match *self {
            QualityCost::Exponential { .. } => {
                if m <= -1.0 {
                    return Err(Error::Domain(format!("κ′⁻¹ undefined at {m}")));
                }
                Ok(m.ln_1p())
            }
            QualityCost::Quadratic { slope, .. } => Ok(m * slope),
        }
    }

    /// Efficient quality for type `theta`, capped at `q̄`.
    pub fn efficient(&self, theta: f64) -> f64 {
        self.kappa_prime_inverse(theta).unwrap_or(0.0).clamp(0.0, self.q_bar())
    }

    /// Checks `κ′(0) ≤ θ_min` and `κ′(q̄) > θ_max`.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.q_bar() > 0.0) || !self.q_bar().is_finite() {
            return Err(Error::Config("q_bar must be positive".into()));
        }
        if let QualityCost::Quadratic { slope, .. } = self {
            if !(*slope > 0.0) {
                return Err(Error::Config("quadratic quality cost needs a positive slope".into()));
            }
        }
        if self.kappa_prime(0.0) > grid.theta_min() {
            return Err(Error::Config("κ′(0) exceeds the lowest type".into()));
        }
        if self.kappa_prime(self.q_bar()) <= grid.theta_max() {
            return Err(Error::Config(format!(
                "κ′(q̄) = {} does not exceed the highest type {}",
                self.kappa_prime(self.q_bar()),
                grid.theta_max()
            )));
        }
        Ok(())
    }
}
