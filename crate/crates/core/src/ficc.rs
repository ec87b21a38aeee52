//! Shadow derivatives and cost-canceling (F-ICC) mechanisms.
//!
//! A shadow derivative `p` is stored like an allocation: `cells[k]` is its value on
//! `[θ_k, θ_{k+1})` and `points[k]` its value at node `k`, inside `[cells[k-1], cells[k]]`.
//! The induced allocation uses the secant slope of `c` on each cell and the exact derivative
//! at each node, so that `V − c` is exactly affine with slope `p` wherever quality is not
//! clamped.

use serde::{Deserialize, Serialize};

use crate::buyer::{certify_shadow_price, BuyerOptions, ShadowPrice, DEFAULT_LIPSCHITZ_BOUND};
use crate::costs::InfoCost;
use crate::dist::{integral_fn, Grid, PosteriorDist, Support};
use crate::error::{Error, Result};
use crate::fmt_num;
use crate::mechanism::{Allocation, Mechanism};

const ORDER_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowDerivative {
    grid: Grid,
    cells: Vec<f64>,
    points: Vec<f64>,
}

impl ShadowDerivative {
    pub fn new(grid: Grid, cells: Vec<f64>, points: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if cells.len() != n - 1 || points.len() != n {
            return Err(Error::GridMismatch);
        }
        if cells.iter().chain(&points).any(|v| !v.is_finite()) {
            return Err(Error::InvalidShadowDerivative("values must be finite".into()));
        }
        Ok(Self { grid, cells, points })
    }

    /// Node `k`'s value also covers the cell to its right.
    pub fn from_nodes(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        let cells = values[..values.len() - 1].to_vec();
        Self::new(grid, cells, values)
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![value; n - 1], vec![value; n])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    fn is_increasing(&self) -> Option<usize> {
        let n = self.grid.len();
        if let Some(j) = self.cells.windows(2).position(|w| w[1] < w[0] - ORDER_TOL) {
            return Some(j + 1);
        }
        (0..n).find(|&k| {
            let lo = if k == 0 { f64::NEG_INFINITY } else { self.cells[k - 1] };
            let hi = if k == n - 1 { f64::INFINITY } else { self.cells[k] };
            self.points[k] < lo - ORDER_TOL || self.points[k] > hi + ORDER_TOL
        })
    }

    /// Replaces `p` below the lowest and above the highest support node by the values at
    /// those nodes, as the three-branch construction prescribes.
    pub fn restricted_to(&self, support: &Support) -> Self {
        let (lo, hi) = (support.min(), support.max());
        let mut out = self.clone();
        let p_lo = self.points[lo];
        let p_hi = self.points[hi];
        for (j, c) in out.cells.iter_mut().enumerate() {
            if j < lo {
                *c = p_lo;
            } else if j >= hi {
                *c = p_hi;
            }
        }
        for (k, v) in out.points.iter_mut().enumerate() {
            if k < lo {
                *v = p_lo;
            } else if k > hi {
                *v = p_hi;
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,p,p_cell\n");
        for k in 0..self.grid.len() {
            let cell = self.cells.get(k).copied().unwrap_or(self.points[k]);
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_num(self.grid.theta(k)),
                fmt_num(self.points[k]),
                fmt_num(cell)
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowDerivativeReport {
    pub increasing: bool,
    pub bounded: bool,
    pub constant_on_slack: bool,
    pub lower_boundary: bool,
    pub upper_boundary: bool,
    /// Node ranges where `p` changes although `I_F` is slack.
    pub slack_violations: Vec<(usize, usize)>,
    pub notes: Vec<String>,
}

impl ShadowDerivativeReport {
    pub fn passed(&self) -> bool {
        self.increasing && self.bounded && self.constant_on_slack && self.lower_boundary && self.upper_boundary
    }
}

#[derive(Clone, Debug)]
pub struct FiccOptions {
    pub tol: f64,
    pub slack_tol: f64,
    pub bound: f64,
}

impl Default for FiccOptions {
    fn default() -> Self {
        Self { tol: 1e-9, slack_tol: crate::buyer::DEFAULT_SLACK_TOL, bound: DEFAULT_LIPSCHITZ_BOUND }
    }
}

/// Checks the defining clauses of an `F`-shadow derivative against signal `dist` of `prior`.
pub fn validate_shadow_derivative(
    p: &ShadowDerivative,
    dist: &PosteriorDist,
    prior: &PosteriorDist,
    cost: &InfoCost,
    q_bar: f64,
    options: &FiccOptions,
) -> Result<ShadowDerivativeReport> {
    if p.grid != *dist.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = dist.grid();
    let support = dist.support(0.0)?;
    let integral = integral_fn(dist, prior)?;
    let eff = p.restricted_to(&support);
    let mut notes = Vec::new();

    let increasing = match eff.is_increasing() {
        None => true,
        Some(k) => {
            notes.push(format!("decreasing at node {k}"));
            false
        }
    };
    let bounded = eff.cells.iter().chain(&eff.points).all(|v| v.abs() <= options.bound);
    if !bounded {
        notes.push(format!("|p| exceeds {}", options.bound));
    }

    let mut slack_violations: Vec<(usize, usize)> = Vec::new();
    for k in 1..grid.len() - 1 {
        if integral.at(k) > options.slack_tol {
            let left = eff.cells[k - 1];
            let right = eff.cells[k];
            let mid = eff.points[k];
            if (right - left).abs() > options.tol || (mid - right).abs() > options.tol {
                match slack_violations.last_mut() {
                    Some(range) if range.1 + 1 == k => range.1 = k,
                    _ => slack_violations.push((k, k)),
                }
            }
        }
    }
    let constant_on_slack = slack_violations.is_empty();

    let (lo, hi) = (support.min(), support.max());
    let low_q = eff.points[lo] + cost.c_prime(grid.theta(lo));
    let high_q = eff.points[hi] + cost.c_prime(grid.theta(hi));
    let lower_boundary = low_q >= -options.tol;
    let upper_boundary = high_q <= q_bar + options.tol;
    if !lower_boundary {
        notes.push(format!("p + c' = {low_q} < 0 at the lowest support node {lo}"));
    }
    if !upper_boundary {
        notes.push(format!("p + c' = {high_q} > q_bar at the highest support node {hi}"));
    }
    Ok(ShadowDerivativeReport {
        increasing,
        bounded,
        constant_on_slack,
        lower_boundary,
        upper_boundary,
        slack_violations,
        notes,
    })
}

/// `Q = min{(p + c′)_+, q̄}` node by node and cell by cell, with `p` taken as given.
pub fn build_allocation_global(p: &ShadowDerivative, cost: &InfoCost, q_bar: f64) -> Result<Allocation> {
    if let Some(k) = p.is_increasing() {
        return Err(Error::InvalidShadowDerivative(format!("decreasing at node {k}")));
    }
    let grid = p.grid.clone();
    let secants = cost.secant_slopes(&grid);
    let cells: Vec<f64> = p.cells.iter().zip(&secants).map(|(v, s)| (v + s).clamp(0.0, q_bar)).collect();
    let points: Vec<f64> = p
        .points
        .iter()
        .zip(grid.nodes())
        .map(|(v, t)| (v + cost.c_prime(*t)).clamp(0.0, q_bar))
        .collect();
    Allocation::new(grid, cells, points, q_bar)
}

/// The cost-canceling allocation induced by a validated `F`-shadow derivative.
pub fn build_ficc_allocation(
    p: &ShadowDerivative,
    dist: &PosteriorDist,
    prior: &PosteriorDist,
    cost: &InfoCost,
    q_bar: f64,
    options: &FiccOptions,
) -> Result<Allocation> {
    let report = validate_shadow_derivative(p, dist, prior, cost, q_bar, options)?;
    if !report.passed() {
        return Err(Error::InvalidShadowDerivative(format!("{:?}", report)));
    }
    build_allocation_global(&p.restricted_to(&dist.support(0.0)?), cost, q_bar)
}

/// `P(θ) = V(θ̲_F) − c(θ̲_F) + ∫_{θ̲_F}^{θ} p` with `p` restricted to the support hull.
pub fn ficc_price(mechanism: &Mechanism, p: &ShadowDerivative, cost: &InfoCost, dist: &PosteriorDist) -> Result<ShadowPrice> {
    let grid = dist.grid();
    if mechanism.grid() != grid || p.grid != *grid {
        return Err(Error::GridMismatch);
    }
    let support = dist.support(0.0)?;
    let eff = p.restricted_to(&support);
    let lo = support.min();
    let v = mechanism.values();
    let mut values = vec![0.0; grid.len()];
    values[lo] = v[lo] - cost.c(grid.theta(lo));
    for k in lo + 1..grid.len() {
        values[k] = values[k - 1] + eff.cells[k - 1] * grid.width(k - 1);
    }
    for k in (0..lo).rev() {
        values[k] = values[k + 1] - eff.cells[k] * grid.width(k);
    }
    Ok(ShadowPrice { grid: grid.clone(), values, slopes: eff.cells })
}

/// The induced price, certified against `φ = V − c`. A failed certificate means the
/// construction itself is wrong.
pub fn price_from_ficc(
    mechanism: &Mechanism,
    p: &ShadowDerivative,
    cost: &InfoCost,
    dist: &PosteriorDist,
    prior: &PosteriorDist,
    options: &BuyerOptions,
) -> Result<ShadowPrice> {
    let price = ficc_price(mechanism, p, cost, dist)?;
    let phi = net_value(mechanism, cost);
    let report = certify_shadow_price(&price, &phi, dist, prior, options)?;
    if !report.passed() {
        return Err(Error::Construction(format!("induced price fails its certificate:\n{}", report.summary())));
    }
    Ok(price)
}

/// `V − c` at every node.
pub fn net_value(mechanism: &Mechanism, cost: &InfoCost) -> Vec<f64> {
    mechanism.values().iter().zip(mechanism.grid().nodes()).map(|(v, t)| v - cost.c(*t)).collect()
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub mechanism: Mechanism,
    pub p: ShadowDerivative,
    /// Lowest-type utility before clamping at zero.
    pub u_floor_raw: f64,
}

/// Rebuilds an F-ICC mechanism from an F-IC one and its certified shadow price.
///
/// On the support hull `p` follows the price's slopes; at support nodes `p = Q̃ − c′`, which
/// must lie between the adjacent slopes, up to the secant-tangent gap of each cell. `ū` is set so that `V − c` meets `P` at the lowest
/// support node.
pub fn ficc_from_ic(
    mechanism: &Mechanism,
    dist: &PosteriorDist,
    price: &ShadowPrice,
    cost: &InfoCost,
    q_bar: f64,
    tol: f64,
) -> Result<Reconstruction> {
    let grid = dist.grid();
    if mechanism.grid() != grid || price.grid != *grid {
        return Err(Error::GridMismatch);
    }
    let n = grid.len();
    let support = dist.support(0.0)?;
    let (lo, hi) = (support.min(), support.max());
    let q = mechanism.allocation.points();
    let secants = cost.secant_slopes(grid);
    let mut cells = price.slopes.clone();
    let mut points = vec![0.0; n];
    for k in lo..=hi {
        let left = if k == 0 { f64::NEG_INFINITY } else { price.slopes[k - 1] };
        let right = if k == n - 1 { f64::INFINITY } else { price.slopes[k] };
        if support.contains(k) {
            let target = q[k] - cost.c_prime(grid.theta(k));
            // A clamped quality pins p only from one side; if even that side is out of reach
            // the node keeps its value function and only its own quality moves.
            let clamped = q[k] <= 0.0 || q[k] >= q_bar;
            // On a grid `V − c` touches `P` through secant slopes, so the tangent-based target
            // may overshoot each side by the secant-tangent gap of that cell.
            let c_prime = cost.c_prime(grid.theta(k));
            let left_gap = if k == 0 { 0.0 } else { (c_prime - secants[k - 1]).max(0.0) };
            let right_gap = if k == n - 1 { 0.0 } else { (secants[k] - c_prime).max(0.0) };
            if !clamped && (target < left - left_gap - tol || target > right + right_gap + tol) {
                return Err(Error::Inconsistent(format!(
                    "Q − c' = {target} at support node {k} lies outside the price's subdifferential [{left}, {right}]"
                )));
            }
            points[k] = target.max(left).min(right);
        } else {
            points[k] = (q[k] - cost.c_prime(grid.theta(k))).max(left).min(right);
        }
    }
    let p_lo = points[lo];
    let p_hi = points[hi];
    for (j, c) in cells.iter_mut().enumerate() {
        if j < lo {
            *c = p_lo;
        } else if j >= hi {
            *c = p_hi;
        }
    }
    for (k, v) in points.iter_mut().enumerate() {
        if k < lo {
            *v = p_lo;
        } else if k > hi {
            *v = p_hi;
        }
    }
    let p = ShadowDerivative::new(grid.clone(), cells, points)?;
    let allocation = build_allocation_global(&p, cost, q_bar)?;
    let below: f64 = (0..lo).map(|j| allocation.cells()[j] * grid.width(j)).sum();
    let u_raw = price.values[lo] + cost.c(grid.theta(lo)) - below;
    if u_raw < -tol.max(1e-9) {
        return Err(Error::Inconsistent(format!("reconstructed lowest-type utility {u_raw} is negative")));
    }
    let mechanism = Mechanism::new(allocation, u_raw.max(0.0))?;
    Ok(Reconstruction { mechanism, p, u_floor_raw: u_raw })
}

/// Removes the increase of `p` between nodes `k1 < k2` where the contraction constraint
/// binds: `p` is unchanged below `k1`, equal to `p(θ_{k1})` on `[θ_{k1}, θ_{k2})` and
/// lowered by `p(θ_{k2}) − p(θ_{k1})` from `θ_{k2}` on.
pub fn flatten_p(
    p: &ShadowDerivative,
    k1: usize,
    k2: usize,
    dist: &PosteriorDist,
    prior: &PosteriorDist,
    tol: f64,
) -> Result<ShadowDerivative> {
    if k1 == k2 {
        return Ok(p.clone());
    }
    let n = p.grid.len();
    if k1 > k2 || k2 >= n {
        return Err(Error::InvalidSurgery(format!("need k1 < k2 < {n}, got ({k1}, {k2})")));
    }
    let support = dist.support(0.0)?;
    if !(support.min() < k1 && k2 <= support.max()) {
        return Err(Error::InvalidSurgery(format!(
            "nodes ({k1}, {k2}) must satisfy lowest support {} < k1 < k2 <= highest support {}",
            support.min(),
            support.max()
        )));
    }
    let integral = integral_fn(dist, prior)?;
    for k in [k1, k2] {
        if integral.at(k).abs() > tol {
            return Err(Error::InvalidSurgery(format!("I_F = {} is not zero at node {k}", integral.at(k))));
        }
    }
    let v1 = p.points[k1];
    let shift = p.points[k2] - v1;
    let mut cells = p.cells.clone();
    let mut points = p.points.clone();
    for j in k1..n - 1 {
        cells[j] = if j < k2 { v1 } else { p.cells[j] - shift };
    }
    for k in k1..n {
        points[k] = if k < k2 { v1 } else { p.points[k] - shift };
    }
    ShadowDerivative::new(p.grid.clone(), cells, points)
}

/// Table `theta,p,c_prime,Q` for the induced allocation.
pub fn figure1_csv(p: &ShadowDerivative, allocation: &Allocation, cost: &InfoCost) -> String {
    let grid = allocation.grid();
    let mut out = String::from("theta,p,c_prime,Q\n");
    for k in 0..grid.len() {
        let t = grid.theta(k);
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_num(t),
            fmt_num(p.points[k]),
            fmt_num(cost.c_prime(t)),
            fmt_num(allocation.at(k))
        ));
    }
    out
}

/// Table `theta,V_minus_c,P`.
pub fn figure2_csv(mechanism: &Mechanism, cost: &InfoCost, price: &ShadowPrice) -> String {
    let phi = net_value(mechanism, cost);
    let mut out = String::from("theta,V_minus_c,P\n");
    for (k, t) in mechanism.grid().nodes().iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", fmt_num(*t), fmt_num(phi[k]), fmt_num(price.values[k])));
    }
    out
}

/// A ready-made instance with a jump in `p` at a binding node: entropy cost with scale 0.5,
/// 201 nodes on `[0, 1]`, uniform prior pooled separately on each half.
pub struct JumpDemo {
    pub prior: PosteriorDist,
    pub dist: PosteriorDist,
    pub cost: InfoCost,
    pub q_bar: f64,
    pub p: ShadowDerivative,
    pub jump_node: usize,
    pub mechanism: Mechanism,
    pub price: ShadowPrice,
}

pub fn jump_demo() -> Result<JumpDemo> {
    let grid = Grid::uniform(0.0, 1.0, 201)?;
    let prior = PosteriorDist::uniform_on(grid.clone(), &(0..201).collect::<Vec<_>>())?;
    let dist = crate::dist::pool_segments(&prior, &[(0, 99), (100, 200)])?;
    let cost = crate::costs::entropy_info_cost(0.5, 0.0)?;
    let q_bar = crate::costs::exp_quality_cost(1.0).q_bar();
    let jump_node = 100;
    let (low, high) = (0.6, 0.8);
    let cells: Vec<f64> = (0..200).map(|j| if j < jump_node { low } else { high }).collect();
    // The binding node itself takes the left value.
    let points: Vec<f64> = (0..201).map(|k| if k <= jump_node { low } else { high }).collect();
    let p = ShadowDerivative::new(grid, cells, points)?;
    let options = FiccOptions::default();
    let allocation = build_ficc_allocation(&p, &dist, &prior, &cost, q_bar, &options)?;
    let mechanism = Mechanism::with_zero_floor(allocation);
    let price = price_from_ficc(&mechanism, &p, &cost, &dist, &prior, &BuyerOptions::default())?;
    Ok(JumpDemo { prior, dist, cost, q_bar, p, jump_node, mechanism, price })
}
