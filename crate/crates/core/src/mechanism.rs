//! Direct mechanisms on a type grid.
//!
//! An allocation is a right-continuous increasing step function. `cells[k]` is the quality
//! on `[θ_k, θ_{k+1})` and drives the envelope integral; `points[k]` is the quality handed to
//! type `θ_k` itself and must lie between the one-sided limits `cells[k-1]` and `cells[k]`.
//! By default the two coincide. Keeping them apart lets jump points take any value inside
//! the jump without changing the buyer's value function, which is what canonicalization and
//! the cost-canceling construction need.

use serde::{Deserialize, Serialize};

use crate::costs::QualityCost;
use crate::dist::Grid;
use crate::error::{Error, Result};
use crate::fmt_num;

const ORDER_TOL: f64 = 1e-12;
/// Threshold used to decide where an allocation changes.
pub const CHANGE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    grid: Grid,
    cells: Vec<f64>,
    points: Vec<f64>,
}

impl Allocation {
    /// One quality per node; node `k`'s value also covers the cell to its right.
    pub fn from_nodes(grid: Grid, q: Vec<f64>, q_bar: f64) -> Result<Self> {
        if q.len() != grid.len() {
            return Err(Error::Config("allocation length does not match grid".into()));
        }
        let cells = q[..q.len() - 1].to_vec();
        Self::new(grid, cells, q, q_bar)
    }

    pub fn new(grid: Grid, cells: Vec<f64>, points: Vec<f64>, q_bar: f64) -> Result<Self> {
        let n = grid.len();
        if cells.len() != n - 1 || points.len() != n {
            return Err(Error::Config("allocation length does not match grid".into()));
        }
        if cells.iter().chain(&points).any(|q| !q.is_finite()) {
            return Err(Error::Config("allocation must be finite".into()));
        }
        if cells.windows(2).any(|w| w[1] < w[0] - ORDER_TOL) {
            return Err(Error::Config("allocation must be increasing".into()));
        }
        for k in 0..n {
            let lo = if k == 0 { 0.0 } else { cells[k - 1] };
            let hi = if k == n - 1 { q_bar } else { cells[k] };
            if points[k] < lo - ORDER_TOL || points[k] > hi + ORDER_TOL {
                return Err(Error::Config(format!(
                    "quality {} at node {k} lies outside its one-sided limits [{lo}, {hi}]",
                    points[k]
                )));
            }
        }
        if cells.iter().chain(&points).any(|q| *q < -ORDER_TOL || *q > q_bar + ORDER_TOL) {
            return Err(Error::Config("allocation must lie in [0, q_bar]".into()));
        }
        Ok(Self { grid, cells, points })
    }

    pub fn zero(grid: Grid) -> Self {
        let n = grid.len();
        Self { grid, cells: vec![0.0; n - 1], points: vec![0.0; n] }
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

    pub fn at(&self, k: usize) -> f64 {
        self.points[k]
    }

    /// Last node at which quality still equals the bottom node's quality.
    pub fn theta_q_low_index(&self) -> usize {
        let base = self.points[0];
        let mut last = 0;
        for (k, q) in self.points.iter().enumerate() {
            if (q - base).abs() <= CHANGE_TOL {
                last = k;
            } else {
                break;
            }
        }
        last
    }

    /// First node from which quality equals the top node's quality.
    pub fn theta_q_high_index(&self) -> usize {
        let top = self.points[self.points.len() - 1];
        let mut first = self.points.len() - 1;
        for k in (0..self.points.len()).rev() {
            if (self.points[k] - top).abs() <= CHANGE_TOL {
                first = k;
            } else {
                break;
            }
        }
        first
    }

    pub fn theta_q_low(&self) -> f64 {
        self.grid.theta(self.theta_q_low_index())
    }

    pub fn theta_q_high(&self) -> f64 {
        self.grid.theta(self.theta_q_high_index())
    }

    /// Replaces node values with new point qualities, keeping the cells.
    pub fn with_points(&self, points: Vec<f64>, q_bar: f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.cells.clone(), points, q_bar)
    }
}

/// An allocation plus the lowest type's utility `ū`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub allocation: Allocation,
    pub u_floor: f64,
}

impl Mechanism {
    pub fn new(allocation: Allocation, u_floor: f64) -> Result<Self> {
        if !(u_floor >= 0.0) || !u_floor.is_finite() {
            return Err(Error::Config("lowest-type utility must be finite and nonnegative".into()));
        }
        Ok(Self { allocation, u_floor })
    }

    pub fn with_zero_floor(allocation: Allocation) -> Self {
        Self { allocation, u_floor: 0.0 }
    }

    pub fn grid(&self) -> &Grid {
        self.allocation.grid()
    }

    /// `V(θ_k) = ū + Σ_{j<k} Q_j (θ_{j+1} − θ_j)` at every node.
    pub fn values(&self) -> Vec<f64> {
        let grid = self.grid();
        let mut out = Vec::with_capacity(grid.len());
        let mut acc = self.u_floor;
        out.push(acc);
        for (k, q) in self.allocation.cells.iter().enumerate() {
            acc += q * grid.width(k);
            out.push(acc);
        }
        out
    }

    pub fn transfers(&self) -> Vec<f64> {
        let grid = self.grid();
        self.values()
            .iter()
            .enumerate()
            .map(|(k, v)| grid.theta(k) * self.allocation.points[k] - v)
            .collect()
    }

    pub fn profits(&self, kappa: &QualityCost) -> Vec<f64> {
        let grid = self.grid();
        self.values()
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let q = self.allocation.points[k];
                grid.theta(k) * q - v - kappa.kappa(q)
            })
            .collect()
    }

    /// Menu table `theta,Q,T,V,pi,Q_cell`; the last column is the quality on the cell to the
    /// right of the node (the top node repeats its own value).
    pub fn to_csv(&self, kappa: &QualityCost) -> String {
        let v = self.values();
        let t = self.transfers();
        let pi = self.profits(kappa);
        let n = self.grid().len();
        let mut out = String::from("theta,Q,T,V,pi,Q_cell\n");
        for k in 0..n {
            let cell = if k + 1 < n { self.allocation.cells[k] } else { self.allocation.points[k] };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_num(self.grid().theta(k)),
                fmt_num(self.allocation.points[k]),
                fmt_num(t[k]),
                fmt_num(v[k]),
                fmt_num(pi[k]),
                fmt_num(cell)
            ));
        }
        out
    }

    /// Reads a menu table. Only `theta` and `Q` are required; `Q_cell` is honoured when
    /// present, and `V` at the first row sets `ū`.
    pub fn from_csv(text: &str, grid: &Grid, q_bar: f64) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> =
            lines.next().ok_or_else(|| Error::Parse("empty menu".into()))?.split(',').map(str::trim).collect();
        let col = |name: &str| header.iter().position(|h| *h == name);
        let theta_col = col("theta").ok_or_else(|| Error::Parse("menu lacks a theta column".into()))?;
        let q_col = col("Q").ok_or_else(|| Error::Parse("menu lacks a Q column".into()))?;
        let cell_col = col("Q_cell");
        let v_col = col("V");
        let mut thetas = Vec::new();
        let mut points = Vec::new();
        let mut cells = Vec::new();
        let mut u_floor = 0.0;
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |c: usize| -> Result<f64> {
                fields
                    .get(c)
                    .ok_or_else(|| Error::Parse(format!("row {row} is short")))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {row}: {e}")))
            };
            thetas.push(get(theta_col)?);
            let q = get(q_col)?;
            points.push(q);
            cells.push(match cell_col {
                Some(c) => get(c)?,
                None => q,
            });
            if row == 0 {
                if let Some(c) = v_col {
                    u_floor = get(c)?;
                }
            }
        }
        if thetas.len() != grid.len()
            || thetas.iter().zip(grid.nodes()).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b.abs()))
        {
            return Err(Error::GridMismatch);
        }
        cells.pop();
        let allocation = Allocation::new(grid.clone(), cells, points, q_bar)?;
        Mechanism::new(allocation, u_floor.max(0.0))
    }
}

pub fn buyer_value(mechanism: &Mechanism, k: usize) -> f64 {
    mechanism.values()[k]
}

pub fn transfer(mechanism: &Mechanism, k: usize) -> f64 {
    mechanism.transfers()[k]
}

pub fn pointwise_profit(mechanism: &Mechanism, kappa: &QualityCost, k: usize) -> f64 {
    mechanism.profits(kappa)[k]
}

/// Envelope transfers for arbitrary (possibly non-monotone) node qualities, using each node's
/// quality on the cell to its right.
pub fn envelope_transfers(grid: &Grid, q: &[f64], u_floor: f64) -> Vec<f64> {
    let mut v = u_floor;
    let mut out = Vec::with_capacity(q.len());
    for k in 0..q.len() {
        out.push(grid.theta(k) * q[k] - v);
        if k + 1 < q.len() {
            v += q[k] * grid.width(k);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcIrReport {
    /// Largest `θ_k Q_j − T_j − (θ_k Q_k − T_k)` over pairs, or 0.
    pub worst_ic: f64,
    pub worst_ic_pair: Option<(usize, usize)>,
    /// Largest `−(θ_k Q_k − T_k)`, or 0.
    pub worst_ir: f64,
    pub worst_ir_node: Option<usize>,
}

impl IcIrReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst_ic <= tol && self.worst_ir <= tol
    }
}

/// Pairwise scan of the incentive and participation constraints.
pub fn validate_ic_ir(grid: &Grid, q: &[f64], t: &[f64]) -> IcIrReport {
    let mut report = IcIrReport { worst_ic: 0.0, worst_ic_pair: None, worst_ir: 0.0, worst_ir_node: None };
    for k in 0..q.len() {
        let theta = grid.theta(k);
        let own = theta * q[k] - t[k];
        if -own > report.worst_ir {
            report.worst_ir = -own;
            report.worst_ir_node = Some(k);
        }
        for j in 0..q.len() {
            let gain = theta * q[j] - t[j] - own;
            if gain > report.worst_ic {
                report.worst_ic = gain;
                report.worst_ic_pair = Some((k, j));
            }
        }
    }
    report
}

/// Moves every node quality to the surplus-maximizing value inside its jump interval
/// `[Q_−(θ_k), Q_+(θ_k)]`. Cells, hence the value function, are untouched.
pub fn canonicalize(allocation: &Allocation, kappa: &QualityCost) -> Result<Allocation> {
    let grid = allocation.grid();
    let n = grid.len();
    let q_bar = kappa.q_bar();
    let points = (0..n)
        .map(|k| {
            let lo = if k == 0 { allocation.points[0].min(allocation.cells[0]) } else { allocation.cells[k - 1] };
            let hi = if k == n - 1 { allocation.points[k].max(lo) } else { allocation.cells[k] };
            kappa.efficient(grid.theta(k)).max(lo).min(hi)
        })
        .collect();
    allocation.with_points(points, q_bar)
}
