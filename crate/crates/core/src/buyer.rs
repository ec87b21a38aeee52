//! The buyer's learning problem as a linear program in posterior masses, and its dual
//! certificate.
//!
//! With masses `m` on grid nodes the contraction constraints read
//! `Σ_i m_i (θ_k − θ_i)_+ ≤ Σ_i m0_i (θ_k − θ_i)_+` for every node `k`, together with unit
//! mass and the prior mean. Only nodes inside the prior's hull can carry mass. Constraint
//! rows are generated lazily: the master problem starts with mass and mean and repeatedly
//! adds the most violated contraction rows.
//!
//! The shadow price is `P = Λ + max(φ − Λ)` with `Λ(θ) = Σ_k y_k (θ_k − θ)_+ + ν (θ − θ0)`,
//! where `y` are the duals of the contraction rows and `ν` the dual of the mean row.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::costs::InfoCost;
use crate::dist::{integral_fn, Grid, PosteriorDist};
use crate::error::{Error, Result};
use crate::fmt_num;
use crate::lp::{LinearProgram, LpSolution, RowSense};
use crate::mechanism::Mechanism;

pub const DEFAULT_CERT_TOL: f64 = 1e-7;
pub const DEFAULT_LIPSCHITZ_BOUND: f64 = 1e6;
/// Threshold above which `I_F` counts as slack.
pub const DEFAULT_SLACK_TOL: f64 = 1e-9;
/// LP masses below this are treated as zero.
pub const MASS_CLIP: f64 = 1e-13;
const VIOLATION_TOL: f64 = 1e-12;
const ROWS_PER_ROUND: usize = 10;
const MAX_ROUNDS: usize = 500;
const TIGHT_TOL: f64 = 1e-10;

/// Solves a linear program; implementations are untrusted because every answer is certified.
pub trait LpBackend {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution>;
}

/// The built-in dense simplex.
#[derive(Clone, Copy, Debug)]
pub struct DenseSimplex {
    pub max_iterations: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        Self { max_iterations: 200_000 }
    }
}

impl LpBackend for DenseSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution> {
        lp.solve(self.max_iterations)
    }
}

#[derive(Clone, Debug)]
pub struct BuyerProblem {
    pub prior: PosteriorDist,
    /// `φ(θ_k) = V(θ_k) − c(θ_k)`.
    pub objective: Vec<f64>,
    pub info_cost: Option<InfoCost>,
    admissible: Vec<bool>,
}

impl BuyerProblem {
    /// Every node with finite `φ` inside the prior's hull is a candidate. Non-finite values are
    /// accepted only on the two end nodes, and only when `boundary_steep` is set.
    pub fn new(prior: PosteriorDist, objective: Vec<f64>, boundary_steep: bool) -> Result<Self> {
        let grid = prior.grid();
        if objective.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        let last = grid.len() - 1;
        for (k, v) in objective.iter().enumerate() {
            if !v.is_finite() && !(boundary_steep && (k == 0 || k == last)) {
                return Err(Error::Config(format!("objective is not finite at node {k}")));
            }
        }
        let lo = prior.mass().iter().position(|m| *m > 0.0).unwrap_or(0);
        let hi = prior.mass().iter().rposition(|m| *m > 0.0).unwrap_or(last);
        let admissible: Vec<bool> =
            (0..grid.len()).map(|k| k >= lo && k <= hi && objective[k].is_finite()).collect();
        if !admissible.iter().any(|a| *a) {
            return Err(Error::Config("no admissible posterior node".into()));
        }
        Ok(Self { prior, objective, info_cost: None, admissible })
    }

    /// `φ = V − c` for a mechanism and an information cost.
    pub fn from_mechanism(mechanism: &Mechanism, cost: &InfoCost, prior: PosteriorDist) -> Result<Self> {
        if mechanism.grid() != prior.grid() {
            return Err(Error::GridMismatch);
        }
        cost.check_domain(prior.grid())?;
        let phi: Vec<f64> =
            mechanism.values().iter().zip(prior.grid().nodes()).map(|(v, t)| v - cost.c(*t)).collect();
        let mut problem = Self::new(prior, phi, cost.boundary_steep())?;
        problem.info_cost = Some(cost.clone());
        Ok(problem)
    }

    pub fn with_info_cost(mut self, cost: InfoCost) -> Self {
        self.info_cost = Some(cost);
        self
    }

    pub fn grid(&self) -> &Grid {
        self.prior.grid()
    }

    pub fn admissible(&self) -> &[bool] {
        &self.admissible
    }
}

/// Selects among several optimal signals.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum TieBreak {
    /// Return whatever the LP returns.
    None,
    /// Minimize expected information cost among optima (or the variance when no cost is set).
    #[default]
    LeastInformative,
    /// Maximize `Σ w_i m_i` among optima.
    Maximize(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct BuyerOptions {
    pub tol: f64,
    pub lipschitz_bound: f64,
    pub slack_tol: f64,
    pub tie_break: TieBreak,
}

impl Default for BuyerOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_CERT_TOL,
            lipschitz_bound: DEFAULT_LIPSCHITZ_BOUND,
            slack_tol: DEFAULT_SLACK_TOL,
            tie_break: TieBreak::LeastInformative,
        }
    }
}

impl BuyerOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Convex majorant of the objective, given by node values and cell slopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowPrice {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl ShadowPrice {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        let slopes = (0..grid.len() - 1).map(|k| (values[k + 1] - values[k]) / grid.width(k)).collect();
        Ok(Self { grid, values, slopes })
    }

    /// Slope on the cell to the right of node `k` (the last cell for the top node).
    pub fn right_slope(&self, k: usize) -> f64 {
        self.slopes[k.min(self.slopes.len() - 1)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub pass: bool,
    /// Worst violation (positive means violated by that much beyond zero).
    pub worst: f64,
    /// Node or cell where the worst value occurs.
    pub at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub clauses: Vec<Clause>,
    /// `|Σ P dF* − Σ P dF0|`.
    pub duality_residual: f64,
    /// `Σ φ dF* − Σ P dF0`; positive values would contradict weak duality.
    pub weak_duality_gap: f64,
    pub tol: f64,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.pass) && self.duality_residual <= self.tol
    }

    pub fn worst_slack(&self) -> f64 {
        self.clauses.iter().map(|c| c.worst).fold(self.duality_residual, f64::max)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.clauses {
            out.push_str(&format!(
                "{:<24} {} worst={:e}{}\n",
                c.name,
                if c.pass { "PASS" } else { "FAIL" },
                c.worst,
                c.at.map(|k| format!(" at {k}")).unwrap_or_default()
            ));
        }
        out.push_str(&format!(
            "{:<24} {} residual={:e}\n",
            "strong_duality",
            if self.duality_residual <= self.tol { "PASS" } else { "FAIL" },
            self.duality_residual
        ));
        out
    }
}

/// Checks the four shadow-price clauses plus the duality residual.
pub fn certify_shadow_price(
    price: &ShadowPrice,
    objective: &[f64],
    dist: &PosteriorDist,
    prior: &PosteriorDist,
    options: &BuyerOptions,
) -> Result<CertificateReport> {
    let grid = dist.grid();
    if price.grid != *grid || objective.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let tol = options.tol;
    let n = grid.len();
    let integral = integral_fn(dist, prior)?;

    let mut convex = Clause { name: "convexity".into(), pass: true, worst: 0.0, at: None };
    for j in 0..n - 2 {
        let v = price.slopes[j] - price.slopes[j + 1];
        if v > convex.worst {
            convex.worst = v;
            convex.at = Some(j + 1);
        }
    }
    convex.pass = convex.worst <= tol;

    let mut lipschitz = Clause { name: "lipschitz".into(), pass: true, worst: 0.0, at: None };
    for (j, s) in price.slopes.iter().enumerate() {
        let v = s.abs() - options.lipschitz_bound;
        if v > lipschitz.worst || (!s.is_finite()) {
            lipschitz.worst = if s.is_finite() { v } else { f64::INFINITY };
            lipschitz.at = Some(j);
        }
    }
    lipschitz.pass = lipschitz.worst <= 0.0;

    let mut major = Clause { name: "majorization".into(), pass: true, worst: 0.0, at: None };
    for k in 0..n {
        if !objective[k].is_finite() {
            continue;
        }
        let gap = price.values[k] - objective[k];
        let v = if dist.mass()[k] > 0.0 { gap.abs() } else { -gap };
        if v > major.worst {
            major.worst = v;
            major.at = Some(k);
        }
    }
    major.pass = major.worst <= tol;

    let mut affine = Clause { name: "affine_on_slack".into(), pass: true, worst: 0.0, at: None };
    for k in 1..n - 1 {
        if integral.at(k) > options.slack_tol {
            let v = (price.slopes[k] - price.slopes[k - 1]).abs();
            if v > affine.worst {
                affine.worst = v;
                affine.at = Some(k);
            }
        }
    }
    affine.pass = affine.worst <= tol;

    let p_star = dist.expect(&price.values);
    let p_prior = prior.expect(&price.values);
    let phi_star: f64 =
        dist.mass().iter().zip(objective).filter(|(m, _)| **m > 0.0).map(|(m, v)| m * v).sum();
    Ok(CertificateReport {
        clauses: vec![convex, lipschitz, major, affine],
        duality_residual: (p_star - p_prior).abs(),
        weak_duality_gap: phi_star - p_prior,
        tol,
    })
}

#[derive(Clone, Debug)]
pub struct BuyerSolution {
    pub dist: PosteriorDist,
    pub price: ShadowPrice,
    /// `Σ φ dF*`.
    pub value: f64,
    pub certificate: CertificateReport,
    pub lp_iterations: usize,
    pub generated_rows: usize,
}

/// Column and row bookkeeping shared by the primary and tie-break stages.
struct Master<'a> {
    problem: &'a BuyerProblem,
    /// `Σ_i m0_i (θ_k − θ_i)_+` for every node.
    rhs: Vec<f64>,
    row_lo: usize,
    row_hi: usize,
}

struct StageResult {
    mass: Vec<f64>,
    mean_dual: f64,
    row_duals: Vec<(usize, f64)>,
    iterations: usize,
    rows: usize,
}

fn hinge_sums(grid: &Grid, mass: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut m_acc = 0.0;
    let mut s_acc = 0.0;
    for k in 0..grid.len() {
        let t = grid.theta(k);
        out.push(t * m_acc - s_acc);
        m_acc += mass[k];
        s_acc += mass[k] * t;
    }
    out
}

impl<'a> Master<'a> {
    fn new(problem: &'a BuyerProblem) -> Self {
        let grid = problem.grid();
        let rhs = hinge_sums(grid, problem.prior.mass());
        let row_lo = problem.prior.mass().iter().position(|m| *m > 0.0).unwrap_or(0);
        let row_hi = problem.prior.mass().iter().rposition(|m| *m > 0.0).unwrap_or(grid.len() - 1);
        Self { problem, rhs, row_lo, row_hi }
    }

    fn solve(
        &self,
        cols: &[usize],
        weights: &[f64],
        equalities: &BTreeSet<usize>,
        backend: &dyn LpBackend,
    ) -> Result<StageResult> {
        let grid = self.problem.grid();
        let theta0 = self.problem.prior.mean();
        let mut active: BTreeSet<usize> = equalities.clone();
        let mut iterations = 0;
        for _ in 0..MAX_ROUNDS {
            let mut lp = LinearProgram::new(weights.to_vec());
            lp.add_row(vec![1.0; cols.len()], RowSense::Eq, 1.0);
            lp.add_row(cols.iter().map(|&i| grid.theta(i) - theta0).collect(), RowSense::Eq, 0.0);
            let rows: Vec<usize> = active.iter().cloned().collect();
            for &k in &rows {
                let tk = grid.theta(k);
                let coeffs = cols.iter().map(|&i| (tk - grid.theta(i)).max(0.0)).collect();
                let sense = if equalities.contains(&k) { RowSense::Eq } else { RowSense::Le };
                lp.add_row(coeffs, sense, self.rhs[k]);
            }
            let sol = backend.solve(&lp)?;
            iterations += sol.iterations;
            let mut mass = vec![0.0; grid.len()];
            for (c, &i) in cols.iter().enumerate() {
                mass[i] = sol.x[c];
            }
            let used = hinge_sums(grid, &mass);
            let slack: Vec<f64> = (0..grid.len()).map(|k| self.rhs[k] - used[k]).collect();
            let mut violated: Vec<usize> = (self.row_lo + 1..self.row_hi)
                .filter(|&k| !active.contains(&k) && slack[k] < -VIOLATION_TOL)
                .collect();
            if violated.is_empty() {
                let row_duals = rows.iter().zip(&sol.duals[2..]).map(|(k, y)| (*k, *y)).collect();
                return Ok(StageResult {
                    mass,
                    mean_dual: sol.duals[1],
                    row_duals,
                    iterations,
                    rows: rows.len(),
                });
            }
            let local: Vec<usize> = violated
                .iter()
                .cloned()
                .filter(|&k| slack[k] <= slack[k - 1] && slack[k] <= slack[k + 1])
                .collect();
            if !local.is_empty() {
                violated = local;
            }
            violated.sort_by(|a, b| slack[*a].total_cmp(&slack[*b]).then(a.cmp(b)));
            active.extend(violated.into_iter().take(ROWS_PER_ROUND));
        }
        Err(Error::Lp("constraint generation did not converge".into()))
    }

    /// `Λ` at every node, from the stage duals.
    fn lambda(&self, stage: &StageResult) -> Vec<f64> {
        let grid = self.problem.grid();
        let theta0 = self.problem.prior.mean();
        (0..grid.len())
            .map(|i| {
                let t = grid.theta(i);
                let hinge: f64 = stage.row_duals.iter().map(|(k, y)| y * (grid.theta(*k) - t).max(0.0)).sum();
                hinge + stage.mean_dual * (t - theta0)
            })
            .collect()
    }
}

/// Builds the shadow price from `Λ`, extending it outside the prior hull so that it still
/// majorizes `φ` there.
fn assemble_price(problem: &BuyerProblem, lambda: &[f64], lo: usize, hi: usize) -> Result<ShadowPrice> {
    let grid = problem.grid();
    let phi = &problem.objective;
    let admissible = problem.admissible();
    let shift = (0..grid.len())
        .filter(|&i| admissible[i])
        .map(|i| phi[i] - lambda[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut values: Vec<f64> = lambda.iter().map(|l| l + shift).collect();
    let n = grid.len();
    if lo > 0 {
        let mut s = if lo + 1 < n { (values[lo + 1] - values[lo]) / grid.width(lo) } else { 0.0 };
        for i in 0..lo {
            if phi[i].is_finite() {
                s = s.min((values[lo] - phi[i]) / (grid.theta(lo) - grid.theta(i)));
            }
        }
        for i in 0..lo {
            values[i] = values[lo] + s * (grid.theta(i) - grid.theta(lo));
        }
    }
    if hi + 1 < n {
        let mut s = if hi > 0 { (values[hi] - values[hi - 1]) / grid.width(hi - 1) } else { 0.0 };
        for i in hi + 1..n {
            if phi[i].is_finite() {
                s = s.max((phi[i] - values[hi]) / (grid.theta(i) - grid.theta(hi)));
            }
        }
        for i in hi + 1..n {
            values[i] = values[hi] + s * (grid.theta(i) - grid.theta(hi));
        }
    }
    ShadowPrice::from_values(grid.clone(), values)
}

pub fn solve_buyer(problem: &BuyerProblem, options: &BuyerOptions) -> Result<BuyerSolution> {
    solve_buyer_with(problem, options, &DenseSimplex::default())
}

pub fn solve_buyer_with(
    problem: &BuyerProblem,
    options: &BuyerOptions,
    backend: &dyn LpBackend,
) -> Result<BuyerSolution> {
    let grid = problem.grid();
    let master = Master::new(problem);
    let cols: Vec<usize> = (0..grid.len()).filter(|&i| problem.admissible[i]).collect();
    let weights: Vec<f64> = cols.iter().map(|&i| problem.objective[i]).collect();
    let primary = master.solve(&cols, &weights, &BTreeSet::new(), backend).map_err(|e| match e {
        Error::Lp(msg) if msg.starts_with("infeasible") => {
            Error::Construction(format!("buyer LP infeasible although the prior is feasible: {msg}"))
        }
        other => other,
    })?;
    let lambda = master.lambda(&primary);
    let price = assemble_price(problem, &lambda, master.row_lo, master.row_hi)?;
    let mut iterations = primary.iterations;
    let mut rows = primary.rows;

    let secondary_weights: Option<Vec<f64>> = match &options.tie_break {
        TieBreak::None => None,
        TieBreak::LeastInformative => Some(match &problem.info_cost {
            Some(cost) => grid.nodes().iter().map(|t| -cost.c(*t)).collect(),
            None => {
                let t0 = problem.prior.mean();
                grid.nodes().iter().map(|t| -(t - t0).powi(2)).collect()
            }
        }),
        TieBreak::Maximize(w) => {
            if w.len() != grid.len() {
                return Err(Error::GridMismatch);
            }
            Some(w.clone())
        }
    };

    let mass = match secondary_weights {
        None => primary.mass,
        Some(w) => {
            let tight: Vec<usize> = cols
                .iter()
                .cloned()
                .filter(|&i| price.values[i] - problem.objective[i] <= TIGHT_TOL && w[i].is_finite())
                .collect();
            let binding: BTreeSet<usize> =
                primary.row_duals.iter().filter(|(_, y)| *y > VIOLATION_TOL).map(|(k, _)| *k).collect();
            let tw: Vec<f64> = tight.iter().map(|&i| w[i]).collect();
            match master.solve(&tight, &tw, &binding, backend) {
                Ok(stage) => {
                    iterations += stage.iterations;
                    rows = rows.max(stage.rows);
                    stage.mass
                }
                Err(_) => primary.mass,
            }
        }
    };

    let dist = PosteriorDist::from_solver(grid.clone(), mass, MASS_CLIP)?;
    let certificate = certify_shadow_price(&price, &problem.objective, &dist, &problem.prior, options)?;
    if !certificate.passed() {
        return Err(Error::DualityGap(certificate.summary()));
    }
    let value = dist.mass().iter().zip(&problem.objective).filter(|(m, _)| **m > 0.0).map(|(m, v)| m * v).sum();
    Ok(BuyerSolution { dist, price, value, certificate, lp_iterations: iterations, generated_rows: rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorReport {
    pub pass: bool,
    pub boundary_mass: f64,
    /// Smallest `I_F` over the nodes between the prior's and the signal's lower support ends.
    pub min_slack_low: f64,
    pub min_slack_high: f64,
    pub note: String,
}

/// Reports whether the signal's support is strictly inside the prior's with slack
/// contraction constraints near both support ends.
pub fn check_interior_support(dist: &PosteriorDist, prior: &PosteriorDist, tol: f64) -> Result<InteriorReport> {
    let integral = integral_fn(dist, prior)?;
    let n = dist.grid().len();
    let boundary_mass = dist.mass()[0] + dist.mass()[n - 1];
    let s = dist.support(0.0)?;
    let p = prior.support(0.0)?;
    let mut note = String::new();
    let low = if s.min() > p.min() {
        (p.min() + 1..=s.min()).map(|k| integral.at(k)).fold(f64::INFINITY, f64::min)
    } else {
        note.push_str("lower support end touches the prior's; ");
        f64::NEG_INFINITY
    };
    let high = if s.max() < p.max() {
        (s.max()..p.max()).map(|k| integral.at(k)).fold(f64::INFINITY, f64::min)
    } else {
        note.push_str("upper support end touches the prior's; ");
        f64::NEG_INFINITY
    };
    let pass = boundary_mass == 0.0 && low > tol && high > tol;
    if boundary_mass > 0.0 {
        note.push_str("mass on a boundary node; ");
    }
    Ok(InteriorReport { pass, boundary_mass, min_slack_low: low, min_slack_high: high, note: note.trim_end().into() })
}

/// Table `theta,mass,I_F,phi,P,P_slope`; `P_slope` is the slope on the cell right of the node.
pub fn solution_csv(problem: &BuyerProblem, solution: &BuyerSolution) -> Result<String> {
    let integral = integral_fn(&solution.dist, &problem.prior)?;
    let grid = problem.grid();
    let mut out = String::from("theta,mass,I_F,phi,P,P_slope\n");
    for k in 0..grid.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_num(grid.theta(k)),
            fmt_num(solution.dist.mass()[k]),
            fmt_num(integral.at(k)),
            fmt_num(problem.objective[k]),
            fmt_num(solution.price.values[k]),
            fmt_num(solution.price.right_slope(k))
        ));
    }
    Ok(out)
}
