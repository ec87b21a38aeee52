//! Type grids, distributions of posterior means, and the mean-preserving-spread order.
//!
//! Every distribution is a set of atoms on grid nodes. Between nodes a CDF is constant,
//! so the integral `I_F(θ) = ∫_{θ_min}^{θ} (F0 − F)` is piecewise linear with kinks on
//! nodes and is evaluated exactly by summing rectangles.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_num;

/// Absolute tolerance used when comparing `I_F` values.
pub const DEFAULT_ORDER_TOL: f64 = 1e-9;
const MASS_SUM_TOL: f64 = 1e-12;

/// Strictly increasing sequence of nonnegative type values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Grid {
    nodes: Arc<[f64]>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.nodes, &other.nodes) || self.nodes[..] == other.nodes[..]
    }
}

impl Grid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::Config(format!("grid needs at least 3 nodes, got {}", nodes.len())));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("grid nodes must be finite".into()));
        }
        if nodes[0] < 0.0 {
            return Err(Error::Config("types must be nonnegative".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes: nodes.into() })
    }

    pub fn uniform(theta_min: f64, theta_max: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Config(format!("grid needs at least 3 nodes, got {n}")));
        }
        if !(theta_max > theta_min) {
            return Err(Error::Config("theta_max must exceed theta_min".into()));
        }
        let h = (theta_max - theta_min) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| theta_min + h * i as f64).collect();
        nodes[n - 1] = theta_max;
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn theta(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    pub fn theta_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn theta_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Width of cell `k`, i.e. `θ_{k+1} − θ_k`.
    pub fn width(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    pub fn max_width(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of the node closest to `theta` (ties go to the lower node).
    pub fn nearest(&self, theta: f64) -> usize {
        let mut best = 0;
        for (k, &x) in self.nodes.iter().enumerate() {
            if (x - theta).abs() < (self.nodes[best] - theta).abs() {
                best = k;
            }
        }
        best
    }

    /// Refines every cell into `factor` equal sub-cells.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        let mut nodes = Vec::with_capacity((self.len() - 1) * factor + 1);
        for w in self.nodes.windows(2) {
            for s in 0..factor {
                nodes.push(w[0] + (w[1] - w[0]) * s as f64 / factor as f64);
            }
        }
        nodes.push(self.theta_max());
        Self::new(nodes)
    }
}

/// Distribution of posterior means: one nonnegative mass per grid node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDist {
    grid: Grid,
    mass: Vec<f64>,
}

impl PosteriorDist {
    pub fn new(grid: Grid, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.len() {
            return Err(Error::Config(format!(
                "mass vector has {} entries for a grid of {} nodes",
                mass.len(),
                grid.len()
            )));
        }
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::Config("masses must be finite and nonnegative".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::Config(format!("masses sum to {total}, expected 1")));
        }
        Ok(Self { grid, mass })
    }

    /// Builds a distribution from solver output: tiny negative values are clipped and the
    /// result is renormalized.
    pub fn from_solver(grid: Grid, mut mass: Vec<f64>, clip: f64) -> Result<Self> {
        for m in mass.iter_mut() {
            if *m < clip {
                *m = 0.0;
            }
        }
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateDistribution { tol: clip });
        }
        for m in mass.iter_mut() {
            *m /= total;
        }
        Self::new(grid, mass)
    }

    pub fn point_mass(grid: Grid, k: usize) -> Self {
        let mut mass = vec![0.0; grid.len()];
        mass[k] = 1.0;
        Self { grid, mass }
    }

    /// Equal mass on every node in `nodes`.
    pub fn uniform_on(grid: Grid, nodes: &[usize]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Config("uniform prior needs at least one node".into()));
        }
        let mut mass = vec![0.0; grid.len()];
        for &k in nodes {
            if k >= grid.len() {
                return Err(Error::Config(format!("node {k} outside grid")));
            }
            mass[k] += 1.0 / nodes.len() as f64;
        }
        Self::normalized(grid, mass)
    }

    /// Scales arbitrary nonnegative weights to unit mass.
    pub fn normalized(grid: Grid, mut mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) || mass.iter().any(|m| *m < 0.0) {
            return Err(Error::Config("weights must be nonnegative with positive total".into()));
        }
        for m in mass.iter_mut() {
            *m /= total;
        }
        Self::new(grid, mass)
    }

    /// Discretized Beta(a, b) law rescaled to the grid range; each cell's probability goes
    /// to the cell's left node.
    pub fn beta(grid: Grid, a: f64, b: f64) -> Result<Self> {
        use statrs::distribution::{Beta, ContinuousCDF};
        let law = Beta::new(a, b).map_err(|e| Error::Config(format!("beta prior: {e}")))?;
        let lo = grid.theta_min();
        let span = grid.theta_max() - lo;
        let mut mass = vec![0.0; grid.len()];
        for k in 0..grid.len() - 1 {
            let x0 = (grid.theta(k) - lo) / span;
            let x1 = (grid.theta(k + 1) - lo) / span;
            mass[k] = law.cdf(x1) - law.cdf(x0);
        }
        Self::normalized(grid, mass)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.grid.nodes().iter().zip(&self.mass).map(|(t, m)| t * m).sum()
    }

    /// `F(θ_k)`, right-continuous.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.mass
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect()
    }

    pub fn expect(&self, values: &[f64]) -> f64 {
        self.mass.iter().zip(values).map(|(m, v)| m * v).sum()
    }

    pub fn support(&self, tol: f64) -> Result<Support> {
        support(self, tol)
    }

    fn check_grid(&self, other: &PosteriorDist) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Writes `theta,mass,cdf,I_F` rows against `prior`.
    pub fn to_csv(&self, prior: &PosteriorDist) -> Result<String> {
        let integral = integral_fn(self, prior)?;
        let mut out = String::from("theta,mass,cdf,I_F\n");
        for (k, cdf) in self.cdf().iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_num(self.grid.theta(k)),
                fmt_num(self.mass[k]),
                fmt_num(*cdf),
                fmt_num(integral.values[k])
            ));
        }
        Ok(out)
    }
}

/// Nodes carrying mass above a tolerance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Support {
    pub nodes: Vec<usize>,
}

impl Support {
    pub fn min(&self) -> usize {
        self.nodes[0]
    }

    pub fn max(&self) -> usize {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn contains(&self, k: usize) -> bool {
        self.nodes.binary_search(&k).is_ok()
    }
}

pub fn support(dist: &PosteriorDist, tol: f64) -> Result<Support> {
    let nodes: Vec<usize> =
        dist.mass.iter().enumerate().filter(|(_, m)| **m > tol).map(|(k, _)| k).collect();
    if nodes.is_empty() {
        return Err(Error::DegenerateDistribution { tol });
    }
    Ok(Support { nodes })
}

/// Node values of `I_F(θ) = ∫_{θ_min}^{θ} (F0 − F)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralFn {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl IntegralFn {
    pub fn at(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Whether the constraint is slack at node `k`.
    pub fn slack(&self, k: usize, tol: f64) -> bool {
        self.values[k] > tol
    }
}

pub fn integral_fn(dist: &PosteriorDist, prior: &PosteriorDist) -> Result<IntegralFn> {
    dist.check_grid(prior)?;
    let grid = dist.grid.clone();
    let f = dist.cdf();
    let f0 = prior.cdf();
    let mut values = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    values.push(0.0);
    for k in 0..grid.len() - 1 {
        acc += (f0[k] - f[k]) * grid.width(k);
        values.push(acc);
    }
    Ok(IntegralFn { grid, values })
}

/// True iff `dist` is a mean-preserving contraction of `prior`, i.e. a feasible signal.
pub fn is_mpc_of_prior(dist: &PosteriorDist, prior: &PosteriorDist, tol: f64) -> Result<bool> {
    let integral = integral_fn(dist, prior)?;
    let min = integral.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let last = integral.values[integral.values.len() - 1];
    Ok(min >= -tol && last.abs() <= tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MpsOrdering {
    /// The first argument is a mean-preserving spread of the second.
    FirstSpreadsSecond,
    SecondSpreadsFirst,
    Equal,
    Incomparable,
}

/// Compares two distributions in the mean-preserving-spread order using the sign pattern of
/// `∫(F − G)`.
pub fn mps_compare(f: &PosteriorDist, g: &PosteriorDist) -> Result<MpsOrdering> {
    mps_compare_tol(f, g, DEFAULT_ORDER_TOL)
}

pub fn mps_compare_tol(f: &PosteriorDist, g: &PosteriorDist, tol: f64) -> Result<MpsOrdering> {
    f.check_grid(g)?;
    if f.mass.iter().zip(&g.mass).all(|(a, b)| (a - b).abs() <= tol) {
        return Ok(MpsOrdering::Equal);
    }
    // I_F with `g` in the role of the prior is ∫(G − F); F ⪰ G iff ∫(F − G) ≥ 0.
    let diff = integral_fn(f, g)?;
    let last = diff.values[diff.values.len() - 1];
    if last.abs() > tol {
        return Ok(MpsOrdering::Incomparable);
    }
    let f_spreads = diff.values.iter().all(|v| -v >= -tol);
    let g_spreads = diff.values.iter().all(|v| *v >= -tol);
    Ok(match (f_spreads, g_spreads) {
        (true, true) => MpsOrdering::Equal,
        (true, false) => MpsOrdering::FirstSpreadsSecond,
        (false, true) => MpsOrdering::SecondSpreadsFirst,
        (false, false) => MpsOrdering::Incomparable,
    })
}

/// Moves the mass of the atoms at `i` and `j` (weights `wi`, `wj`) to the nodes bracketing
/// their joint mean. This is a mean-preserving contraction.
pub fn pool_pair(dist: &PosteriorDist, i: usize, j: usize, fraction: f64) -> Result<PosteriorDist> {
    let grid = dist.grid.clone();
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let mut mass = dist.mass.clone();
    let wi = mass[i] * fraction;
    let wj = mass[j] * fraction;
    let total = wi + wj;
    if i == j || total <= 0.0 {
        return Ok(dist.clone());
    }
    mass[i] -= wi;
    mass[j] -= wj;
    let mean = (wi * grid.theta(i) + wj * grid.theta(j)) / total;
    deposit(&grid, &mut mass, mean, total);
    PosteriorDist::normalized(grid, mass)
}

/// Pools every contiguous node range `[a, b]` of `dist` to its conditional mean, splitting
/// the pooled mass between the two nodes that bracket the mean.
pub fn pool_segments(dist: &PosteriorDist, segments: &[(usize, usize)]) -> Result<PosteriorDist> {
    let grid = dist.grid.clone();
    let mut mass = dist.mass.clone();
    for &(a, b) in segments {
        if a > b || b >= grid.len() {
            return Err(Error::Config(format!("bad pooling segment ({a}, {b})")));
        }
        let total: f64 = mass[a..=b].iter().sum();
        if total <= 0.0 {
            continue;
        }
        let mean = (a..=b).map(|k| mass[k] * grid.theta(k)).sum::<f64>() / total;
        for m in &mut mass[a..=b] {
            *m = 0.0;
        }
        deposit(&grid, &mut mass, mean, total);
    }
    PosteriorDist::normalized(grid, mass)
}

fn deposit(grid: &Grid, mass: &mut [f64], mean: f64, total: f64) {
    let nodes = grid.nodes();
    let hi = nodes.partition_point(|x| *x < mean).min(nodes.len() - 1);
    if (nodes[hi] - mean).abs() <= 1e-15 * (1.0 + mean.abs()) || hi == 0 {
        mass[hi] += total;
        return;
    }
    let lo = hi - 1;
    let w = (nodes[hi] - mean) / (nodes[hi] - nodes[lo]);
    mass[lo] += total * w;
    mass[hi] += total * (1.0 - w);
}
