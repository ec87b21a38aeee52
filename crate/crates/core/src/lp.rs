//! Dense two-phase revised simplex.
//!
//! Sized for the buyer problem: a few thousand columns and at most a few hundred rows. The
//! basis inverse is kept explicitly, updated by elementary row operations and rebuilt by
//! Gauss-Jordan elimination every `REFACTOR_EVERY` pivots.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_STREAK: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

/// `max cᵀx` subject to row constraints and `x ≥ 0`.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    rows: Vec<Vec<f64>>,
    senses: Vec<RowSense>,
    rhs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// One dual per row; nonnegative on `≤` rows and nonpositive on `≥` rows.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self { objective, rows: Vec::new(), senses: Vec::new(), rhs: Vec::new() }
    }

    pub fn add_row(&mut self, coefficients: Vec<f64>, sense: RowSense, rhs: f64) {
        assert_eq!(coefficients.len(), self.objective.len(), "row width must match column count");
        self.rows.push(coefficients);
        self.senses.push(sense);
        self.rhs.push(rhs);
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn solve(&self, max_iterations: usize) -> Result<LpSolution> {
        Simplex::build(self).run(max_iterations)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural,
    Slack,
    Artificial,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    m: usize,
    /// Row multipliers that make every right-hand side nonnegative.
    flip: Vec<f64>,
    b: Vec<f64>,
    cols: Vec<Vec<f64>>,
    kinds: Vec<Kind>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
}

impl<'a> Simplex<'a> {
    fn build(lp: &'a LinearProgram) -> Self {
        let m = lp.rows.len();
        let n = lp.objective.len();
        let mut flip = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut senses = Vec::with_capacity(m);
        for i in 0..m {
            let s = if lp.rhs[i] < 0.0 { -1.0 } else { 1.0 };
            flip.push(s);
            b.push(lp.rhs[i] * s);
            senses.push(match (lp.senses[i], s < 0.0) {
                (RowSense::Le, true) => RowSense::Ge,
                (RowSense::Ge, true) => RowSense::Le,
                (sense, _) => sense,
            });
        }
        let mut cols = Vec::with_capacity(n + 2 * m);
        let mut kinds = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            cols.push((0..m).map(|i| lp.rows[i][j] * flip[i]).collect());
            kinds.push(Kind::Structural);
        }
        let mut basis = vec![usize::MAX; m];
        for i in 0..m {
            match senses[i] {
                RowSense::Le => {
                    let mut col = vec![0.0; m];
                    col[i] = 1.0;
                    basis[i] = cols.len();
                    cols.push(col);
                    kinds.push(Kind::Slack);
                }
                RowSense::Ge => {
                    let mut col = vec![0.0; m];
                    col[i] = -1.0;
                    cols.push(col);
                    kinds.push(Kind::Slack);
                }
                RowSense::Eq => {}
            }
        }
        for i in 0..m {
            if basis[i] == usize::MAX {
                let mut col = vec![0.0; m];
                col[i] = 1.0;
                basis[i] = cols.len();
                cols.push(col);
                kinds.push(Kind::Artificial);
            }
        }
        let mut is_basic = vec![false; cols.len()];
        for &j in &basis {
            is_basic[j] = true;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let xb = b.clone();
        Self { lp, m, flip, b, cols, kinds, basis, is_basic, binv, xb, iterations: 0 }
    }

    fn run(mut self, max_iterations: usize) -> Result<LpSolution> {
        let has_artificial = self.kinds.contains(&Kind::Artificial);
        if has_artificial {
            let cost: Vec<f64> =
                self.kinds.iter().map(|k| if *k == Kind::Artificial { -1.0 } else { 0.0 }).collect();
            self.optimize(&cost, true, max_iterations)?;
            let infeasibility: f64 = self
                .basis
                .iter()
                .zip(&self.xb)
                .filter(|(j, _)| self.kinds[**j] == Kind::Artificial)
                .map(|(_, x)| x.max(0.0))
                .sum();
            let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if infeasibility > FEAS_TOL * scale {
                return Err(Error::Lp(format!("infeasible (phase-one residual {infeasibility:e})")));
            }
            self.drive_out_artificials();
        }
        let mut cost = vec![0.0; self.cols.len()];
        cost[..self.lp.objective.len()].copy_from_slice(&self.lp.objective);
        self.optimize(&cost, false, max_iterations)?;
        self.refactor()?;
        Ok(self.extract(&cost))
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let cb = cost[j];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, r) in y.iter_mut().zip(row) {
                    *yk += cb * r;
                }
            }
        }
        y
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m).map(|i| self.binv[i * m..(i + 1) * m].iter().zip(col).map(|(a, b)| a * b).sum()).collect()
    }

    fn optimize(&mut self, cost: &[f64], phase_one: bool, max_iterations: usize) -> Result<()> {
        let mut degenerate = 0usize;
        let mut since_refactor = 0usize;
        loop {
            if self.iterations >= max_iterations {
                return Err(Error::Lp(format!("iteration limit {max_iterations} reached")));
            }
            let y = self.duals(cost);
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut entering = None;
            let mut best = COST_TOL;
            for j in 0..self.cols.len() {
                if self.is_basic[j] || (!phase_one && self.kinds[j] == Kind::Artificial) {
                    continue;
                }
                let reduced = cost[j] - y.iter().zip(&self.cols[j]).map(|(a, b)| a * b).sum::<f64>();
                if reduced > best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = reduced;
                }
            }
            let Some(q) = entering else {
                return Ok(());
            };
            let d = self.ftran(&self.cols[q]);
            let mut leave = None;
            let mut step = f64::INFINITY;
            for i in 0..self.m {
                if d[i] > PIVOT_TOL {
                    let ratio = self.xb[i].max(0.0) / d[i];
                    let better = match leave {
                        None => true,
                        Some(r) => {
                            if ratio < step - 1e-14 {
                                true
                            } else if ratio <= step + 1e-14 {
                                if bland {
                                    self.basis[i] < self.basis[r]
                                } else {
                                    d[i] > d[r]
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some(i);
                        step = step.min(ratio);
                    }
                }
            }
            let Some(r) = leave else {
                return Err(Error::Lp("unbounded".into()));
            };
            let step = self.xb[r].max(0.0) / d[r];
            degenerate = if step <= 1e-13 { degenerate + 1 } else { 0 };
            self.pivot(r, q, &d, step);
            self.iterations += 1;
            since_refactor += 1;
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize, d: &[f64], step: f64) {
        let m = self.m;
        for i in 0..m {
            self.xb[i] -= step * d[i];
        }
        self.xb[r] = step;
        let piv = d[r];
        for k in 0..m {
            self.binv[r * m + k] /= piv;
        }
        for i in 0..m {
            if i != r && d[i] != 0.0 {
                let f = d[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                }
            }
        }
        self.is_basic[self.basis[r]] = false;
        self.basis[r] = q;
        self.is_basic[q] = true;
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        for (c, &j) in self.basis.iter().enumerate() {
            for i in 0..m {
                aug[i * w + c] = self.cols[j][i];
            }
        }
        for i in 0..m {
            aug[i * w + m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&a, &b| aug[a * w + c].abs().total_cmp(&aug[b * w + c].abs()))
                .unwrap_or(c);
            if aug[p * w + c].abs() < 1e-14 {
                return Err(Error::Lp("singular basis".into()));
            }
            if p != c {
                for k in 0..w {
                    aug.swap(p * w + k, c * w + k);
                }
            }
            let piv = aug[c * w + c];
            for k in 0..w {
                aug[c * w + k] /= piv;
            }
            for i in 0..m {
                if i != c {
                    let f = aug[i * w + c];
                    if f != 0.0 {
                        for k in 0..w {
                            aug[i * w + k] -= f * aug[c * w + k];
                        }
                    }
                }
            }
        }
        for i in 0..m {
            self.binv[i * m..(i + 1) * m].copy_from_slice(&aug[i * w + m..(i + 1) * w]);
        }
        self.xb = self.ftran(&self.b);
        Ok(())
    }

    /// Pivots zero-level artificials out of the basis wherever a real column can replace
    /// them. Those that remain sit on redundant rows and stay at zero.
    fn drive_out_artificials(&mut self) {
        let m = self.m;
        for r in 0..m {
            if self.kinds[self.basis[r]] != Kind::Artificial {
                continue;
            }
            let row = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.cols.len() {
                if self.is_basic[j] || self.kinds[j] == Kind::Artificial {
                    continue;
                }
                let v: f64 = row.iter().zip(&self.cols[j]).map(|(a, b)| a * b).sum();
                if v.abs() > 1e-9 && best.is_none_or(|(_, b)| v.abs() > b.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                let d = self.ftran(&self.cols[j]);
                let step = self.xb[r] / d[r];
                self.pivot(r, j, &d, step);
            }
        }
    }

    fn extract(&self, cost: &[f64]) -> LpSolution {
        let n = self.lp.objective.len();
        let mut x = vec![0.0; n];
        for (i, &j) in self.basis.iter().enumerate() {
            if j < n {
                x[j] = self.xb[i].max(0.0);
            }
        }
        let y = self.duals(cost);
        let duals = y.iter().zip(&self.flip).map(|(v, s)| v * s).collect();
        let objective = x.iter().zip(&self.lp.objective).map(|(a, b)| a * b).sum();
        LpSolution { x, duals, objective, iterations: self.iterations }
    }
}
