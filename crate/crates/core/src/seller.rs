//! Seller search over cost-canceling mechanisms.
//!
//! Candidates are increasing step functions `p`: a base level `−c′(t)` for a threshold type
//! `t`, plus up to `knots − 1` nonnegative jumps at grid nodes. Each candidate goes through
//! the same pipeline:
//!
//! 1. build `Q = clamp(p + c′)` with zero lowest-type utility;
//! 2. solve the buyer problem, breaking ties in the seller's favour;
//! 3. rebuild the cost-canceling mechanism from the certified shadow price and reset `ū` to 0;
//! 4. certify the rebuilt mechanism's induced price against the buyer's signal and score it.
//!
//! Steps 2-4 may be repeated as a fixed-point iteration; the best certified candidate along
//! the way is kept. The scan order is fixed and improvements must be strict, so the search is
//! deterministic.

use serde::{Deserialize, Serialize};

use crate::buyer::{
    certify_shadow_price, solve_buyer, BuyerOptions, BuyerProblem, CertificateReport, ShadowPrice, TieBreak,
    MASS_CLIP,
};
use crate::costs::{InfoCost, QualityCost};
use crate::dist::{integral_fn, is_mpc_of_prior, Grid, PosteriorDist};
use crate::error::{Error, Result};
use crate::ficc::{build_allocation_global, ficc_from_ic, ficc_price, net_value, ShadowDerivative};
use crate::mechanism::Mechanism;
use crate::verify::{verify_outcome, VerificationReport};

const IMPROVE_TOL: f64 = 1e-12;
/// Top-atom mass below which the edge split is attempted.
const THIN_TOP_MASS: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct SellerProblem {
    pub prior: PosteriorDist,
    pub info_cost: InfoCost,
    pub quality_cost: QualityCost,
}

impl SellerProblem {
    pub fn new(prior: PosteriorDist, info_cost: InfoCost, quality_cost: QualityCost) -> Result<Self> {
        info_cost.check_domain(prior.grid())?;
        quality_cost.validate(prior.grid())?;
        Ok(Self { prior, info_cost, quality_cost })
    }

    pub fn grid(&self) -> &Grid {
        self.prior.grid()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SellerConfig {
    /// Maximum number of constant pieces in `p`.
    pub knots: usize,
    /// Threshold types scanned initially for the base level.
    pub level_mesh: usize,
    /// Range of threshold types; defaults to the grid range (widened below for costs that
    /// are not steep at the boundary).
    pub threshold_range: Option<(f64, f64)>,
    /// Jump sizes tried when adding a knot, as fractions of `q̄`.
    pub jump_fractions: Vec<f64>,
    /// Number of evenly spaced knot positions tried across the prior's range.
    pub knot_mesh: usize,
    /// Step halvings in the pattern search.
    pub refine_rounds: usize,
    /// Buyer re-solves per candidate in the final polish.
    pub fixed_point_iters: usize,
    /// Certificate tolerance.
    pub tol: f64,
    pub verify: bool,
}

impl Default for SellerConfig {
    fn default() -> Self {
        Self {
            knots: 1,
            level_mesh: 32,
            threshold_range: None,
            jump_fractions: vec![0.02, 0.05, 0.1, 0.2, 0.4],
            knot_mesh: 16,
            refine_rounds: 30,
            fixed_point_iters: 4,
            tol: crate::buyer::DEFAULT_CERT_TOL,
            verify: true,
        }
    }
}

impl SellerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knots < 1 {
            return Err(Error::Config("knot budget must be at least 1".into()));
        }
        if self.level_mesh < 2 {
            return Err(Error::Config("level mesh needs at least 2 points".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if let Some((a, b)) = self.threshold_range {
            if !(b > a) {
                return Err(Error::Config("threshold range must be increasing".into()));
            }
        }
        if self.jump_fractions.iter().any(|j| !(*j > 0.0)) {
            return Err(Error::Config("jump fractions must be positive".into()));
        }
        Ok(())
    }
}

/// Step-function parameters: threshold type and `(node, jump)` pairs sorted by node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub threshold: f64,
    pub knots: Vec<(usize, f64)>,
}

impl StepParams {
    fn sorted(mut self) -> Self {
        self.knots.sort_by_key(|k| k.0);
        self
    }

    /// Jumps apply to cells from their node on; the node itself keeps the left value.
    pub fn shadow_derivative(&self, grid: &Grid, cost: &InfoCost) -> Result<ShadowDerivative> {
        let base = -cost.c_prime(self.threshold);
        let n = grid.len();
        let cells = (0..n - 1)
            .map(|j| base + self.knots.iter().filter(|(k, _)| *k <= j).map(|(_, d)| d).sum::<f64>())
            .collect();
        let points = (0..n)
            .map(|i| base + self.knots.iter().filter(|(k, _)| *k < i).map(|(_, d)| d).sum::<f64>())
            .collect();
        ShadowDerivative::new(grid.clone(), cells, points)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchLog {
    pub evaluations: usize,
    pub failures: usize,
    pub fixed_point_steps: usize,
    pub params: Option<StepParams>,
    pub top_split: bool,
    pub last_failure: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Outcome {
    pub mechanism: Mechanism,
    pub dist: PosteriorDist,
    pub prior: PosteriorDist,
    pub info_cost: InfoCost,
    pub quality_cost: QualityCost,
    pub expected_profit: f64,
    pub p: ShadowDerivative,
    pub price: ShadowPrice,
    pub certificate: CertificateReport,
    pub search: SearchLog,
    pub verification: Option<VerificationReport>,
}

impl Outcome {
    pub fn theta_q_low(&self) -> f64 {
        self.mechanism.allocation.theta_q_low()
    }

    pub fn theta_q_high(&self) -> f64 {
        self.mechanism.allocation.theta_q_high()
    }

    pub fn profits(&self) -> Vec<f64> {
        self.mechanism.profits(&self.quality_cost)
    }

    /// Re-certifies the attached price against the attached signal.
    pub fn recertify(&self, tol: f64) -> Result<CertificateReport> {
        let phi = net_value(&self.mechanism, &self.info_cost);
        certify_shadow_price(&self.price, &phi, &self.dist, &self.prior, &BuyerOptions::with_tol(tol))
    }
}

pub fn expected_profit(mechanism: &Mechanism, dist: &PosteriorDist, kappa: &QualityCost) -> f64 {
    dist.expect(&mechanism.profits(kappa))
}

/// A certified candidate.
#[derive(Clone, Debug)]
struct Candidate {
    mechanism: Mechanism,
    dist: PosteriorDist,
    p: ShadowDerivative,
    price: ShadowPrice,
    certificate: CertificateReport,
    profit: f64,
    steps: usize,
}

struct Search<'a> {
    problem: &'a SellerProblem,
    config: &'a SellerConfig,
    log: SearchLog,
}

impl<'a> Search<'a> {
    fn q_bar(&self) -> f64 {
        self.problem.quality_cost.q_bar()
    }

    /// One buyer response plus reprojection, starting from an arbitrary mechanism.
    fn respond(&self, mechanism: &Mechanism) -> Result<Candidate> {
        let problem = self.problem;
        let kappa = &problem.quality_cost;
        let profits = mechanism.profits(kappa);
        let buyer = BuyerProblem::from_mechanism(mechanism, &problem.info_cost, problem.prior.clone())?;
        let options = BuyerOptions { tie_break: TieBreak::Maximize(profits), ..BuyerOptions::with_tol(self.config.tol) };
        let solution = solve_buyer(&buyer, &options)?;
        let rebuilt =
            ficc_from_ic(mechanism, &solution.dist, &solution.price, &problem.info_cost, self.q_bar(), self.config.tol)?;
        let mechanism = Mechanism::with_zero_floor(rebuilt.mechanism.allocation);
        let price = ficc_price(&mechanism, &rebuilt.p, &problem.info_cost, &solution.dist)?;
        let phi = net_value(&mechanism, &problem.info_cost);
        let certificate = certify_shadow_price(&price, &phi, &solution.dist, &problem.prior, &options)?;
        if !certificate.passed() {
            return Err(Error::DualityGap(certificate.summary()));
        }
        let profit = expected_profit(&mechanism, &solution.dist, kappa);
        Ok(Candidate { mechanism, dist: solution.dist, p: rebuilt.p, price, certificate, profit, steps: 1 })
    }

    /// Responds repeatedly, keeping the best candidate along the chain.
    fn chain(&self, start: &Mechanism, iterations: usize) -> Result<Candidate> {
        let mut best = self.respond(start)?;
        let mut current = best.clone();
        for step in 1..iterations.max(1) {
            match self.respond(&current.mechanism) {
                Ok(next) => {
                    let improved = next.profit > best.profit + IMPROVE_TOL;
                    let stalled = (next.profit - current.profit).abs() <= IMPROVE_TOL;
                    current = next;
                    current.steps = step + 1;
                    if improved {
                        best = current.clone();
                    }
                    if stalled {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
        Ok(best)
    }

    fn evaluate(&mut self, params: &StepParams, iterations: usize) -> Option<Candidate> {
        self.log.evaluations += 1;
        let problem = self.problem;
        let attempt = params
            .shadow_derivative(problem.grid(), &problem.info_cost)
            .and_then(|p| build_allocation_global(&p, &problem.info_cost, self.q_bar()))
            .and_then(|a| self.chain(&Mechanism::with_zero_floor(a), iterations));
        match attempt {
            Ok(c) => Some(c),
            Err(e) => {
                self.log.failures += 1;
                self.log.last_failure = Some(e.to_string());
                None
            }
        }
    }

    fn threshold_range(&self) -> (f64, f64) {
        if let Some(r) = self.config.threshold_range {
            return r;
        }
        let grid = self.problem.grid();
        let (lo, hi) = (grid.theta_min(), grid.theta_max());
        if self.problem.info_cost.boundary_steep() {
            let eps = 1e-3 * grid.width(0).min(grid.width(grid.len() - 2));
            (lo + eps, hi - eps)
        } else {
            (lo - 0.5 * (hi - lo), hi)
        }
    }

    fn consider(&self, best: &mut Option<(StepParams, Candidate)>, params: StepParams, cand: Candidate) -> bool {
        let better = match best {
            None => true,
            Some((_, b)) => cand.profit > b.profit + IMPROVE_TOL,
        };
        if better {
            *best = Some((params, cand));
        }
        better
    }

    fn run(&mut self) -> Result<(StepParams, Candidate)> {
        let (a, b) = self.threshold_range();
        let m = self.config.level_mesh;
        let mut best: Option<(StepParams, Candidate)> = None;
        for i in 0..m {
            let t = a + (b - a) * (i as f64 + 0.5) / m as f64;
            let params = StepParams { threshold: t, knots: vec![] };
            if let Some(c) = self.evaluate(&params, 1) {
                self.consider(&mut best, params, c);
            }
        }
        let Some(_) = best else {
            return Err(Error::SearchFailure(format!(
                "no certified candidate among {} evaluations; last failure: {}",
                self.log.evaluations,
                self.log.last_failure.clone().unwrap_or_default()
            )));
        };
        self.refine_threshold(&mut best, (b - a) / m as f64, a, b);

        for _ in 1..self.config.knots {
            if !self.add_knot(&mut best) {
                break;
            }
            self.refine_all(&mut best, (b - a) / m as f64, a, b);
        }

        let (params, cand) = best.expect("checked above");
        let polished = self.chain(&cand.mechanism, self.config.fixed_point_iters);
        let cand = match polished {
            Ok(p) if p.profit > cand.profit + IMPROVE_TOL => {
                let steps = cand.steps + p.steps;
                Candidate { steps, ..p }
            }
            _ => cand,
        };
        Ok((params, cand))
    }

    fn refine_threshold(&mut self, best: &mut Option<(StepParams, Candidate)>, mut h: f64, a: f64, b: f64) {
        for _ in 0..self.config.refine_rounds {
            let center = best.as_ref().map(|(p, _)| p.clone()).expect("non-empty");
            let mut moved = false;
            for dir in [-1.0, 1.0] {
                let t = (center.threshold + dir * h).clamp(a, b);
                if t == center.threshold {
                    continue;
                }
                let params = StepParams { threshold: t, ..center.clone() };
                if let Some(c) = self.evaluate(&params, 1) {
                    if self.consider(best, params, c) {
                        moved = true;
                        break;
                    }
                }
            }
            if !moved {
                h *= 0.5;
            }
        }
    }

    fn knot_candidates(&self, current: &Candidate) -> Vec<usize> {
        let prior = &self.problem.prior;
        let lo = prior.mass().iter().position(|m| *m > 0.0).unwrap_or(0);
        let hi = prior.mass().iter().rposition(|m| *m > 0.0).unwrap_or(0);
        let mut out = Vec::new();
        if hi <= lo + 1 {
            return out;
        }
        let mesh = self.config.knot_mesh.max(1);
        for i in 1..=mesh {
            out.push(lo + ((hi - lo) * i) / (mesh + 1));
        }
        if let Ok(integral) = integral_fn(&current.dist, prior) {
            if let Ok(s) = current.dist.support(0.0) {
                for k in s.min() + 1..=s.max() {
                    if integral.at(k) <= crate::buyer::DEFAULT_SLACK_TOL {
                        out.push(k);
                    }
                }
            }
        }
        out.retain(|&k| k > lo && k < hi);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn add_knot(&mut self, best: &mut Option<(StepParams, Candidate)>) -> bool {
        let (center, current) = best.clone().expect("non-empty");
        let q_bar = self.q_bar();
        let mut improved = false;
        for k in self.knot_candidates(&current) {
            if center.knots.iter().any(|(n, _)| *n == k) {
                continue;
            }
            for &f in &self.config.jump_fractions.clone() {
                let mut params = center.clone();
                params.knots.push((k, f * q_bar));
                let params = params.sorted();
                if let Some(c) = self.evaluate(&params, 1) {
                    improved |= self.consider(best, params, c);
                }
            }
        }
        improved
    }

    fn refine_all(&mut self, best: &mut Option<(StepParams, Candidate)>, h0: f64, a: f64, b: f64) {
        let q_bar = self.q_bar();
        let n = self.problem.grid().len();
        let mut h_t = h0;
        let mut h_j = 0.1 * q_bar;
        let mut h_k = (n / (2 * self.config.knot_mesh.max(1))).max(1);
        for _ in 0..self.config.refine_rounds {
            let center = best.as_ref().map(|(p, _)| p.clone()).expect("non-empty");
            let mut trials: Vec<StepParams> = Vec::new();
            for dir in [-1.0, 1.0] {
                let t = (center.threshold + dir * h_t).clamp(a, b);
                if t != center.threshold {
                    trials.push(StepParams { threshold: t, ..center.clone() });
                }
            }
            for i in 0..center.knots.len() {
                for dir in [-1.0, 1.0] {
                    let mut p = center.clone();
                    p.knots[i].1 = (p.knots[i].1 + dir * h_j).max(0.0);
                    if p.knots[i].1 != center.knots[i].1 {
                        trials.push(p);
                    }
                }
                for dir in [-1i64, 1] {
                    let k = center.knots[i].0 as i64 + dir * h_k as i64;
                    if k > 0 && (k as usize) < n - 1 && !center.knots.iter().any(|(m, _)| *m as i64 == k) {
                        let mut p = center.clone();
                        p.knots[i].0 = k as usize;
                        trials.push(p.sorted());
                    }
                }
            }
            let mut moved = false;
            for params in trials {
                if let Some(c) = self.evaluate(&params, 1) {
                    if self.consider(best, params, c) {
                        moved = true;
                        break;
                    }
                }
            }
            if !moved {
                h_t *= 0.5;
                h_j *= 0.5;
                h_k = (h_k / 2).max(1);
            }
        }
    }
}

/// Moves part of the mass just below a nearly empty top atom out to its neighbours, keeping
/// the result only if it stays feasible, certified and weakly more profitable.
fn split_thin_top(problem: &SellerProblem, cand: &Candidate, tol: f64) -> Option<Candidate> {
    let support = cand.dist.support(0.0).ok()?;
    let nodes = &support.nodes;
    if nodes.len() < 3 {
        return None;
    }
    let top = nodes[nodes.len() - 1];
    if cand.dist.mass()[top] >= THIN_TOP_MASS {
        return None;
    }
    let mid = nodes[nodes.len() - 2];
    let low = nodes[nodes.len() - 3];
    let grid = problem.grid();
    let phi = net_value(&cand.mechanism, &problem.info_cost);
    for fraction in [1.0, 0.5, 0.25, 0.125] {
        let mut mass = cand.dist.mass().to_vec();
        let moved = mass[mid] * fraction;
        let w_top = (grid.theta(mid) - grid.theta(low)) / (grid.theta(top) - grid.theta(low));
        mass[mid] -= moved;
        mass[top] += moved * w_top;
        mass[low] += moved * (1.0 - w_top);
        let Ok(dist) = PosteriorDist::from_solver(grid.clone(), mass, MASS_CLIP) else { continue };
        if !is_mpc_of_prior(&dist, &problem.prior, 1e-12).unwrap_or(false) {
            continue;
        }
        let Ok(certificate) =
            certify_shadow_price(&cand.price, &phi, &dist, &problem.prior, &BuyerOptions::with_tol(tol))
        else {
            continue;
        };
        let profit = expected_profit(&cand.mechanism, &dist, &problem.quality_cost);
        if certificate.passed() && profit >= cand.profit - IMPROVE_TOL {
            return Some(Candidate { dist, certificate, profit, ..cand.clone() });
        }
    }
    None
}

pub fn solve_seller(problem: &SellerProblem, config: &SellerConfig) -> Result<Outcome> {
    config.validate()?;
    let mut search = Search { problem, config, log: SearchLog::default() };
    let (params, mut cand) = search.run()?;
    let mut log = search.log;
    if let Some(split) = split_thin_top(problem, &cand, config.tol) {
        cand = split;
        log.top_split = true;
    }
    log.fixed_point_steps = cand.steps;
    log.params = Some(params);
    let mut outcome = Outcome {
        mechanism: cand.mechanism,
        dist: cand.dist,
        prior: problem.prior.clone(),
        info_cost: problem.info_cost.clone(),
        quality_cost: problem.quality_cost.clone(),
        expected_profit: cand.profit,
        p: cand.p,
        price: cand.price,
        certificate: cand.certificate,
        search: log,
        verification: None,
    };
    if config.verify {
        outcome.verification = Some(verify_outcome(&outcome, crate::verify::DEFAULT_MARGIN_TOL));
    }
    Ok(outcome)
}

/// Certified outcome for a fixed step-function `p`, without search.
pub fn evaluate_params(problem: &SellerProblem, config: &SellerConfig, params: &StepParams) -> Result<Outcome> {
    let mut search = Search { problem, config, log: SearchLog::default() };
    let cand = search
        .evaluate(params, config.fixed_point_iters)
        .ok_or_else(|| Error::SearchFailure(search.log.last_failure.clone().unwrap_or_default()))?;
    let mut log = search.log;
    log.params = Some(params.clone());
    log.fixed_point_steps = cand.steps;
    let mut outcome = Outcome {
        mechanism: cand.mechanism,
        dist: cand.dist,
        prior: problem.prior.clone(),
        info_cost: problem.info_cost.clone(),
        quality_cost: problem.quality_cost.clone(),
        expected_profit: cand.profit,
        p: cand.p,
        price: cand.price,
        certificate: cand.certificate,
        search: log,
        verification: None,
    };
    if config.verify {
        outcome.verification = Some(verify_outcome(&outcome, crate::verify::DEFAULT_MARGIN_TOL));
    }
    Ok(outcome)
}
