//! Acceptance run: one PASS/FAIL line per criterion, then a non-zero exit if any failed.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use infoscreen::{run, Cli, ExitStatus, RunConfig};
use infoscreen_core::buyer::{solve_buyer, BuyerOptions, BuyerProblem, TieBreak};
use infoscreen_core::dist::{integral_fn, is_mpc_of_prior, mps_compare, pool_pair, pool_segments, Grid, MpsOrdering, PosteriorDist};
use infoscreen_core::example::{example_instance, solve_example_closed_form};
use infoscreen_core::ficc::{build_ficc_allocation, net_value, price_from_ficc, validate_shadow_derivative, FiccOptions};
use infoscreen_core::mechanism::Mechanism;
use infoscreen_core::seller::{solve_seller, Outcome, SellerConfig, SellerProblem};
use infoscreen_core::suite::{regression_instances, regression_priors, regression_quality_costs, REGRESSION_GRID};
use infoscreen_core::verify::{check_underprovision, exogenous_information_control, DEFAULT_MARGIN_TOL};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[path = "../../core/tests/common/mod.rs"]
mod common;

const SQRT2: f64 = std::f64::consts::SQRT_2;
const LN2: f64 = std::f64::consts::LN_2;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn entropy(t: f64) -> f64 {
    t * t.ln() + (1.0 - t) * (1.0 - t).ln()
}

fn closed_form() -> Verdict {
    let e = solve_example_closed_form();
    let t = SQRT2 - 1.0;
    let profit = LN2 + 2.0 * (2.0 - SQRT2).ln() - (SQRT2 - 1.0).ln() - SQRT2 + 1.0;
    let value = -LN2 - entropy(t) + 0.5 * LN2 * (0.5 - t);
    let checks = [
        ("threshold", e.theta_q_low, t, 1e-10),
        ("profit", e.profit, profit, 1e-6),
        ("V(0.5)", e.value_at_half, value, 1e-6),
        ("Q(0.5)", e.quality_at_half, 0.5 * LN2, 1e-10),
        ("q*(0.5)", e.efficient_quality, 1.5f64.ln(), 1e-12),
        ("distortion", e.distortion, 0.0589, 5e-5),
    ];
    let worst = checks.iter().map(|(_, got, want, tol)| (got - want).abs() / tol).fold(0.0, f64::max);
    let detail = checks.iter().map(|(n, got, want, _)| format!("{n} Δ={:.1e}", (got - want).abs())).collect::<Vec<_>>();
    verdict(worst <= 1.0, detail.join(", "))
}

fn example_problem(n: usize) -> SellerProblem {
    let e = example_instance(n).unwrap();
    SellerProblem::new(e.prior, e.info_cost, e.quality_cost).unwrap()
}

fn numeric_pipeline(outcome: &Outcome) -> Verdict {
    let profit = LN2 + 2.0 * (2.0 - SQRT2).ln() - (SQRT2 - 1.0).ln() - SQRT2 + 1.0;
    let dt = (outcome.theta_q_low() - (SQRT2 - 1.0)).abs();
    let dp = (outcome.expected_profit - profit).abs();
    let support = outcome.dist.support(1e-12).unwrap().nodes;
    let half = outcome.dist.grid().nearest(0.5);
    let single = support == vec![half];
    verdict(
        dt <= 2e-3 && dp <= 1e-4 && single,
        format!("threshold Δ={dt:.1e}, profit Δ={dp:.1e}, support {support:?} (node nearest 0.5 is {half})"),
    )
}

fn forward_check() -> Verdict {
    use common::{priors, random_cost, random_shadow_derivative, random_signal, N, Q_BAR};
    let grid = Grid::uniform(0.0, 1.0, N).unwrap();
    let mut rng = StdRng::seed_from_u64(3);
    let options = FiccOptions::default();
    let buyer = BuyerOptions { tie_break: TieBreak::None, ..BuyerOptions::default() };
    let (mut worst, mut cases, mut bad) = (0.0f64, 0, 0);
    for (family, entropy) in [true, false].into_iter().enumerate() {
        for (index, (_, prior)) in priors(&grid).into_iter().enumerate() {
            let count = if family * 3 + index < 2 { 34 } else { 33 };
            for _ in 0..count {
                cases += 1;
                let cost = random_cost(&mut rng, entropy);
                let dist = random_signal(&mut rng, &prior);
                let p = random_shadow_derivative(&mut rng, &grid, &dist, &prior, &cost);
                let ok = (|| {
                    let report = validate_shadow_derivative(&p, &dist, &prior, &cost, Q_BAR, &options).ok()?;
                    let allocation = build_ficc_allocation(&p, &dist, &prior, &cost, Q_BAR, &options).ok()?;
                    let mechanism = Mechanism::with_zero_floor(allocation);
                    price_from_ficc(&mechanism, &p, &cost, &dist, &prior, &BuyerOptions::default()).ok()?;
                    let problem = BuyerProblem::from_mechanism(&mechanism, &cost, prior.clone()).ok()?;
                    let best = solve_buyer(&problem, &buyer).ok()?;
                    let gap = best.value - dist.expect(&net_value(&mechanism, &cost));
                    Some((report.passed(), gap))
                })();
                match ok {
                    Some((true, gap)) if (-1e-9..=1e-6).contains(&gap) => worst = worst.max(gap),
                    _ => bad += 1,
                }
            }
        }
    }
    verdict(cases == 200 && bad == 0, format!("{cases} pairs, {bad} failures, worst gap {worst:.1e}"))
}

fn certificates(outcomes: &[(String, Outcome)]) -> Verdict {
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut residual: f64 = 0.0;
    let mut failures = Vec::new();
    for (name, o) in outcomes {
        let c = &o.certificate;
        worst = worst.max(c.clauses.iter().map(|c| c.worst).fold(f64::NEG_INFINITY, f64::max));
        residual = residual.max(c.duality_residual);
        if c.clauses.len() != 4 || !c.passed() || c.worst_slack() > 1e-7 || c.duality_residual > 1e-7 {
            failures.push(name.clone());
        }
    }
    verdict(
        failures.is_empty(),
        format!("{} outcomes, worst clause {worst:.1e}, worst residual {residual:.1e}, failing {failures:?}", outcomes.len()),
    )
}

fn underprovision(outcomes: &[(String, Outcome)]) -> Verdict {
    let mut worst = f64::INFINITY;
    let mut worst_top = f64::INFINITY;
    let mut failures = Vec::new();
    for (name, o) in outcomes {
        let report = check_underprovision(&o.mechanism, &o.dist, &o.quality_cost, DEFAULT_MARGIN_TOL).unwrap();
        let top = report.records.iter().find(|r| r.name == "margin_top").map(|r| r.slack);
        worst = worst.min(report.records.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min));
        worst_top = worst_top.min(top.unwrap_or(f64::NEG_INFINITY));
        if !report.passed() || top.is_none() {
            failures.push(name.clone());
        }
    }
    let grid = Grid::uniform(0.0, 1.0, REGRESSION_GRID).unwrap();
    let mut control_top = f64::NEG_INFINITY;
    for (_, prior) in regression_priors(&grid).unwrap() {
        for (_, kappa) in regression_quality_costs() {
            let mech = exogenous_information_control(&prior, &kappa).unwrap();
            let report = check_underprovision(&mech, &prior, &kappa, DEFAULT_MARGIN_TOL).unwrap();
            let top = report.records.iter().find(|r| r.name == "margin_top").map_or(f64::INFINITY, |r| r.slack);
            control_top = control_top.max(top);
        }
    }
    verdict(
        outcomes.len() >= 20 && failures.is_empty() && control_top <= 1e-3,
        format!(
            "{} instances, min margin {worst:.2e}, min top margin {worst_top:.2e}, control top margin ≤ {control_top:.1e}, failing {failures:?}",
            outcomes.len()
        ),
    )
}

fn lp_versus_enumeration() -> Verdict {
    let mut rng = StdRng::seed_from_u64(21);
    let options = BuyerOptions { tie_break: TieBreak::None, ..BuyerOptions::default() };
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(3..=9);
        let grid = Grid::uniform(0.0, 1.0, n).unwrap();
        let weights: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.7) { rng.gen_range(0.05..1.0) } else { 0.0 }).collect();
        let weights = if weights.iter().all(|w| *w == 0.0) { vec![1.0; n] } else { weights };
        let prior = PosteriorDist::normalized(grid.clone(), weights).unwrap();
        // A concave part plus convex kinks.
        let (curv, centre) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..1.0));
        let kinks: Vec<(f64, f64)> = (0..rng.gen_range(0..=2)).map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))).collect();
        let phi: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&t| -curv * (t - centre).powi(2) + kinks.iter().map(|(a, w)| w * (t - a).abs()).sum::<f64>())
            .collect();
        let oracle = common::oracle::enumerate(&grid, prior.mass(), &phi, usize::MAX);
        let lp = solve_buyer(&BuyerProblem::new(prior, phi, false).unwrap(), &options).unwrap().value;
        worst = worst.max((lp - oracle).abs());
    }
    verdict(worst <= 1e-6, format!("100 objectives, worst |LP − enumeration| {worst:.1e}"))
}

fn spreads(f: &PosteriorDist, g: &PosteriorDist) -> bool {
    matches!(mps_compare(f, g).unwrap(), MpsOrdering::FirstSpreadsSecond | MpsOrdering::Equal)
}

fn mps_laws() -> Verdict {
    let mut rng = StdRng::seed_from_u64(31);
    let mut failures = 0;
    let mut worst_integral = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(3..=25);
        let mut nodes = vec![rng.gen_range(0.0..1.0)];
        for _ in 1..n {
            let last = *nodes.last().unwrap();
            nodes.push(last + rng.gen_range(0.05..1.0));
        }
        let grid = Grid::new(nodes).unwrap();
        let draw = |rng: &mut StdRng| {
            let mut w: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0u32..100))).collect();
            w[rng.gen_range(0..n)] += 1.0;
            PosteriorDist::normalized(grid.clone(), w).unwrap()
        };
        let (f, g) = (draw(&mut rng), draw(&mut rng));
        // Closed form: the integral of F0 − F up to θ_k is Σ (m0_i − m_i)(θ_k − θ_i)⁺.
        let exact = integral_fn(&f, &g).unwrap();
        for k in 0..n {
            let t = grid.theta(k);
            let hinge: f64 = (0..n).map(|i| (g.mass()[i] - f.mass()[i]) * (t - grid.theta(i)).max(0.0)).sum();
            worst_integral = worst_integral.max((exact.at(k) - hinge).abs());
        }
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let pooled = pool_pair(&g, i, j, rng.gen_range(0.0..=1.0)).unwrap();
        let (a, b) = { let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n)); (a.min(b), a.max(b)) };
        let twice = pool_segments(&pooled, &[(a, b)]).unwrap();
        let swapped = match mps_compare(&f, &g).unwrap() {
            MpsOrdering::FirstSpreadsSecond => MpsOrdering::SecondSpreadsFirst,
            MpsOrdering::SecondSpreadsFirst => MpsOrdering::FirstSpreadsSecond,
            other => other,
        };
        let ok = is_mpc_of_prior(&pooled, &g, 1e-9).unwrap()
            && is_mpc_of_prior(&f, &g, 1e-9).unwrap() == spreads(&g, &f)
            && mps_compare(&f, &f).unwrap() == MpsOrdering::Equal
            && mps_compare(&g, &f).unwrap() == swapped
            && spreads(&g, &pooled)
            && spreads(&pooled, &twice)
            && spreads(&g, &twice)
            && (twice.mean() - g.mean()).abs() <= 1e-12;
        if !ok {
            failures += 1;
        }
    }
    verdict(
        failures == 0 && worst_integral <= 1e-12,
        format!("1000 instances, {failures} law failures, worst integral error {worst_integral:.1e}"),
    )
}

fn solve_seller_bundle(config: &Path, out: &Path) -> ExitStatus {
    let args = ["infoscreen", "--quiet", "solve-seller", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    run(Cli::try_parse_from(args).unwrap(), &mut std::io::sink())
}

fn determinism() -> Verdict {
    let tmp = tempfile::TempDir::new().unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(&config, RunConfig::example(2001).to_toml().unwrap()).unwrap();
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    let statuses: Vec<ExitStatus> = dirs.iter().map(|d| solve_seller_bundle(&config, d)).collect();
    let mut names: Vec<_> = fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let differing: Vec<_> = names
        .iter()
        .filter(|n| fs::read(dirs[0].join(n)).ok() != fs::read(dirs[1].join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    verdict(
        statuses.iter().all(|s| *s == ExitStatus::Ok) && differing.is_empty() && !names.is_empty(),
        format!("{} files compared, differing {differing:?}", names.len()),
    )
}

fn main() {
    let mut results: Vec<(String, Verdict, Duration, Option<Duration>)> = Vec::new();
    let mut record = |name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        results.push((name.to_string(), v, start.elapsed(), limit));
    };

    record("1 closed-form example", Some(Duration::from_secs(1)), &mut closed_form);
    let mut example = None;
    record("2 numeric example on 2001 nodes", Some(Duration::from_secs(60)), &mut || {
        let outcome = solve_seller(&example_problem(2001), &SellerConfig::default()).unwrap();
        let v = numeric_pipeline(&outcome);
        example = Some(outcome);
        v
    });
    record("3 cost-canceling menus are buyer optimal", Some(Duration::from_secs(300)), &mut forward_check);

    let mut outcomes: Vec<(String, Outcome)> = regression_instances(REGRESSION_GRID)
        .unwrap()
        .into_iter()
        .map(|inst| {
            let o = solve_seller(&inst.problem, &SellerConfig::default()).unwrap();
            (inst.name, o)
        })
        .collect();
    let suite_len = outcomes.len();
    outcomes.push(("example_2001".into(), example.expect("example outcome")));
    record("4 shadow-price certificates", None, &mut || certificates(&outcomes));
    record("5 downward distortion at every support node", None, &mut || underprovision(&outcomes[..suite_len]));
    record("6 buyer LP matches vertex enumeration", None, &mut lp_versus_enumeration);
    record("7 spread order and integral laws", None, &mut mps_laws);
    record("8 solve-seller is byte-for-byte repeatable", None, &mut determinism);

    let mut all = true;
    for (name, v, took, limit) in &results {
        let in_time = limit.is_none_or(|l| *took < l);
        let pass = v.pass && in_time;
        all &= pass;
        let budget = limit.map(|l| format!(" / limit {} s", l.as_secs())).unwrap_or_default();
        println!("{} {name}: {} [{:.2} s{budget}]", if pass { "PASS" } else { "FAIL" }, v.detail, took.as_secs_f64());
    }
    if !all {
        std::process::exit(1);
    }
}
