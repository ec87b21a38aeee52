//! Outcome bundle: a directory of JSON, CSV and text files describing one seller solution.
//!
//! `outcome.json` holds everything needed to re-run the checks. `menu.csv` and `f_star.csv`
//! are read back on load and take precedence, so edits to them are what gets verified.

use std::path::Path;

use infoscreen_core::costs::QualityCost;
use infoscreen_core::dist::PosteriorDist;
use infoscreen_core::ficc::{figure1_csv, figure2_csv};
use infoscreen_core::mechanism::Mechanism;
use infoscreen_core::seller::Outcome;
use infoscreen_core::verify::VerificationReport;
use infoscreen_core::{fmt_num, Error, Result};

use crate::config::RunConfig;

pub const OUTCOME: &str = "outcome.json";
pub const MENU: &str = "menu.csv";
pub const SIGNAL: &str = "f_star.csv";
pub const SHADOW: &str = "shadow.csv";
pub const CERTIFICATES: &str = "certificates.txt";
pub const VERIFICATION: &str = "verification.csv";
pub const SUMMARY: &str = "summary.txt";
pub const CONFIG: &str = "config.toml";
pub const FIGURE1: &str = "figure1.csv";
pub const FIGURE2: &str = "figure2.csv";

/// Table `theta,p,p_cell,P,P_slope`.
pub fn shadow_csv(outcome: &Outcome) -> String {
    let grid = outcome.mechanism.grid();
    let n = grid.len();
    let mut out = String::from("theta,p,p_cell,P,P_slope\n");
    for k in 0..n {
        let cell = outcome.p.cells().get(k).copied().unwrap_or(outcome.p.points()[k]);
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_num(grid.theta(k)),
            fmt_num(outcome.p.points()[k]),
            fmt_num(cell),
            fmt_num(outcome.price.values[k]),
            fmt_num(outcome.price.right_slope(k))
        ));
    }
    out
}

/// `key = value` lines with the headline scalars and one block per support node.
pub fn summary_text(outcome: &Outcome) -> Result<String> {
    let mech = &outcome.mechanism;
    let grid = mech.grid();
    let kappa: &QualityCost = &outcome.quality_cost;
    let values = mech.values();
    let support = outcome.dist.support(0.0)?;
    let mut out = String::new();
    out.push_str(&format!("expected_profit = {}\n", fmt_num(outcome.expected_profit)));
    out.push_str(&format!("theta_q_low = {}\n", fmt_num(outcome.theta_q_low())));
    out.push_str(&format!("theta_q_high = {}\n", fmt_num(outcome.theta_q_high())));
    out.push_str(&format!("buyer_floor = {}\n", fmt_num(mech.u_floor)));
    out.push_str(&format!("support_size = {}\n", support.nodes.len()));
    out.push_str(&format!("certificate = {}\n", if outcome.certificate.passed() { "pass" } else { "fail" }));
    if let Some(v) = &outcome.verification {
        out.push_str(&format!("verification = {}\n", if v.passed() { "pass" } else { "fail" }));
    }
    out.push_str(&format!("evaluations = {}\n", outcome.search.evaluations));
    for &k in &support.nodes {
        let theta = grid.theta(k);
        let q = mech.allocation.at(k);
        let efficient = kappa.efficient(theta);
        out.push_str(&format!(
            "node {k}: theta = {}, mass = {}, Q = {}, V = {}, efficient_Q = {}, distortion = {}\n",
            fmt_num(theta),
            fmt_num(outcome.dist.mass()[k]),
            fmt_num(q),
            fmt_num(values[k]),
            fmt_num(efficient),
            fmt_num(efficient - q)
        ));
    }
    Ok(out)
}

fn certificates_text(outcome: &Outcome, verification: Option<&VerificationReport>) -> String {
    let mut out = String::from("[shadow price certificate]\n");
    out.push_str(&outcome.certificate.summary());
    if let Some(v) = verification {
        out.push_str("\n[verification]\n");
        out.push_str(&v.to_text());
    }
    out
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

pub fn write_figures(dir: &Path, outcome: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write(dir, FIGURE1, &figure1_csv(&outcome.p, &outcome.mechanism.allocation, &outcome.info_cost))?;
    write(dir, FIGURE2, &figure2_csv(&outcome.mechanism, &outcome.info_cost, &outcome.price))
}

pub fn write_verification(dir: &Path, report: &VerificationReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write(dir, VERIFICATION, &report.to_csv())
}

pub fn write_bundle(dir: &Path, outcome: &Outcome, config: Option<&RunConfig>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(outcome).map_err(|e| Error::Parse(e.to_string()))?;
    write(dir, OUTCOME, &json)?;
    write(dir, MENU, &outcome.mechanism.to_csv(&outcome.quality_cost))?;
    write(dir, SIGNAL, &outcome.dist.to_csv(&outcome.prior)?)?;
    write(dir, SHADOW, &shadow_csv(outcome))?;
    write(dir, CERTIFICATES, &certificates_text(outcome, outcome.verification.as_ref()))?;
    if let Some(v) = &outcome.verification {
        write_verification(dir, v)?;
    }
    write(dir, SUMMARY, &summary_text(outcome)?)?;
    if let Some(c) = config {
        // The copy points at the bundle itself so that the bundle does not depend on where
        // it was written.
        let mut c = c.clone();
        c.output.dir = ".".into();
        write(dir, CONFIG, &c.to_toml()?)?;
    }
    write_figures(dir, outcome)
}

/// Values of one named column of a CSV table.
pub fn csv_column(text: &str, name: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty table".into()))?;
    let col = header
        .split(',')
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Parse(format!("table lacks a {name} column")))?;
    lines
        .enumerate()
        .map(|(row, line)| {
            line.split(',')
                .nth(col)
                .ok_or_else(|| Error::Parse(format!("row {row} is short")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {row}: {e}")))
        })
        .collect()
}

fn read(dir: &Path, name: &str) -> Result<Option<String>> {
    let path = dir.join(name);
    if path.exists() {
        Ok(Some(std::fs::read_to_string(path)?))
    } else {
        Ok(None)
    }
}

/// Loads a bundle. The menu and signal tables, when present, replace the JSON copies.
pub fn read_bundle(dir: &Path) -> Result<Outcome> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("bundle directory {} does not exist", dir.display())));
    }
    let json = read(dir, OUTCOME)?
        .ok_or_else(|| Error::Config(format!("{} has no {OUTCOME}", dir.display())))?;
    let mut outcome: Outcome = serde_json::from_str(&json).map_err(|e| Error::Parse(format!("{OUTCOME}: {e}")))?;
    let grid = outcome.prior.grid().clone();
    if let Some(menu) = read(dir, MENU)? {
        outcome.mechanism = Mechanism::from_csv(&menu, &grid, outcome.quality_cost.q_bar())?;
    }
    if let Some(signal) = read(dir, SIGNAL)? {
        let theta = csv_column(&signal, "theta")?;
        if theta.len() != grid.len() || theta.iter().zip(grid.nodes()).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(Error::GridMismatch);
        }
        outcome.dist = PosteriorDist::new(grid, csv_column(&signal, "mass")?)?;
    }
    outcome.expected_profit = infoscreen_core::seller::expected_profit(&outcome.mechanism, &outcome.dist, &outcome.quality_cost);
    outcome.verification = None;
    Ok(outcome)
}
