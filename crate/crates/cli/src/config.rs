//! Run configuration: one TOML document describing the instance, the solver and the output.

use std::path::{Path, PathBuf};

use infoscreen_core::costs::{InfoCost, QualityCost};
use infoscreen_core::dist::{Grid, PosteriorDist};
use infoscreen_core::seller::{SellerConfig, SellerProblem};
use infoscreen_core::verify::DEFAULT_MARGIN_TOL;
use infoscreen_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Runs never draw random numbers; the flag exists so configs state it and must be true.
    #[serde(default = "always")]
    pub deterministic: bool,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn always() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub grid_n: usize,
    #[serde(default)]
    pub theta_min: f64,
    #[serde(default = "unit")]
    pub theta_max: f64,
    pub prior: PriorSpec,
    pub info_cost: InfoCost,
    pub quality_cost: QualityCost,
}

fn unit() -> f64 {
    1.0
}

/// Prior on the uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    /// Equal mass on the two nodes next to the ends.
    InnerPair,
    /// Equal mass on the listed nodes.
    Nodes { nodes: Vec<usize> },
    /// Equal mass on every node.
    Uniform,
    /// Beta density sampled at the nodes.
    Beta { a: f64, b: f64 },
    /// Explicit masses, normalized.
    Masses { mass: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub seller: SellerConfig,
    /// Strict margin required by the underprovision check.
    pub margin_tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { seller: SellerConfig::default(), margin_tol: DEFAULT_MARGIN_TOL }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub grid_n: Option<usize>,
    pub tol: Option<f64>,
    pub knots: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !self.deterministic {
            return Err(Error::Config("runs are always deterministic; `deterministic` must be true".into()));
        }
        if self.instance.grid_n < 3 {
            return Err(Error::Config("grid needs at least 3 nodes".into()));
        }
        if !(self.solver.margin_tol >= 0.0) {
            return Err(Error::Config("margin tolerance must be non-negative".into()));
        }
        self.solver.seller.validate()
    }

    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self> {
        if let Some(n) = o.grid_n {
            self.instance.grid_n = n;
        }
        if let Some(t) = o.tol {
            self.solver.seller.tol = t;
        }
        if let Some(k) = o.knots {
            self.solver.seller.knots = k;
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::uniform(self.instance.theta_min, self.instance.theta_max, self.instance.grid_n)
    }

    pub fn prior(&self) -> Result<PosteriorDist> {
        let grid = self.grid()?;
        let n = grid.len();
        match &self.instance.prior {
            PriorSpec::InnerPair => PosteriorDist::uniform_on(grid, &[1, n - 2]),
            PriorSpec::Nodes { nodes } => {
                if let Some(k) = nodes.iter().find(|&&k| k >= n) {
                    return Err(Error::Config(format!("prior node {k} is outside the {n}-node grid")));
                }
                PosteriorDist::uniform_on(grid, nodes)
            }
            PriorSpec::Uniform => PosteriorDist::uniform_on(grid, &(0..n).collect::<Vec<_>>()),
            PriorSpec::Beta { a, b } => PosteriorDist::beta(grid, *a, *b),
            PriorSpec::Masses { mass } => {
                if mass.len() != n {
                    return Err(Error::Config(format!("{} masses given for a {n}-node grid", mass.len())));
                }
                PosteriorDist::normalized(grid, mass.clone())
            }
        }
    }

    pub fn problem(&self) -> Result<SellerProblem> {
        SellerProblem::new(self.prior()?, self.instance.info_cost.clone(), self.instance.quality_cost.clone())
    }

    /// The worked example: binary prior next to the ends of `[0, 1]`, entropy cost with
    /// offset `ln 2`, exponential production cost.
    pub fn example(grid_n: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            deterministic: true,
            instance: InstanceSpec {
                grid_n,
                theta_min: 0.0,
                theta_max: 1.0,
                prior: PriorSpec::InnerPair,
                info_cost: InfoCost::Entropy { scale: 1.0, offset: std::f64::consts::LN_2 },
                quality_cost: infoscreen_core::costs::exp_quality_cost(1.0),
            },
            solver: SolverSpec::default(),
            output: OutputSpec::default(),
        }
    }
}
