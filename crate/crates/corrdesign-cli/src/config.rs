//! JSON run configuration: versioned schema shared by every subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use corrdesign::basis::RegressionBasis;
use corrdesign::designs::{
    equispaced_grid, triangular_lattice_design, two_point_design, DensityDesign, Design,
};
use corrdesign::kernels::{CovarianceKernel, KernelConfig, SingularPolicy};
use corrdesign::optimality::Criterion;
use corrdesign::solver::{BetaRule, SolverConfig};

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct RunConfig {
    pub version: u32,
    pub basis: BasisConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub criterion: CriterionConfig,
    #[serde(default)]
    pub design: Option<DesignConfig>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| format!("config parse error: {e}"))?;
        if cfg.version != 1 {
            return Err(format!("unsupported config version {}", cfg.version));
        }
        Ok(cfg)
    }

    pub fn build_basis(&self) -> Result<RegressionBasis, String> {
        self.basis.build().map_err(|e| e.to_string())
    }

    pub fn build_kernel(&self) -> Result<CovarianceKernel, String> {
        CovarianceKernel::from_config(&self.kernel).map_err(|e| e.to_string())
    }

    pub fn build_criterion(&self) -> Result<Criterion, String> {
        self.criterion.build().map_err(|e| e.to_string())
    }

    pub fn build_solver(&self) -> Result<SolverConfig, String> {
        self.solver.build()
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BasisConfig {
    Monomial {
        m: usize,
        #[serde(default = "default_sym_domain")]
        domain: [f64; 2],
    },
    Chebyshev {
        m: usize,
    },
    Gegenbauer {
        m: usize,
        alpha: f64,
    },
    Cosine {
        indices: Vec<usize>,
    },
    /// CSV with a header `x,f1,f2,…`; components interpolate linearly.
    Tabulated {
        file: String,
        #[serde(default = "default_sym_domain")]
        domain: [f64; 2],
    },
}

fn default_sym_domain() -> [f64; 2] {
    [-1.0, 1.0]
}

impl BasisConfig {
    fn build(&self) -> corrdesign::Result<RegressionBasis> {
        match self {
            BasisConfig::Monomial { m, domain } => {
                RegressionBasis::monomial_on(*m, (domain[0], domain[1]))
            }
            BasisConfig::Chebyshev { m } => RegressionBasis::chebyshev(*m),
            BasisConfig::Gegenbauer { m, alpha } => RegressionBasis::gegenbauer(*m, *alpha),
            BasisConfig::Cosine { indices } => RegressionBasis::cosine_series(indices.clone()),
            BasisConfig::Tabulated { file, domain } => {
                let mut rdr = csv::Reader::from_path(file)?;
                let width = rdr.headers()?.len();
                let mut nodes = Vec::new();
                let mut components = vec![Vec::new(); width - 1];
                for rec in rdr.records() {
                    let rec = rec?;
                    let row: Vec<f64> = rec
                        .iter()
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| {
                            corrdesign::Error::InvalidBasis(format!("bad numeric field: {e}"))
                        })?;
                    nodes.push(row[0]);
                    for (k, comp) in components.iter_mut().enumerate() {
                        comp.push(row[k + 1]);
                    }
                }
                RegressionBasis::tabulated(nodes, components, (domain[0], domain[1]))
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct CriterionConfig {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
}

impl Default for CriterionConfig {
    fn default() -> Self {
        CriterionConfig {
            kind: default_kind(),
            c: None,
        }
    }
}

fn default_kind() -> String {
    "D".into()
}

impl CriterionConfig {
    fn build(&self) -> corrdesign::Result<Criterion> {
        match self.kind.as_str() {
            "D" | "d" => Ok(Criterion::D),
            "c" | "C" => Criterion::c_vector(self.c.clone().ok_or_else(|| {
                corrdesign::Error::InvalidParameter {
                    name: "criterion",
                    reason: "kind \"c\" needs a `c` vector".into(),
                }
            })?),
            other => Err(corrdesign::Error::InvalidParameter {
                name: "criterion",
                reason: format!("unknown kind `{other}`"),
            }),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct DesignConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub file: Option<String>,
    #[serde(default)]
    pub n: Option<usize>,
    /// equal_mass (default) | quantile | cells
    #[serde(default)]
    pub discretization: Option<String>,
}

/// Resolves a design given either a `name[:param]` string (`uniform`,
/// `arcsine`, `two_point`, `gen_arcsine:α`, `triangular:λ`) or a CSV file of
/// `x,weight` rows. Continuous laws discretize with `n` points.
pub fn resolve_design(
    spec: &str,
    n: usize,
    discretization: &str,
    domain: (f64, f64),
) -> Result<Design, String> {
    if spec.ends_with(".csv") {
        return Design::from_csv(Path::new(spec)).map_err(|e| e.to_string());
    }
    let continuous = |dd: DensityDesign| -> Result<Design, String> {
        match discretization {
            "equal_mass" => dd.equal_mass_design(n),
            "quantile" => dd.quantile_design(n),
            "cells" => dd.grid_cell_design(n),
            other => {
                return Err(format!(
                    "unknown discretization `{other}` (equal_mass|quantile|cells)"
                ))
            }
        }
        .map_err(|e| e.to_string())
    };
    match spec.split_once(':') {
        None => match spec {
            "uniform" => continuous(DensityDesign::uniform(domain.0, domain.1)),
            "arcsine" => continuous(DensityDesign::arcsine()),
            "two_point" => Ok(two_point_design()),
            "grid" => Design::uniform_on(equispaced_grid(domain.0, domain.1, n))
                .map_err(|e| e.to_string()),
            other => Err(format!("unknown design `{other}`")),
        },
        Some(("gen_arcsine", alpha)) => {
            let alpha: f64 = alpha.parse().map_err(|e| format!("bad alpha: {e}"))?;
            continuous(DensityDesign::generalized_arcsine(alpha).map_err(|e| e.to_string())?)
        }
        Some(("triangular", lambda)) => {
            let lambda: u32 = lambda.parse().map_err(|e| format!("bad lambda: {e}"))?;
            triangular_lattice_design(lambda).map_err(|e| e.to_string())
        }
        Some((other, _)) => Err(format!("unknown design `{other}`")),
    }
}

impl DesignConfig {
    pub fn resolve(&self, domain: (f64, f64)) -> Result<Design, String> {
        let n = self.n.unwrap_or(201);
        let disc = self.discretization.as_deref().unwrap_or("equal_mass");
        if let Some(file) = &self.file {
            return Design::from_csv(Path::new(file)).map_err(|e| e.to_string());
        }
        let name = self
            .name
            .as_deref()
            .ok_or("design block needs `name` or `file`")?;
        resolve_design(name, n, disc, domain)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default)]
pub struct SolverSection {
    pub grid_n: usize,
    /// "adaptive" or a fixed numeric β
    pub beta: serde_json::Value,
    pub margin: f64,
    pub max_iter: usize,
    pub conv_tol: f64,
    pub weight_floor: f64,
    pub singular_policy: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            grid_n: 201,
            beta: serde_json::Value::String("adaptive".into()),
            margin: 0.1,
            max_iter: 5000,
            conv_tol: 1e-7,
            weight_floor: 1e-10,
            singular_policy: "smooth".into(),
        }
    }
}

impl SolverSection {
    pub fn build(&self) -> Result<SolverConfig, String> {
        let beta_rule = match &self.beta {
            serde_json::Value::String(s) if s == "adaptive" => BetaRule::AdaptiveMin,
            serde_json::Value::Number(n) => BetaRule::Fixed(
                n.as_f64()
                    .ok_or_else(|| "beta must be finite".to_string())?,
            ),
            other => return Err(format!("beta must be \"adaptive\" or a number, got {other}")),
        };
        Ok(SolverConfig {
            grid_n: self.grid_n,
            beta_rule,
            margin: self.margin,
            max_iter: self.max_iter,
            conv_tol: self.conv_tol,
            weight_floor: self.weight_floor,
            singular_policy: parse_policy(&self.singular_policy)?,
        })
    }
}

pub fn parse_policy(s: &str) -> Result<SingularPolicy, String> {
    match s {
        "smooth" => Ok(SingularPolicy::Smooth),
        "cell_average" => Ok(SingularPolicy::CellAverage),
        "error" => Ok(SingularPolicy::Error),
        other => Err(format!(
            "unknown singular policy `{other}` (smooth|cell_average|error)"
        )),
    }
}
