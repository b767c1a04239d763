//! Covariance kernels K(u,v), including families that are singular on the
//! diagonal (logarithmic and power type) and their smoothed approximants.
//!
//! Stationary families are written through a correlation-style profile
//! ρ(t), t = u − v. Singular families return `f64::INFINITY` at u = v; every
//! consumer that builds Gram or moment matrices decides how to treat the
//! diagonal through a [`SingularPolicy`].

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal handling for singular kernels in Gram/moment assembly.
///
/// * `Smooth` — replace the kernel by its smoothed approximant; the smoothing
///   half-width defaults to half the minimal support gap (per-atom cell
///   half-widths where the design carries them).
/// * `CellAverage` — keep the kernel off the diagonal, replace coinciding
///   pairs by the exact mean of the kernel over the atom's grid cell square.
/// * `Error` — refuse to evaluate coinciding pairs of a singular kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularPolicy {
    #[default]
    Smooth,
    CellAverage,
    Error,
}

/// Parametric covariance kernel descriptor. Immutable after construction;
/// evaluation is pure.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovarianceKernel {
    /// ρ(t) = exp(−λ|t|)
    Exponential { decay: f64 },
    /// ρ(t) = exp(−λt²)
    Gaussian { decay: f64 },
    /// ρ(t) = max(0, 1 − λ|t|)
    Triangular { decay: f64 },
    /// ρ(t) = 1 − (3/2)|t|/R + (1/2)(|t|/R)³ for |t| ≤ R, else 0
    Spherical { range: f64 },
    /// ρ(t) = exp(−λ|t|^ν), ν ∈ (0, 2]
    PowerExp { decay: f64, power: f64 },
    /// K(u,v) = γ − β ln (u−v)²; singular on the diagonal
    Logarithmic { scale: f64, offset: f64 },
    /// K(u,v) = γ + β/|u−v|^α, α ∈ (0,1); singular on the diagonal
    PowerSingular { exponent: f64, scale: f64, offset: f64 },
    /// ρ(t) = Σ_k c_k cosᵖᵏ(2πt); periodic with period 1, Σ c_k = 1
    PeriodicCosMix { terms: Vec<(f64, u32)> },
    /// K = γ + β ρ_δ(t), the box-smoothed logarithmic kernel
    SmoothedLog {
        half_width: f64,
        scale: f64,
        offset: f64,
    },
    /// K = γ + β/(h + |t|)^α, the softened power kernel
    SoftenedPower {
        exponent: f64,
        scale: f64,
        offset: f64,
        soften: f64,
    },
    /// K(u,v) = min(u,v) on [0, 1]
    BrownianMin,
    /// Bilinear interpolation of a symmetric node grid
    Tabulated(TabulatedKernel),
}

use CovarianceKernel::*;

fn require(cond: bool, name: &'static str, reason: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::param(name, reason))
    }
}

impl CovarianceKernel {
    pub fn exponential(decay: f64) -> Result<Self> {
        require(decay > 0.0, "decay", "must be > 0")?;
        Ok(Exponential { decay })
    }

    pub fn gaussian(decay: f64) -> Result<Self> {
        require(decay > 0.0, "decay", "must be > 0")?;
        Ok(Gaussian { decay })
    }

    pub fn triangular(decay: f64) -> Result<Self> {
        require(decay > 0.0, "decay", "must be > 0")?;
        Ok(Triangular { decay })
    }

    pub fn spherical(range: f64) -> Result<Self> {
        require(range > 0.0, "range", "must be > 0")?;
        Ok(Spherical { range })
    }

    pub fn power_exp(decay: f64, power: f64) -> Result<Self> {
        require(decay > 0.0, "decay", "must be > 0")?;
        require(power > 0.0 && power <= 2.0, "power", "must lie in (0, 2]")?;
        Ok(PowerExp { decay, power })
    }

    pub fn logarithmic(scale: f64, offset: f64) -> Result<Self> {
        require(scale > 0.0, "scale", "must be > 0")?;
        require(offset >= 0.0, "offset", "must be >= 0")?;
        Ok(Logarithmic { scale, offset })
    }

    pub fn power_singular(exponent: f64, scale: f64, offset: f64) -> Result<Self> {
        require(
            exponent > 0.0 && exponent < 1.0,
            "exponent",
            "must lie in (0, 1)",
        )?;
        require(scale > 0.0, "scale", "must be > 0")?;
        require(offset >= 0.0, "offset", "must be >= 0")?;
        Ok(PowerSingular {
            exponent,
            scale,
            offset,
        })
    }

    /// Convex combination ρ(t) = Σ c_k cosᵖᵏ(2πt) with nonnegative weights
    /// summing to one and integer powers ≥ 1.
    pub fn periodic_cos_mix(terms: Vec<(f64, u32)>) -> Result<Self> {
        require(!terms.is_empty(), "terms", "must be nonempty")?;
        let mut total = 0.0;
        for &(c, p) in &terms {
            require(c >= 0.0, "terms", "weights must be >= 0")?;
            require(p >= 1, "terms", "powers must be >= 1")?;
            total += c;
        }
        require(
            (total - 1.0).abs() <= 1e-12,
            "terms",
            "weights must sum to 1",
        )?;
        Ok(PeriodicCosMix { terms })
    }

    pub fn smoothed_log_kernel(half_width: f64, scale: f64, offset: f64) -> Result<Self> {
        require(half_width > 0.0, "half_width", "must be > 0")?;
        require(scale > 0.0, "scale", "must be > 0")?;
        require(offset >= 0.0, "offset", "must be >= 0")?;
        Ok(SmoothedLog {
            half_width,
            scale,
            offset,
        })
    }

    pub fn softened_power(exponent: f64, scale: f64, offset: f64, soften: f64) -> Result<Self> {
        require(
            exponent > 0.0 && exponent < 1.0,
            "exponent",
            "must lie in (0, 1)",
        )?;
        require(scale > 0.0, "scale", "must be > 0")?;
        require(offset >= 0.0, "offset", "must be >= 0")?;
        require(soften > 0.0, "soften", "must be > 0")?;
        Ok(SoftenedPower {
            exponent,
            scale,
            offset,
            soften,
        })
    }

    pub fn brownian_min() -> Self {
        BrownianMin
    }

    pub fn tabulated(t: TabulatedKernel) -> Self {
        Tabulated(t)
    }

    /// True iff K(u,u) = +∞.
    pub fn is_singular_on_diagonal(&self) -> bool {
        matches!(self, Logarithmic { .. } | PowerSingular { .. })
    }

    /// Period of the correlation profile, if any.
    pub fn period(&self) -> Option<f64> {
        match self {
            PeriodicCosMix { .. } => Some(1.0),
            _ => None,
        }
    }

    /// Evaluates K(u,v). Total on the design space; singular families return
    /// `f64::INFINITY` exactly on the diagonal and are finite elsewhere.
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let t = u - v;
        match self {
            Exponential { decay } => (-decay * t.abs()).exp(),
            Gaussian { decay } => (-decay * t * t).exp(),
            Triangular { decay } => (1.0 - decay * t.abs()).max(0.0),
            Spherical { range } => {
                let a = t.abs() / range;
                if a >= 1.0 {
                    0.0
                } else {
                    1.0 - 1.5 * a + 0.5 * a * a * a
                }
            }
            PowerExp { decay, power } => (-decay * t.abs().powf(*power)).exp(),
            Logarithmic { scale, offset } => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    offset - scale * (t * t).ln()
                }
            }
            PowerSingular {
                exponent,
                scale,
                offset,
            } => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    offset + scale / t.abs().powf(*exponent)
                }
            }
            PeriodicCosMix { terms } => {
                let c = (2.0 * std::f64::consts::PI * t).cos();
                terms.iter().map(|&(w, p)| w * c.powi(p as i32)).sum()
            }
            SmoothedLog {
                half_width,
                scale,
                offset,
            } => offset + scale * smoothed_log(*half_width, t),
            SoftenedPower {
                exponent,
                scale,
                offset,
                soften,
            } => offset + scale / (soften + t.abs()).powf(*exponent),
            BrownianMin => u.min(v),
            Tabulated(tab) => tab.eval(u, v),
        }
    }

    /// The smoothed approximant of a singular kernel with half-width `delta`
    /// (logarithmic → box-smoothed log, power → softened power). `None` for
    /// kernels that are not singular on the diagonal.
    pub fn smoothed(&self, delta: f64) -> Option<CovarianceKernel> {
        match *self {
            Logarithmic { scale, offset } => Some(SmoothedLog {
                half_width: delta,
                scale,
                offset,
            }),
            PowerSingular {
                exponent,
                scale,
                offset,
            } => Some(SoftenedPower {
                exponent,
                scale,
                offset,
                soften: delta,
            }),
            _ => None,
        }
    }

    /// Mean of K over the lag window [t − delta, t + delta] (exact for the
    /// singular families, plain evaluation otherwise). Finite for all t.
    pub fn box_average(&self, t: f64, delta: f64) -> f64 {
        match *self {
            Logarithmic { scale, offset } => offset + scale * smoothed_log(delta, t),
            PowerSingular {
                exponent,
                scale,
                offset,
            } => {
                let g = |s: f64| s.signum() * s.abs().powf(1.0 - exponent) / (1.0 - exponent);
                offset + scale * (g(t + delta) - g(t - delta)) / (2.0 * delta)
            }
            _ => self.eval(t, 0.0),
        }
    }

    /// Mean of K over the square cell \[0,w\]²; the analytic diagonal
    /// replacement of the cell-average policy. Finite for the singular
    /// families; equals K(u,u) for bounded ones.
    pub fn square_cell_average(&self, width: f64, at: f64) -> f64 {
        match *self {
            Logarithmic { scale, offset } => offset + scale * (3.0 - (width * width).ln()),
            PowerSingular {
                exponent,
                scale,
                offset,
            } => {
                offset
                    + scale * 2.0 * width.powf(-exponent)
                        / ((1.0 - exponent) * (2.0 - exponent))
            }
            _ => self.eval(at, at),
        }
    }

    /// Builds a kernel from its JSON configuration block.
    pub fn from_config(cfg: &KernelConfig) -> Result<Self> {
        cfg.build()
    }
}

/// Smoothed logarithmic profile
/// ρ_δ(t) = 2 − (1/δ)·[(t+δ)ln|t+δ| − (t−δ)ln|t−δ|],
/// the exact average of −ln s² over s ∈ [t−δ, t+δ] (convention 0·ln 0 = 0).
/// Finite everywhere, even at t = 0 and t = ±δ.
pub fn smoothed_log(delta: f64, t: f64) -> f64 {
    assert!(delta > 0.0, "smoothing half-width must be positive");
    fn xlnx(x: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else {
            x * x.abs().ln()
        }
    }
    2.0 - (xlnx(t + delta) - xlnx(t - delta)) / delta
}

/// Bilinear interpolation of symmetric kernel values on a shared node grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TabulatedKernel {
    nodes: Vec<f64>,
    /// row-major n×n values, symmetrized on construction
    values: Vec<f64>,
}

impl TabulatedKernel {
    /// Nodes must be strictly increasing; `values` is n×n row-major and is
    /// symmetrized by averaging with its transpose.
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = nodes.len();
        require(n >= 2, "nodes", "need at least 2 nodes")?;
        require(
            nodes.windows(2).all(|w| w[0] < w[1]),
            "nodes",
            "must be strictly increasing",
        )?;
        require(values.len() == n * n, "values", "must be n*n entries")?;
        let mut sym = values.clone();
        for i in 0..n {
            for j in 0..n {
                sym[i * n + j] = 0.5 * (values[i * n + j] + values[j * n + i]);
            }
        }
        Ok(TabulatedKernel { nodes, values: sym })
    }

    /// Constant kernel K ≡ c over a domain.
    pub fn constant(c: f64, domain: (f64, f64)) -> Self {
        TabulatedKernel {
            nodes: vec![domain.0, domain.1],
            values: vec![c; 4],
        }
    }

    /// Kernel with `value` on the diagonal nodes and 0 off the diagonal
    /// (white-noise-like when evaluated on the node set itself).
    pub fn diagonal(points: &[f64], value: f64) -> Result<Self> {
        let n = points.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = value;
        }
        TabulatedKernel::new(points.to_vec(), values)
    }

    /// Loads `u,v,K` records (with header) from CSV; the node set is the
    /// union of all coordinates and every node pair must be present at least
    /// in one orientation. Values are symmetrized.
    pub fn from_csv(path: &std::path::Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut records = Vec::new();
        for rec in rdr.deserialize() {
            let (u, v, k): (f64, f64, f64) = rec?;
            records.push((u, v, k));
        }
        require(!records.is_empty(), "csv", "no records")?;
        let mut nodes: Vec<f64> = records
            .iter()
            .flat_map(|&(u, v, _)| [u, v])
            .collect();
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let n = nodes.len();
        let idx = |x: f64| nodes.binary_search_by(|p| p.total_cmp(&x)).unwrap();
        let mut values = vec![f64::NAN; n * n];
        for &(u, v, k) in &records {
            let (i, j) = (idx(u), idx(v));
            values[i * n + j] = k;
            if values[j * n + i].is_nan() {
                values[j * n + i] = k;
            }
        }
        require(
            values.iter().all(|v| v.is_finite()),
            "csv",
            "tabulated kernel grid is incomplete",
        )?;
        TabulatedKernel::new(nodes, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    fn eval(&self, u: f64, v: f64) -> f64 {
        // canonical argument order keeps eval(u,v) == eval(v,u) bit-exact
        let (u, v) = if u <= v { (u, v) } else { (v, u) };
        let (i, su) = self.locate(u);
        let (j, sv) = self.locate(v);
        let n = self.nodes.len();
        let at = |a: usize, b: usize| self.values[a * n + b];
        (1.0 - su) * (1.0 - sv) * at(i, j)
            + su * (1.0 - sv) * at(i + 1, j)
            + (1.0 - su) * sv * at(i, j + 1)
            + su * sv * at(i + 1, j + 1)
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return (0, 0.0);
        }
        if x >= self.nodes[n - 1] {
            return (n - 2, 1.0);
        }
        let i = match self.nodes.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        let frac = (x - self.nodes[i]) / (self.nodes[i + 1] - self.nodes[i]);
        (i, frac)
    }
}

/// Result of the discretized positive-definiteness check: the spectrum edge
/// of the Gram matrix [K(x_i, x_j)] (smoothed approximant for singular
/// kernels) against the tolerance 1e−8·trace.
#[derive(Clone, Debug, Serialize)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub trace: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Minimum-eigenvalue diagnostic of the kernel Gram matrix on `grid`.
///
/// Singular kernels are replaced by their smoothed approximant with δ equal
/// to half the minimal grid spacing (policy `Smooth`); the `Error` policy
/// refuses them.
pub fn psd_diagnostic(
    kernel: &CovarianceKernel,
    grid: &[f64],
    policy: SingularPolicy,
) -> Result<PsdReport> {
    if grid.len() < 2 {
        return Err(Error::InvalidDesign(
            "psd diagnostic needs at least 2 grid points".into(),
        ));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min_gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    if min_gap <= 0.0 {
        return Err(Error::InvalidDesign("grid points must be distinct".into()));
    }

    let effective: CovarianceKernel = if kernel.is_singular_on_diagonal() {
        match policy {
            SingularPolicy::Error => {
                return Err(Error::SmoothingRequired {
                    context: "psd diagnostic Gram matrix",
                })
            }
            _ => kernel.smoothed(0.5 * min_gap).expect("singular kernel"),
        }
    } else {
        kernel.clone()
    };

    let n = sorted.len();
    let gram = DMatrix::from_fn(n, n, |i, j| effective.eval(sorted[i], sorted[j]));
    let eig = gram.symmetric_eigenvalues();
    let min_eigenvalue = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let trace = gram.trace();
    let tolerance = 1e-8 * trace.abs();
    Ok(PsdReport {
        min_eigenvalue,
        trace,
        tolerance,
        pass: min_eigenvalue >= -tolerance,
    })
}

/// JSON configuration block `{"family": "...", "params": {...}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl KernelConfig {
    fn num(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::param("params", format!("missing numeric `{key}`")))
    }

    fn num_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| Error::param("params", format!("`{key}` must be numeric"))),
        }
    }

    fn build(&self) -> Result<CovarianceKernel> {
        match self.family.as_str() {
            "exponential" => CovarianceKernel::exponential(self.num("lambda")?),
            "gaussian" => CovarianceKernel::gaussian(self.num("lambda")?),
            "triangular" => CovarianceKernel::triangular(self.num("lambda")?),
            "spherical" => CovarianceKernel::spherical(self.num("R")?),
            "power_exp" => CovarianceKernel::power_exp(self.num("lambda")?, self.num("nu")?),
            "logarithmic" => CovarianceKernel::logarithmic(
                self.num_or("beta", 1.0)?,
                self.num_or("gamma", 0.0)?,
            ),
            "power_singular" => CovarianceKernel::power_singular(
                self.num("alpha")?,
                self.num_or("beta", 1.0)?,
                self.num_or("gamma", 0.0)?,
            ),
            "smoothed_log" => CovarianceKernel::smoothed_log_kernel(
                self.num("delta")?,
                self.num_or("beta", 1.0)?,
                self.num_or("gamma", 0.0)?,
            ),
            "periodic_cos_mix" => {
                let weights = self
                    .params
                    .get("weights")
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| Error::param("params", "missing array `weights`"))?;
                let powers = self
                    .params
                    .get("powers")
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| Error::param("params", "missing array `powers`"))?;
                if weights.len() != powers.len() {
                    return Err(Error::param("params", "weights/powers length mismatch"));
                }
                let terms = weights
                    .iter()
                    .zip(powers.iter())
                    .map(|(w, p)| {
                        Ok((
                            w.as_f64()
                                .ok_or_else(|| Error::param("params", "weights numeric"))?,
                            p.as_u64()
                                .ok_or_else(|| Error::param("params", "powers integral"))?
                                as u32,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                CovarianceKernel::periodic_cos_mix(terms)
            }
            "brownian_min" => Ok(CovarianceKernel::brownian_min()),
            "tabulated" => {
                let path = self
                    .params
                    .get("file")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| Error::param("params", "missing string `file`"))?;
                Ok(CovarianceKernel::tabulated(TabulatedKernel::from_csv(
                    std::path::Path::new(path),
                )?))
            }
            other => Err(Error::param("family", format!("unknown family `{other}`"))),
        }
    }
}
