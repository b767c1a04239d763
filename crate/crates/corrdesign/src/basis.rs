//! Regression function vectors f(x) = (f₁(x), …, f_m(x)).
//!
//! Built-in families: monomials, Chebyshev T_n, Gegenbauer C_n^(α) (classical
//! unnormalized three-term recurrence), the cosine system
//! f₁ = 1, f_j = √2·cos(2π(j−1)x) on \[0,1\], and tabulated components with
//! linear interpolation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RegressionBasis {
    /// (1, x, …, x^{m−1})
    Monomial { m: usize, domain: (f64, f64) },
    /// (T₀, …, T_{m−1}) on the domain mapped affinely to [−1, 1]
    Chebyshev { m: usize, domain: (f64, f64) },
    /// (C₀^{(α)}, …, C_{m−1}^{(α)}), classical normalization
    Gegenbauer {
        m: usize,
        alpha: f64,
        domain: (f64, f64),
    },
    /// Subset {i₁ < … < i_m} of the cosine system on [0, 1]
    CosineSeries {
        indices: Vec<usize>,
        domain: (f64, f64),
    },
    /// Linear interpolation of sampled component values
    Tabulated {
        nodes: Vec<f64>,
        /// `components[k][i] = f_{k+1}(nodes[i])`
        components: Vec<Vec<f64>>,
        domain: (f64, f64),
    },
}

impl RegressionBasis {
    pub fn monomial(m: usize) -> Result<Self> {
        Self::monomial_on(m, (-1.0, 1.0))
    }

    pub fn monomial_on(m: usize, domain: (f64, f64)) -> Result<Self> {
        let b = RegressionBasis::Monomial { m, domain };
        b.validate()?;
        Ok(b)
    }

    pub fn chebyshev(m: usize) -> Result<Self> {
        let b = RegressionBasis::Chebyshev {
            m,
            domain: (-1.0, 1.0),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn gegenbauer(m: usize, alpha: f64) -> Result<Self> {
        if !(alpha > -0.5) || alpha == 0.0 {
            return Err(Error::param("alpha", "must be > -1/2 and nonzero"));
        }
        let b = RegressionBasis::Gegenbauer {
            m,
            alpha,
            domain: (-1.0, 1.0),
        };
        b.validate()?;
        Ok(b)
    }

    /// 1-based indices into the cosine system; index 1 is the constant.
    pub fn cosine_series(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidBasis("index set must be nonempty".into()));
        }
        if indices.iter().any(|&i| i == 0) {
            return Err(Error::InvalidBasis("indices are 1-based".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidBasis(
                "indices must be strictly increasing".into(),
            ));
        }
        let b = RegressionBasis::CosineSeries {
            indices,
            domain: (0.0, 1.0),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn tabulated(
        nodes: Vec<f64>,
        components: Vec<Vec<f64>>,
        domain: (f64, f64),
    ) -> Result<Self> {
        if nodes.len() < 2 || nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidBasis(
                "nodes must be strictly increasing, at least two".into(),
            ));
        }
        if components.is_empty() || components.iter().any(|c| c.len() != nodes.len()) {
            return Err(Error::InvalidBasis(
                "each component needs one value per node".into(),
            ));
        }
        let b = RegressionBasis::Tabulated {
            nodes,
            components,
            domain,
        };
        b.validate()?;
        Ok(b)
    }

    /// Number of regression functions m.
    pub fn dim(&self) -> usize {
        match self {
            RegressionBasis::Monomial { m, .. }
            | RegressionBasis::Chebyshev { m, .. }
            | RegressionBasis::Gegenbauer { m, .. } => *m,
            RegressionBasis::CosineSeries { indices, .. } => indices.len(),
            RegressionBasis::Tabulated { components, .. } => components.len(),
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        match self {
            RegressionBasis::Monomial { domain, .. }
            | RegressionBasis::Chebyshev { domain, .. }
            | RegressionBasis::Gegenbauer { domain, .. }
            | RegressionBasis::CosineSeries { domain, .. }
            | RegressionBasis::Tabulated { domain, .. } => *domain,
        }
    }

    /// Evaluates the vector f(x). Errors if x lies outside the domain.
    pub fn eval(&self, x: f64) -> Result<DVector<f64>> {
        let (lo, hi) = self.domain();
        if x < lo - DOMAIN_SLACK || x > hi + DOMAIN_SLACK {
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Evaluation without the domain check (hot loops over in-domain grids).
    pub fn eval_unchecked(&self, x: f64) -> DVector<f64> {
        match self {
            RegressionBasis::Monomial { m, .. } => {
                let mut v = DVector::zeros(*m);
                let mut p = 1.0;
                for i in 0..*m {
                    v[i] = p;
                    p *= x;
                }
                v
            }
            RegressionBasis::Chebyshev { m, domain } => {
                let t = to_unit(x, *domain);
                DVector::from_vec(chebyshev_values(*m, t))
            }
            RegressionBasis::Gegenbauer { m, alpha, domain } => {
                let t = to_unit(x, *domain);
                DVector::from_vec(gegenbauer_values(*m, *alpha, t))
            }
            RegressionBasis::CosineSeries { indices, .. } => {
                let mut v = DVector::zeros(indices.len());
                for (k, &j) in indices.iter().enumerate() {
                    v[k] = if j == 1 {
                        1.0
                    } else {
                        std::f64::consts::SQRT_2
                            * (2.0 * std::f64::consts::PI * (j as f64 - 1.0) * x).cos()
                    };
                }
                v
            }
            RegressionBasis::Tabulated {
                nodes, components, ..
            } => {
                let mut v = DVector::zeros(components.len());
                let (i, frac) = locate(nodes, x);
                for (k, comp) in components.iter().enumerate() {
                    v[k] = comp[i] * (1.0 - frac) + comp[i + 1] * frac;
                }
                v
            }
        }
    }

    /// Change-of-basis matrix L with f_self(x) = L · f_target(x), defined for
    /// polynomial families of equal dimension spanning the same space.
    pub fn change_of_basis(&self, target: &RegressionBasis) -> Result<DMatrix<f64>> {
        let poly = |b: &RegressionBasis| {
            matches!(
                b,
                RegressionBasis::Monomial { .. }
                    | RegressionBasis::Chebyshev { .. }
                    | RegressionBasis::Gegenbauer { .. }
            )
        };
        if !poly(self) || !poly(target) {
            return Err(Error::IncompatibleBases(
                "change of basis is defined for polynomial families".into(),
            ));
        }
        let m = self.dim();
        if target.dim() != m {
            return Err(Error::IncompatibleBases(format!(
                "dimension mismatch: {m} vs {}",
                target.dim()
            )));
        }
        if self.domain() != target.domain() {
            return Err(Error::IncompatibleBases("domain mismatch".into()));
        }
        // Sample both families at m Chebyshev-distributed points and solve.
        let (lo, hi) = self.domain();
        let sample = |k: usize, n: usize| {
            let t = -((std::f64::consts::PI * (2.0 * k as f64 + 1.0)) / (2.0 * n as f64)).cos();
            0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        };
        let xs: Vec<f64> = (0..m).map(|k| sample(k, m)).collect();
        let f_self = DMatrix::from_fn(m, m, |i, j| self.eval_unchecked(xs[j])[i]);
        let f_target = DMatrix::from_fn(m, m, |i, j| target.eval_unchecked(xs[j])[i]);
        // F_self = L · F_target  ⇔  F_targetᵀ Lᵀ = F_selfᵀ
        let lu = f_target.transpose().lu();
        let l = lu
            .solve(&f_self.transpose())
            .ok_or_else(|| Error::IncompatibleBases("target family is degenerate".into()))?
            .transpose();
        // verify on m+1 fresh points
        let mut worst: f64 = 0.0;
        for k in 0..=m {
            let x = sample(k, m + 1);
            let lhs = self.eval_unchecked(x);
            let rhs = &l * target.eval_unchecked(x);
            let scale = lhs.amax().max(1.0);
            worst = worst.max((lhs - rhs).amax() / scale);
        }
        if worst > 1e-12 {
            return Err(Error::IncompatibleBases(format!(
                "bases do not span the same space (residual {worst:.3e})"
            )));
        }
        Ok(l)
    }

    /// Construction-time sanity: components are linearly independent on the
    /// domain (uniform-measure Gram has min eigenvalue > 1e−10) and the
    /// vector f(x) does not vanish on a scan grid.
    fn validate(&self) -> Result<()> {
        let m = self.dim();
        if m < 1 {
            return Err(Error::InvalidBasis("m must be at least 1".into()));
        }
        let (lo, hi) = self.domain();
        if !(lo < hi) {
            return Err(Error::InvalidBasis("empty domain".into()));
        }
        let rule = quad::gauss_legendre(64);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut gram = DMatrix::zeros(m, m);
        for (t, w) in rule.0.iter().zip(rule.1.iter()) {
            let f = self.eval_unchecked(mid + half * t);
            gram.ger(0.5 * w, &f, &f, 1.0);
        }
        let gram = (&gram + gram.transpose()) * 0.5;
        let min_eig = gram
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig <= 1e-10 {
            return Err(Error::InvalidBasis(format!(
                "components are numerically dependent (Gram min eigenvalue {min_eig:.3e})"
            )));
        }
        // f(x) ≠ 0 is assumed for admissible design points; isolated zeros
        // (e.g. the slope-only model at the origin) are tolerated, a vanishing
        // region is not.
        let zeros = (0..=512)
            .filter(|&k| {
                let x = lo + (hi - lo) * k as f64 / 512.0;
                self.eval_unchecked(x).norm() < 1e-9
            })
            .count();
        if zeros > 8 {
            return Err(Error::InvalidBasis(format!(
                "f vanishes on {zeros} of 513 scan points"
            )));
        }
        Ok(())
    }
}

fn to_unit(x: f64, (lo, hi): (f64, f64)) -> f64 {
    (2.0 * x - lo - hi) / (hi - lo)
}

fn locate(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    if x <= nodes[0] {
        return (0, 0.0);
    }
    if x >= nodes[n - 1] {
        return (n - 2, 1.0);
    }
    let i = match nodes.binary_search_by(|p| p.total_cmp(&x)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i - 1,
    };
    (i, (x - nodes[i]) / (nodes[i + 1] - nodes[i]))
}

/// T₀(x), …, T_{m−1}(x) by the three-term recurrence.
pub fn chebyshev_values(m: usize, x: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(m);
    let (mut p0, mut p1) = (1.0, x);
    for i in 0..m {
        v.push(match i {
            0 => 1.0,
            1 => x,
            _ => {
                let p2 = 2.0 * x * p1 - p0;
                p0 = p1;
                p1 = p2;
                p2
            }
        });
    }
    v
}

/// C₀^{(α)}(x), …, C_{m−1}^{(α)}(x), classical normalization:
/// C₀ = 1, C₁ = 2αx, n C_n = 2(n+α−1)x C_{n−1} − (n+2α−2) C_{n−2}.
pub fn gegenbauer_values(m: usize, alpha: f64, x: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(m);
    let (mut p0, mut p1) = (1.0, 2.0 * alpha * x);
    for i in 0..m {
        v.push(match i {
            0 => 1.0,
            1 => p1,
            _ => {
                let n = i as f64;
                let p2 = (2.0 * (n + alpha - 1.0) * x * p1 - (n + 2.0 * alpha - 2.0) * p0) / n;
                p0 = p1;
                p1 = p2;
                p2
            }
        });
    }
    v
}
