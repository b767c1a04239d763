//! Design measures: discrete probability measures on a finite support, and
//! density-based designs with quantile functions for discretization.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::special::ln_gamma;

/// Discrete probability measure: strictly increasing support points with
/// nonnegative weights summing to one.
///
/// A design may carry per-atom cell widths when it discretizes a density
/// (each atom then represents an equal- or known-mass cell); the moment
/// assembly uses them to pick local smoothing widths for singular kernels.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Design {
    support: Vec<f64>,
    weights: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    cell_widths: Option<Vec<f64>>,
}

impl Design {
    /// Support must be strictly increasing, weights nonnegative with a
    /// positive sum; weights are normalized to sum exactly to one.
    pub fn new(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::InvalidDesign(
                "support and weights must be nonempty and of equal length".into(),
            ));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDesign(
                "support points must be strictly increasing and distinct".into(),
            ));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidDesign("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDesign("total weight must be positive".into()));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Design {
            support,
            weights,
            cell_widths: None,
        })
    }

    /// Builds a design from possibly unsorted, possibly duplicated atoms;
    /// atoms closer than `merge_tol` are merged with their weights summed.
    pub fn from_atoms_merging(atoms: Vec<(f64, f64)>, merge_tol: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDesign("no atoms".into()));
        }
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support = vec![atoms[0].0];
        let mut weights = vec![atoms[0].1];
        for &(x, w) in &atoms[1..] {
            let last = *support.last().unwrap();
            if x - last <= merge_tol * last.abs().max(1.0) {
                *weights.last_mut().unwrap() += w;
            } else {
                support.push(x);
                weights.push(w);
            }
        }
        Design::new(support, weights)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Smallest gap between adjacent support points (∞ for a single atom).
    pub fn min_gap(&self) -> f64 {
        self.support
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn with_cell_widths(mut self, widths: Vec<f64>) -> Result<Self> {
        if widths.len() != self.support.len() || widths.iter().any(|&h| h <= 0.0) {
            return Err(Error::InvalidDesign(
                "cell widths must be positive, one per atom".into(),
            ));
        }
        self.cell_widths = Some(widths);
        Ok(self)
    }

    pub fn cell_widths(&self) -> Option<&[f64]> {
        self.cell_widths.as_deref()
    }

    /// Voronoi cell widths of the support inside its own span (used as the
    /// fallback cell geometry when none was recorded).
    pub fn voronoi_widths(&self) -> Vec<f64> {
        let n = self.support.len();
        if n == 1 {
            return vec![1.0];
        }
        (0..n)
            .map(|i| {
                let left = if i == 0 {
                    self.support[0]
                } else {
                    0.5 * (self.support[i - 1] + self.support[i])
                };
                let right = if i == n - 1 {
                    self.support[n - 1]
                } else {
                    0.5 * (self.support[i] + self.support[i + 1])
                };
                (right - left).max(f64::MIN_POSITIVE)
            })
            .collect()
    }

    /// Equal weights on the given grid.
    pub fn uniform_on(grid: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        Design::new(grid, vec![1.0; n])
    }

    /// Drops atoms with weight ≤ floor and renormalizes.
    pub fn pruned(&self, floor: f64) -> Result<Self> {
        let kept: Vec<(f64, f64, Option<f64>)> = self
            .support
            .iter()
            .enumerate()
            .filter(|&(i, _)| self.weights[i] > floor)
            .map(|(i, &x)| (x, self.weights[i], self.cell_widths.as_ref().map(|c| c[i])))
            .collect();
        if kept.is_empty() {
            return Err(Error::InvalidDesign(
                "pruning removed every atom; lower the floor".into(),
            ));
        }
        let mut d = Design::new(
            kept.iter().map(|k| k.0).collect(),
            kept.iter().map(|k| k.1).collect(),
        )?;
        if self.cell_widths.is_some() {
            d = d.with_cell_widths(kept.iter().map(|k| k.2.unwrap()).collect())?;
        }
        Ok(d)
    }

    /// Sup distance between this design's CDF and a continuous CDF, compared
    /// at the Voronoi cell edges of the support (each atom's mass against its
    /// cell's continuous mass).
    pub fn edge_ks_distance<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let n = self.support.len();
        let mut cum = 0.0;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            cum += self.weights[i];
            let edge = if i == n - 1 {
                self.support[n - 1]
            } else {
                0.5 * (self.support[i] + self.support[i + 1])
            };
            worst = worst.max((cum - cdf(edge)).abs());
        }
        worst
    }

    /// Writes `x,weight` CSV.
    pub fn to_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "weight"])?;
        for (x, wt) in self.support.iter().zip(&self.weights) {
            w.write_record([format!("{x:.17e}"), format!("{wt:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `x,weight` CSV.
    pub fn from_csv(path: &std::path::Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut atoms = Vec::new();
        for rec in rdr.deserialize() {
            let (x, w): (f64, f64) = rec?;
            atoms.push((x, w));
        }
        Design::from_atoms_merging(atoms, 0.0)
    }
}

/// n equispaced points on [a, b], endpoints included.
pub fn equispaced_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && a < b);
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// ξ* = {−1, 1; 1/2, 1/2}.
pub fn two_point_design() -> Design {
    Design::new(vec![-1.0, 1.0], vec![0.5, 0.5]).expect("static design")
}

/// Equal weights on the 2λ+1 lattice points −1 + k/λ, k = 0, …, 2λ.
pub fn triangular_lattice_design(lambda: u32) -> Result<Design> {
    if lambda == 0 {
        return Err(Error::param("lambda", "must be a positive integer"));
    }
    let n = 2 * lambda as usize + 1;
    let support = (0..n)
        .map(|k| -1.0 + k as f64 / lambda as f64)
        .collect::<Vec<_>>();
    Design::new(support, vec![1.0; n])
}

/// Absolutely continuous design on an interval: density, CDF, and quantile.
#[derive(Clone)]
pub struct DensityDesign {
    interval: (f64, f64),
    label: String,
    density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    cdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    quantile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for DensityDesign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DensityDesign")
            .field("label", &self.label)
            .field("interval", &self.interval)
            .finish()
    }
}

impl DensityDesign {
    /// Arcsine law on [−1, 1]: p(x) = 1/(π√(1−x²)), a(s) = −cos(πs).
    pub fn arcsine() -> Self {
        use std::f64::consts::PI;
        DensityDesign {
            interval: (-1.0, 1.0),
            label: "arcsine".into(),
            density: Arc::new(|x| {
                if x.abs() >= 1.0 {
                    f64::INFINITY
                } else {
                    1.0 / (PI * (1.0 - x * x).sqrt())
                }
            }),
            cdf: Arc::new(|x| 0.5 + x.clamp(-1.0, 1.0).asin() / PI),
            quantile: Arc::new(|s| -(PI * s.clamp(0.0, 1.0)).cos()),
        }
    }

    /// Uniform law on [a, b].
    pub fn uniform(a: f64, b: f64) -> Self {
        assert!(a < b);
        DensityDesign {
            interval: (a, b),
            label: "uniform".into(),
            density: Arc::new(move |_| 1.0 / (b - a)),
            cdf: Arc::new(move |x| ((x - a) / (b - a)).clamp(0.0, 1.0)),
            quantile: Arc::new(move |s| a + (b - a) * s.clamp(0.0, 1.0)),
        }
    }

    /// Symmetric Beta-type law p_α(x) ∝ (1−x²)^{(α−1)/2} on [−1, 1] with the
    /// exact normalizing constant Γ(α/2+1)/(√π·Γ((α+1)/2)); α ∈ (0, 1).
    ///
    /// The CDF uses the substitution x = sin t (smooth integrand), the
    /// quantile inverts it by bisection to 1e−10.
    pub fn generalized_arcsine(alpha: f64) -> Result<Self> {
        use std::f64::consts::PI;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param("alpha", "must lie in (0, 1)"));
        }
        let norm =
            (ln_gamma(0.5 * alpha + 1.0) - 0.5 * PI.ln() - ln_gamma(0.5 * (alpha + 1.0))).exp();
        let density = move |x: f64| {
            if x.abs() >= 1.0 {
                if alpha < 1.0 {
                    f64::INFINITY
                } else {
                    norm
                }
            } else {
                norm * (1.0 - x * x).powf(0.5 * (alpha - 1.0))
            }
        };
        // F(x) = norm · ∫_{−π/2}^{asin x} cos^α t dt
        let cdf = move |x: f64| {
            let x = x.clamp(-1.0, 1.0);
            norm * quad::integrate_gl(|t: f64| t.cos().powf(alpha), -0.5 * PI, x.asin(), 128)
        };
        let quantile = move |s: f64| {
            let s = s.clamp(0.0, 1.0);
            let (mut lo, mut hi) = (-1.0f64, 1.0f64);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < s {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-10 {
                    break;
                }
            }
            0.5 * (lo + hi)
        };
        Ok(DensityDesign {
            interval: (-1.0, 1.0),
            label: format!("gen_arcsine:{alpha}"),
            density: Arc::new(density),
            cdf: Arc::new(cdf),
            quantile: Arc::new(quantile),
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn density(&self, x: f64) -> f64 {
        (self.density)(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (self.cdf)(x)
    }

    pub fn quantile(&self, s: f64) -> f64 {
        (self.quantile)(s)
    }

    /// ∫ p over the interval, probed through the density itself (tanh-sinh
    /// absorbs the endpoint singularities); a normalization check.
    pub fn density_mass(&self) -> f64 {
        quad::tanh_sinh(|x| self.density(x), self.interval.0, self.interval.1, 1200)
    }

    /// The N-point quantile design: atoms at a((i−1)/(N−1)) with equal
    /// weights 1/N; coincident quantiles are merged.
    pub fn quantile_design(&self, n: usize) -> Result<Design> {
        if n < 2 {
            return Err(Error::param("n", "must be at least 2"));
        }
        let atoms = (0..n)
            .map(|i| (self.quantile(i as f64 / (n - 1) as f64), 1.0 / n as f64))
            .collect();
        Design::from_atoms_merging(atoms, 1e-9)
    }

    /// Equal-mass discretization: n cells of probability 1/n, one atom at the
    /// s-midpoint quantile of each cell, with the cell's x-width recorded.
    /// This is the preferred discretization for singular kernels: the moment
    /// assembly can average the kernel exactly over each atom's cell.
    pub fn equal_mass_design(&self, n: usize) -> Result<Design> {
        if n < 2 {
            return Err(Error::param("n", "must be at least 2"));
        }
        let nf = n as f64;
        let support: Vec<f64> = (1..=n)
            .map(|i| self.quantile((2.0 * i as f64 - 1.0) / (2.0 * nf)))
            .collect();
        let widths: Vec<f64> = (0..n)
            .map(|i| {
                let lo = self.quantile(i as f64 / nf);
                let hi = self.quantile((i + 1) as f64 / nf);
                (hi - lo).max(f64::MIN_POSITIVE)
            })
            .collect();
        Design::new(support, vec![1.0 / nf; n])?.with_cell_widths(widths)
    }

    /// Discretization on an equispaced grid with CDF cell masses as weights.
    pub fn grid_cell_design(&self, n: usize) -> Result<Design> {
        if n < 2 {
            return Err(Error::param("n", "must be at least 2"));
        }
        let (lo, hi) = self.interval;
        let grid = equispaced_grid(lo, hi, n);
        let h = (hi - lo) / (n - 1) as f64;
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                let a = if i == 0 { lo } else { grid[i] - 0.5 * h };
                let b = if i == n - 1 { hi } else { grid[i] + 0.5 * h };
                (self.cdf(b) - self.cdf(a)).max(0.0)
            })
            .collect();
        let widths: Vec<f64> = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
            .collect();
        Design::new(grid, weights)?.with_cell_widths(widths)
    }
}
