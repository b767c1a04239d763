//! Moment matrices of a (design, basis, kernel) triple:
//!
//! ```text
//!   M(ξ)   = Σ_i w_i f(x_i) f ᵀ(x_i)
//!   B(ξ,ν) = Σ_i Σ_j w_i v_j K(x_i, y_j) f(x_i) f ᵀ(y_j)
//!   Λ      = B(ξ,ξ) M⁻¹(ξ)
//!   D(ξ)   = M⁻¹(ξ) B(ξ,ξ) M⁻¹(ξ)
//! ```
//!
//! Kernels that are singular on the diagonal never reach `eval` at u = v;
//! the [`SingularPolicy`] decides what replaces coinciding pairs. With the
//! `Smooth` policy a design carrying cell widths is treated as a piecewise
//! density: each atom's kernel column is the exact box average of the kernel
//! over that atom's cell, and diagonal entries are exact square-cell means.
//! Without cell metadata the kernel is globally replaced by its smoothed
//! approximant with δ = half the minimal support gap.

use nalgebra::{DMatrix, DVector};

use crate::basis::RegressionBasis;
use crate::designs::{Design, DensityDesign};
use crate::error::{Error, Result};
use crate::kernels::{CovarianceKernel, SingularPolicy};
use crate::quad;

/// Condition-number threshold beyond which a moment matrix counts as
/// numerically singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Concrete matrix type used throughout the moment calculus.
pub type Matrix = DMatrix<f64>;

/// The assembled moment matrices of one design.
#[derive(Clone, Debug)]
pub struct MomentSet {
    /// M(ξ)
    pub info: DMatrix<f64>,
    /// B(ξ,ξ)
    pub kernel_moment: DMatrix<f64>,
    /// Λ = B M⁻¹
    pub lambda: DMatrix<f64>,
    /// D = M⁻¹ B M⁻¹
    pub covariance: DMatrix<f64>,
    /// M⁻¹
    pub info_inverse: DMatrix<f64>,
    /// condition number of M
    pub info_condition: f64,
}

/// Symmetric inverse with condition diagnostics; fails when the matrix is not
/// positive definite or its condition number exceeds [`CONDITION_LIMIT`].
pub fn sym_inverse(mat: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let sym = (mat + mat.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if min <= 0.0 || cond > CONDITION_LIMIT {
        return Err(Error::SingularMoment { cond });
    }
    let mut inv_vals = eig.eigenvalues.clone();
    inv_vals.apply(|v| *v = 1.0 / *v);
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    Ok((inv, cond))
}

/// Information matrix M(ξ).
pub fn info_matrix(design: &Design, basis: &RegressionBasis) -> Result<DMatrix<f64>> {
    let m = basis.dim();
    let mut acc = DMatrix::zeros(m, m);
    for (&x, &w) in design.support().iter().zip(design.weights()) {
        let f = basis.eval(x)?;
        acc.ger(w, &f, &f, 1.0);
    }
    Ok((&acc + acc.transpose()) * 0.5)
}

// Kernel evaluation bound to the atoms of one design (the "column" design of
// a cross moment): resolves the singular policy per atom.
pub(crate) struct AtomKernel<'a> {
    kernel: &'a CovarianceKernel,
    support: &'a [f64],
    mode: AtomMode,
}

enum AtomMode {
    Plain,
    /// per-atom box averages (half-widths per atom) and square-cell diagonals
    Box { half_widths: Vec<f64> },
    /// globally smoothed replacement kernel
    Smoothed(CovarianceKernel),
    /// raw off-diagonal, analytic cell mean when u coincides with the atom
    CellDiag { widths: Vec<f64> },
    /// refuse coinciding pairs
    Strict,
}

impl<'a> AtomKernel<'a> {
    pub(crate) fn new(
        kernel: &'a CovarianceKernel,
        design: &'a Design,
        policy: SingularPolicy,
    ) -> AtomKernel<'a> {
        let mode = if !kernel.is_singular_on_diagonal() {
            AtomMode::Plain
        } else {
            match policy {
                SingularPolicy::Smooth => match design.cell_widths() {
                    Some(widths) => AtomMode::Box {
                        half_widths: widths.iter().map(|h| 0.5 * h).collect(),
                    },
                    None => {
                        let gap = design.min_gap();
                        let delta = if gap.is_finite() { 0.5 * gap } else { 0.5 };
                        AtomMode::Smoothed(kernel.smoothed(delta).expect("singular kernel"))
                    }
                },
                SingularPolicy::CellAverage => AtomMode::CellDiag {
                    widths: design
                        .cell_widths()
                        .map(|w| w.to_vec())
                        .unwrap_or_else(|| design.voronoi_widths()),
                },
                SingularPolicy::Error => AtomMode::Strict,
            }
        };
        AtomKernel {
            kernel,
            support: design.support(),
            mode,
        }
    }

    /// K̂(x, atom_j); `x` need not belong to the design.
    pub(crate) fn at(&self, x: f64, j: usize) -> Result<f64> {
        let xj = self.support[j];
        match &self.mode {
            AtomMode::Plain => Ok(self.kernel.eval(x, xj)),
            AtomMode::Box { half_widths } => {
                if x == xj {
                    Ok(self.kernel.square_cell_average(2.0 * half_widths[j], x))
                } else {
                    Ok(self.kernel.box_average(x - xj, half_widths[j]))
                }
            }
            AtomMode::Smoothed(k) => Ok(k.eval(x, xj)),
            AtomMode::CellDiag { widths } => {
                if x == xj {
                    Ok(self.kernel.square_cell_average(widths[j], x))
                } else {
                    Ok(self.kernel.eval(x, xj))
                }
            }
            AtomMode::Strict => {
                if x == xj {
                    Err(Error::SmoothingRequired {
                        context: "coinciding atoms of a singular kernel",
                    })
                } else {
                    Ok(self.kernel.eval(x, xj))
                }
            }
        }
    }

}

/// Symmetrized kernel matrix on the support of one design.
pub(crate) fn support_kernel_matrix(
    design: &Design,
    kernel: &CovarianceKernel,
    policy: SingularPolicy,
) -> Result<DMatrix<f64>> {
    let ak = AtomKernel::new(kernel, design, policy);
    let n = design.len();
    let xs = design.support();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = if i == j {
                ak.at(xs[i], i)?
            } else {
                0.5 * (ak.at(xs[i], j)? + ak.at(xs[j], i)?)
            };
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Kernel moment matrix B(ξ, ν). For ξ = ν prefer [`cov_matrix`], which
/// symmetrizes and derives Λ and D as well.
pub fn b_matrix(
    xi: &Design,
    nu: &Design,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    policy: SingularPolicy,
) -> Result<DMatrix<f64>> {
    let m = basis.dim();
    let ak = AtomKernel::new(kernel, nu, policy);
    let f_nu: Vec<DVector<f64>> = nu
        .support()
        .iter()
        .map(|&y| basis.eval(y))
        .collect::<Result<_>>()?;
    let mut acc = DMatrix::zeros(m, m);
    for (&x, &w) in xi.support().iter().zip(xi.weights()) {
        let fx = basis.eval(x)?;
        // h = Σ_j v_j K̂(x, y_j) f(y_j)
        let mut h = DVector::zeros(m);
        for (j, (fy, &v)) in f_nu.iter().zip(nu.weights()).enumerate() {
            h.axpy(v * ak.at(x, j)?, fy, 1.0);
        }
        acc.ger(w, &fx, &h, 1.0);
    }
    Ok(acc)
}

fn basis_at_support(design: &Design, basis: &RegressionBasis) -> Result<Vec<DVector<f64>>> {
    design.support().iter().map(|&x| basis.eval(x)).collect()
}

/// Full moment set (M, B, Λ, D) of a design.
pub fn cov_matrix(
    design: &Design,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    policy: SingularPolicy,
) -> Result<MomentSet> {
    let m = basis.dim();
    let fs = basis_at_support(design, basis)?;
    let w = design.weights();

    let mut info = DMatrix::zeros(m, m);
    for (f, &wi) in fs.iter().zip(w) {
        info.ger(wi, f, f, 1.0);
    }
    let info = (&info + info.transpose()) * 0.5;

    let kmat = support_kernel_matrix(design, kernel, policy)?;
    let n = design.len();
    let mut b = DMatrix::zeros(m, m);
    for i in 0..n {
        let mut h = DVector::zeros(m);
        for j in 0..n {
            h.axpy(w[j] * kmat[(i, j)], &fs[j], 1.0);
        }
        b.ger(w[i], &fs[i], &h, 1.0);
    }
    let b = (&b + b.transpose()) * 0.5;

    moment_set_from(info, b)
}

pub(crate) fn moment_set_from(info: DMatrix<f64>, b: DMatrix<f64>) -> Result<MomentSet> {
    let (info_inverse, info_condition) = sym_inverse(&info)?;
    let lambda = &b * &info_inverse;
    let covariance = &info_inverse * &b * &info_inverse;
    let covariance = (&covariance + covariance.transpose()) * 0.5;
    let eig_min = covariance
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if eig_min < -1e-10 * covariance.trace().abs() {
        return Err(Error::NotPositiveDefinite(format!(
            "design covariance has eigenvalue {eig_min:.3e}"
        )));
    }
    Ok(MomentSet {
        info,
        kernel_moment: b,
        lambda,
        covariance,
        info_inverse,
        info_condition,
    })
}

/// Moment set of an absolutely continuous design, computed by quadrature in
/// quantile space: with u = a(s), M = ∫₀¹ f f ᵀ ds and
/// B = ∬ K(a(s), a(t)) f(a(s)) f ᵀ(a(t)) ds dt. The inner integral is split
/// at t = s; singular kernels use tanh-sinh on each side, bounded kernels a
/// Gauss–Legendre rule (the split also removes |u−v| kinks).
pub fn cov_matrix_density(
    dd: &DensityDesign,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    quad_n: usize,
) -> Result<MomentSet> {
    let m = basis.dim();
    let rule = quad::gauss_legendre(quad_n.max(16));
    let singular = kernel.is_singular_on_diagonal();

    let s_nodes: Vec<f64> = rule.0.iter().map(|t| 0.5 * (t + 1.0)).collect();
    let s_weights: Vec<f64> = rule.1.iter().map(|w| 0.5 * w).collect();
    let xs: Vec<f64> = s_nodes.iter().map(|&s| dd.quantile(s)).collect();
    let fs: Vec<DVector<f64>> = xs.iter().map(|&x| basis.eval(x)).collect::<Result<_>>()?;

    let mut info = DMatrix::zeros(m, m);
    for (f, &w) in fs.iter().zip(&s_weights) {
        info.ger(w, f, f, 1.0);
    }
    let info = (&info + info.transpose()) * 0.5;

    let inner_budget = quad_n.max(64);
    let mut b = DMatrix::zeros(m, m);
    for (i, (&si, &wi)) in s_nodes.iter().zip(&s_weights).enumerate() {
        let xi = xs[i];
        let mut h = DVector::zeros(m);
        for (lo, hi) in [(0.0, si), (si, 1.0)] {
            if hi - lo < 1e-14 {
                continue;
            }
            let mut acc = DVector::zeros(m);
            let add_node = |acc: &mut DVector<f64>, t: f64, wt: f64| {
                let xt = dd.quantile(t);
                let k = kernel.eval(xi, xt);
                if k.is_finite() {
                    acc.axpy(wt * k, &basis.eval_unchecked(xt), 1.0);
                }
            };
            if singular {
                // tanh-sinh in t; the kernel singularity sits at the endpoint
                quad::tanh_sinh_nodes(lo, hi, inner_budget, |t, wt| add_node(&mut acc, t, wt));
            } else {
                let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                for (t, wt) in rule.0.iter().zip(rule.1.iter()) {
                    add_node(&mut acc, mid + half * t, wt * half);
                }
            }
            h += acc;
        }
        b.ger(wi, &fs[i], &h, 1.0);
    }
    let b = (&b + b.transpose()) * 0.5;
    moment_set_from(info, b)
}

/// Exact finite-sample covariance of the ordinary LSE at `points`:
/// (XᵀX)⁻¹ Xᵀ Σ X (XᵀX)⁻¹ with Σ the kernel Gram matrix.
pub fn exact_lse_cov(
    points: &[f64],
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
) -> Result<DMatrix<f64>> {
    let (x, sigma) = design_matrices(points, basis, kernel)?;
    let xtx = x.transpose() * &x;
    let (xtx_inv, _) = sym_inverse(&xtx)?;
    let a = &xtx_inv * x.transpose();
    Ok(&a * sigma * a.transpose())
}

/// Sandwich covariance of the weighted LSE whose weights come from a guessed
/// kernel while the errors follow the true one:
/// (XᵀΣg⁻¹X)⁻¹ XᵀΣg⁻¹ Σt Σg⁻¹X (XᵀΣg⁻¹X)⁻¹.
pub fn wlse_misspec_cov(
    points: &[f64],
    basis: &RegressionBasis,
    kernel_guess: &CovarianceKernel,
    kernel_true: &CovarianceKernel,
) -> Result<DMatrix<f64>> {
    let (x, sigma_guess) = design_matrices(points, basis, kernel_guess)?;
    let (_, sigma_true) = design_matrices(points, basis, kernel_true)?;
    let chol = sigma_guess
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("guessed kernel Gram matrix".into()))?;
    let sg_inv_x = chol.solve(&x);
    let xtsx = x.transpose() * &sg_inv_x;
    let (xtsx_inv, _) = sym_inverse(&xtsx)?;
    let a = &xtsx_inv * sg_inv_x.transpose();
    Ok(&a * sigma_true * a.transpose())
}

fn design_matrices(
    points: &[f64],
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = points.len();
    let m = basis.dim();
    if n < m {
        return Err(Error::InvalidDesign(format!(
            "need at least m = {m} points, got {n}"
        )));
    }
    if kernel.is_singular_on_diagonal() {
        return Err(Error::SmoothingRequired {
            context: "finite-sample covariance of a singular kernel",
        });
    }
    let mut x = DMatrix::zeros(n, m);
    for (i, &p) in points.iter().enumerate() {
        x.set_row(i, &basis.eval(p)?.transpose());
    }
    let sigma = DMatrix::from_fn(n, n, |i, j| kernel.eval(points[i], points[j]));
    Ok((x, sigma))
}
