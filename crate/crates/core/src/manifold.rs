//! Implicitly defined manifolds `M = g⁻¹(0) ⊂ ℝᵏ × ℝˢ` and the reduction of
//! ℝᵏ-valued fields to tangent fields on `M`.
//!
//! Points are stored as ambient coordinates `(x, y)` with `x ∈ ℝᵏ` and
//! `y ∈ ℝˢ`. Every reduction requires `∂₂g` (the Jacobian of `g` in `y`) to
//! be invertible at the point; this is checked pointwise through its
//! smallest singular value.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::Polynomial;
use crate::linalg::{min_singular_value, norm_inf};
use crate::map::VectorMap;
use crate::region::BoxRegion;

pub const DEFAULT_CONSTRAINT_TOL: f64 = 1e-9;
/// Smallest singular value of `∂₂g` below which a reduction is refused.
pub const SINGULAR_FLOOR: f64 = 1e-10;
const PROJECTION_MAX_ITERS: usize = 25;
const PROJECTION_STEP_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct ImplicitManifold {
    k: usize,
    s: usize,
    ambient_box: BoxRegion,
    g: VectorMap,
    constraint_tol: f64,
}

impl ImplicitManifold {
    /// `g` maps ℝ^{k+s} to ℝˢ. Its Jacobian is used for `∂₁g` and `∂₂g`
    /// (analytic when `g` carries one, central differences otherwise).
    pub fn new(k: usize, ambient_box: BoxRegion, g: VectorMap) -> Result<Self> {
        let s = g.dim_out();
        if k == 0 || s == 0 {
            return Err(Error::InvalidProblem(format!(
                "implicit manifold needs k > 0 and s > 0 (k = {k}, s = {s})"
            )));
        }
        if g.dim_in() != k + s {
            return Err(Error::Dimension {
                expected: k + s,
                got: g.dim_in(),
            });
        }
        if ambient_box.dim() != k + s {
            return Err(Error::Dimension {
                expected: k + s,
                got: ambient_box.dim(),
            });
        }
        Ok(Self {
            k,
            s,
            ambient_box,
            g,
            constraint_tol: DEFAULT_CONSTRAINT_TOL,
        })
    }

    /// Constraint rows given as polynomials in the `k + s` ambient coordinates.
    pub fn from_polynomials(
        k: usize,
        ambient_box: BoxRegion,
        rows: Vec<Polynomial>,
    ) -> Result<Self> {
        let n = ambient_box.dim();
        let g = VectorMap::from_polynomials(n, rows)?;
        Self::new(k, ambient_box, g)
    }

    pub fn with_constraint_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol >= 0.0 && tol.is_finite()) {
            return Err(Error::InvalidProblem(format!("constraint_tol {tol}")));
        }
        self.constraint_tol = tol;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn ambient_dim(&self) -> usize {
        self.k + self.s
    }

    pub fn ambient_box(&self) -> &BoxRegion {
        &self.ambient_box
    }

    pub fn constraint_tol(&self) -> f64 {
        self.constraint_tol
    }

    pub fn constraint(&self) -> &VectorMap {
        &self.g
    }

    pub fn g(&self, p: &[f64]) -> Vec<f64> {
        self.g.eval(p)
    }

    /// `(∂₁g(p), ∂₂g(p))`, of shapes `s×k` and `s×s`.
    pub fn partials(&self, p: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let jac = self.g.jacobian(p);
        (
            jac.columns(0, self.k).into_owned(),
            jac.columns(self.k, self.s).into_owned(),
        )
    }

    /// `‖g(p)‖∞`.
    pub fn residual(&self, p: &[f64]) -> Result<f64> {
        self.ambient_box.check(p)?;
        Ok(norm_inf(&self.g(p)))
    }

    pub fn is_on(&self, p: &[f64]) -> bool {
        self.ambient_box.contains(p) && norm_inf(&self.g(p)) <= self.constraint_tol
    }

    /// The `s×k` matrix `−(∂₂g)⁻¹ ∂₁g` at `p`.
    pub fn reduction_matrix(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let (d1, d2) = self.partials(p);
        let sigma_min = min_singular_value(&d2);
        if !(sigma_min > SINGULAR_FLOOR) {
            return Err(Error::SingularReduction { sigma_min });
        }
        let inv = d2
            .try_inverse()
            .ok_or(Error::SingularReduction { sigma_min })?;
        Ok(-(inv * d1))
    }

    /// Completes `u ∈ ℝᵏ` to `(u, −(∂₂g)⁻¹∂₁g u)` without checking that `p` is on `M`.
    pub(crate) fn lift_unchecked(&self, p: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        let red = self.reduction_matrix(p)?;
        out[..self.k].copy_from_slice(u);
        for i in 0..self.s {
            out[self.k + i] = (0..self.k).map(|j| red[(i, j)] * u[j]).sum();
        }
        Ok(())
    }

    /// The tangent vector at `p` whose x-part is `u`.
    pub fn tangent_lift(&self, p: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let residual = self.residual(p)?;
        if residual > self.constraint_tol {
            return Err(Error::NotOnManifold {
                residual,
                tol: self.constraint_tol,
            });
        }
        if u.len() != self.k {
            return Err(Error::Dimension {
                expected: self.k,
                got: u.len(),
            });
        }
        let mut out = vec![0.0; self.ambient_dim()];
        self.lift_unchecked(p, u, &mut out)?;
        Ok(out)
    }

    /// Newton iteration on `g(x, ·) = 0` with `x` frozen. Both `p` and the
    /// result must lie in the ambient box.
    pub fn project(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.ambient_box.check(p)?;
        let q = self.project_unchecked(p)?;
        self.ambient_box.check(&q)?;
        Ok(q)
    }

    pub(crate) fn project_unchecked(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut q = p.to_vec();
        let mut residual = norm_inf(&self.g(&q));
        if residual == 0.0 {
            return Ok(q);
        }
        for _ in 0..PROJECTION_MAX_ITERS {
            let (_, d2) = self.partials(&q);
            let sigma_min = min_singular_value(&d2);
            if !(sigma_min > SINGULAR_FLOOR) {
                return Err(Error::SingularReduction { sigma_min });
            }
            let rhs = self.g(&q);
            let step =
                crate::linalg::solve(&d2, &rhs).ok_or(Error::SingularReduction { sigma_min })?;
            for (yi, di) in q[self.k..].iter_mut().zip(&step) {
                *yi -= di;
            }
            residual = norm_inf(&self.g(&q));
            if !residual.is_finite() {
                break;
            }
            if norm_inf(&step) < PROJECTION_STEP_TOL || residual == 0.0 {
                if residual <= self.constraint_tol {
                    return Ok(q);
                }
                break;
            }
        }
        Err(Error::Projection {
            iterations: PROJECTION_MAX_ITERS,
            residual,
        })
    }

    /// Builds the tangent field `Φ(p) = (f(p), −(∂₂g)⁻¹∂₁g f(p))` from `f: U → ℝᵏ`.
    pub fn lift_field(&self, f: VectorMap) -> Result<LiftedField> {
        if f.dim_in() != self.ambient_dim() || f.dim_out() != self.k {
            return Err(Error::InvalidProblem(format!(
                "field must map ℝ^{} to ℝ^{}, got ℝ^{} → ℝ^{}",
                self.ambient_dim(),
                self.k,
                f.dim_in(),
                f.dim_out()
            )));
        }
        Ok(LiftedField {
            manifold: self.clone(),
            f,
        })
    }

    /// Deterministic points on `M`: Halton samples of the x-part of the box,
    /// with y started at the box centre and projected. Points whose projection
    /// fails or leaves the box are skipped.
    pub fn sample_points(&self, count: usize) -> Vec<Vec<f64>> {
        let center = self.ambient_box.center();
        let mut out = Vec::with_capacity(count);
        let mut j = 0;
        while out.len() < count && j < 50 * count.max(1) {
            j += 1;
            let mut p = center.clone();
            for i in 0..self.k {
                let u = crate::region::halton(j, [2, 3, 5, 7, 11, 13][i % 6]);
                p[i] = self.ambient_box.lo()[i]
                    + u * (self.ambient_box.hi()[i] - self.ambient_box.lo()[i]);
            }
            if let Ok(q) = self.project_unchecked(&p) {
                if self.ambient_box.contains(&q) && self.reduction_matrix(&q).is_ok() {
                    out.push(q);
                }
            }
        }
        out
    }
}

/// A tangent field on an implicit manifold obtained from an ℝᵏ-valued map on `U`.
#[derive(Debug, Clone)]
pub struct LiftedField {
    manifold: ImplicitManifold,
    f: VectorMap,
}

impl LiftedField {
    pub fn manifold(&self) -> &ImplicitManifold {
        &self.manifold
    }

    pub fn base(&self) -> &VectorMap {
        &self.f
    }

    pub fn eval(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.manifold.ambient_box.check(p)?;
        let mut out = vec![0.0; self.manifold.ambient_dim()];
        self.eval_into(p, &mut out)?;
        Ok(out)
    }

    pub(crate) fn eval_into(&self, p: &[f64], out: &mut [f64]) -> Result<()> {
        let u = self.f.eval(p);
        self.manifold.lift_unchecked(p, &u, out)
    }
}
