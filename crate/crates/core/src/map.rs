use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::Polynomial;

pub type MapFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A map ℝᵐ → ℝⁿ with an optional analytic Jacobian.
///
/// Without an analytic Jacobian, [`jacobian`](Self::jacobian) falls back to
/// central differences with step `1e-6·(1+|xᵢ|)`.
#[derive(Clone)]
pub struct VectorMap {
    dim_in: usize,
    dim_out: usize,
    f: MapFn,
    jac: Option<JacobianFn>,
}

impl fmt::Debug for VectorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorMap")
            .field("dim_in", &self.dim_in)
            .field("dim_out", &self.dim_out)
            .field("analytic_jacobian", &self.jac.is_some())
            .finish()
    }
}

impl VectorMap {
    pub fn new<F>(dim_in: usize, dim_out: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            dim_in,
            dim_out,
            f: Arc::new(f),
            jac: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jac = Some(Arc::new(jac));
        self
    }

    /// The linear map `x ↦ A x`.
    pub fn linear(a: DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        let a2 = a.clone();
        Self::new(cols, rows, move |x, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..cols).map(|j| a[(i, j)] * x[j]).sum();
            }
        })
        .with_jacobian(move |_| a2.clone())
    }

    /// One polynomial per output component, with the exact Jacobian.
    pub fn from_polynomials(nvars: usize, rows: Vec<Polynomial>) -> Result<Self> {
        for row in &rows {
            row.check(nvars)?;
        }
        let derivs: Vec<Vec<Polynomial>> = rows
            .iter()
            .map(|p| (0..nvars).map(|v| p.derivative(v)).collect())
            .collect();
        let dim_out = rows.len();
        let rows = Arc::new(rows);
        Ok(Self::new(nvars, dim_out, move |x, out| {
            for (o, p) in out.iter_mut().zip(rows.iter()) {
                *o = p.eval(x);
            }
        })
        .with_jacobian(move |x| DMatrix::from_fn(dim_out, nvars, |i, j| derivs[i][j].eval(x))))
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_out];
        (self.f)(x, &mut out);
        out
    }

    pub fn checked_eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim_in {
            return Err(Error::Dimension {
                expected: self.dim_in,
                got: x.len(),
            });
        }
        Ok(self.eval(x))
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.jac {
            Some(j) => j(x),
            None => self.fd_jacobian(x),
        }
    }

    /// Central-difference Jacobian, ignoring any analytic one.
    pub fn fd_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.dim_out, self.dim_in);
        let mut probe = x.to_vec();
        let mut plus = vec![0.0; self.dim_out];
        let mut minus = vec![0.0; self.dim_out];
        for j in 0..self.dim_in {
            let h = 1e-6 * (1.0 + x[j].abs());
            probe[j] = x[j] + h;
            (self.f)(&probe, &mut plus);
            probe[j] = x[j] - h;
            (self.f)(&probe, &mut minus);
            probe[j] = x[j];
            for i in 0..self.dim_out {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        jac
    }

    /// `x ↦ c·f(x)`.
    pub fn scaled(&self, c: f64) -> Self {
        let f = self.f.clone();
        let jac = self.jac.clone();
        Self {
            dim_in: self.dim_in,
            dim_out: self.dim_out,
            f: Arc::new(move |x, out| {
                f(x, out);
                out.iter_mut().for_each(|o| *o *= c);
            }),
            jac: jac.map(|j| -> JacobianFn { Arc::new(move |x| j(x) * c) }),
        }
    }
}
