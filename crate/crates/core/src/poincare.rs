//! Translation operators: the Poincaré maps `P^Φ_T`, `P^{aΦ}_T`, the history
//! operators `Q^{aΦ}_T`, `𝒬_λ` on a Chebyshev–Lobatto discretization of
//! `C([−r, 0], N)`, shooting residuals and fixed point indices.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::degree::{brouwer_degree, DegreeOptions, DegreeResult};
use crate::error::{Error, Result};
use crate::fields::ProblemSpec;
use crate::integrate::{
    check_lambda, integrate_dde_with_breakpoints, integrate_ode, integrate_ode_with_breakpoints,
    HistorySegment, IntegrateOptions, TrajectorySegment,
};
use crate::linalg::norm_inf;
use crate::map::VectorMap;
use crate::region::BoxRegion;

pub const DEFAULT_NODES: usize = 16;

/// Chebyshev–Lobatto nodes `θ₀ = −r < … < θ_m = 0` with barycentric weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryDiscretization {
    m: usize,
    lag: f64,
    nodes: Vec<f64>,
    #[serde(skip)]
    weights: Vec<f64>,
}

impl HistoryDiscretization {
    pub fn new(m: usize, lag: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidProblem(
                "history needs at least two nodes".into(),
            ));
        }
        if !(lag > 0.0 && lag.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "lag must be positive, got {lag}"
            )));
        }
        let mut nodes: Vec<f64> = (0..=m)
            .map(|j| {
                let x = -(PI * j as f64 / m as f64).cos();
                0.5 * lag * (x - 1.0)
            })
            .collect();
        nodes[0] = -lag;
        nodes[m] = 0.0;
        if m.is_multiple_of(2) {
            nodes[m / 2] = -0.5 * lag;
        }
        let weights = (0..=m)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == m {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();
        Ok(Self {
            m,
            lag,
            nodes,
            weights,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn lag(&self) -> f64 {
        self.lag
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.m + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Barycentric interpolation of node values (`dim` per node) at `t ∈ [−r, 0]`.
    pub fn interpolate(&self, values: &[f64], dim: usize, t: f64, out: &mut [f64]) {
        if let Some(j) = self.nodes.iter().position(|&x| x == t) {
            out.copy_from_slice(&values[j * dim..(j + 1) * dim]);
            return;
        }
        out.fill(0.0);
        let mut denom = 0.0;
        for (j, (&x, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let c = w / (t - x);
            denom += c;
            for (o, v) in out.iter_mut().zip(&values[j * dim..(j + 1) * dim]) {
                *o += c * v;
            }
        }
        out.iter_mut().for_each(|o| *o /= denom);
    }

    /// Derivative of the interpolant at `t`.
    pub fn derivative(&self, values: &[f64], dim: usize, t: f64, out: &mut [f64]) {
        out.fill(0.0);
        if let Some(i) = self.nodes.iter().position(|&x| x == t) {
            let yi = &values[i * dim..(i + 1) * dim];
            for j in (0..self.len()).filter(|&j| j != i) {
                let c = self.weights[j] / self.weights[i] / (self.nodes[i] - self.nodes[j]);
                for (k, o) in out.iter_mut().enumerate() {
                    *o += c * (values[j * dim + k] - yi[k]);
                }
            }
            return;
        }
        let mut p = vec![0.0; dim];
        self.interpolate(values, dim, t, &mut p);
        let mut denom = 0.0;
        for (j, (&x, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let c = w / (t - x);
            denom += c;
            for k in 0..dim {
                out[k] += c * (p[k] - values[j * dim + k]) / (t - x);
            }
        }
        out.iter_mut().for_each(|o| *o /= denom);
    }
}

/// A history `φ ∈ C([−r, 0], N)` represented by its values at the nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizedHistory {
    disc: Arc<HistoryDiscretization>,
    dim: usize,
    values: Vec<f64>,
}

impl DiscretizedHistory {
    pub fn new(disc: Arc<HistoryDiscretization>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != disc.len() * dim {
            return Err(Error::Dimension {
                expected: disc.len() * dim,
                got: values.len(),
            });
        }
        Ok(Self { disc, dim, values })
    }

    pub fn constant(disc: Arc<HistoryDiscretization>, point: &[f64]) -> Self {
        let values = point.repeat(disc.len());
        Self {
            dim: point.len(),
            disc,
            values,
        }
    }

    pub fn from_fn<F: Fn(f64) -> Vec<f64>>(
        disc: Arc<HistoryDiscretization>,
        dim: usize,
        f: F,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(disc.len() * dim);
        for &t in disc.nodes() {
            let v = f(t);
            if v.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: v.len(),
                });
            }
            values.extend(v);
        }
        Ok(Self { disc, dim, values })
    }

    /// Samples `seg` at `shift + θⱼ`.
    pub fn sample(
        disc: Arc<HistoryDiscretization>,
        seg: &TrajectorySegment,
        shift: f64,
    ) -> Result<Self> {
        let dim = seg.dim();
        let mut values = vec![0.0; disc.len() * dim];
        for (j, &t) in disc.nodes().iter().enumerate() {
            seg.eval_into(shift + t, &mut values[j * dim..(j + 1) * dim])?;
        }
        Ok(Self { disc, dim, values })
    }

    pub fn disc(&self) -> &HistoryDiscretization {
        &self.disc
    }

    pub fn shared_disc(&self) -> Arc<HistoryDiscretization> {
        self.disc.clone()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// `φ(0)`.
    pub fn at_zero(&self) -> &[f64] {
        self.value(self.disc.m())
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let r = self.disc.lag();
        let slack = 1e-12 * (1.0 + r);
        if !(t >= -r - slack && t <= slack) {
            return Err(Error::OutOfSegment { t, t0: -r, t1: 0.0 });
        }
        self.disc
            .interpolate(&self.values, self.dim, t.clamp(-r, 0.0), out);
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Nodes, states and derivatives at `per_interval` points per node interval.
    pub(crate) fn hermite_samples(&self, per_interval: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let nodes = self.disc.nodes();
        let mut ts = Vec::new();
        for w in nodes.windows(2) {
            for i in 0..per_interval {
                ts.push(w[0] + (w[1] - w[0]) * i as f64 / per_interval as f64);
            }
        }
        ts.push(0.0);
        let mut states = vec![0.0; ts.len() * self.dim];
        let mut derivs = vec![0.0; ts.len() * self.dim];
        for (i, &t) in ts.iter().enumerate() {
            let d = self.dim;
            self.disc
                .interpolate(&self.values, d, t, &mut states[i * d..(i + 1) * d]);
            self.disc
                .derivative(&self.values, d, t, &mut derivs[i * d..(i + 1) * d]);
        }
        (ts, states, derivs)
    }

    pub fn to_segment(&self) -> HistorySegment {
        HistorySegment::Discretized(self.clone())
    }

    /// `max |φ(θⱼ) − ψ(θⱼ)|`.
    pub fn max_abs_diff(&self, other: &DiscretizedHistory) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn not_in_domain(seg: &TrajectorySegment, t_end: f64) -> Error {
    Error::NotInDomain {
        t_escape: seg.t1(),
        t_end,
    }
}

/// `P^Φ_T(x₀)` (flag off) or `P^{aΦ}_T(x₀)` (flag on).
pub fn poincare_map(
    p: &ProblemSpec,
    use_coefficient: bool,
    x0: &[f64],
    opts: &IntegrateOptions,
) -> Result<Vec<f64>> {
    let opts = IntegrateOptions {
        use_coefficient,
        ..*opts
    };
    let seg = integrate_ode(p, x0, (0.0, p.period()), &opts)?;
    if seg.is_truncated() {
        return Err(not_in_domain(&seg, p.period()));
    }
    Ok(seg.end_state().to_vec())
}

/// `P_T` as a map on ℝⁿ; points where it is undefined evaluate to NaN.
pub fn translation_map(
    p: &ProblemSpec,
    use_coefficient: bool,
    opts: &IntegrateOptions,
) -> VectorMap {
    let p = p.clone();
    let opts = *opts;
    let n = p.dim();
    VectorMap::new(n, n, move |x, out| {
        match poincare_map(&p, use_coefficient, x, &opts) {
            Ok(v) => out.copy_from_slice(&v),
            Err(_) => out.fill(f64::NAN),
        }
    })
}

fn output_times(p: &ProblemSpec, disc: &HistoryDiscretization) -> Result<Vec<f64>> {
    let t = p.period();
    if (disc.lag() - p.lag()).abs() > 1e-12 * (1.0 + p.lag()) {
        return Err(Error::InvalidProblem(format!(
            "history discretization has lag {} but the problem lag is {}",
            disc.lag(),
            p.lag()
        )));
    }
    if t < disc.lag() {
        return Err(Error::InvalidProblem(
            "period must be at least the lag".into(),
        ));
    }
    Ok(disc.nodes().iter().map(|&th| t + th).collect())
}

/// `Q^{aΦ}_T(φ)(θ) = ζ(φ(0), T + θ)`.
pub fn q_operator(
    p: &ProblemSpec,
    phi: &DiscretizedHistory,
    opts: &IntegrateOptions,
) -> Result<DiscretizedHistory> {
    let times = output_times(p, phi.disc())?;
    let seg = integrate_ode_with_breakpoints(p, phi.at_zero(), (0.0, p.period()), &times, opts)?;
    if seg.is_truncated() {
        return Err(not_in_domain(&seg, p.period()));
    }
    DiscretizedHistory::sample(phi.shared_disc(), &seg, p.period())
}

/// `𝒬_λ(φ)` together with the solution over `[−r, T]`.
pub fn lambda_translation_with_orbit(
    p: &ProblemSpec,
    lambda: f64,
    phi: &DiscretizedHistory,
    opts: &IntegrateOptions,
) -> Result<(DiscretizedHistory, TrajectorySegment)> {
    check_lambda(lambda)?;
    translation_with_orbit(p, lambda, phi, opts)
}

pub(crate) fn translation_with_orbit(
    p: &ProblemSpec,
    lambda: f64,
    phi: &DiscretizedHistory,
    opts: &IntegrateOptions,
) -> Result<(DiscretizedHistory, TrajectorySegment)> {
    let times = output_times(p, phi.disc())?;
    let seg =
        integrate_dde_with_breakpoints(p, lambda, &phi.to_segment(), p.period(), &times, opts)?;
    if seg.is_truncated() {
        return Err(not_in_domain(&seg, p.period()));
    }
    let image = DiscretizedHistory::sample(phi.shared_disc(), &seg, p.period())?;
    Ok((image, seg))
}

/// `𝒬_λ(φ)(θ) = ξ^λ(φ, T + θ)`.
pub fn lambda_translation(
    p: &ProblemSpec,
    lambda: f64,
    phi: &DiscretizedHistory,
    opts: &IntegrateOptions,
) -> Result<DiscretizedHistory> {
    lambda_translation_with_orbit(p, lambda, phi, opts).map(|(image, _)| image)
}

/// `𝒬_λ(φ) − φ`, flattened node by node.
pub fn shooting_residual(
    p: &ProblemSpec,
    lambda: f64,
    phi: &DiscretizedHistory,
    opts: &IntegrateOptions,
) -> Result<Vec<f64>> {
    let image = lambda_translation(p, lambda, phi, opts)?;
    Ok(image
        .values
        .iter()
        .zip(&phi.values)
        .map(|(a, b)| a - b)
        .collect())
}

/// Options for fixed point index computations.
#[derive(Debug, Clone, Copy)]
pub struct IndexOptions {
    pub degree: DegreeOptions,
    /// Boundary points must satisfy `‖map(x) − x‖∞ > 10·tol`.
    pub tol: f64,
}

impl Default for IndexOptions {
    fn default() -> Self {
        Self {
            degree: DegreeOptions::default(),
            tol: 1e-8,
        }
    }
}

/// Fixed point index of `map` on `region`, as the degree of `id − map`.
pub fn fixed_point_index_report(
    map: &VectorMap,
    region: &BoxRegion,
    opts: &IndexOptions,
) -> Result<DegreeResult> {
    let n = region.dim();
    if map.dim_in() != n || map.dim_out() != n {
        return Err(Error::Dimension {
            expected: n,
            got: map.dim_out(),
        });
    }
    for x in region.boundary_samples(64 * n) {
        let y = map.eval(&x);
        let gap = norm_inf(&y.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
        if !(gap > 10.0 * opts.tol) {
            return Err(Error::Admissibility(format!(
                "map nearly fixes boundary point {x:?} (gap {gap:e})"
            )));
        }
    }
    let inner = map.clone();
    let displacement = VectorMap::new(n, n, move |x, out| {
        inner.eval_into(x, out);
        for (o, v) in out.iter_mut().zip(x) {
            *o = v - *o;
        }
    });
    brouwer_degree(&displacement, region, &opts.degree)
}

/// Fixed point index of `map` on `region`; uncertified results are errors.
pub fn fixed_point_index(map: &VectorMap, region: &BoxRegion, opts: &IndexOptions) -> Result<i64> {
    let report = fixed_point_index_report(map, region, opts)?;
    if !report.certified {
        return Err(Error::Uncertified(report.diagnostics.join("; ")));
    }
    Ok(report.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Block, DelayPerturbation, PeriodicCoefficient, StateSpace};

    fn problem(
        period: f64,
        lag: f64,
        a: PeriodicCoefficient,
        phi: fn(f64) -> f64,
        h: fn(f64, f64, f64) -> f64,
    ) -> ProblemSpec {
        let _ = period;
        ProblemSpec::new(
            "scalar",
            StateSpace::Flat { dim: 1 },
            VectorMap::new(1, 1, move |x, o| o[0] = phi(x[0])),
            vec![Block {
                dim: 1,
                coefficient: a,
            }],
            DelayPerturbation::new(lag, 1, 1, move |t, x, xr, o| o[0] = h(t, x[0], xr[0])),
        )
        .unwrap()
    }

    #[test]
    fn lobatto_nodes_and_polynomial_exactness() {
        let d = HistoryDiscretization::new(16, 0.5).unwrap();
        assert_eq!(d.nodes()[0], -0.5);
        assert_eq!(d.nodes()[16], 0.0);
        assert!(d.nodes().windows(2).all(|w| w[0] < w[1]));
        let poly = |t: f64| 1.0 - 3.0 * t + t.powi(5) - 2.0 * t.powi(16);
        let values: Vec<f64> = d.nodes().iter().map(|&t| poly(t)).collect();
        let mut out = [0.0];
        for t in [-0.49, -0.3, -0.123, -0.01] {
            d.interpolate(&values, 1, t, &mut out);
            assert!((out[0] - poly(t)).abs() < 1e-12);
            d.derivative(&values, 1, t, &mut out);
            let dp = -3.0 + 5.0 * t.powi(4) - 32.0 * t.powi(15);
            assert!((out[0] - dp).abs() < 1e-9);
        }
        d.derivative(&values, 1, 0.0, &mut out);
        assert!((out[0] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn poincare_examples() {
        let t = 2f64.ln();
        let one = PeriodicCoefficient::constant(t, 1.0).unwrap();
        let p = problem(t, t, one, |x| -x, |_, _, _| 0.0);
        let opts = IntegrateOptions::default();
        assert!((poincare_map(&p, true, &[1.0], &opts).unwrap()[0] - 0.5).abs() < 1e-10);
        let a = PeriodicCoefficient::new(t, move |s| 1.0 + (2.0 * PI * s / t).sin()).unwrap();
        let p = problem(t, t, a, |x| -x, |_, _, _| 0.0);
        assert!((poincare_map(&p, true, &[1.0], &opts).unwrap()[0] - 0.5).abs() < 1e-8);
        let zero = problem(
            1.0,
            1.0,
            PeriodicCoefficient::constant(1.0, 1.0).unwrap(),
            |_| 0.0,
            |_, _, _| 0.0,
        );
        assert_eq!(poincare_map(&zero, true, &[0.3], &opts).unwrap(), vec![0.3]);
    }

    #[test]
    fn q_operator_examples() {
        let p = problem(
            1.0,
            0.5,
            PeriodicCoefficient::constant(1.0, 1.0).unwrap(),
            |x| -x,
            |_, _, _| 1.0,
        );
        let disc = Arc::new(HistoryDiscretization::new(DEFAULT_NODES, 0.5).unwrap());
        let opts = IntegrateOptions::default();
        let phi = DiscretizedHistory::constant(disc.clone(), &[1.0]);
        let q = q_operator(&p, &phi, &opts).unwrap();
        for (j, &th) in disc.nodes().iter().enumerate() {
            assert!((q.value(j)[0] - (-(1.0 + th)).exp()).abs() < 1e-9);
        }
        let other =
            DiscretizedHistory::from_fn(disc.clone(), 1, |t| vec![1.0 + t * (t + 0.5) * 3.0])
                .unwrap();
        assert_eq!(q_operator(&p, &other, &opts).unwrap(), q);

        let lam = lambda_translation(&p, 1.0, &phi, &opts).unwrap();
        assert!(lam.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let lam0 = lambda_translation(&p, 0.0, &phi, &opts).unwrap();
        assert!(lam0.max_abs_diff(&q) < 1e-10);
    }

    #[test]
    fn forced_decay_transient_and_periodic_orbit() {
        let t = 2.0 * PI;
        let p = problem(
            t,
            1.0,
            PeriodicCoefficient::constant(t, 1.0).unwrap(),
            |x| -x,
            |s, _, _| s.sin(),
        );
        let disc = Arc::new(HistoryDiscretization::new(DEFAULT_NODES, 1.0).unwrap());
        let opts = IntegrateOptions::default();
        let zero = DiscretizedHistory::constant(disc.clone(), &[0.0]);
        let image = lambda_translation(&p, 1.0, &zero, &opts).unwrap();
        let exact = |s: f64| 0.5 * (s.sin() - s.cos()) + 0.5 * (-s).exp();
        for (j, &th) in disc.nodes().iter().enumerate() {
            assert!((image.value(j)[0] - exact(t + th)).abs() < 1e-8);
        }
        let orbit =
            DiscretizedHistory::from_fn(disc.clone(), 1, |s| vec![0.5 * (s.sin() - s.cos())])
                .unwrap();
        let res = shooting_residual(&p, 1.0, &orbit, &opts).unwrap();
        assert!(norm_inf(&res) <= 1e-8);
        let far = DiscretizedHistory::from_fn(disc, 1, |s| vec![3.0 + s]).unwrap();
        assert!(norm_inf(&shooting_residual(&p, 1.0, &far, &opts).unwrap()) > 0.1);
    }

    #[test]
    fn index_examples() {
        let region = BoxRegion::cube(2, 1.0).unwrap();
        let half = VectorMap::new(2, 2, |x, o| {
            o[0] = 0.5 * x[0];
            o[1] = 0.5 * x[1];
        });
        assert_eq!(
            fixed_point_index(&half, &region, &IndexOptions::default()).unwrap(),
            1
        );

        let interval = BoxRegion::cube(1, 1.0).unwrap();
        let one = PeriodicCoefficient::constant(1.0, 1.0).unwrap();
        let decay = problem(1.0, 1.0, one.clone(), |x| -x, |_, _, _| 0.0);
        let growth = problem(1.0, 1.0, one, |x| x, |_, _, _| 0.0);
        let opts = IntegrateOptions::default();
        let io = IndexOptions::default();
        assert_eq!(
            fixed_point_index(&translation_map(&decay, false, &opts), &interval, &io).unwrap(),
            1
        );
        assert_eq!(
            fixed_point_index(&translation_map(&growth, false, &opts), &interval, &io).unwrap(),
            -1
        );
    }

    #[test]
    fn boundary_fixed_point_rejected() {
        let region = BoxRegion::cube(1, 1.0).unwrap();
        let id = VectorMap::new(1, 1, |x, o| o[0] = x[0]);
        assert!(matches!(
            fixed_point_index(&id, &region, &IndexOptions::default()),
            Err(Error::Admissibility(_))
        ));
    }
}
