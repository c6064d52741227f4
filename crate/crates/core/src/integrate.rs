//! Adaptive Dormand–Prince 5(4) integration with cubic Hermite dense
//! output, manifold projection after each accepted step, and the method
//! of steps for the delay equation.

use crate::error::{Error, Result};
use crate::fields::ProblemSpec;
use crate::linalg::norm_inf;
use crate::poincare::DiscretizedHistory;

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Order-4 continuous extension; its gap to the cubic Hermite interpolant
/// at the step midpoint is `h·Σ dᵢkᵢ / 16`.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
/// Relative slack allowed when a lookup lands a rounding error past a segment end.
const LOOKUP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    /// Local error tolerance, used as both absolute and relative tolerance.
    pub tol: f64,
    /// States with `‖x‖∞` above this radius truncate the trajectory.
    pub escape_radius: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Multiply the field by the periodic coefficients (`aΦ`) or not (`Φ`).
    pub use_coefficient: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            escape_radius: 1e8,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
            use_coefficient: true,
        }
    }
}

/// A dense-output solution piece on `[t0, t1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegment {
    dim: usize,
    nodes: Vec<f64>,
    states: Vec<f64>,
    d_left: Vec<f64>,
    d_right: Vec<f64>,
    max_constraint_residual: f64,
    truncated: bool,
}

impl TrajectorySegment {
    fn empty(dim: usize) -> Self {
        Self {
            dim,
            nodes: Vec::new(),
            states: Vec::new(),
            d_left: Vec::new(),
            d_right: Vec::new(),
            max_constraint_residual: 0.0,
            truncated: false,
        }
    }

    fn push(&mut self, t: f64, y: &[f64], d_left: &[f64], d_right: &[f64]) {
        self.nodes.push(t);
        self.states.extend_from_slice(y);
        self.d_left.extend_from_slice(d_left);
        self.d_right.extend_from_slice(d_right);
    }

    fn set_right_derivative(&mut self, i: usize, d: &[f64]) {
        self.d_right[i * self.dim..(i + 1) * self.dim].copy_from_slice(d);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t0(&self) -> f64 {
        self.nodes[0]
    }

    pub fn t1(&self) -> f64 {
        *self.nodes.last().expect("segment has nodes")
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn end_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.max_constraint_residual
    }

    /// Set when the solution escaped before the requested end time.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// `max ‖x(tᵢ)‖∞` over the mesh.
    pub fn max_norm(&self) -> f64 {
        norm_inf(&self.states)
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let (t0, t1) = (self.t0(), self.t1());
        let slack = LOOKUP_SLACK * (1.0 + t0.abs().max(t1.abs()));
        if !(t >= t0 - slack && t <= t1 + slack) {
            return Err(Error::OutOfSegment { t, t0, t1 });
        }
        let t = t.clamp(t0, t1);
        let n = self.len();
        if n == 1 {
            out.copy_from_slice(self.state(0));
            return Ok(());
        }
        let i = self
            .nodes
            .partition_point(|&x| x <= t)
            .saturating_sub(1)
            .min(n - 2);
        let (ta, tb) = (self.nodes[i], self.nodes[i + 1]);
        if t == ta {
            out.copy_from_slice(self.state(i));
            return Ok(());
        }
        if t == tb {
            out.copy_from_slice(self.state(i + 1));
            return Ok(());
        }
        let h = tb - ta;
        let s = (t - ta) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let d = self.dim;
        let (ya, yb) = (
            &self.states[i * d..(i + 1) * d],
            &self.states[(i + 1) * d..(i + 2) * d],
        );
        let (da, db) = (
            &self.d_right[i * d..(i + 1) * d],
            &self.d_left[(i + 1) * d..(i + 2) * d],
        );
        for c in 0..d {
            out[c] = h00 * ya[c] + h10 * h * da[c] + h01 * yb[c] + h11 * h * db[c];
        }
        Ok(())
    }

    /// Concatenates `self` followed by `next`, which must start at `self.t1()` with the same state.
    fn append(&mut self, next: &TrajectorySegment) -> Result<()> {
        if next.t0() != self.t1() {
            return Err(Error::InterpolantGap { t: next.t0() });
        }
        let last = self.len() - 1;
        self.set_right_derivative(last, &next.d_right[..self.dim]);
        let d = self.dim;
        self.nodes.extend_from_slice(&next.nodes[1..]);
        self.states.extend_from_slice(&next.states[d..]);
        self.d_left.extend_from_slice(&next.d_left[d..]);
        self.d_right.extend_from_slice(&next.d_right[d..]);
        self.max_constraint_residual = self
            .max_constraint_residual
            .max(next.max_constraint_residual);
        self.truncated |= next.truncated;
        Ok(())
    }
}

/// Initial data `φ` on `[−r, 0]` for the delay equation.
#[derive(Debug, Clone, PartialEq)]
pub enum HistorySegment {
    Trajectory(TrajectorySegment),
    Discretized(DiscretizedHistory),
}

/// The constant history `p̃(θ) = p` on `[−r, 0]`.
pub fn constant_history(point: &[f64], r: f64) -> HistorySegment {
    let mut seg = TrajectorySegment::empty(point.len());
    let zero = vec![0.0; point.len()];
    seg.push(-r, point, &zero, &zero);
    seg.push(0.0, point, &zero, &zero);
    HistorySegment::Trajectory(seg)
}

impl HistorySegment {
    /// Wraps a segment that covers exactly `[−r, 0]`.
    pub fn from_trajectory(seg: TrajectorySegment) -> Result<Self> {
        if seg.t1() != 0.0 || seg.t0() >= 0.0 {
            return Err(Error::InvalidProblem(format!(
                "history must cover [-r, 0], got [{}, {}]",
                seg.t0(),
                seg.t1()
            )));
        }
        Ok(HistorySegment::Trajectory(seg))
    }

    pub fn lag(&self) -> f64 {
        match self {
            HistorySegment::Trajectory(s) => -s.t0(),
            HistorySegment::Discretized(h) => h.disc().lag(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            HistorySegment::Trajectory(s) => s.dim(),
            HistorySegment::Discretized(h) => h.dim(),
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        match self {
            HistorySegment::Trajectory(s) => s.eval_into(t, out),
            HistorySegment::Discretized(h) => h.eval_into(t, out),
        }
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    pub fn at_zero(&self) -> Vec<f64> {
        match self {
            HistorySegment::Trajectory(s) => s.end_state().to_vec(),
            HistorySegment::Discretized(h) => h.at_zero().to_vec(),
        }
    }

    fn to_trajectory(&self) -> TrajectorySegment {
        match self {
            HistorySegment::Trajectory(s) => s.clone(),
            HistorySegment::Discretized(h) => {
                let (nodes, states, derivs) = h.hermite_samples(4);
                let mut seg = TrajectorySegment::empty(h.dim());
                for i in 0..nodes.len() {
                    let d = &derivs[i * h.dim()..(i + 1) * h.dim()];
                    seg.push(nodes[i], &states[i * h.dim()..(i + 1) * h.dim()], d, d);
                }
                seg
            }
        }
    }
}

type Rhs<'a> = dyn Fn(&TrajectorySegment, f64, &[f64], &mut [f64]) -> Result<()> + 'a;

/// Shared adaptive stepping loop. Appends nodes to `seg`, whose last node is the start point.
fn run(
    p: &ProblemSpec,
    rhs: &Rhs<'_>,
    seg: &mut TrajectorySegment,
    t1: f64,
    max_step: f64,
    breakpoints: &[f64],
    opts: &IntegrateOptions,
) -> Result<()> {
    let dim = seg.dim;
    let tol = opts.tol;
    let mut t = seg.t1();
    let mut y = seg.end_state().to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    rhs(seg, t, &y, &mut k[0])?;
    let last = seg.len() - 1;
    let k0 = k[0].clone();
    seg.set_right_derivative(last, &k0);
    if seg.len() == 1 {
        seg.d_left[..dim].copy_from_slice(&k0);
    }
    let mut bps: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > t && b < t1)
        .collect();
    bps.push(t1);
    bps.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    bps.dedup();
    let mut next_bp = 0;

    let mut h = initial_step(rhs, seg, t, &y, &k[0], t1 - t, tol)?.min(max_step);
    let mut steps = 0usize;
    let mut rejected_last = false;
    let mut ytmp = vec![0.0; dim];
    let mut ynew = vec![0.0; dim];
    let mut err_vec = vec![0.0; dim];

    while t < t1 {
        if steps >= opts.max_steps {
            return Err(Error::StepBudget {
                max_steps: opts.max_steps,
                t,
            });
        }
        steps += 1;
        let target = bps[next_bp];
        let h_free = h;
        let mut hit = false;
        if t + h >= target {
            h = target - t;
            hit = true;
        }
        if h <= 1e-14 * (1.0 + t.abs()) && !hit {
            return Err(Error::StepUnderflow { t, h });
        }

        let stages: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (s, a) in stages.iter().enumerate() {
            for c in 0..dim {
                let mut acc = 0.0;
                for (j, aj) in a.iter().enumerate() {
                    acc += aj * k[j][c];
                }
                ytmp[c] = y[c] + h * acc;
            }
            let (done, rest) = k.split_at_mut(s + 1);
            let _ = done;
            rhs(seg, t + C[s + 1] * h, &ytmp, &mut rest[0])?;
        }
        for c in 0..dim {
            let mut acc = 0.0;
            for (j, bj) in B.iter().enumerate() {
                acc += bj * k[j][c];
            }
            ynew[c] = y[c] + h * acc;
        }
        let tnew = if hit { target } else { t + h };
        {
            let (head, tail) = k.split_at_mut(6);
            let _ = head;
            rhs(seg, tnew, &ynew, &mut tail[0])?;
        }
        let mut err = 0.0f64;
        for c in 0..dim {
            let mut e = 0.0;
            for (j, ej) in E.iter().enumerate() {
                e += ej * k[j][c];
            }
            err_vec[c] = h * e;
            let mut dense = 0.0;
            for (j, dj) in D.iter().enumerate() {
                dense += dj * k[j][c];
            }
            let sc = tol + tol * y[c].abs().max(ynew[c].abs());
            err = err
                .max((err_vec[c] / sc).abs())
                .max((h * dense / 16.0 / sc).abs());
        }
        if !err.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
            if h <= 1e-14 * (1.0 + t.abs()) {
                seg.truncated = true;
                return Ok(());
            }
            h *= MIN_FACTOR;
            rejected_last = true;
            continue;
        }
        if err > 1.0 {
            h *= (SAFETY * err.powf(-0.2)).max(MIN_FACTOR);
            rejected_last = true;
            continue;
        }

        let mut state = ynew.clone();
        let mut fresh = None;
        if let Some(m) = p.manifold() {
            if !m.ambient_box().contains(&state) {
                seg.truncated = true;
                return Ok(());
            }
            state = m.project_unchecked(&state)?;
            let mut f = vec![0.0; dim];
            rhs(seg, tnew, &state, &mut f)?;
            seg.max_constraint_residual = seg.max_constraint_residual.max(norm_inf(&m.g(&state)));
            fresh = Some(f);
        }
        if norm_inf(&state) > opts.escape_radius {
            seg.truncated = true;
            return Ok(());
        }
        let f_new = fresh.unwrap_or_else(|| k[6].clone());
        seg.push(tnew, &state, &f_new, &f_new);
        t = tnew;
        y = state;
        k[0].copy_from_slice(&f_new);
        if hit {
            next_bp += 1;
        }

        let factor = if err == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
        };
        let factor = if rejected_last {
            factor.min(1.0)
        } else {
            factor
        };
        rejected_last = false;
        let proposed = if hit {
            h_free.max(h * factor)
        } else {
            h * factor
        };
        h = proposed.min(max_step);
    }
    Ok(())
}

fn initial_step(
    rhs: &Rhs<'_>,
    seg: &TrajectorySegment,
    t: f64,
    y: &[f64],
    f0: &[f64],
    span: f64,
    tol: f64,
) -> Result<f64> {
    let scaled = |v: &[f64]| {
        v.iter()
            .zip(y)
            .map(|(a, b)| (a / (tol + tol * b.abs())).abs())
            .fold(0.0, f64::max)
    };
    let d0 = scaled(y);
    let d1 = scaled(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span.abs()).max(1e-12);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    if rhs(seg, t + h0, &y1, &mut f1).is_err() {
        return Ok(h0);
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span.abs()).max(1e-12))
}

fn check_start(p: &ProblemSpec, start: &[f64]) -> Result<()> {
    if start.len() != p.dim() {
        return Err(Error::Dimension {
            expected: p.dim(),
            got: start.len(),
        });
    }
    if let Some(m) = p.manifold() {
        m.ambient_box().check(start)?;
        let residual = norm_inf(&m.g(start));
        if residual > m.constraint_tol() {
            return Err(Error::NotOnManifold {
                residual,
                tol: m.constraint_tol(),
            });
        }
    }
    Ok(())
}

fn unperturbed_rhs<'a>(
    p: &'a ProblemSpec,
    use_coefficient: bool,
) -> impl Fn(&TrajectorySegment, f64, &[f64], &mut [f64]) -> Result<()> + 'a {
    move |_, t, x, out| {
        p.phi_into(x, out)?;
        apply_coefficients(p, t, use_coefficient, out);
        Ok(())
    }
}

fn apply_coefficients(p: &ProblemSpec, t: f64, use_coefficient: bool, out: &mut [f64]) {
    if !use_coefficient {
        return;
    }
    if p.manifold().is_some() {
        let a = p.blocks()[0].coefficient.value(t);
        out.iter_mut().for_each(|v| *v *= a);
        return;
    }
    let mut offset = 0;
    for b in p.blocks() {
        let a = b.coefficient.value(t);
        out[offset..offset + b.dim].iter_mut().for_each(|v| *v *= a);
        offset += b.dim;
    }
}

pub(crate) fn integrate_ode_with_breakpoints(
    p: &ProblemSpec,
    start: &[f64],
    span: (f64, f64),
    breakpoints: &[f64],
    opts: &IntegrateOptions,
) -> Result<TrajectorySegment> {
    check_start(p, start)?;
    let (t0, t1) = span;
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(Error::InvalidProblem(format!("invalid span [{t0}, {t1}]")));
    }
    let mut seg = TrajectorySegment::empty(p.dim());
    let zero = vec![0.0; p.dim()];
    seg.push(t0, start, &zero, &zero);
    seg.max_constraint_residual = p.constraint_residual(start);
    if t1 == t0 {
        return Ok(seg);
    }
    let rhs = unperturbed_rhs(p, opts.use_coefficient);
    run(p, &rhs, &mut seg, t1, opts.max_step, breakpoints, opts)?;
    Ok(seg)
}

/// Integrates `ζ̇ = a(t)Φ(ζ)` (or `Φ(ζ)` when `opts.use_coefficient` is off) over `span`.
pub fn integrate_ode(
    p: &ProblemSpec,
    start: &[f64],
    span: (f64, f64),
    opts: &IntegrateOptions,
) -> Result<TrajectorySegment> {
    integrate_ode_with_breakpoints(p, start, span, &[], opts)
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidProblem(format!(
            "λ must be nonnegative, got {lambda}"
        )))
    }
}

/// Accepts any finite λ; continuation steps slightly past λ = 0 while correcting.
pub(crate) fn integrate_dde_with_breakpoints(
    p: &ProblemSpec,
    lambda: f64,
    history: &HistorySegment,
    t1: f64,
    breakpoints: &[f64],
    opts: &IntegrateOptions,
) -> Result<TrajectorySegment> {
    if !lambda.is_finite() {
        return Err(Error::InvalidProblem(format!(
            "λ must be finite, got {lambda}"
        )));
    }
    if !(t1 > 0.0 && t1.is_finite()) {
        return Err(Error::InvalidProblem(format!(
            "t1 must be positive, got {t1}"
        )));
    }
    let r = p.lag();
    if history.dim() != p.dim() {
        return Err(Error::Dimension {
            expected: p.dim(),
            got: history.dim(),
        });
    }
    if (history.lag() - r).abs() > 1e-12 * (1.0 + r) {
        return Err(Error::InvalidProblem(format!(
            "history covers lag {} but the problem lag is {r}",
            history.lag()
        )));
    }
    let start = history.at_zero();
    let mut out = history.to_trajectory();

    let forward = if lambda == 0.0 {
        integrate_ode_with_breakpoints(p, &start, (0.0, t1), breakpoints, opts)?
    } else {
        check_start(p, &start)?;
        let mut seg = TrajectorySegment::empty(p.dim());
        let zero = vec![0.0; p.dim()];
        seg.push(0.0, &start, &zero, &zero);
        seg.max_constraint_residual = p.constraint_residual(&start);
        let n = p.dim();
        let rhs = |seg: &TrajectorySegment, t: f64, x: &[f64], out: &mut [f64]| -> Result<()> {
            let mut delayed = vec![0.0; n];
            let td = t - r;
            if td <= 0.0 {
                history.eval_into(td, &mut delayed)?;
            } else {
                seg.eval_into(td, &mut delayed)
                    .map_err(|_| Error::InterpolantGap { t: td })?;
            }
            p.phi_into(x, out)?;
            apply_coefficients(p, t, opts.use_coefficient, out);
            let mut xi = vec![0.0; n];
            p.xi_into(t, x, &delayed, &mut xi)?;
            for (o, v) in out.iter_mut().zip(&xi) {
                *o += lambda * v;
            }
            Ok(())
        };
        let mut bps: Vec<f64> = breakpoints.to_vec();
        let mut j = 1.0;
        while j * r < t1 {
            bps.push(j * r);
            j += 1.0;
        }
        run(p, &rhs, &mut seg, t1, opts.max_step.min(r), &bps, opts)?;
        seg
    };
    out.append(&forward)?;
    Ok(out)
}

/// Method-of-steps solution of the delay equation on `[−r, t1]`, history prepended.
pub fn integrate_dde(
    p: &ProblemSpec,
    lambda: f64,
    history: &HistorySegment,
    t1: f64,
    opts: &IntegrateOptions,
) -> Result<TrajectorySegment> {
    check_lambda(lambda)?;
    integrate_dde_with_breakpoints(p, lambda, history, t1, &[], opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Block, DelayPerturbation, PeriodicCoefficient, StateSpace};
    use crate::map::VectorMap;
    use std::f64::consts::PI;

    fn scalar(
        phi: fn(f64) -> f64,
        a: PeriodicCoefficient,
        lag: f64,
        h: fn(f64, f64, f64) -> f64,
    ) -> ProblemSpec {
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

    fn one(period: f64) -> PeriodicCoefficient {
        PeriodicCoefficient::constant(period, 1.0).unwrap()
    }

    #[test]
    fn zero_field_is_constant() {
        let p = scalar(|_| 0.0, one(1.0), 1.0, |_, _, _| 0.0);
        let seg = integrate_ode(&p, &[0.7], (0.0, 3.0), &IntegrateOptions::default()).unwrap();
        assert_eq!(seg.end_state(), &[0.7]);
    }

    #[test]
    fn exponential_growth() {
        let p = scalar(|x| x, one(1.0), 1.0, |_, _, _| 0.0);
        let seg = integrate_ode(&p, &[1.0], (0.0, 1.0), &IntegrateOptions::default()).unwrap();
        assert!((seg.end_state()[0] - 1f64.exp()).abs() < 1e-9);
        for &t in seg.nodes() {
            assert!(
                (seg.eval(t).unwrap()[0]
                    - seg.state(seg.nodes().iter().position(|&x| x == t).unwrap())[0])
                    == 0.0
            );
        }
        assert!(seg.eval(1.5).is_err());
        assert!(seg.eval(-0.1).is_err());
    }

    #[test]
    fn rescaled_exponential() {
        let a = PeriodicCoefficient::new(2.0 * PI, |t| 1.0 + t.sin()).unwrap();
        let p = scalar(|x| x, a, 1.0, |_, _, _| 0.0);
        let seg = integrate_ode(&p, &[1.0], (0.0, 2.0 * PI), &IntegrateOptions::default()).unwrap();
        let exact = (2.0 * PI).exp();
        assert!((seg.end_state()[0] - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn escape_truncates() {
        let p = scalar(|x| x * x, one(1.0), 1.0, |_, _, _| 0.0);
        let seg = integrate_ode(&p, &[1.0], (0.0, 2.0), &IntegrateOptions::default()).unwrap();
        assert!(seg.is_truncated());
        assert!(seg.t1() < 1.0);
    }

    #[test]
    fn dde_with_zero_lambda_matches_ode() {
        let p = scalar(|x| -x + 0.3 * x * x, one(2.0), 0.5, |_, _, xr| xr);
        let opts = IntegrateOptions::default();
        let hist = constant_history(&[0.8], 0.5);
        let dde = integrate_dde(&p, 0.0, &hist, 3.0, &opts).unwrap();
        let ode = integrate_ode(&p, &[0.8], (0.0, 3.0), &opts).unwrap();
        assert_eq!(dde.t0(), -0.5);
        for t in [0.1, 1.0, 2.2, 3.0] {
            assert!((dde.eval(t).unwrap()[0] - ode.eval(t).unwrap()[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn dde_inert_delay() {
        let p = scalar(|x| -x, one(1.0), 1.0, |_, _, _| 1.0);
        let hist = constant_history(&[0.0], 1.0);
        let seg = integrate_dde(&p, 1.0, &hist, 5.0, &IntegrateOptions::default()).unwrap();
        for t in [0.5, 1.0, 2.5, 5.0] {
            let e = (seg.eval(t).unwrap()[0] - (1.0 - (-t).exp())).abs();
            assert!(e < 1e-9, "t={t} err={e:e} nodes={}", seg.len());
        }
    }

    #[test]
    fn method_of_steps_hand_solution() {
        let p = scalar(|_| 0.0, one(4.0), 1.0, |_, _, xr| -xr);
        let hist = constant_history(&[1.0], 1.0);
        let seg = integrate_dde(&p, 1.0, &hist, 3.0, &IntegrateOptions::default()).unwrap();
        let exact = |t: f64| -> f64 {
            if t <= 1.0 {
                1.0 - t
            } else if t <= 2.0 {
                1.0 - t + (t - 1.0).powi(2) / 2.0
            } else {
                1.0 - t + (t - 1.0).powi(2) / 2.0 - (t - 2.0).powi(3) / 6.0
            }
        };
        for t in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
            assert!((seg.eval(t).unwrap()[0] - exact(t)).abs() < 1e-9, "t = {t}");
        }
        assert!((seg.eval(2.0).unwrap()[0] + 0.5).abs() < 1e-9);
        assert!(seg.nodes().contains(&1.0) && seg.nodes().contains(&2.0));
    }

    #[test]
    fn constant_history_examples() {
        let h = constant_history(&[0.0, 1.0], 1.0);
        assert_eq!(h.eval(-1.0).unwrap(), vec![0.0, 1.0]);
        assert_eq!(h.eval(0.0).unwrap(), vec![0.0, 1.0]);
        assert_eq!(h.eval(-0.5).unwrap(), vec![0.0, 1.0]);
        assert_eq!(h.lag(), 1.0);
    }

    #[test]
    fn mismatched_history_lag_rejected() {
        let p = scalar(|x| -x, one(1.0), 0.5, |_, _, _| 0.0);
        let h = constant_history(&[1.0], 0.25);
        assert!(integrate_dde(&p, 1.0, &h, 1.0, &IntegrateOptions::default()).is_err());
    }
}
