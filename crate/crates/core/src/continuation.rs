//! Trivial periodic pairs, periodic shooting at fixed λ, and pseudo-arclength
//! continuation of branches of periodic pairs in `(λ, history)` space.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::degree::{problem_degree, DegreeOptions, FieldDegree};
use crate::error::{Error, Result};
use crate::fields::ProblemSpec;
use crate::integrate::{integrate_dde, IntegrateOptions, TrajectorySegment};
use crate::linalg::{norm_inf, solve};
use crate::poincare::{
    translation_with_orbit, DiscretizedHistory, HistoryDiscretization, DEFAULT_NODES,
};
use crate::region::BoxRegion;

/// Tolerance on orbit oscillation and `‖Φ‖` for a pair to count as trivial.
pub const TRIVIAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    /// History nodes are `m + 1` Chebyshev–Lobatto points.
    pub m: usize,
    pub integrate: IntegrateOptions,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub growth: f64,
    /// Scale applied to history values in the arclength norm.
    pub state_scale: f64,
    pub step_tol: f64,
    pub residual_tol: f64,
    pub max_corrector_iter: usize,
    /// Corrector runs using at most this many iterations count as easy.
    pub easy_iterations: usize,
    pub fd_step: f64,
    pub norm_escape: f64,
    pub max_pairs: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            m: DEFAULT_NODES,
            integrate: IntegrateOptions::default(),
            initial_step: 0.1,
            min_step: 1e-6,
            max_step: 0.5,
            growth: 1.3,
            state_scale: 1.0,
            step_tol: 1e-10,
            residual_tol: 1e-8,
            max_corrector_iter: 30,
            easy_iterations: 4,
            fd_step: 1e-7,
            norm_escape: 1e6,
            max_pairs: 5000,
        }
    }
}

/// `[0, lambda_max] × state_box`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub lambda_max: f64,
    pub state_box: BoxRegion,
}

impl Region {
    pub fn new(lambda_max: f64, state_box: BoxRegion) -> Result<Self> {
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "lambda_max must be positive, got {lambda_max}"
            )));
        }
        Ok(Self {
            lambda_max,
            state_box,
        })
    }
}

/// A T-periodic pair `(λ, ζ)`, with `ζ` given by its history and its orbit over `[−r, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPair {
    pub lambda: f64,
    pub history: DiscretizedHistory,
    pub orbit: TrajectorySegment,
    pub residual_norm: f64,
    pub is_trivial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartingPair {
    pub lambda: f64,
    pub history: DiscretizedHistory,
}

impl PeriodicPair {
    fn new(
        p: &ProblemSpec,
        lambda: f64,
        history: DiscretizedHistory,
        orbit: TrajectorySegment,
        residual_norm: f64,
    ) -> Self {
        let is_trivial = lambda == 0.0 && is_constant_equilibrium(p, &orbit);
        Self {
            lambda,
            history,
            orbit,
            residual_norm,
            is_trivial,
        }
    }

    /// `max ‖ζ(t)‖∞` over the orbit mesh.
    pub fn orbit_max_norm(&self) -> f64 {
        self.orbit.max_norm()
    }

    /// `max_t max_c |ζ_c(t)|` over `[0, T]`, refined by golden-section search.
    pub fn amplitude(&self) -> f64 {
        let t1 = self.orbit.t1();
        let dim = self.orbit.dim();
        let value = |t: f64, c: usize| self.orbit.eval(t).map(|x| x[c].abs()).unwrap_or(0.0);
        let samples = 512;
        let mut best = (0.0, 0usize, f64::NEG_INFINITY);
        for i in 0..=samples {
            let t = t1 * i as f64 / samples as f64;
            for c in 0..dim {
                let v = value(t, c);
                if v > best.2 {
                    best = (t, c, v);
                }
            }
        }
        let (t, c, mut vmax) = best;
        let dt = t1 / samples as f64;
        let (mut a, mut b) = ((t - dt).max(0.0), (t + dt).min(t1));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let x1 = b - g * (b - a);
            let x2 = a + g * (b - a);
            if value(x1, c) >= value(x2, c) {
                b = x2;
            } else {
                a = x1;
            }
        }
        vmax = vmax.max(value(0.5 * (a + b), c));
        vmax
    }

    pub fn report(&self, orbit_samples: usize) -> PairReport {
        let t1 = self.orbit.t1();
        let t0 = self.orbit.t0();
        let orbit = (0..=orbit_samples)
            .map(|i| {
                let t = t0 + (t1 - t0) * i as f64 / orbit_samples.max(1) as f64;
                OrbitSample {
                    t,
                    x: self.orbit.eval(t).unwrap_or_default(),
                }
            })
            .collect();
        PairReport {
            lambda: self.lambda,
            residual_norm: self.residual_norm,
            is_trivial: self.is_trivial,
            orbit_max_norm: self.orbit_max_norm(),
            nodes: self.history.disc().nodes().to_vec(),
            values: (0..self.history.disc().len())
                .map(|j| self.history.value(j).to_vec())
                .collect(),
            orbit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitSample {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub lambda: f64,
    pub residual_norm: f64,
    pub is_trivial: bool,
    pub orbit_max_norm: f64,
    pub nodes: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub orbit: Vec<OrbitSample>,
}

fn is_constant_equilibrium(p: &ProblemSpec, orbit: &TrajectorySegment) -> bool {
    let x0 = orbit.state(0);
    let oscillation = (0..orbit.len())
        .map(|i| {
            orbit
                .state(i)
                .iter()
                .zip(x0)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    oscillation <= TRIVIAL_TOL
        && p.phi(x0)
            .map(|v| norm_inf(&v) <= TRIVIAL_TOL)
            .unwrap_or(false)
}

/// The restriction `(λ, ζ|[−r, 0])` resampled on the history nodes.
pub fn pair_to_starting_pair(pair: &PeriodicPair) -> Result<StartingPair> {
    let history = DiscretizedHistory::sample(pair.history.shared_disc(), &pair.orbit, 0.0)?;
    Ok(StartingPair {
        lambda: pair.lambda,
        history,
    })
}

/// `‖ζ(T)‖` mismatch after re-integrating a starting pair of `pair`.
pub fn round_trip_error(
    p: &ProblemSpec,
    pair: &PeriodicPair,
    opts: &IntegrateOptions,
) -> Result<f64> {
    let sp = pair_to_starting_pair(pair)?;
    let seg = integrate_dde(p, sp.lambda, &sp.history.to_segment(), p.period(), opts)?;
    let end = seg.end_state();
    Ok(end
        .iter()
        .zip(pair.orbit.end_state())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

struct Shooter<'a> {
    p: &'a ProblemSpec,
    disc: Arc<HistoryDiscretization>,
    opts: &'a ContinuationOptions,
}

struct Evaluation {
    residual: Vec<f64>,
    history: DiscretizedHistory,
    orbit: TrajectorySegment,
}

impl<'a> Shooter<'a> {
    fn new(
        p: &'a ProblemSpec,
        disc: Arc<HistoryDiscretization>,
        opts: &'a ContinuationOptions,
    ) -> Self {
        Self { p, disc, opts }
    }

    fn size(&self) -> usize {
        self.disc.len() * self.p.dim()
    }

    fn history(&self, values: &[f64]) -> Result<DiscretizedHistory> {
        let n = self.p.dim();
        let projected = if self.p.manifold().is_some() {
            let mut out = Vec::with_capacity(values.len());
            for chunk in values.chunks(n) {
                out.extend(self.p.project(chunk)?);
            }
            out
        } else {
            values.to_vec()
        };
        DiscretizedHistory::new(self.disc.clone(), n, projected)
    }

    /// `𝒬_λ(Pφ) − φ`, where `P` projects node values onto the manifold.
    fn evaluate(&self, lambda: f64, values: &[f64]) -> Result<Evaluation> {
        let history = self.history(values)?;
        let (image, orbit) =
            translation_with_orbit(self.p, lambda, &history, &self.opts.integrate)?;
        let residual = image
            .values()
            .iter()
            .zip(values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Evaluation {
            residual,
            history,
            orbit,
        })
    }

    fn residual(&self, lambda: f64, values: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(lambda, values).map(|e| e.residual)
    }

    /// Forward-difference Jacobian; column 0 is `∂/∂λ` when `with_lambda`.
    fn jacobian(
        &self,
        lambda: f64,
        values: &[f64],
        r0: &[f64],
        with_lambda: bool,
    ) -> Result<DMatrix<f64>> {
        let n = self.size();
        let offset = usize::from(with_lambda);
        let h = self.opts.fd_step;
        let columns: Vec<Vec<f64>> = (0..n + offset)
            .into_par_iter()
            .map(|col| {
                if with_lambda && col == 0 {
                    let step = h * lambda.abs().max(1.0);
                    let r = self.residual(lambda + step, values)?;
                    return Ok(r.iter().zip(r0).map(|(a, b)| (a - b) / step).collect());
                }
                let i = col - offset;
                let step = h * values[i].abs().max(1.0);
                let mut v = values.to_vec();
                v[i] += step;
                let r = self.residual(lambda, &v)?;
                Ok(r.iter().zip(r0).map(|(a, b)| (a - b) / step).collect())
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(n, n + offset, |i, j| columns[j][i]))
    }

    fn pair(&self, lambda: f64, eval: Evaluation) -> PeriodicPair {
        let residual_norm = norm_inf(&eval.residual);
        PeriodicPair::new(self.p, lambda, eval.history, eval.orbit, residual_norm)
    }
}

/// Damped Newton for `𝒬_λ(φ) = φ` starting from `guess`.
pub fn solve_periodic(
    p: &ProblemSpec,
    lambda: f64,
    guess: &DiscretizedHistory,
    opts: &ContinuationOptions,
) -> Result<PeriodicPair> {
    let sh = Shooter::new(p, guess.shared_disc(), opts);
    solve_with(&sh, lambda, guess.values().to_vec())
}

fn solve_with(sh: &Shooter<'_>, lambda: f64, start: Vec<f64>) -> Result<PeriodicPair> {
    let opts = sh.opts;
    let mut values = sh.history(&start)?.into_values();
    let mut eval = sh.evaluate(lambda, &values)?;
    let mut rnorm = norm_inf(&eval.residual);
    let mut history = vec![rnorm];
    let mut jac: Option<DMatrix<f64>> = None;
    let mut last_step = f64::INFINITY;
    for _ in 0..opts.max_corrector_iter {
        if rnorm <= opts.residual_tol && last_step <= opts.step_tol * (1.0 + norm_inf(&values)) {
            return Ok(sh.pair(lambda, eval));
        }
        let j = match jac.take() {
            Some(j) => j,
            None => sh.jacobian(lambda, &values, &eval.residual, false)?,
        };
        let Some(delta) = solve(&j, &eval.residual) else {
            return Err(Error::Convergence {
                message: "singular shooting Jacobian".into(),
                residuals: history,
            });
        };
        let mut alpha = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = values
                .iter()
                .zip(&delta)
                .map(|(v, d)| v - alpha * d)
                .collect();
            match sh.evaluate(lambda, &trial) {
                Ok(e) => {
                    let n = norm_inf(&e.residual);
                    if n < rnorm || n <= opts.residual_tol {
                        break Some((trial, e, n));
                    }
                }
                Err(Error::NotInDomain { .. }) => {}
                Err(e) => return Err(e),
            }
            alpha *= 0.5;
            if alpha < 1e-3 {
                break None;
            }
        };
        let Some((trial, e, n)) = accepted else {
            if rnorm <= opts.residual_tol {
                return Ok(sh.pair(lambda, eval));
            }
            return Err(Error::Convergence {
                message: "line search failed".into(),
                residuals: history,
            });
        };
        last_step = alpha * norm_inf(&delta);
        let reuse = n <= 0.5 * rnorm || n <= opts.residual_tol;
        values = trial;
        eval = e;
        rnorm = n;
        history.push(n);
        if reuse {
            jac = Some(j);
        }
    }
    if rnorm <= opts.residual_tol {
        return Ok(sh.pair(lambda, eval));
    }
    Err(Error::Convergence {
        message: format!("no convergence in {} iterations", opts.max_corrector_iter),
        residuals: history,
    })
}

/// Zeros of `Φ` in a box, each as a trivial pair with its index.
#[derive(Debug, Clone)]
pub struct TrivialPair {
    pub pair: PeriodicPair,
    pub index: i8,
}

#[derive(Debug, Clone)]
pub struct TrivialPairs {
    pub degree: FieldDegree,
    pub pairs: Vec<TrivialPair>,
    pub warnings: Vec<String>,
}

pub fn find_trivial_pairs(
    p: &ProblemSpec,
    region: &BoxRegion,
    degree_opts: &DegreeOptions,
    opts: &ContinuationOptions,
) -> Result<TrivialPairs> {
    let degree = problem_degree(p, region, degree_opts)?;
    let disc = Arc::new(HistoryDiscretization::new(opts.m, p.lag())?);
    let sh = Shooter::new(p, disc.clone(), opts);
    let mut warnings = degree.result.diagnostics.clone();
    let mut pairs = Vec::new();
    for z in &degree.result.zeros {
        let point = p.project(&z.location)?;
        let values = point.repeat(disc.len());
        let eval = sh.evaluate(0.0, &values)?;
        let pair = sh.pair(0.0, eval);
        if z.sign == 0 {
            warnings.push(format!("zero at {:?} is degenerate", z.location));
        }
        if !pair.is_trivial {
            warnings.push(format!(
                "pair at {:?} failed the triviality check",
                z.location
            ));
        }
        pairs.push(TrivialPair {
            pair,
            index: z.sign,
        });
    }
    Ok(TrivialPairs {
        degree,
        pairs,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    LambdaMaxReached,
    NormEscape,
    BoundaryOfRegion,
    StepFailure,
}

impl Termination {
    /// Whether the verdict witnesses that the branch leaves every compact part of the region.
    pub fn is_noncompactness_witness(self) -> bool {
        !matches!(self, Termination::StepFailure)
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub pairs: Vec<PeriodicPair>,
    pub termination: Termination,
    pub arclength: f64,
    /// Step size used to reach each pair after the first.
    pub steps: Vec<f64>,
    /// First pair found outside the state box.
    pub exit_pair: Option<PeriodicPair>,
    /// Indices of pairs with λ = 0 whose orbit is not constant.
    pub nontrivial_at_zero: Vec<usize>,
    pub diagnostics: Vec<String>,
}

impl Branch {
    pub fn origin(&self) -> &PeriodicPair {
        &self.pairs[0]
    }

    pub fn last(&self) -> &PeriodicPair {
        self.pairs.last().expect("branch has an origin")
    }

    pub fn report(&self, orbit_samples: usize) -> BranchReport {
        BranchReport {
            termination: self.termination,
            arclength: self.arclength,
            pairs: self.pairs.iter().map(|q| q.report(orbit_samples)).collect(),
            exit_pair: self.exit_pair.as_ref().map(|q| q.report(orbit_samples)),
            nontrivial_at_zero: self.nontrivial_at_zero.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchReport {
    pub termination: Termination,
    pub arclength: f64,
    pub pairs: Vec<PairReport>,
    pub exit_pair: Option<PairReport>,
    pub nontrivial_at_zero: Vec<usize>,
    pub diagnostics: Vec<String>,
}

struct Arclength {
    weight: f64,
}

impl Arclength {
    fn new(size: usize, scale: f64) -> Self {
        Self {
            weight: 1.0 / (size as f64 * scale * scale),
        }
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a[0] * b[0] + self.weight * a[1..].iter().zip(&b[1..]).map(|(x, y)| x * y).sum::<f64>()
    }

    fn norm(&self, a: &[f64]) -> f64 {
        self.dot(a, a).sqrt()
    }

    fn weighted(&self, a: &[f64]) -> Vec<f64> {
        std::iter::once(a[0])
            .chain(a[1..].iter().map(|v| v * self.weight))
            .collect()
    }
}

fn tangent(jac: &DMatrix<f64>, previous: &[f64], arc: &Arclength) -> Option<Vec<f64>> {
    let n = jac.nrows();
    let w = arc.weighted(previous);
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.rows_mut(0, n).copy_from(jac);
    for (j, v) in w.iter().enumerate() {
        a[(n, j)] = *v;
    }
    let mut rhs = vec![0.0; n + 1];
    rhs[n] = 1.0;
    let t = solve(&a, &rhs)?;
    let len = arc.norm(&t);
    if !(len.is_finite() && len > 0.0) {
        return None;
    }
    Some(t.iter().map(|v| v / len).collect())
}

enum Corrected {
    Converged {
        u: Vec<f64>,
        eval: Box<Evaluation>,
        jac: DMatrix<f64>,
        iterations: usize,
    },
    Failed {
        escaped: bool,
        reason: String,
    },
}

fn correct(sh: &Shooter<'_>, predicted: &[f64], tau: &[f64], arc: &Arclength) -> Result<Corrected> {
    let opts = sh.opts;
    let n = sh.size();
    let w = arc.weighted(tau);
    let mut u = predicted.to_vec();
    let mut eval = match sh.evaluate(u[0], &u[1..]) {
        Ok(e) => e,
        Err(Error::NotInDomain { .. }) => {
            return Ok(Corrected::Failed {
                escaped: true,
                reason: "escape at predictor".into(),
            })
        }
        Err(e) => return Err(e),
    };
    let mut jac: Option<DMatrix<f64>> = None;
    let mut rnorm = norm_inf(&eval.residual);
    let initial = rnorm;
    for iter in 1..=opts.max_corrector_iter {
        let j = match jac.take() {
            Some(j) => j,
            None => match sh.jacobian(u[0], &u[1..], &eval.residual, true) {
                Ok(j) => j,
                Err(Error::NotInDomain { .. }) => {
                    return Ok(Corrected::Failed {
                        escaped: true,
                        reason: "escape in Jacobian".into(),
                    })
                }
                Err(e) => return Err(e),
            },
        };
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.rows_mut(0, n).copy_from(&j);
        for (k, v) in w.iter().enumerate() {
            a[(n, k)] = *v;
        }
        let mut rhs: Vec<f64> = eval.residual.clone();
        let offset: Vec<f64> = u.iter().zip(predicted).map(|(a, b)| a - b).collect();
        rhs.push(w.iter().zip(&offset).map(|(a, b)| a * b).sum());
        let Some(delta) = solve(&a, &rhs) else {
            return Ok(Corrected::Failed {
                escaped: false,
                reason: "singular extended Jacobian".into(),
            });
        };
        for (x, d) in u.iter_mut().zip(&delta) {
            *x -= d;
        }
        eval = match sh.evaluate(u[0], &u[1..]) {
            Ok(e) => e,
            Err(Error::NotInDomain { .. }) => {
                return Ok(Corrected::Failed {
                    escaped: true,
                    reason: "escape in corrector".into(),
                })
            }
            Err(e) => return Err(e),
        };
        let next = norm_inf(&eval.residual);
        let step = norm_inf(&delta);
        if !next.is_finite() || next > 1e3 * initial.max(opts.residual_tol) {
            return Ok(Corrected::Failed {
                escaped: false,
                reason: "corrector diverged".into(),
            });
        }
        if next <= opts.residual_tol && step <= opts.step_tol * (1.0 + norm_inf(&u)) {
            return Ok(Corrected::Converged {
                u,
                eval: Box::new(eval),
                jac: j,
                iterations: iter,
            });
        }
        if next <= 0.5 * rnorm || next <= opts.residual_tol {
            jac = Some(j);
        }
        rnorm = next;
    }
    Ok(Corrected::Failed {
        escaped: false,
        reason: format!("corrector did not converge (residual {rnorm:e})"),
    })
}

fn leaves_box(orbit: &TrajectorySegment, b: &BoxRegion) -> bool {
    (0..orbit.len()).any(|i| !b.contains(orbit.state(i)))
}

/// Pseudo-arclength continuation from an accepted pair.
pub fn continue_branch(
    p: &ProblemSpec,
    origin: &PeriodicPair,
    region: &Region,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    if origin.residual_norm > opts.residual_tol {
        return Err(Error::InvalidProblem(format!(
            "origin residual {:e} exceeds tolerance",
            origin.residual_norm
        )));
    }
    let sh = Shooter::new(p, origin.history.shared_disc(), opts);
    let size = sh.size();
    let arc = Arclength::new(size, opts.state_scale);
    let mut branch = Branch {
        pairs: vec![origin.clone()],
        termination: Termination::StepFailure,
        arclength: 0.0,
        steps: Vec::new(),
        exit_pair: None,
        nontrivial_at_zero: Vec::new(),
        diagnostics: Vec::new(),
    };
    let mut u: Vec<f64> = std::iter::once(origin.lambda)
        .chain(origin.history.values().iter().copied())
        .collect();

    let r0 = sh.residual(u[0], &u[1..])?;
    let jac0 = match sh.jacobian(u[0], &u[1..], &r0, true) {
        Ok(j) => j,
        Err(e) => {
            branch
                .diagnostics
                .push(format!("Jacobian at origin failed: {e}"));
            return Ok(branch);
        }
    };
    let mut start_dir = vec![0.0; size + 1];
    start_dir[0] = 1.0;
    let Some(mut tau) = tangent(&jac0, &start_dir, &arc) else {
        branch
            .diagnostics
            .push("singular Jacobian at origin".into());
        return Ok(branch);
    };

    let mut ds = opts.initial_step.min(opts.max_step);
    while branch.pairs.len() < opts.max_pairs {
        let predicted: Vec<f64> = u.iter().zip(&tau).map(|(a, b)| a + ds * b).collect();
        let outcome = correct(&sh, &predicted, &tau, &arc)?;
        let (unew, eval, jac, iterations) = match outcome {
            Corrected::Converged {
                u,
                eval,
                jac,
                iterations,
            } => (u, *eval, jac, iterations),
            Corrected::Failed { escaped, reason } => {
                ds *= 0.5;
                if ds < opts.min_step {
                    branch.termination = if escaped {
                        Termination::NormEscape
                    } else {
                        Termination::StepFailure
                    };
                    branch.diagnostics.push(reason);
                    return Ok(branch);
                }
                continue;
            }
        };
        let diff: Vec<f64> = unew.iter().zip(&u).map(|(a, b)| a - b).collect();
        let dist = arc.norm(&diff);
        if dist > 2.0 * ds {
            ds *= 0.5;
            if ds < opts.min_step {
                branch
                    .diagnostics
                    .push("consecutive pairs too far apart".into());
                return Ok(branch);
            }
            continue;
        }
        let lambda = unew[0];

        if lambda > region.lambda_max || lambda < 0.0 {
            let target = if lambda > region.lambda_max {
                region.lambda_max
            } else {
                0.0
            };
            let s = (target - u[0]) / (lambda - u[0]);
            let guess: Vec<f64> = u[1..]
                .iter()
                .zip(&unew[1..])
                .map(|(a, b)| a + s * (b - a))
                .collect();
            match solve_with(&sh, target, guess) {
                Ok(pair) => {
                    let d: Vec<f64> = std::iter::once(pair.lambda - u[0])
                        .chain(
                            pair.history
                                .values()
                                .iter()
                                .zip(&u[1..])
                                .map(|(a, b)| a - b),
                        )
                        .collect();
                    branch.arclength += arc.norm(&d);
                    branch.steps.push(ds);
                    if target == 0.0 && !pair.is_trivial {
                        branch.nontrivial_at_zero.push(branch.pairs.len());
                    }
                    if leaves_box(&pair.orbit, &region.state_box) {
                        branch.exit_pair = Some(pair);
                        branch.termination = Termination::BoundaryOfRegion;
                    } else {
                        branch.pairs.push(pair);
                        branch.termination = if target == 0.0 {
                            Termination::BoundaryOfRegion
                        } else {
                            Termination::LambdaMaxReached
                        };
                    }
                    return Ok(branch);
                }
                Err(e) => {
                    ds *= 0.5;
                    if ds < opts.min_step {
                        branch
                            .diagnostics
                            .push(format!("final correction failed: {e}"));
                        return Ok(branch);
                    }
                    continue;
                }
            }
        }

        let pair = sh.pair(lambda, eval);
        if leaves_box(&pair.orbit, &region.state_box) {
            branch.arclength += dist;
            branch.exit_pair = Some(pair);
            branch.termination = Termination::BoundaryOfRegion;
            return Ok(branch);
        }
        let escape = pair.orbit_max_norm() > opts.norm_escape;
        branch.arclength += dist;
        branch.steps.push(ds);
        branch.pairs.push(pair);
        if escape {
            branch.termination = Termination::NormEscape;
            return Ok(branch);
        }

        let Some(next_tau) = tangent(&jac, &tau, &arc) else {
            branch
                .diagnostics
                .push("singular Jacobian along the branch".into());
            return Ok(branch);
        };
        tau = next_tau;
        u = unew;
        if iterations <= opts.easy_iterations {
            ds = (ds * opts.growth).min(opts.max_step);
        }
    }
    branch
        .diagnostics
        .push(format!("pair budget of {} exhausted", opts.max_pairs));
    Ok(branch)
}

/// Degree, trivial pairs and the branch from the trivial pair nearest the box centre.
#[derive(Debug, Clone)]
pub struct BranchRun {
    pub trivial: TrivialPairs,
    pub origin_index: usize,
    pub branch: Branch,
}

/// Runs continuation only when the field has nonzero degree on the region's box.
pub fn branch_from_trivial(
    p: &ProblemSpec,
    region: &Region,
    degree_opts: &DegreeOptions,
    opts: &ContinuationOptions,
) -> Result<BranchRun> {
    let trivial = find_trivial_pairs(p, &region.state_box, degree_opts, opts)?;
    if trivial.degree.magnitude == 0 {
        return Err(Error::Admissibility(
            "the field has degree zero on the state box; no branch is predicted".into(),
        ));
    }
    let centre = region.state_box.center();
    let origin_index = trivial
        .pairs
        .iter()
        .enumerate()
        .filter(|(_, t)| t.index != 0 && t.pair.residual_norm <= opts.residual_tol)
        .min_by(|(_, a), (_, b)| {
            let da = crate::linalg::dist_inf(a.pair.orbit.state(0), &centre);
            let db = crate::linalg::dist_inf(b.pair.orbit.state(0), &centre);
            da.partial_cmp(&db).expect("finite distances")
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Uncertified("no nondegenerate trivial pair in the box".into()))?;
    let branch = continue_branch(p, &trivial.pairs[origin_index].pair, region, opts)?;
    Ok(BranchRun {
        trivial,
        origin_index,
        branch,
    })
}
