//! Problem data for `ζ̇ = a(t)Φ(ζ) + λ Ξ(t, ζ(t), ζ(t−r))`: the periodic
//! coefficient, the autonomous field, the delay perturbation and the
//! time-rescaling map `φ_a(t) = ∫₀ᵗ a`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::expr::{check_harmonics, eval_harmonics, Harmonic, PerturbationTerm};
use crate::linalg::norm_inf;
use crate::manifold::{ImplicitManifold, LiftedField};
use crate::map::VectorMap;
use crate::quadrature;
use crate::region::{halton, BoxRegion};

const QUAD_TOL: f64 = 1e-11;
const PERIODICITY_SAMPLES: usize = 256;
const PERIODICITY_TOL: f64 = 1e-12;
/// Averages below this magnitude count as zero.
pub const ZERO_AVERAGE_TOL: f64 = 1e-10;

pub type CoefficientFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type PerturbationFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// A continuous `T`-periodic scalar coefficient `a(t)` with its cached average.
#[derive(Clone)]
pub struct PeriodicCoefficient {
    period: f64,
    eval: CoefficientFn,
    harmonics: Option<Vec<Harmonic>>,
    cached_average: f64,
}

impl fmt::Debug for PeriodicCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicCoefficient")
            .field("period", &self.period)
            .field("average", &self.cached_average)
            .field("harmonics", &self.harmonics)
            .finish()
    }
}

impl PeriodicCoefficient {
    pub fn new<F>(period: f64, a: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "period must be positive, got {period}"
            )));
        }
        let integral = quadrature::integrate(&a, 0.0, period, QUAD_TOL)?;
        Ok(Self {
            period,
            eval: Arc::new(a),
            harmonics: None,
            cached_average: integral / period,
        })
    }

    /// A finite sum of harmonics with angular frequency `2π/T`.
    pub fn from_harmonics(period: f64, terms: Vec<Harmonic>) -> Result<Self> {
        check_harmonics(&terms)?;
        let shared = terms.clone();
        let mut c = Self::new(period, move |t| eval_harmonics(&shared, t, period))?;
        c.harmonics = Some(terms);
        Ok(c)
    }

    pub fn constant(period: f64, value: f64) -> Result<Self> {
        Self::from_harmonics(period, vec![Harmonic::Const { value }])
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    pub fn harmonics(&self) -> Option<&[Harmonic]> {
        self.harmonics.as_deref()
    }

    /// `⟨a⟩ = (1/T)∫₀ᵀ a(t) dt`.
    pub fn average(&self) -> f64 {
        self.cached_average
    }

    /// `φ_a(t) = ∫₀ᵗ a(s) ds`, using whole periods plus a remainder so that
    /// `φ_a(t + T) − φ_a(t) = T⟨a⟩` holds to quadrature accuracy.
    pub fn time_rescale(&self, t: f64) -> Result<f64> {
        let n = (t / self.period).floor();
        let rem = t - n * self.period;
        let part = quadrature::integrate(&*self.eval, 0.0, rem, QUAD_TOL)?;
        Ok(n * self.period * self.cached_average + part)
    }

    /// `a(t + shift)`; used to check phase invariance of the average.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        let eval = self.eval.clone();
        Self::new(self.period, move |t| eval(t + shift))
    }
}

/// `h(t, x, x_delayed) ∈ ℝᵏ` together with the lag `r`.
#[derive(Clone)]
pub struct DelayPerturbation {
    lag: f64,
    state_dim: usize,
    dim_out: usize,
    eval: PerturbationFn,
    terms: Option<Vec<Vec<PerturbationTerm>>>,
}

impl fmt::Debug for DelayPerturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelayPerturbation")
            .field("lag", &self.lag)
            .field("state_dim", &self.state_dim)
            .field("dim_out", &self.dim_out)
            .field("terms", &self.terms)
            .finish()
    }
}

impl DelayPerturbation {
    /// `state_dim` is the ambient dimension of `x`; `dim_out` is `k`.
    pub fn new<F>(lag: f64, state_dim: usize, dim_out: usize, h: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            lag,
            state_dim,
            dim_out,
            eval: Arc::new(h),
            terms: None,
        }
    }

    pub fn zero(lag: f64, state_dim: usize, dim_out: usize) -> Self {
        let mut p = Self::new(lag, state_dim, dim_out, |_, _, _, out| out.fill(0.0));
        p.terms = Some(vec![Vec::new(); dim_out]);
        p
    }

    /// One list of terms per output component; term variables are `(x, x_delayed)`.
    pub fn from_terms(
        lag: f64,
        period: f64,
        state_dim: usize,
        components: Vec<Vec<PerturbationTerm>>,
    ) -> Result<Self> {
        for term in components.iter().flatten() {
            term.check(2 * state_dim)?;
        }
        let dim_out = components.len();
        let shared = Arc::new(components.clone());
        let mut p = Self::new(lag, state_dim, dim_out, move |t, x, xr, out| {
            let mut vars = Vec::with_capacity(2 * state_dim);
            vars.extend_from_slice(x);
            vars.extend_from_slice(xr);
            for (o, comp) in out.iter_mut().zip(shared.iter()) {
                *o = comp.iter().map(|term| term.eval(t, period, &vars)).sum();
            }
        });
        p.terms = Some(components);
        Ok(p)
    }

    pub fn lag(&self) -> f64 {
        self.lag
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn terms(&self) -> Option<&[Vec<PerturbationTerm>]> {
        self.terms.as_deref()
    }

    pub fn eval_into(&self, t: f64, x: &[f64], xr: &[f64], out: &mut [f64]) {
        (self.eval)(t, x, xr, out)
    }

    pub fn eval(&self, t: f64, x: &[f64], xr: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_out];
        (self.eval)(t, x, xr, &mut out);
        out
    }
}

/// Where the state lives: all of ℝⁿ, or an implicit manifold.
#[derive(Debug, Clone)]
pub enum StateSpace {
    Flat { dim: usize },
    Manifold(ImplicitManifold),
}

impl StateSpace {
    pub fn ambient_dim(&self) -> usize {
        match self {
            StateSpace::Flat { dim } => *dim,
            StateSpace::Manifold(m) => m.ambient_dim(),
        }
    }

    /// Dimension of the manifold `N` (`k` for implicit manifolds).
    pub fn manifold_dim(&self) -> usize {
        match self {
            StateSpace::Flat { dim } => *dim,
            StateSpace::Manifold(m) => m.k(),
        }
    }

    pub fn manifold(&self) -> Option<&ImplicitManifold> {
        match self {
            StateSpace::Flat { .. } => None,
            StateSpace::Manifold(m) => Some(m),
        }
    }
}

/// A group of consecutive coordinates sharing one coefficient `aᵢ(t)`.
#[derive(Debug, Clone)]
pub struct Block {
    pub dim: usize,
    pub coefficient: PeriodicCoefficient,
}

/// A fully specified problem: manifold, unperturbed field, coefficient
/// blocks and delay perturbation. The lag is normalized into `(0, T]`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    name: String,
    space: StateSpace,
    field: VectorMap,
    lifted: Option<LiftedField>,
    blocks: Vec<Block>,
    perturbation: DelayPerturbation,
    period: f64,
    lag: f64,
    config: Option<ProblemConfig>,
}

/// Maps `r > 0` to `r − nT ∈ (0, T]`.
pub fn normalize_lag(lag: f64, period: f64) -> Result<f64> {
    if !(lag > 0.0 && lag.is_finite()) {
        return Err(Error::InvalidProblem(format!(
            "lag must be positive, got {lag}"
        )));
    }
    if lag <= period {
        return Ok(lag);
    }
    let n = (lag / period).ceil() - 1.0;
    let r = lag - n * period;
    // A remainder at rounding level means the lag is a whole number of periods.
    Ok(if r <= 8.0 * f64::EPSILON * lag {
        period
    } else {
        r.min(period)
    })
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        space: StateSpace,
        field: VectorMap,
        blocks: Vec<Block>,
        perturbation: DelayPerturbation,
    ) -> Result<Self> {
        let n = space.ambient_dim();
        let k = space.manifold_dim();
        if field.dim_in() != n || field.dim_out() != k {
            return Err(Error::InvalidProblem(format!(
                "field must map ℝ^{n} to ℝ^{k}, got ℝ^{} → ℝ^{}",
                field.dim_in(),
                field.dim_out()
            )));
        }
        if blocks.is_empty() {
            return Err(Error::InvalidProblem(
                "at least one coefficient block required".into(),
            ));
        }
        if blocks.iter().map(|b| b.dim).sum::<usize>() != k || blocks.iter().any(|b| b.dim == 0) {
            return Err(Error::InvalidProblem(format!(
                "block dimensions must be positive and sum to {k}"
            )));
        }
        if matches!(space, StateSpace::Manifold(_)) && blocks.len() != 1 {
            return Err(Error::InvalidProblem(
                "manifold problems take a single coefficient block".into(),
            ));
        }
        let period = blocks[0].coefficient.period();
        if blocks.iter().any(|b| b.coefficient.period() != period) {
            return Err(Error::InvalidProblem(
                "all coefficients must share one period".into(),
            ));
        }
        if perturbation.state_dim() != n || perturbation.dim_out() != k {
            return Err(Error::InvalidProblem(format!(
                "perturbation must map (t, ℝ^{n}, ℝ^{n}) to ℝ^{k}"
            )));
        }
        let lag = normalize_lag(perturbation.lag(), period)?;
        let lifted = match &space {
            StateSpace::Flat { .. } => None,
            StateSpace::Manifold(m) => Some(m.lift_field(field.clone())?),
        };
        Ok(Self {
            name: name.into(),
            space,
            field,
            lifted,
            blocks,
            perturbation,
            period,
            lag,
            config: None,
        })
    }

    pub(crate) fn with_config(mut self, config: ProblemConfig) -> Self {
        self.config = Some(config);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn manifold(&self) -> Option<&ImplicitManifold> {
        self.space.manifold()
    }

    pub fn field(&self) -> &VectorMap {
        &self.field
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn perturbation(&self) -> &DelayPerturbation {
        &self.perturbation
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// The normalized lag, `0 < r ≤ T`.
    pub fn lag(&self) -> f64 {
        self.lag
    }

    pub fn dim(&self) -> usize {
        self.space.ambient_dim()
    }

    pub fn manifold_dim(&self) -> usize {
        self.space.manifold_dim()
    }

    pub fn config(&self) -> Option<&ProblemConfig> {
        self.config.as_ref()
    }

    /// SHA-256 of the canonical configuration, when the problem has one.
    pub fn spec_hash(&self) -> Option<String> {
        self.config.as_ref().map(ProblemConfig::hash)
    }

    /// `Π (−sign⟨aᵢ⟩)^{dim Nᵢ}`: relates `deg(Φ)` to the index of the translation operator.
    pub fn index_sign_factor(&self) -> i64 {
        self.blocks
            .iter()
            .map(|b| {
                if b.coefficient.average() > 0.0 && b.dim % 2 == 1 {
                    -1
                } else {
                    1
                }
            })
            .product()
    }

    /// The unweighted tangent field `Φ(x)` (the lifted field on manifolds).
    pub fn phi_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.lifted {
            None => {
                self.field.eval_into(x, out);
                Ok(())
            }
            Some(l) => l.eval_into(x, out),
        }
    }

    pub fn phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.phi_into(x, &mut out)?;
        Ok(out)
    }

    /// The tangent perturbation `Ξ(t, x, x_delayed)`.
    pub fn xi_into(&self, t: f64, x: &[f64], xr: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.space {
            StateSpace::Flat { .. } => {
                self.perturbation.eval_into(t, x, xr, out);
                Ok(())
            }
            StateSpace::Manifold(m) => {
                let h = self.perturbation.eval(t, x, xr);
                m.lift_unchecked(x, &h, out)
            }
        }
    }

    /// Projects onto the manifold (identity on flat problems).
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.space {
            StateSpace::Flat { .. } => Ok(x.to_vec()),
            StateSpace::Manifold(m) => m.project_unchecked(x),
        }
    }

    /// `‖g(x)‖∞`, zero on flat problems.
    pub fn constraint_residual(&self, x: &[f64]) -> f64 {
        match &self.space {
            StateSpace::Flat { .. } => 0.0,
            StateSpace::Manifold(m) => norm_inf(&m.g(x)),
        }
    }

    /// A default starting point: the configured one, else the origin (flat)
    /// or the projected box centre (manifold).
    pub fn default_start(&self) -> Result<Vec<f64>> {
        if let Some(start) = self.config.as_ref().and_then(|c| c.start.clone()) {
            return self.project(&start);
        }
        match &self.space {
            StateSpace::Flat { dim } => Ok(vec![0.0; *dim]),
            StateSpace::Manifold(m) => m.project(&m.ambient_box().center()),
        }
    }

    /// States used for statistical checks: manifold samples or a Halton cloud in `[-1, 1]ⁿ`.
    pub(crate) fn sample_states(&self, count: usize) -> Vec<Vec<f64>> {
        match &self.space {
            StateSpace::Flat { dim } => BoxRegion::cube(*dim, 1.0)
                .map(|b| b.interior_samples(count))
                .unwrap_or_default(),
            StateSpace::Manifold(m) => m.sample_points(count),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(ValidationCheck {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Checks the standing hypotheses on a problem. Never fails; problems are
/// reported as failed checks.
pub fn validate(p: &ProblemSpec) -> ValidationReport {
    let mut report = ValidationReport {
        checks: Vec::new(),
        warnings: vec![
            "uniqueness of solutions assumes locally Lipschitz fields; this is not checked".into(),
        ],
    };
    let period = p.period();

    for (i, b) in p.blocks().iter().enumerate() {
        let avg = b.coefficient.average();
        report.push(
            &format!("nonzero_average[{i}]"),
            avg.abs() > ZERO_AVERAGE_TOL,
            format!("average = {avg:e}"),
        );
        let worst = (1..=PERIODICITY_SAMPLES)
            .map(|j| {
                let t = period * halton(j, 2);
                let a0 = b.coefficient.value(t);
                (b.coefficient.value(t + period) - a0).abs() / (1.0 + a0.abs())
            })
            .fold(0.0, f64::max);
        report.push(
            &format!("coefficient_periodicity[{i}]"),
            worst <= PERIODICITY_TOL,
            format!("max relative deviation {worst:e}"),
        );
    }

    let states = p.sample_states(16);
    if states.is_empty() {
        report.push("sample_states", false, "no admissible sample states".into());
    }
    let mut worst = 0.0f64;
    let n = p.dim();
    for j in 1..=PERIODICITY_SAMPLES {
        if states.is_empty() {
            break;
        }
        let x = &states[j % states.len()];
        let xr = &states[(j * 7 + 3) % states.len()];
        let t = period * halton(j, 3);
        let h0 = p.perturbation().eval(t, x, xr);
        let h1 = p.perturbation().eval(t + period, x, xr);
        for (a, b) in h0.iter().zip(&h1) {
            worst = worst.max((a - b).abs() / (1.0 + a.abs()));
        }
    }
    report.push(
        "perturbation_periodicity",
        worst <= PERIODICITY_TOL,
        format!("max relative deviation {worst:e}"),
    );

    if let Some(m) = p.manifold() {
        let mut worst = 0.0f64;
        let mut failure = None;
        let mut buf = vec![0.0; n];
        for (j, x) in states.iter().enumerate() {
            let xr = &states[(j + 1) % states.len()];
            let candidates = [p.phi_into(x, &mut buf).map(|_| buf.clone()), {
                let mut out = vec![0.0; n];
                p.xi_into(0.37 * period, x, xr, &mut out).map(|_| out)
            }];
            for v in candidates {
                match v {
                    Ok(v) => {
                        let jac = m.constraint().jacobian(x);
                        let scale = 1.0 + norm_inf(&v);
                        for i in 0..m.s() {
                            let dot: f64 = (0..n).map(|c| jac[(i, c)] * v[c]).sum();
                            worst = worst.max(dot.abs() / scale);
                        }
                    }
                    Err(e) => failure = Some(e.to_string()),
                }
            }
        }
        report.push(
            "tangency",
            failure.is_none() && worst <= 1e-8,
            failure.unwrap_or_else(|| format!("max |g'(p)·v| / (1+|v|) = {worst:e}")),
        );
    }

    let r = p.lag();
    report.push(
        "lag_normalized",
        r > 0.0 && r <= period,
        format!("r = {r}, T = {period}"),
    );
    report
}
