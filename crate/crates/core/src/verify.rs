//! End-to-end checks of the identities the library rests on. Reports hold only
//! deterministic quantities, so two runs with the same seed serialize identically.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{BlockConfig, PerturbationComponent, ProblemConfig, SpaceConfig};
use crate::continuation::{branch_from_trivial, BranchRun, ContinuationOptions, Termination};
use crate::degree::{
    block_degree, brouwer_degree, field_degree, reduced_map, scaled_block_degree, sign_factor,
    stack_blocks, DegreeOptions,
};
use crate::error::{Error, Result};
use crate::expr::{Harmonic, Monomial, PerturbationTerm, Polynomial};
use crate::fields::ProblemSpec;
use crate::integrate::{constant_history, integrate_dde, integrate_ode, IntegrateOptions};
use crate::manifold::ImplicitManifold;
use crate::map::VectorMap;
use crate::poincare::{fixed_point_index, poincare_map, translation_map, IndexOptions};
use crate::problems;
use crate::region::BoxRegion;

pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Rescale,
    DegreeLaws,
    IndexChain,
    Dae,
    Branches,
    Examples,
    All,
}

impl Suite {
    pub const NAMES: &'static [&'static str] = &[
        "rescale",
        "degree-laws",
        "index-chain",
        "dae",
        "branches",
        "examples",
        "all",
    ];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rescale" => Suite::Rescale,
            "degree-laws" => Suite::DegreeLaws,
            "index-chain" => Suite::IndexChain,
            "dae" => Suite::Dae,
            "branches" => Suite::Branches,
            "examples" => Suite::Examples,
            "all" => Suite::All,
            other => {
                return Err(Error::Config(format!(
                    "unknown suite {other:?}; expected one of {}",
                    Suite::NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = [
            Suite::Rescale,
            Suite::DegreeLaws,
            Suite::IndexChain,
            Suite::Dae,
            Suite::Branches,
            Suite::Examples,
            Suite::All,
        ]
        .iter()
        .position(|s| s == self)
        .expect("listed");
        f.write_str(Suite::NAMES[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Error or integer mismatch; `null` when the computation failed.
    pub measured: Option<f64>,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    pub fn within(
        name: impl Into<String>,
        measured: f64,
        tolerance: f64,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            passed: measured.is_finite() && measured <= tolerance,
            measured: measured.is_finite().then_some(measured),
            tolerance,
            detail: detail.into(),
        }
    }

    pub fn exact(name: impl Into<String>, got: i64, expected: i64) -> Self {
        Self::within(
            name,
            (got - expected).unsigned_abs() as f64,
            0.0,
            format!("got {got}, expected {expected}"),
        )
    }

    pub fn holds(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        Self::within(name, if ok { 0.0 } else { 1.0 }, 0.0, detail)
    }

    pub fn error(name: impl Into<String>, err: &Error) -> Self {
        Self {
            name: name.into(),
            passed: false,
            measured: None,
            tolerance: 0.0,
            detail: err.to_string(),
        }
    }

    fn from_result(name: &str, r: Result<Check>) -> Check {
        r.unwrap_or_else(|e| Check::error(name, &e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub integrate: IntegrateOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            integrate: IntegrateOptions::default(),
        }
    }
}

pub fn run(suite: Suite, opts: &VerifyOptions) -> VerifyReport {
    let mut checks = Vec::new();
    let wants = |s: Suite| suite == Suite::All || suite == s;
    if wants(Suite::Rescale) {
        checks.extend(rescale_equivalence(opts));
    }
    if wants(Suite::DegreeLaws) {
        checks.extend(degree_scaling());
        checks.extend(degree_additivity());
        checks.extend(degree_blocks());
        checks.extend(manifold_degrees());
    }
    if wants(Suite::IndexChain) {
        checks.extend(index_chain(opts));
    }
    if wants(Suite::Dae) {
        checks.extend(dae_equivalence(opts));
    }
    if wants(Suite::Branches) {
        checks.extend(closed_form_branch());
        checks.extend(example_branches());
    }
    if wants(Suite::Examples) {
        checks.extend(linear_example());
        checks.extend(dde_oracle(opts));
    }
    VerifyReport {
        suite,
        seed: opts.seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

fn poly(n: usize, terms: &[(f64, &[u32])]) -> Polynomial {
    Polynomial::new(
        terms
            .iter()
            .map(|(c, p)| {
                let mut powers = p.to_vec();
                powers.resize(n, 0);
                Monomial::new(*c, powers)
            })
            .collect(),
    )
}

fn flat_problem(
    name: &str,
    rows: Vec<Polynomial>,
    coefficient: Vec<Harmonic>,
    period: f64,
) -> Result<ProblemSpec> {
    let dim = rows.len();
    ProblemConfig {
        name: name.into(),
        period,
        lag: period,
        space: SpaceConfig::Flat { dim },
        field: rows,
        blocks: vec![BlockConfig { dim, coefficient }],
        perturbation: Vec::new(),
        start: None,
        region: None,
    }
    .build()
}

/// Six fields in dimensions 1 to 3, one linear and one polynomial per dimension.
pub fn rescale_fields() -> Vec<(&'static str, Vec<Polynomial>)> {
    vec![
        ("linear-1d", vec![poly(1, &[(-1.0, &[1])])]),
        ("cubic-1d", vec![poly(1, &[(1.0, &[1]), (-1.0, &[3])])]),
        (
            "spiral-2d",
            vec![
                poly(2, &[(-0.1, &[1, 0]), (-1.0, &[0, 1])]),
                poly(2, &[(1.0, &[1, 0]), (-0.1, &[0, 1])]),
            ],
        ),
        (
            "duffing-2d",
            vec![
                poly(2, &[(1.0, &[0, 1])]),
                poly(2, &[(-1.0, &[1, 0]), (-1.0, &[3, 0])]),
            ],
        ),
        (
            "triangular-3d",
            vec![
                poly(3, &[(1.0, &[1, 0, 0])]),
                poly(3, &[(1.0, &[0, 1, 0]), (1.0, &[0, 0, 1])]),
                poly(3, &[(1.0, &[0, 0, 1])]),
            ],
        ),
        (
            "quadratic-3d",
            vec![
                poly(3, &[(-1.0, &[1, 0, 0]), (0.5, &[0, 1, 1])]),
                poly(3, &[(-1.0, &[0, 1, 0]), (-0.5, &[1, 0, 1])]),
                poly(3, &[(-1.0, &[0, 0, 1]), (1.0, &[1, 1, 0])]),
            ],
        ),
    ]
}

/// `P^{aΦ}_T = P^{Φ}_T` for `a(t) = 1 + sin(2πt/T)`, which has average one.
pub fn rescale_equivalence(opts: &VerifyOptions) -> Vec<Check> {
    let coefficient = vec![
        Harmonic::Const { value: 1.0 },
        Harmonic::Sin { mode: 1, amp: 1.0 },
    ];
    rescale_fields()
        .into_iter()
        .enumerate()
        .map(|(i, (name, rows))| {
            let label = format!("rescale/{name}");
            Check::from_result(
                &label,
                (|| {
                    let p = flat_problem(name, rows, coefficient.clone(), 1.0)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
                    let mut worst: f64 = 0.0;
                    for _ in 0..50 {
                        let x0: Vec<f64> =
                            (0..p.dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                        let a = poincare_map(&p, true, &x0, &opts.integrate)?;
                        let b = poincare_map(&p, false, &x0, &opts.integrate)?;
                        worst = worst.max(crate::linalg::dist_inf(&a, &b));
                    }
                    Ok(Check::within(
                        &label,
                        worst,
                        1e-7,
                        "max over 50 random starts",
                    ))
                })(),
            )
        })
        .collect()
}

fn diagonal(n: usize, d: f64) -> VectorMap {
    VectorMap::linear(nalgebra::DMatrix::from_diagonal_element(n, n, d))
}

fn rotation(n: usize) -> VectorMap {
    let mut a = nalgebra::DMatrix::identity(n, n);
    a[(0, 0)] = 0.0;
    a[(1, 1)] = 0.0;
    a[(0, 1)] = -1.0;
    a[(1, 0)] = 1.0;
    VectorMap::linear(a)
}

/// Fields for the scaling law, each in the dimensions where it is defined.
pub fn scaling_fields() -> Result<Vec<(String, VectorMap)>> {
    let mut out = Vec::new();
    for n in 1..=3 {
        out.push((format!("id-{n}d"), diagonal(n, 1.0)));
        out.push((format!("neg-id-{n}d"), diagonal(n, -1.0)));
    }
    for n in 2..=3 {
        out.push((format!("rotation-{n}d"), rotation(n)));
    }
    out.push((
        "linear-3d".into(),
        problems::build_linear_3d()?.field().clone(),
    ));
    Ok(out)
}

fn certified(f: &VectorMap, b: &BoxRegion, o: &DegreeOptions) -> Result<i64> {
    let r = brouwer_degree(f, b, o)?;
    if r.certified {
        Ok(r.value)
    } else {
        Err(Error::Uncertified(r.diagnostics.join("; ")))
    }
}

/// `deg(−c·v) = (−sign c)ⁿ deg(v)` for `c ∈ {±1, ±2, ±0.5}`.
pub fn degree_scaling() -> Vec<Check> {
    let o = DegreeOptions::default();
    let fields = match scaling_fields() {
        Ok(f) => f,
        Err(e) => return vec![Check::error("scaling", &e)],
    };
    let mut checks = Vec::new();
    for (name, v) in fields {
        let b = BoxRegion::cube(v.dim_in(), 1.0).expect("valid cube");
        for c in [1.0, -1.0, 2.0, -2.0, 0.5, -0.5] {
            let label = format!("scaling/{name}/c={c}");
            checks.push(Check::from_result(
                &label,
                (|| {
                    let base = certified(&v, &b, &o)?;
                    let scaled = certified(&v.scaled(-c), &b, &o)?;
                    Ok(Check::exact(
                        &label,
                        scaled,
                        sign_factor(c, v.dim_in())? * base,
                    ))
                })(),
            ));
        }
    }
    checks
}

fn partition(b: &BoxRegion, cuts: &[f64]) -> Result<Vec<BoxRegion>> {
    let mut parts = vec![b.clone()];
    for (axis, &at) in cuts.iter().enumerate() {
        let mut next = Vec::new();
        for q in parts {
            let (l, r) = q.split(axis, at)?;
            next.push(l);
            next.push(r);
        }
        parts = next;
    }
    Ok(parts)
}

/// Degree over a box equals the sum over a partition whose faces avoid zeros.
pub fn degree_additivity() -> Vec<Check> {
    let o = DegreeOptions::default();
    let cases: Vec<(&str, VectorMap, BoxRegion, Vec<f64>)> = vec![
        (
            "cubic-1d",
            VectorMap::new(1, 1, |x, o| o[0] = x[0] * x[0] * x[0] - x[0]),
            BoxRegion::cube(1, 2.0).unwrap(),
            vec![0.5],
        ),
        (
            "parabola-2d",
            VectorMap::new(2, 2, |x, o| {
                o[0] = x[0] * x[0] - x[1];
                o[1] = x[1] - 1.0;
            }),
            BoxRegion::cube(2, 2.0).unwrap(),
            vec![0.3, 0.2],
        ),
        (
            "circle-2d",
            VectorMap::new(2, 2, |x, o| {
                o[0] = -x[1];
                o[1] = x[0] * x[0] + x[1] * x[1] - 1.0;
            }),
            BoxRegion::cube(2, 1.5).unwrap(),
            vec![0.1, 0.1],
        ),
        (
            "product-3d",
            VectorMap::new(3, 3, |x, o| {
                o[0] = x[0] * x[0] - 0.25;
                o[1] = x[1] + x[2];
                o[2] = x[2] * x[2] * x[2] - x[2] + 0.1 * x[0];
            }),
            BoxRegion::cube(3, 1.5).unwrap(),
            vec![0.1, -0.15, 0.2],
        ),
    ];
    cases
        .into_iter()
        .map(|(name, f, b, cuts)| {
            let label = format!("additivity/{name}");
            Check::from_result(
                &label,
                (|| {
                    let whole = certified(&f, &b, &o)?;
                    let mut sum = 0;
                    for q in partition(&b, &cuts)? {
                        sum += certified(&f, &q, &o)?;
                    }
                    Ok(Check::exact(&label, sum, whole))
                })(),
            )
        })
        .collect()
}

/// The block-diagonal field's degree is the product of the block degrees, and
/// per-block scaling follows the sign law.
pub fn degree_blocks() -> Vec<Check> {
    let o = DegreeOptions::default();
    let unit = |n| BoxRegion::cube(n, 1.0).unwrap();
    type Example = (&'static str, Vec<(VectorMap, BoxRegion)>, Vec<f64>);
    let examples: Vec<Example> = vec![
        (
            "id-neg-id",
            vec![(diagonal(1, 1.0), unit(1)), (diagonal(2, -1.0), unit(2))],
            vec![2.0, -1.0],
        ),
        (
            "neg-rotation",
            vec![(diagonal(1, -1.0), unit(1)), (rotation(2), unit(2))],
            vec![-0.5, 2.0],
        ),
        (
            "logistic-pair",
            vec![
                (
                    VectorMap::new(1, 1, |x, o| o[0] = x[0] - x[0] * x[0]),
                    BoxRegion::cube(1, 0.5).unwrap(),
                ),
                (diagonal(1, 1.0), unit(1)),
            ],
            vec![1.0, 1.0],
        ),
        (
            "three-zeros",
            vec![
                (
                    VectorMap::new(1, 1, |x, o| o[0] = x[0] * x[0] * x[0] - 0.25 * x[0]),
                    unit(1),
                ),
                (diagonal(1, -1.0), unit(1)),
            ],
            vec![-2.0, -1.0],
        ),
        (
            "parabola-line",
            vec![
                (
                    VectorMap::new(2, 2, |x, o| {
                        o[0] = x[0] * x[0] - x[1];
                        o[1] = x[1] - 1.0;
                    }),
                    BoxRegion::cube(2, 2.0).unwrap(),
                ),
                (diagonal(1, 1.0), unit(1)),
            ],
            vec![1.0, -0.5],
        ),
    ];
    let mut checks = Vec::new();
    for (name, parts, coeffs) in examples {
        let label = format!("blocks/{name}");
        checks.push(Check::from_result(
            &label,
            (|| {
                let (stacked, b) = stack_blocks(&parts)?;
                Ok(Check::exact(
                    &label,
                    block_degree(&parts, &o)?,
                    certified(&stacked, &b, &o)?,
                ))
            })(),
        ));
        let label = format!("blocks/{name}/scaled");
        checks.push(Check::from_result(
            &label,
            (|| {
                let scaled: Vec<(VectorMap, BoxRegion)> = parts
                    .iter()
                    .zip(&coeffs)
                    .map(|((f, b), &c)| (f.scaled(-c), b.clone()))
                    .collect();
                let (stacked, b) = stack_blocks(&scaled)?;
                Ok(Check::exact(
                    &label,
                    certified(&stacked, &b, &o)?,
                    scaled_block_degree(&parts, &coeffs, &o)?,
                ))
            })(),
        ));
    }
    checks
}

fn unit_sphere(n: usize) -> VectorMap {
    VectorMap::new(n, 1, |p, o| {
        o[0] = p.iter().map(|v| v * v).sum::<f64>() - 1.0
    })
}

/// Manifold-field degrees known independently: a rotation on the whole circle
/// has degree 0, and a gradient field on S² has total index χ(S²) = 2.
pub fn manifold_degrees() -> Vec<Check> {
    let o = DegreeOptions::default();
    let circle = Check::from_result(
        "manifold/circle-rotation",
        (|| {
            let m = ImplicitManifold::new(1, BoxRegion::cube(2, 1.5)?, unit_sphere(2))?;
            let f = VectorMap::new(2, 1, |x, o| o[0] = -x[1]);
            // The zeros (±1, 0) of F sit where the graph chart in y degenerates,
            // so the degree of F itself is what gets certified here.
            let d = certified(&reduced_map(&m, &f)?, &BoxRegion::cube(2, 1.4)?, &o)?;
            Ok(Check::exact("manifold/circle-rotation", d.abs(), 0))
        })(),
    );
    let sphere = Check::from_result(
        "manifold/sphere-gradient",
        (|| {
            let f = VectorMap::new(3, 2, |x, o| {
                o[0] = -x[2] * x[0];
                o[1] = -x[2] * x[1];
            });
            let mut total = 0;
            for (lo, hi) in [(0.05, 1.5), (-1.5, -0.05)] {
                let chart = BoxRegion::new(vec![-1.5, -1.5, lo], vec![1.5, 1.5, hi])?;
                let m = ImplicitManifold::new(2, chart.clone(), unit_sphere(3))?;
                let d = field_degree(Some(&m), &f, &chart, &o)?;
                if !d.result.certified {
                    return Err(Error::Uncertified(d.result.diagnostics.join("; ")));
                }
                total += d.magnitude;
            }
            Ok(Check::exact("manifold/sphere-gradient", total, 2))
        })(),
    );
    vec![circle, sphere]
}

/// Quantities of the linear descriptor example.
pub fn linear_example() -> Vec<Check> {
    let mut checks = Vec::new();
    match problems::invert_descriptor() {
        Ok(inv) => {
            checks.push(Check::within(
                "linear-3d/det-e",
                (inv.det + 1.0).abs(),
                1e-12,
                format!("det E = {}", inv.det),
            ));
            checks.push(Check::within(
                "linear-3d/e-inverse",
                inv.identity_error,
                1e-14,
                "max |E·E⁻¹ − I|",
            ));
        }
        Err(e) => checks.push(Check::error("linear-3d/det-e", &e)),
    }
    for (label, t) in [("0", 0.0), ("pi/3", PI / 3.0), ("pi", PI)] {
        let name = format!("linear-3d/factorization/t={label}");
        checks.push(Check::from_result(
            &name,
            problems::factorization_error(t).map(|e| Check::within(&name, e, 1e-12, "entrywise")),
        ));
    }
    checks.push(Check::from_result(
        "linear-3d/degree",
        (|| {
            let p = problems::build_linear_3d()?;
            let d = certified(
                p.field(),
                &BoxRegion::cube(3, 1.0)?,
                &DegreeOptions::default(),
            )?;
            Ok(Check::within(
                "linear-3d/degree",
                (d.abs() - 1) as f64,
                0.0,
                format!("signed degree {d}, magnitude compared"),
            ))
        })(),
    ));
    checks.push(Check::from_result(
        "linear-3d/averages",
        (|| {
            let p = problems::build_linear_3d()?;
            let a = [
                p.blocks()[0].coefficient.average(),
                p.blocks()[1].coefficient.average(),
            ];
            let err = (a[0] - 2.0 / PI).abs().max((a[1] - 2.0).abs());
            Ok(Check::within(
                "linear-3d/averages",
                err,
                1e-10,
                format!("averages {:?}", a),
            ))
        })(),
    ));
    checks
}

/// Fields with a single nondegenerate zero at the origin of `[−½, ½]ⁿ`.
pub fn index_fields() -> Vec<(&'static str, Vec<Polynomial>)> {
    vec![
        ("growth-1d", vec![poly(1, &[(1.0, &[1])])]),
        ("cubic-1d", vec![poly(1, &[(-1.0, &[1]), (1.0, &[3])])]),
        (
            "spiral-2d",
            vec![
                poly(2, &[(1.0, &[1, 0]), (-1.0, &[0, 1])]),
                poly(2, &[(1.0, &[1, 0]), (1.0, &[0, 1])]),
            ],
        ),
        (
            "saddle-2d",
            vec![
                poly(2, &[(-1.0, &[1, 0])]),
                poly(2, &[(1.0, &[0, 1]), (1.0, &[2, 0])]),
            ],
        ),
        (
            "triangular-3d",
            vec![
                poly(3, &[(1.0, &[1, 0, 0])]),
                poly(3, &[(1.0, &[0, 1, 0]), (1.0, &[0, 0, 1])]),
                poly(3, &[(1.0, &[0, 0, 1])]),
            ],
        ),
        (
            "sink-3d",
            vec![
                poly(3, &[(-1.0, &[1, 0, 0])]),
                poly(3, &[(-1.0, &[0, 1, 0]), (-1.0, &[2, 0, 0])]),
                poly(3, &[(-1.0, &[0, 0, 1])]),
            ],
        ),
    ]
}

/// Coefficients with averages 2, 1, −1 and 2/π over the period 1.
pub fn index_coefficients() -> Vec<(&'static str, Vec<Harmonic>)> {
    vec![
        (
            "avg=2",
            vec![
                Harmonic::Const { value: 2.0 },
                Harmonic::Sin { mode: 1, amp: 1.0 },
            ],
        ),
        (
            "avg=1",
            vec![
                Harmonic::Const { value: 1.0 },
                Harmonic::Sin { mode: 1, amp: 1.0 },
            ],
        ),
        (
            "avg=-1",
            vec![
                Harmonic::Const { value: -1.0 },
                Harmonic::Cos { mode: 1, amp: 0.5 },
            ],
        ),
        ("avg=2/pi", vec![Harmonic::AbsCos { mode: 1, amp: 1.0 }]),
    ]
}

/// `ind(P^{aΦ}_T, V) = (−sign⟨a⟩)ⁿ deg(Φ, V)`.
pub fn index_chain(opts: &VerifyOptions) -> Vec<Check> {
    let o = DegreeOptions::default();
    let index_opts = IndexOptions::default();
    let mut checks = Vec::new();
    for (fname, rows) in index_fields() {
        for (cname, coefficient) in index_coefficients() {
            let label = format!("index/{fname}/{cname}");
            checks.push(Check::from_result(
                &label,
                (|| {
                    let p = flat_problem(fname, rows.clone(), coefficient.clone(), 1.0)?;
                    let n = p.dim();
                    let v = BoxRegion::cube(n, 0.5)?;
                    let deg = certified(p.field(), &v, &o)?;
                    let avg = p.blocks()[0].coefficient.average();
                    let factor = if avg > 0.0 && n % 2 == 1 { -1 } else { 1 };
                    let map = translation_map(&p, true, &opts.integrate);
                    let index = fixed_point_index(&map, &v, &index_opts)?;
                    Ok(Check::exact(&label, index, factor * deg))
                })(),
            ));
        }
    }
    checks
}

/// The lifted field keeps solutions on the manifold over ten periods.
pub fn dae_equivalence(opts: &VerifyOptions) -> Vec<Check> {
    ["circle-rotation", "sphere-gradient"]
        .into_iter()
        .map(|name| {
            let label = format!("dae/{name}");
            Check::from_result(
                &label,
                (|| {
                    let p = problems::builtin(name)?;
                    let start = p.default_start()?;
                    let seg = integrate_ode(&p, &start, (0.0, 10.0 * p.period()), &opts.integrate)?;
                    if seg.is_truncated() {
                        return Err(Error::NotInDomain {
                            t_escape: seg.t1(),
                            t_end: 10.0 * p.period(),
                        });
                    }
                    Ok(Check::within(
                        &label,
                        seg.max_constraint_residual(),
                        1e-6,
                        format!("max |g| over [0, 10T], {} steps", seg.len() - 1),
                    ))
                })(),
            )
        })
        .collect()
}

fn run_builtin_branch(name: &str) -> Result<BranchRun> {
    let p = problems::builtin(name)?;
    let region = problems::default_region(&p)?;
    branch_from_trivial(
        &p,
        &region,
        &DegreeOptions::default(),
        &ContinuationOptions::default(),
    )
}

/// The forced linear decay has periodic solutions `λ(sin t − cos t)/2` of amplitude `λ/√2`.
pub fn closed_form_branch() -> Vec<Check> {
    let run = match run_builtin_branch("forced-decay") {
        Ok(r) => r,
        Err(e) => return vec![Check::error("forced-decay/branch", &e)],
    };
    let b = &run.branch;
    let mut checks = vec![
        Check::holds(
            "forced-decay/termination",
            b.termination == Termination::LambdaMaxReached,
            format!("{:?}", b.termination),
        ),
        Check::within(
            "forced-decay/final-lambda",
            (b.last().lambda - 10.0).abs(),
            1e-12,
            format!("λ = {}", b.last().lambda),
        ),
    ];
    let positive: Vec<_> = b.pairs.iter().filter(|q| q.lambda > 0.0).collect();
    if positive.len() < 20 {
        checks.push(Check::holds(
            "forced-decay/checkpoints",
            false,
            format!("only {} pairs with λ > 0", positive.len()),
        ));
        return checks;
    }
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let q = positive[(i * (positive.len() - 1)) / 19];
        let exact = q.lambda / 2f64.sqrt();
        worst = worst.max((q.amplitude() - exact).abs() / exact);
    }
    checks.push(Check::within(
        "forced-decay/amplitude",
        worst,
        1e-6,
        "max relative error, 20 checkpoints",
    ));
    checks
}

/// Branches from trivial pairs of the two worked examples.
pub fn example_branches() -> Vec<Check> {
    let mut checks = Vec::new();
    for name in ["paper-linear-3d", "two-species"] {
        let run = match run_builtin_branch(name) {
            Ok(r) => r,
            Err(e) => {
                checks.push(Check::error(format!("{name}/branch"), &e));
                continue;
            }
        };
        let b = &run.branch;
        checks.push(Check::holds(
            format!("{name}/degree"),
            run.trivial.degree.magnitude >= 1,
            format!("|deg| = {}", run.trivial.degree.magnitude),
        ));
        checks.push(Check::holds(
            format!("{name}/arclength"),
            b.arclength >= 1.0,
            format!("arclength {}", b.arclength),
        ));
        let worst = b.pairs.iter().map(|q| q.residual_norm).fold(0.0, f64::max);
        checks.push(Check::within(
            format!("{name}/residuals"),
            worst,
            1e-8,
            format!("{} pairs", b.pairs.len()),
        ));
        checks.push(Check::holds(
            format!("{name}/termination"),
            b.termination != Termination::StepFailure,
            format!("{:?}", b.termination),
        ));
    }
    checks
}

/// `x'(t) = −x(t−1)` with history 1, against its piecewise-polynomial solution.
pub fn dde_oracle(opts: &VerifyOptions) -> Vec<Check> {
    let exact = |t: f64| -> f64 {
        let mut x = 1.0 - t;
        if t > 1.0 {
            x += (t - 1.0).powi(2) / 2.0;
        }
        if t > 2.0 {
            x -= (t - 2.0).powi(3) / 6.0;
        }
        x
    };
    vec![Check::from_result(
        "dde/method-of-steps",
        (|| {
            let p = ProblemConfig {
                name: "delayed-decay".into(),
                period: 4.0,
                lag: 1.0,
                space: SpaceConfig::Flat { dim: 1 },
                field: vec![Polynomial::new(Vec::new())],
                blocks: vec![BlockConfig {
                    dim: 1,
                    coefficient: vec![Harmonic::Const { value: 1.0 }],
                }],
                perturbation: vec![PerturbationComponent {
                    terms: vec![PerturbationTerm::constant(-1.0).with_powers(vec![0, 1])],
                }],
                start: None,
                region: None,
            }
            .build()?;
            let seg = integrate_dde(
                &p,
                1.0,
                &constant_history(&[1.0], 1.0),
                3.0,
                &opts.integrate,
            )?;
            let mut worst: f64 = 0.0;
            for t in [1.0, 2.0, 3.0] {
                worst = worst.max((seg.eval(t)?[0] - exact(t)).abs());
            }
            Ok(Check::within(
                "dde/method-of-steps",
                worst,
                1e-9,
                "t ∈ {1, 2, 3}",
            ))
        })(),
    )]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for name in Suite::NAMES {
            assert_eq!(&name.parse::<Suite>().unwrap().to_string(), name);
        }
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn failed_checks_serialize_null() {
        let c = Check::within("x", f64::NAN, 1.0, "");
        assert!(!c.passed);
        assert!(serde_json::to_string(&c)
            .unwrap()
            .contains("\"measured\":null"));
    }

    #[test]
    fn quick_suites_pass() {
        let opts = VerifyOptions::default();
        for checks in [linear_example(), dde_oracle(&opts), manifold_degrees()] {
            for c in checks {
                assert!(c.passed, "{c:?}");
            }
        }
    }
}
