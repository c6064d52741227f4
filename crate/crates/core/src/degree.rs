//! Brouwer degree on boxes by certified zero counting, degrees of tangent
//! fields on implicit manifolds through `F = (f, g)`, and the block and
//! scaling laws.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::ProblemSpec;
use crate::linalg::{dist_inf, matrix_norm_inf, min_singular_value, norm_inf, solve};
use crate::manifold::{ImplicitManifold, SINGULAR_FLOOR};
use crate::map::VectorMap;
use crate::region::BoxRegion;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeOptions {
    /// Subdivision levels before a box is reported unresolved.
    pub max_depth: usize,
    pub max_boxes: usize,
    /// Newton stops when the step falls below `newton_tol·(1 + ‖x‖∞)`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Polished zeros must satisfy `‖F(z)‖∞ ≤ residual_tol`.
    pub residual_tol: f64,
    /// Zeros with `|det J| ≤ degeneracy_floor` are degenerate.
    pub degeneracy_floor: f64,
    /// Boundary samples must satisfy `‖F‖∞ > boundary_floor`.
    pub boundary_floor: f64,
}

impl Default for DegreeOptions {
    fn default() -> Self {
        Self {
            max_depth: 14,
            max_boxes: 400_000,
            newton_tol: 1e-10,
            newton_max_iter: 60,
            residual_tol: 1e-8,
            degeneracy_floor: 1e-8,
            boundary_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Zero {
    pub location: Vec<f64>,
    /// Sign of `det F′(z)`; 0 for degenerate zeros.
    pub sign: i8,
    pub det: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeResult {
    pub value: i64,
    pub zeros: Vec<Zero>,
    pub certified: bool,
    pub diagnostics: Vec<String>,
}

enum Outcome {
    Excluded,
    Leaf(Zero),
    Split(Vec<BoxRegion>),
    Unresolved(Option<Zero>, String),
    Invalid(String),
}

/// Newton's method from `x0`. Returns the polished point and `‖F‖∞` there.
pub fn newton(f: &VectorMap, x0: &[f64], opts: &DegreeOptions) -> Result<(Vec<f64>, f64)> {
    let mut x = x0.to_vec();
    let mut fx = f.eval(&x);
    let mut history = vec![norm_inf(&fx)];
    for _ in 0..opts.newton_max_iter {
        if fx.iter().any(|v| !v.is_finite()) {
            break;
        }
        let j = f.jacobian(&x);
        let Some(dx) = solve(&j, &fx) else { break };
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi -= d;
        }
        fx = f.eval(&x);
        history.push(norm_inf(&fx));
        if norm_inf(&dx) <= opts.newton_tol * (1.0 + norm_inf(&x)) {
            let res = norm_inf(&fx);
            if res <= opts.residual_tol {
                return Ok((x, res));
            }
            break;
        }
    }
    Err(Error::Convergence {
        message: format!("Newton from {x0:?} did not converge"),
        residuals: history,
    })
}

fn polished_zero(f: &VectorMap, z: Vec<f64>, residual: f64, opts: &DegreeOptions) -> Zero {
    let det = f.jacobian(&z).determinant();
    let sign = if det.abs() > opts.degeneracy_floor {
        det.signum() as i8
    } else {
        0
    };
    Zero {
        location: z,
        sign,
        det,
        residual,
    }
}

/// `sign det F′(z)` at the zero reached by Newton from `location`.
pub fn zero_index(f: &VectorMap, location: &[f64], opts: &DegreeOptions) -> Result<i8> {
    let (z, res) = newton(f, location, opts)?;
    let zero = polished_zero(f, z, res, opts);
    if zero.sign == 0 {
        return Err(Error::Uncertified(format!(
            "degenerate zero at {:?} (det {:e})",
            zero.location, zero.det
        )));
    }
    Ok(zero.sign)
}

fn sample_points(b: &BoxRegion) -> Vec<Vec<f64>> {
    let n = b.dim();
    let c = b.center();
    let mut pts = vec![c.clone()];
    if n <= 4 {
        pts.extend(b.corners());
    } else {
        let h = b.half_widths();
        for i in 0..n {
            for s in [-1.0, 1.0] {
                let mut p = c.clone();
                p[i] += s * h[i];
                pts.push(p);
            }
        }
    }
    pts
}

fn children(b: &BoxRegion) -> Vec<BoxRegion> {
    if b.dim() <= 4 {
        return b.bisect();
    }
    let h = b.half_widths();
    let axis = (0..b.dim())
        .max_by(|&i, &j| h[i].partial_cmp(&h[j]).expect("finite widths"))
        .expect("nonempty");
    let (l, r) = b.split(axis, b.center()[axis]).expect("valid split");
    vec![l, r]
}

fn classify(f: &VectorMap, b: &BoxRegion, depth: usize, opts: &DegreeOptions) -> Outcome {
    let n = b.dim();
    let c = b.center();
    let rho = b.half_widths();
    let fc = f.eval(&c);
    if fc.iter().any(|v| !v.is_finite()) {
        return Outcome::Invalid(format!("map is undefined at {c:?}"));
    }
    let pts = sample_points(b);
    let jacs: Vec<DMatrix<f64>> = pts.iter().map(|p| f.jacobian(p)).collect();
    if jacs.iter().any(|j| j.iter().any(|v| !v.is_finite())) {
        return Outcome::Invalid(format!("Jacobian is undefined near {c:?}"));
    }
    for i in 0..n {
        let bound: f64 = (0..n)
            .map(|j| 2.0 * jacs.iter().map(|m| m[(i, j)].abs()).fold(0.0, f64::max) * rho[j])
            .sum();
        if fc[i].abs() > bound {
            return Outcome::Excluded;
        }
    }

    let newton_zero = newton(f, &c, opts).ok().filter(|(z, _)| {
        let slack = 1e-12 * (1.0 + b.max_half_width());
        b.contains_inflated(z, slack)
    });
    if let Some((z, res)) = &newton_zero {
        let jz = f.jacobian(z);
        if jz.determinant().abs() > opts.degeneracy_floor {
            if let Some(inv) = jz.clone().try_inverse() {
                let contraction = jacs
                    .iter()
                    .map(|m| matrix_norm_inf(&(&inv * (m - &jz))))
                    .fold(0.0, f64::max);
                if contraction < 0.25 {
                    return Outcome::Leaf(polished_zero(f, z.clone(), *res, opts));
                }
            }
        }
    }
    let limit = if n <= 4 {
        opts.max_depth
    } else {
        opts.max_depth * n
    };
    if depth >= limit {
        let zero = newton_zero.map(|(z, res)| polished_zero(f, z, res, opts));
        return Outcome::Unresolved(
            zero,
            format!("box around {c:?} unresolved at depth {depth}"),
        );
    }
    Outcome::Split(children(b))
}

fn check_boundary(f: &VectorMap, region: &BoxRegion, opts: &DegreeOptions) -> Result<()> {
    for x in region.boundary_samples(64 * region.dim()) {
        let v = f.eval(&x);
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::Admissibility(format!(
                "map is undefined at boundary point {x:?}"
            )));
        }
        if norm_inf(&v) <= opts.boundary_floor {
            return Err(Error::Admissibility(format!(
                "map (nearly) vanishes at boundary point {x:?}"
            )));
        }
    }
    Ok(())
}

fn on_boundary(region: &BoxRegion, z: &[f64]) -> bool {
    let eps = 1e-9 * (1.0 + region.max_half_width());
    z.iter()
        .zip(region.lo().iter().zip(region.hi()))
        .any(|(&v, (&lo, &hi))| (v - lo).abs() <= eps || (v - hi).abs() <= eps)
}

/// Brouwer degree of `f` on `region` with respect to 0.
pub fn brouwer_degree(
    f: &VectorMap,
    region: &BoxRegion,
    opts: &DegreeOptions,
) -> Result<DegreeResult> {
    let n = region.dim();
    if f.dim_in() != n || f.dim_out() != n {
        return Err(Error::Dimension {
            expected: n,
            got: f.dim_out(),
        });
    }
    check_boundary(f, region, opts)?;

    let mut queue = vec![region.clone()];
    let mut depth = 0;
    let mut found: Vec<Zero> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut certified = true;
    let mut processed = 0usize;
    while !queue.is_empty() {
        processed += queue.len();
        if processed > opts.max_boxes {
            certified = false;
            diagnostics.push(format!("box budget of {} exhausted", opts.max_boxes));
            break;
        }
        let outcomes: Vec<Outcome> = queue
            .par_iter()
            .map(|b| classify(f, b, depth, opts))
            .collect();
        let mut next = Vec::new();
        for o in outcomes {
            match o {
                Outcome::Excluded => {}
                Outcome::Leaf(z) => found.push(z),
                Outcome::Split(c) => next.extend(c),
                Outcome::Unresolved(z, msg) => {
                    certified = false;
                    if diagnostics.len() < 16 {
                        diagnostics.push(msg);
                    }
                    found.extend(z);
                }
                Outcome::Invalid(msg) => return Err(Error::Admissibility(msg)),
            }
        }
        queue = next;
        depth += 1;
    }

    found.sort_by(|a, b| {
        a.location
            .iter()
            .zip(&b.location)
            .map(|(x, y)| x.partial_cmp(y).expect("finite zeros"))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut zeros: Vec<Zero> = Vec::new();
    for z in found {
        let sep = 1e-7 * (1.0 + norm_inf(&z.location));
        if !zeros
            .iter()
            .any(|w| dist_inf(&w.location, &z.location) <= sep)
        {
            zeros.push(z);
        }
    }
    if let Some(z) = zeros.iter().find(|z| on_boundary(region, &z.location)) {
        return Err(Error::Admissibility(format!(
            "zero at {:?} lies on the boundary",
            z.location
        )));
    }
    for z in zeros.iter().filter(|z| z.sign == 0) {
        certified = false;
        diagnostics.push(format!(
            "degenerate zero at {:?} (det {:e})",
            z.location, z.det
        ));
    }
    let value = zeros.iter().map(|z| z.sign as i64).sum();
    Ok(DegreeResult {
        value,
        zeros,
        certified,
        diagnostics,
    })
}

/// Degree of a tangent field: the signed `deg(F, V)` and its magnitude, which
/// is all the reduction determines for fields on an implicit manifold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldDegree {
    pub signed: i64,
    pub magnitude: i64,
    /// True on implicit manifolds, where only `|deg|` transfers to the field.
    pub sign_ambiguous: bool,
    pub result: DegreeResult,
}

/// `F(x, y) = (f(x, y), g(x, y))`, with Jacobian stacked from the parts.
pub fn reduced_map(m: &ImplicitManifold, f: &VectorMap) -> Result<VectorMap> {
    let (k, s, n) = (m.k(), m.s(), m.ambient_dim());
    if f.dim_in() != n || f.dim_out() != k {
        return Err(Error::Dimension {
            expected: k,
            got: f.dim_out(),
        });
    }
    let (fe, ge) = (f.clone(), m.constraint().clone());
    let (fj, gj) = (f.clone(), m.constraint().clone());
    Ok(VectorMap::new(n, n, move |x, out| {
        fe.eval_into(x, &mut out[..k]);
        ge.eval_into(x, &mut out[k..]);
    })
    .with_jacobian(move |x| {
        let mut j = DMatrix::zeros(n, n);
        j.rows_mut(0, k).copy_from(&fj.jacobian(x));
        j.rows_mut(k, s).copy_from(&gj.jacobian(x));
        j
    }))
}

/// Degree of the field built from `f`, on the manifold when one is given.
pub fn field_degree(
    manifold: Option<&ImplicitManifold>,
    f: &VectorMap,
    region: &BoxRegion,
    opts: &DegreeOptions,
) -> Result<FieldDegree> {
    let Some(m) = manifold else {
        let result = brouwer_degree(f, region, opts)?;
        return Ok(FieldDegree {
            signed: result.value,
            magnitude: result.value.abs(),
            sign_ambiguous: false,
            result,
        });
    };
    let amb = m.ambient_box();
    if !(region.lo().iter().zip(amb.lo()).all(|(a, b)| a >= b)
        && region.hi().iter().zip(amb.hi()).all(|(a, b)| a <= b))
    {
        return Err(Error::Admissibility(
            "degree box must lie inside the ambient box".into(),
        ));
    }
    let big_f = reduced_map(m, f)?;
    let mut result = brouwer_degree(&big_f, region, opts)?;
    for z in &result.zeros {
        let (_, d2) = m.partials(&z.location);
        let sigma = min_singular_value(&d2);
        if sigma <= SINGULAR_FLOOR {
            result.certified = false;
            result.diagnostics.push(format!(
                "constraint is singular in y at zero {:?} (σ_min {sigma:e})",
                z.location
            ));
        }
    }
    Ok(FieldDegree {
        signed: result.value,
        magnitude: result.value.abs(),
        sign_ambiguous: true,
        result,
    })
}

/// Degree of the unperturbed field of a problem on `region`.
pub fn problem_degree(
    p: &ProblemSpec,
    region: &BoxRegion,
    opts: &DegreeOptions,
) -> Result<FieldDegree> {
    field_degree(p.manifold(), p.field(), region, opts)
}

/// `(−sign c)^dim`: the factor relating `deg(−c·v)` to `deg(v)`.
pub fn sign_factor(c: f64, dim: usize) -> Result<i64> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidProblem(format!(
            "scaling constant must be nonzero, got {c}"
        )));
    }
    Ok(if c > 0.0 && dim % 2 == 1 { -1 } else { 1 })
}

fn certified_value(r: DegreeResult) -> Result<i64> {
    if r.certified {
        Ok(r.value)
    } else {
        Err(Error::Uncertified(r.diagnostics.join("; ")))
    }
}

/// Product of the per-block degrees of a block-diagonal field.
pub fn block_degree(parts: &[(VectorMap, BoxRegion)], opts: &DegreeOptions) -> Result<i64> {
    if parts.is_empty() {
        return Err(Error::InvalidProblem("no blocks".into()));
    }
    parts
        .iter()
        .map(|(f, b)| certified_value(brouwer_degree(f, b, opts)?))
        .product()
}

/// Degree of the block field `(−c₁v₁, −c₂v₂, …)` through the per-block sign law.
pub fn scaled_block_degree(
    parts: &[(VectorMap, BoxRegion)],
    coeffs: &[f64],
    opts: &DegreeOptions,
) -> Result<i64> {
    if coeffs.len() != parts.len() {
        return Err(Error::Dimension {
            expected: parts.len(),
            got: coeffs.len(),
        });
    }
    let mut value = block_degree(parts, opts)?;
    for ((_, b), &c) in parts.iter().zip(coeffs) {
        value *= sign_factor(c, b.dim())?;
    }
    Ok(value)
}

/// The block-diagonal field on the product box.
pub fn stack_blocks(parts: &[(VectorMap, BoxRegion)]) -> Result<(VectorMap, BoxRegion)> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut dims = Vec::new();
    for (f, b) in parts {
        if f.dim_in() != b.dim() || f.dim_out() != b.dim() {
            return Err(Error::Dimension {
                expected: b.dim(),
                got: f.dim_out(),
            });
        }
        lo.extend_from_slice(b.lo());
        hi.extend_from_slice(b.hi());
        dims.push(b.dim());
    }
    let n = lo.len();
    let maps: Vec<VectorMap> = parts.iter().map(|(f, _)| f.clone()).collect();
    let jmaps = maps.clone();
    let jdims = dims.clone();
    let stacked = VectorMap::new(n, n, move |x, out| {
        let mut off = 0;
        for (f, &d) in maps.iter().zip(&dims) {
            f.eval_into(&x[off..off + d], &mut out[off..off + d]);
            off += d;
        }
    })
    .with_jacobian(move |x| {
        let mut j = DMatrix::zeros(n, n);
        let mut off = 0;
        for (f, &d) in jmaps.iter().zip(&jdims) {
            j.view_mut((off, off), (d, d))
                .copy_from(&f.jacobian(&x[off..off + d]));
            off += d;
        }
        j
    });
    Ok((stacked, BoxRegion::new(lo, hi)?))
}
