//! Built-in problems. Every entry is defined as a configuration, so it can be
//! written out, edited and rebuilt with the same hash.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, Matrix3};

use crate::config::{BlockConfig, PerturbationComponent, ProblemConfig, RegionConfig, SpaceConfig};
use crate::continuation::Region;
use crate::error::{Error, Result};
use crate::expr::{Harmonic, Monomial, PerturbationTerm, Polynomial, WrapFn};
use crate::fields::{PeriodicCoefficient, ProblemSpec};
use crate::region::BoxRegion;

pub struct RegistryEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub builder: fn() -> Result<ProblemConfig>,
}

pub const REGISTRY: &[RegistryEntry] = &[
    RegistryEntry {
        name: "paper-linear-3d",
        description: "Descriptor system E x' = A(t) x + λ H(t, x, x(t-r)) reduced through E⁻¹ to blocks R (|cos t|) and R² (2 + sin t)",
        builder: linear_3d_config,
    },
    RegistryEntry {
        name: "two-species",
        description: "Competing species with periodic growth rates; the delayed interaction term carries λ",
        builder: || two_species_config(&TwoSpeciesParams::default()),
    },
    RegistryEntry {
        name: "circle-rotation",
        description: "Rotation field on the upper chart of the unit circle, sign-changing coefficient",
        builder: circle_rotation_config,
    },
    RegistryEntry {
        name: "sphere-gradient",
        description: "Gradient of the height function on the upper chart of the unit sphere",
        builder: sphere_gradient_config,
    },
    RegistryEntry {
        name: "forced-decay",
        description: "x' = -x + λ sin t, whose periodic solution has amplitude λ/√2",
        builder: forced_decay_config,
    },
];

pub fn builtin_config(name: &str) -> Result<ProblemConfig> {
    REGISTRY
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownProblem(name.to_string()))
        .and_then(|e| (e.builder)())
}

pub fn builtin(name: &str) -> Result<ProblemSpec> {
    builtin_config(name)?.build()
}

/// A registry name, or else a path to a TOML configuration file.
pub fn load_config(name_or_path: &str) -> Result<ProblemConfig> {
    if REGISTRY.iter().any(|e| e.name == name_or_path) {
        return builtin_config(name_or_path);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        return ProblemConfig::load(path);
    }
    Err(Error::UnknownProblem(name_or_path.to_string()))
}

pub fn load_problem(name_or_path: &str) -> Result<ProblemSpec> {
    load_config(name_or_path)?.build()
}

/// The continuation region stored in the problem's configuration, or `λ ≤ 1` on
/// a cube of half-width 10 (the ambient box on manifolds).
pub fn default_region(p: &ProblemSpec) -> Result<Region> {
    if let Some(r) = p.config().and_then(|c| c.region.as_ref()) {
        return Region::new(r.lambda_max, r.state_box()?);
    }
    let state_box = match p.manifold() {
        Some(m) => m.ambient_box().clone(),
        None => BoxRegion::cube(p.dim(), 10.0)?,
    };
    Region::new(1.0, state_box)
}

fn linear_row(n: usize, coeffs: &[f64]) -> Polynomial {
    let terms = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, &c)| {
            let mut powers = vec![0; n];
            powers[j] = 1;
            Monomial::new(c, powers)
        })
        .collect();
    Polynomial::new(terms)
}

fn component(terms: Vec<PerturbationTerm>) -> PerturbationComponent {
    PerturbationComponent { terms }
}

/// The descriptor matrix `E`.
pub fn descriptor_matrix() -> Matrix3<f64> {
    Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, -1.0, 1.0)
}

/// `A(t)`.
pub fn system_matrix(t: f64) -> Matrix3<f64> {
    let s = 2.0 + t.sin();
    let c = t.cos().abs();
    Matrix3::new(0.0, s, s, c, 0.0, -s, 0.0, -s, 0.0)
}

/// `diag(|cos t|, 2 + sin t, 2 + sin t) · U` with `U` unit upper triangular.
pub fn factored_matrix(t: f64) -> Matrix3<f64> {
    let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(
        t.cos().abs(),
        2.0 + t.sin(),
        2.0 + t.sin(),
    ));
    let u = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0);
    d * u
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorInverse {
    pub det: f64,
    pub inverse: Matrix3<f64>,
    /// `max |E·E⁻¹ − I|`.
    pub identity_error: f64,
}

/// Inverts `E`, refusing near-singular matrices and inaccurate inverses.
pub fn invert_descriptor() -> Result<DescriptorInverse> {
    let e = descriptor_matrix();
    let det = e.determinant();
    if det.abs() < 1e-12 {
        return Err(Error::InvalidProblem(format!(
            "descriptor matrix is singular (det {det:e})"
        )));
    }
    let inverse = e
        .try_inverse()
        .ok_or_else(|| Error::InvalidProblem("descriptor matrix is not invertible".into()))?;
    let identity_error = (e * inverse - Matrix3::identity()).abs().max();
    if identity_error > 1e-14 {
        return Err(Error::InvalidProblem(format!(
            "E·E⁻¹ differs from I by {identity_error:e}"
        )));
    }
    Ok(DescriptorInverse {
        det,
        inverse,
        identity_error,
    })
}

/// `B(t) = E⁻¹A(t)`.
pub fn reduced_matrix(t: f64) -> Result<Matrix3<f64>> {
    Ok(invert_descriptor()?.inverse * system_matrix(t))
}

/// Largest entrywise gap between `E⁻¹A(t)` and the diagonal-times-triangular form.
pub fn factorization_error(t: f64) -> Result<f64> {
    Ok((reduced_matrix(t)? - factored_matrix(t)).abs().max())
}

/// The reduced linear system with perturbation `E⁻¹ℋ`; `h` lists the terms of `ℋ`.
pub fn linear_3d_config_with(h: [Vec<PerturbationTerm>; 3]) -> Result<ProblemConfig> {
    let inv = invert_descriptor()?;
    let b0 = reduced_matrix(0.0)?;
    let a0 = [0f64.cos().abs(), 2.0 + 0f64.sin(), 2.0 + 0f64.sin()];
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..3).map(|j| b0[(i, j)] / a0[i]).collect())
        .collect();
    let u = DMatrix::from_fn(3, 3, |i, j| rows[i][j]);
    for t in [0.0, PI / 3.0, PI] {
        let coeff = [t.cos().abs(), 2.0 + t.sin(), 2.0 + t.sin()];
        let b = reduced_matrix(t)?;
        for i in 0..3 {
            for j in 0..3 {
                if (b[(i, j)] - coeff[i] * u[(i, j)]).abs() > 1e-12 {
                    return Err(Error::InvalidProblem(format!(
                        "E⁻¹A(t) does not separate into coefficient blocks at t = {t}"
                    )));
                }
            }
        }
    }
    let perturbation = (0..3)
        .map(|i| {
            let mut terms = Vec::new();
            for (j, hj) in h.iter().enumerate() {
                let w = inv.inverse[(i, j)];
                if w != 0.0 {
                    terms.extend(hj.iter().cloned().map(|mut t| {
                        t.coeff *= w;
                        t
                    }));
                }
            }
            component(terms)
        })
        .collect();
    Ok(ProblemConfig {
        name: "paper-linear-3d".into(),
        period: 2.0 * PI,
        lag: 1.0,
        space: SpaceConfig::Flat { dim: 3 },
        field: rows.iter().map(|r| linear_row(3, r)).collect(),
        blocks: vec![
            BlockConfig {
                dim: 1,
                coefficient: vec![Harmonic::AbsCos { mode: 1, amp: 1.0 }],
            },
            BlockConfig {
                dim: 2,
                coefficient: vec![
                    Harmonic::Const { value: 2.0 },
                    Harmonic::Sin { mode: 1, amp: 1.0 },
                ],
            },
        ],
        perturbation,
        start: None,
        region: Some(RegionConfig {
            lambda_max: 5.0,
            lo: vec![-50.0; 3],
            hi: vec![50.0; 3],
        }),
    })
}

/// Default `ℋ(t, x, x_r) = (sin t, ½ tanh(x_r,3), cos t)`: bounded and delay-dependent.
pub fn default_linear_3d_perturbation() -> [Vec<PerturbationTerm>; 3] {
    [
        vec![PerturbationTerm::constant(1.0).with_time(Harmonic::Sin { mode: 1, amp: 1.0 })],
        vec![PerturbationTerm::constant(0.5).with_wrap(WrapFn::Tanh, 5)],
        vec![PerturbationTerm::constant(1.0).with_time(Harmonic::Cos { mode: 1, amp: 1.0 })],
    ]
}

pub fn linear_3d_config() -> Result<ProblemConfig> {
    linear_3d_config_with(default_linear_3d_perturbation())
}

pub fn build_linear_3d() -> Result<ProblemSpec> {
    linear_3d_config()?.build()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoSpeciesParams {
    /// Growth rate `a₁(t)` as a harmonic sum.
    pub a1: Vec<Harmonic>,
    pub a2: Vec<Harmonic>,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub lag: f64,
    pub period: f64,
    /// Constant inflow added to each delayed interaction term.
    pub immigration: f64,
}

impl Default for TwoSpeciesParams {
    fn default() -> Self {
        Self {
            a1: vec![
                Harmonic::Const { value: 1.0 },
                Harmonic::Sin { mode: 1, amp: 0.5 },
            ],
            a2: vec![
                Harmonic::Const { value: 1.0 },
                Harmonic::Cos { mode: 1, amp: 0.5 },
            ],
            a11: 1.0,
            a12: 0.5,
            a21: 0.5,
            a22: 1.0,
            lag: 1.0,
            period: 2.0 * PI,
            immigration: 0.0,
        }
    }
}

pub fn two_species_config(params: &TwoSpeciesParams) -> Result<ProblemConfig> {
    for (name, v) in [
        ("a11", params.a11),
        ("a12", params.a12),
        ("a21", params.a21),
        ("a22", params.a22),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    for (name, a) in [("a1", &params.a1), ("a2", &params.a2)] {
        let c = PeriodicCoefficient::from_harmonics(params.period, a.clone())?;
        if !(c.average() > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "{name} must have positive average"
            )));
        }
    }
    if !(params.immigration >= 0.0 && params.immigration.is_finite()) {
        return Err(Error::InvalidProblem(
            "immigration must be nonnegative".into(),
        ));
    }
    let term =
        |c: f64, powers: [u32; 4]| PerturbationTerm::constant(c).with_powers(powers.to_vec());
    let mut h1 = vec![
        term(params.a12, [1, 0, 0, 1]),
        term(-params.a11, [1, 0, 1, 0]),
    ];
    let mut h2 = vec![
        term(params.a22, [0, 1, 0, 1]),
        term(-params.a21, [0, 1, 1, 0]),
    ];
    if params.immigration > 0.0 {
        h1.push(PerturbationTerm::constant(params.immigration));
        h2.push(PerturbationTerm::constant(params.immigration));
    }
    Ok(ProblemConfig {
        name: "two-species".into(),
        period: params.period,
        lag: params.lag,
        space: SpaceConfig::Flat { dim: 2 },
        field: vec![linear_row(2, &[1.0, 0.0]), linear_row(2, &[0.0, 1.0])],
        blocks: vec![
            BlockConfig {
                dim: 1,
                coefficient: params.a1.clone(),
            },
            BlockConfig {
                dim: 1,
                coefficient: params.a2.clone(),
            },
        ],
        perturbation: vec![component(h1), component(h2)],
        start: None,
        region: Some(RegionConfig {
            lambda_max: 5.0,
            lo: vec![-2.0; 2],
            hi: vec![2.0; 2],
        }),
    })
}

pub fn build_two_species(params: &TwoSpeciesParams) -> Result<ProblemSpec> {
    two_species_config(params)?.build()
}

fn sphere_like_constraint(n: usize) -> Polynomial {
    let mut terms: Vec<Monomial> = (0..n)
        .map(|i| {
            let mut p = vec![0; n];
            p[i] = 2;
            Monomial::new(1.0, p)
        })
        .collect();
    terms.push(Monomial::constant(-1.0));
    Polynomial::new(terms)
}

pub fn circle_rotation_config() -> Result<ProblemConfig> {
    Ok(ProblemConfig {
        name: "circle-rotation".into(),
        period: 2.0 * PI,
        lag: 1.0,
        space: SpaceConfig::Manifold {
            k: 1,
            box_lo: vec![-1.5, 0.05],
            box_hi: vec![1.5, 1.5],
            constraint: vec![sphere_like_constraint(2)],
            constraint_tol: None,
        },
        field: vec![linear_row(2, &[0.0, -1.0])],
        blocks: vec![BlockConfig {
            dim: 1,
            coefficient: vec![
                Harmonic::Const { value: 0.01 },
                Harmonic::Cos { mode: 1, amp: 0.5 },
            ],
        }],
        perturbation: vec![component(vec![
            PerturbationTerm::constant(0.1).with_time(Harmonic::Sin { mode: 1, amp: 1.0 })
        ])],
        start: Some(vec![0.0, 1.0]),
        region: None,
    })
}

pub fn sphere_gradient_config() -> Result<ProblemConfig> {
    Ok(ProblemConfig {
        name: "sphere-gradient".into(),
        period: 2.0 * PI,
        lag: 1.0,
        space: SpaceConfig::Manifold {
            k: 2,
            box_lo: vec![-1.5, -1.5, 0.05],
            box_hi: vec![1.5, 1.5, 1.5],
            constraint: vec![sphere_like_constraint(3)],
            constraint_tol: None,
        },
        field: vec![
            Polynomial::new(vec![Monomial::new(-1.0, vec![1, 0, 1])]),
            Polynomial::new(vec![Monomial::new(-1.0, vec![0, 1, 1])]),
        ],
        blocks: vec![BlockConfig {
            dim: 2,
            coefficient: vec![
                Harmonic::Const { value: 1.0 },
                Harmonic::Sin { mode: 1, amp: 0.5 },
            ],
        }],
        perturbation: Vec::new(),
        start: Some(vec![0.6, 0.0, 0.8]),
        region: None,
    })
}

pub fn forced_decay_config() -> Result<ProblemConfig> {
    Ok(ProblemConfig {
        name: "forced-decay".into(),
        period: 2.0 * PI,
        lag: 1.0,
        space: SpaceConfig::Flat { dim: 1 },
        field: vec![linear_row(1, &[-1.0])],
        blocks: vec![BlockConfig {
            dim: 1,
            coefficient: vec![Harmonic::Const { value: 1.0 }],
        }],
        perturbation: vec![component(vec![
            PerturbationTerm::constant(1.0).with_time(Harmonic::Sin { mode: 1, amp: 1.0 })
        ])],
        start: None,
        region: Some(RegionConfig {
            lambda_max: 10.0,
            lo: vec![-10.0],
            hi: vec![10.0],
        }),
    })
}
