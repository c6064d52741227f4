//! Closed-form expression tables used by configuration files: polynomials
//! in the state, harmonic functions of time and the perturbation terms
//! built from both.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest exponent accepted in a monomial.
pub const MAX_POWER: u32 = 32;

/// `coeff · Π xᵢ^powersᵢ`. An empty `powers` list denotes a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub powers: Vec<u32>,
}

impl Monomial {
    pub fn new(coeff: f64, powers: Vec<u32>) -> Self {
        Self { coeff, powers }
    }

    pub fn constant(coeff: f64) -> Self {
        Self {
            coeff,
            powers: Vec::new(),
        }
    }

    fn check(&self, nvars: usize) -> Result<()> {
        if !self.coeff.is_finite() {
            return Err(Error::Config(format!(
                "non-finite coefficient {}",
                self.coeff
            )));
        }
        if !self.powers.is_empty() && self.powers.len() != nvars {
            return Err(Error::Config(format!(
                "monomial has {} exponents, expected {nvars}",
                self.powers.len()
            )));
        }
        if let Some(&p) = self.powers.iter().find(|&&p| p > MAX_POWER) {
            return Err(Error::Config(format!(
                "exponent {p} exceeds the limit {MAX_POWER}"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.powers
            .iter()
            .zip(x)
            .fold(self.coeff, |acc, (&p, &v)| match p {
                0 => acc,
                1 => acc * v,
                _ => acc * v.powi(p as i32),
            })
    }

    /// ∂/∂x_var, or `None` when the derivative vanishes identically.
    fn derivative(&self, var: usize) -> Option<Monomial> {
        let p = *self.powers.get(var)?;
        if p == 0 {
            return None;
        }
        let mut powers = self.powers.clone();
        powers[var] = p - 1;
        Some(Monomial {
            coeff: self.coeff * p as f64,
            powers,
        })
    }
}

/// A polynomial in a fixed number of variables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Polynomial {
    #[serde(default)]
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Self { terms }
    }

    /// `coeff · x_var`.
    pub fn linear(nvars: usize, var: usize, coeff: f64) -> Self {
        let mut powers = vec![0; nvars];
        powers[var] = 1;
        Self::new(vec![Monomial::new(coeff, powers)])
    }

    pub fn check(&self, nvars: usize) -> Result<()> {
        self.terms.iter().try_for_each(|t| t.check(nvars))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    pub fn derivative(&self, var: usize) -> Polynomial {
        Polynomial {
            terms: self
                .terms
                .iter()
                .filter_map(|t| t.derivative(var))
                .collect(),
        }
    }
}

/// Scalar functions of time on a period `T`, with angular frequency `ω = 2π/T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Harmonic {
    Const { value: f64 },
    Cos { mode: u32, amp: f64 },
    Sin { mode: u32, amp: f64 },
    AbsCos { mode: u32, amp: f64 },
    AbsSin { mode: u32, amp: f64 },
}

impl Harmonic {
    pub fn eval(&self, t: f64, period: f64) -> f64 {
        let arg = |mode: u32| 2.0 * PI * mode as f64 * t / period;
        match *self {
            Harmonic::Const { value } => value,
            Harmonic::Cos { mode, amp } => amp * arg(mode).cos(),
            Harmonic::Sin { mode, amp } => amp * arg(mode).sin(),
            Harmonic::AbsCos { mode, amp } => amp * arg(mode).cos().abs(),
            Harmonic::AbsSin { mode, amp } => amp * arg(mode).sin().abs(),
        }
    }

    fn check(&self) -> Result<()> {
        let v = match *self {
            Harmonic::Const { value } => value,
            Harmonic::Cos { amp, .. }
            | Harmonic::Sin { amp, .. }
            | Harmonic::AbsCos { amp, .. }
            | Harmonic::AbsSin { amp, .. } => amp,
        };
        if v.is_finite() {
            Ok(())
        } else {
            Err(Error::Config("non-finite harmonic amplitude".into()))
        }
    }
}

/// Sum of harmonic terms.
pub fn eval_harmonics(terms: &[Harmonic], t: f64, period: f64) -> f64 {
    terms.iter().map(|h| h.eval(t, period)).sum()
}

pub fn check_harmonics(terms: &[Harmonic]) -> Result<()> {
    terms.iter().try_for_each(Harmonic::check)
}

/// Bounded scalar functions that may wrap a single state variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrapFn {
    Sin,
    Cos,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wrap {
    #[serde(rename = "fn")]
    pub func: WrapFn,
    pub var: usize,
}

/// One term of a perturbation component:
/// `coeff · time(t) · Π vᵢ^powersᵢ · Π wrap(v_var)` where `v = (x, x_delayed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationTerm {
    pub coeff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<Harmonic>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub powers: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wraps: Vec<Wrap>,
}

impl PerturbationTerm {
    pub fn constant(coeff: f64) -> Self {
        Self {
            coeff,
            time: None,
            powers: Vec::new(),
            wraps: Vec::new(),
        }
    }

    pub fn with_time(mut self, h: Harmonic) -> Self {
        self.time = Some(h);
        self
    }

    pub fn with_powers(mut self, powers: Vec<u32>) -> Self {
        self.powers = powers;
        self
    }

    pub fn with_wrap(mut self, func: WrapFn, var: usize) -> Self {
        self.wraps.push(Wrap { func, var });
        self
    }

    /// `nvars` counts both current and delayed coordinates.
    pub fn check(&self, nvars: usize) -> Result<()> {
        Monomial::new(self.coeff, self.powers.clone()).check(nvars)?;
        if let Some(h) = &self.time {
            h.check()?;
        }
        if let Some(w) = self.wraps.iter().find(|w| w.var >= nvars) {
            return Err(Error::Config(format!(
                "wrap refers to variable {} of {nvars}",
                w.var
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, period: f64, vars: &[f64]) -> f64 {
        let mut v = Monomial {
            coeff: self.coeff,
            powers: self.powers.clone(),
        }
        .eval(vars);
        if let Some(h) = &self.time {
            v *= h.eval(t, period);
        }
        for w in &self.wraps {
            let x = vars[w.var];
            v *= match w.func {
                WrapFn::Sin => x.sin(),
                WrapFn::Cos => x.cos(),
                WrapFn::Tanh => x.tanh(),
            };
        }
        v
    }
}
