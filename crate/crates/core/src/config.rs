//! Problem configuration files (TOML). Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expr::{Harmonic, PerturbationTerm, Polynomial};
use crate::fields::{
    normalize_lag, Block, DelayPerturbation, PeriodicCoefficient, ProblemSpec, StateSpace,
};
use crate::manifold::ImplicitManifold;
use crate::map::VectorMap;
use crate::region::BoxRegion;

/// Largest ambient dimension accepted from a configuration file.
pub const MAX_DIM: usize = 32;
const MAX_TERMS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    pub period: f64,
    pub lag: f64,
    pub space: SpaceConfig,
    /// One polynomial per intrinsic component, in the ambient variables.
    pub field: Vec<Polynomial>,
    pub blocks: Vec<BlockConfig>,
    /// One term list per intrinsic component; empty means no perturbation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbation: Vec<PerturbationComponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceConfig {
    Flat {
        dim: usize,
    },
    Manifold {
        k: usize,
        box_lo: Vec<f64>,
        box_hi: Vec<f64>,
        constraint: Vec<Polynomial>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        constraint_tol: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub dim: usize,
    pub coefficient: Vec<Harmonic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationComponent {
    #[serde(default)]
    pub terms: Vec<PerturbationTerm>,
}

/// The continuation region `[0, lambda_max] × box`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub lambda_max: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl RegionConfig {
    pub fn state_box(&self) -> Result<BoxRegion> {
        BoxRegion::new(self.lo.clone(), self.hi.clone())
    }
}

impl ProblemConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.space {
            SpaceConfig::Flat { dim } => *dim,
            SpaceConfig::Manifold { box_lo, .. } => box_lo.len(),
        }
    }

    fn intrinsic_dim(&self) -> usize {
        match &self.space {
            SpaceConfig::Flat { dim } => *dim,
            SpaceConfig::Manifold { k, .. } => *k,
        }
    }

    fn check_sizes(&self) -> Result<()> {
        let n = self.ambient_dim();
        if n == 0 || n > MAX_DIM {
            return Err(Error::Config(format!(
                "dimension must lie in 1..={MAX_DIM}, got {n}"
            )));
        }
        let k = self.intrinsic_dim();
        if k == 0 || k > n {
            return Err(Error::Config(format!(
                "intrinsic dimension {k} invalid for ambient {n}"
            )));
        }
        if self.field.len() != k {
            return Err(Error::Config(format!(
                "field needs {k} rows, got {}",
                self.field.len()
            )));
        }
        if !self.perturbation.is_empty() && self.perturbation.len() != k {
            return Err(Error::Config(format!(
                "perturbation needs {k} components, got {}",
                self.perturbation.len()
            )));
        }
        let terms = self.field.iter().map(|p| p.terms.len()).sum::<usize>()
            + self
                .perturbation
                .iter()
                .map(|c| c.terms.len())
                .sum::<usize>()
            + self
                .blocks
                .iter()
                .map(|b| b.coefficient.len())
                .sum::<usize>();
        if terms > MAX_TERMS {
            return Err(Error::Config(format!(
                "too many terms ({terms} > {MAX_TERMS})"
            )));
        }
        if let Some(start) = &self.start {
            if start.len() != n || start.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(
                    "start must be a finite point of the ambient space".into(),
                ));
            }
        }
        if let Some(region) = &self.region {
            if !(region.lambda_max > 0.0 && region.lambda_max.is_finite()) {
                return Err(Error::Config("region.lambda_max must be positive".into()));
            }
            if region.lo.len() != n {
                return Err(Error::Config("region box has the wrong dimension".into()));
            }
            region.state_box()?;
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Config(format!(
                "period must be positive, got {}",
                self.period
            )));
        }
        Ok(())
    }

    /// Builds the problem. The stored configuration carries the normalized lag.
    pub fn build(&self) -> Result<ProblemSpec> {
        self.check_sizes()?;
        let n = self.ambient_dim();
        let space = match &self.space {
            SpaceConfig::Flat { dim } => StateSpace::Flat { dim: *dim },
            SpaceConfig::Manifold {
                k,
                box_lo,
                box_hi,
                constraint,
                constraint_tol,
            } => {
                let ambient = BoxRegion::new(box_lo.clone(), box_hi.clone())?;
                let mut m = ImplicitManifold::from_polynomials(*k, ambient, constraint.clone())?;
                if let Some(tol) = constraint_tol {
                    m = m.with_constraint_tol(*tol)?;
                }
                StateSpace::Manifold(m)
            }
        };
        let field = VectorMap::from_polynomials(n, self.field.clone())?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            blocks.push(Block {
                dim: b.dim,
                coefficient: PeriodicCoefficient::from_harmonics(
                    self.period,
                    b.coefficient.clone(),
                )?,
            });
        }
        let k = self.intrinsic_dim();
        let perturbation = if self.perturbation.is_empty() {
            DelayPerturbation::zero(self.lag, n, k)
        } else {
            DelayPerturbation::from_terms(
                self.lag,
                self.period,
                n,
                self.perturbation.iter().map(|c| c.terms.clone()).collect(),
            )?
        };
        let mut resolved = self.clone();
        resolved.lag = normalize_lag(self.lag, self.period)?;
        Ok(
            ProblemSpec::new(self.name.clone(), space, field, blocks, perturbation)?
                .with_config(resolved),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Monomial;

    const SCALAR: &str = r#"
name = "decay"
period = 6.283185307179586
lag = 1.0
space = { kind = "flat", dim = 1 }
field = [{ terms = [{ coeff = -1.0, powers = [1] }] }]
blocks = [{ dim = 1, coefficient = [{ kind = "const", value = 1.0 }] }]
perturbation = [{ terms = [{ coeff = 1.0, time = { kind = "sin", mode = 1, amp = 1.0 } }] }]
"#;

    #[test]
    fn parses_and_builds() {
        let c = ProblemConfig::from_toml_str(SCALAR).unwrap();
        let p = c.build().unwrap();
        assert_eq!(p.dim(), 1);
        assert_eq!(p.phi(&[2.0]).unwrap(), vec![-2.0]);
        let t = 0.3;
        assert!((p.perturbation().eval(t, &[0.0], &[0.0])[0] - t.sin()).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = format!("{SCALAR}\nextra = 1\n");
        assert!(matches!(
            ProblemConfig::from_toml_str(&bad),
            Err(Error::Config(_))
        ));
        let bad = SCALAR.replace("dim = 1 }", "dim = 1, colour = 2 }");
        assert!(ProblemConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn round_trip_preserves_hash() {
        let c = ProblemConfig::from_toml_str(SCALAR).unwrap();
        let text = c.to_toml_string().unwrap();
        let back = ProblemConfig::from_toml_str(&text).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
    }

    #[test]
    fn lag_is_normalized_in_resolved_config() {
        let mut c = ProblemConfig::from_toml_str(SCALAR).unwrap();
        c.lag = 1.0 + 2.0 * c.period;
        let p = c.build().unwrap();
        assert!((p.lag() - 1.0).abs() < 1e-12);
        assert!((p.config().unwrap().lag - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_sizes() {
        let mut c = ProblemConfig::from_toml_str(SCALAR).unwrap();
        c.field.push(Polynomial::new(vec![Monomial::constant(1.0)]));
        assert!(c.build().is_err());
        let mut c = ProblemConfig::from_toml_str(SCALAR).unwrap();
        c.space = SpaceConfig::Flat { dim: 1000 };
        assert!(c.build().is_err());
        let mut c = ProblemConfig::from_toml_str(SCALAR).unwrap();
        c.period = -1.0;
        assert!(c.build().is_err());
    }
}
