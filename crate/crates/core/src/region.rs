//! Axis-aligned boxes in ℝⁿ.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed axis-aligned box `[lo₀, hi₀] × … × [loₙ₋₁, hiₙ₋₁]` with `lo < hi` on every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::Config("box must have at least one axis".into()));
        }
        for (axis, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) || l >= h {
                return Err(Error::Config(format!(
                    "degenerate box on axis {axis}: [{l}, {h}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[-half, half]ⁿ`.
    pub fn cube(dim: usize, half: f64) -> Result<Self> {
        Self::new(vec![-half; dim], vec![half; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (h - l))
            .collect()
    }

    pub fn max_half_width(&self) -> f64 {
        self.half_widths().into_iter().fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&x, (&l, &h))| x >= l && x <= h)
    }

    /// Like [`contains`](Self::contains) but with every side inflated by `slack` times its width.
    pub fn contains_inflated(&self, p: &[f64], slack: f64) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&x, (&l, &h))| {
                    let pad = slack * (h - l);
                    x >= l - pad && x <= h + pad
                })
    }

    /// Fails with a domain error naming the first offending axis.
    pub fn check(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: p.len(),
            });
        }
        for (axis, (&x, (&l, &h))) in p.iter().zip(self.lo.iter().zip(&self.hi)).enumerate() {
            if !(x >= l && x <= h) {
                return Err(Error::Domain {
                    axis,
                    value: x,
                    lo: l,
                    hi: h,
                });
            }
        }
        Ok(())
    }

    /// Distance (max norm) from `p` to the complement of the box; negative outside.
    pub fn depth(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&x, (&l, &h))| (x - l).min(h - x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            self.hi[i]
                        } else {
                            self.lo[i]
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Splits every axis at its midpoint, giving `2ⁿ` children.
    pub fn bisect(&self) -> Vec<BoxRegion> {
        let n = self.dim();
        let mid = self.center();
        (0..1usize << n)
            .map(|mask| {
                let mut lo = Vec::with_capacity(n);
                let mut hi = Vec::with_capacity(n);
                for (i, &m) in mid.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        lo.push(m);
                        hi.push(self.hi[i]);
                    } else {
                        lo.push(self.lo[i]);
                        hi.push(m);
                    }
                }
                BoxRegion { lo, hi }
            })
            .collect()
    }

    /// Splits along one axis at `at`.
    pub fn split(&self, axis: usize, at: f64) -> Result<(BoxRegion, BoxRegion)> {
        let mut left_hi = self.hi.clone();
        left_hi[axis] = at;
        let mut right_lo = self.lo.clone();
        right_lo[axis] = at;
        Ok((
            BoxRegion::new(self.lo.clone(), left_hi)?,
            BoxRegion::new(right_lo, self.hi.clone())?,
        ))
    }

    /// Deterministic, roughly uniform sample of `count` points on the boundary.
    ///
    /// Points are spread over the `2n` faces in turn; on each face the free
    /// coordinates follow a Halton sequence.
    pub fn boundary_samples(&self, count: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(count);
        for j in 0..count {
            let face = j % (2 * n);
            let axis = face / 2;
            let upper = face % 2 == 1;
            let index = j / (2 * n) + 1;
            let mut p = Vec::with_capacity(n);
            let mut prime_slot = 0;
            for i in 0..n {
                if i == axis {
                    p.push(if upper { self.hi[i] } else { self.lo[i] });
                } else {
                    let u = halton(index, PRIMES[prime_slot % PRIMES.len()]);
                    prime_slot += 1;
                    p.push(self.lo[i] + u * (self.hi[i] - self.lo[i]));
                }
            }
            out.push(p);
        }
        out
    }

    /// Deterministic interior sample (Halton sequence).
    pub fn interior_samples(&self, count: usize) -> Vec<Vec<f64>> {
        (1..=count)
            .map(|j| {
                (0..self.dim())
                    .map(|i| {
                        let u = halton(j, PRIMES[i % PRIMES.len()]);
                        self.lo[i] + u * (self.hi[i] - self.lo[i])
                    })
                    .collect()
            })
            .collect()
    }
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical inverse of `index` in base `base`.
pub fn halton(mut index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

impl fmt::Display for BoxRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}..{h}")?;
        }
        Ok(())
    }
}

/// Parses `lo..hi` ranges separated by commas, e.g. `-1..1,-2..2.5`.
impl FromStr for BoxRegion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for (axis, part) in s.split(',').enumerate() {
            let part = part.trim();
            let (l, h) = part.split_once("..").ok_or_else(|| {
                Error::Config(format!("axis {axis}: expected `lo..hi`, got `{part}`"))
            })?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("axis {axis}: `{v}`: {e}")))
            };
            lo.push(parse(l)?);
            hi.push(parse(h)?);
        }
        BoxRegion::new(lo, hi)
    }
}

/// Parses a comma-separated list of finite numbers.
pub fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            let x = v
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("`{}`: {e}", v.trim())))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::Config(format!(
                    "non-finite coordinate `{}`",
                    v.trim()
                )))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_box_spec() {
        let b: BoxRegion = "-1..1, -2..2.5".parse().unwrap();
        assert_eq!(b.lo(), &[-1.0, -2.0]);
        assert_eq!(b.hi(), &[1.0, 2.5]);
        assert_eq!(b.to_string().parse::<BoxRegion>().unwrap(), b);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!("1..1".parse::<BoxRegion>().is_err());
        assert!("2..1".parse::<BoxRegion>().is_err());
        assert!("0..nan".parse::<BoxRegion>().is_err());
        assert!("".parse::<BoxRegion>().is_err());
        assert!("0;1".parse::<BoxRegion>().is_err());
    }

    #[test]
    fn boundary_samples_lie_on_faces() {
        let b = BoxRegion::cube(3, 1.0).unwrap();
        for p in b.boundary_samples(192) {
            assert!(b.contains(&p));
            assert!(p.iter().any(|x| x.abs() == 1.0));
        }
    }

    #[test]
    fn bisect_covers_parent() {
        let b = BoxRegion::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        let kids = b.bisect();
        assert_eq!(kids.len(), 4);
        let vol: f64 = kids
            .iter()
            .map(|k| k.half_widths().iter().product::<f64>())
            .sum();
        assert!((vol - b.half_widths().iter().product::<f64>()).abs() < 1e-15);
    }
}
