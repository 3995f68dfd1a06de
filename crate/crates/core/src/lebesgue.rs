//! Modulars, Luxemburg norms and the modular/norm sandwich on the discrete
//! quadrature measure of a grid.

use serde::Serialize;

use crate::error::Result;
use crate::grid::Quadrature;
use crate::problem::{conjugate_exponent, ExponentField};

const BRACKET_LOW: f64 = 9.094947017729282e-13; // 2^-40
const MAX_BISECTIONS: usize = 200;
/// Bisect to machine precision inside the sandwich and Hölder checks.
const CHECK_TOL: f64 = 0.0;
/// Slack below which a sandwich or Hölder verdict fails.
pub const VERDICT_SLACK: f64 = -1e-9;

/// A field sampled on a discrete measure together with pointwise exponents.
#[derive(Debug, Clone)]
pub struct WeightedSamples {
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub exponents: Vec<f64>,
}

impl WeightedSamples {
    pub fn from_field(u: &(impl Quadrature + ?Sized), p: &ExponentField) -> Result<Self> {
        let n = u.values().len();
        let mut exponents = Vec::with_capacity(n);
        for i in 0..n {
            exponents.push(p.eval(u.point(i))?);
        }
        Ok(WeightedSamples {
            weights: (0..n).map(|i| u.weight(i)).collect(),
            values: u.values().to_vec(),
            exponents,
        })
    }

    /// ρ(u/λ).
    pub fn scaled_modular(&self, lambda: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.values)
            .zip(&self.exponents)
            .map(|((w, v), p)| {
                if *v == 0.0 {
                    0.0
                } else {
                    w * (v.abs() / lambda).powf(*p)
                }
            })
            .sum()
    }

    pub fn modular(&self) -> f64 {
        self.scaled_modular(1.0)
    }

    /// Exponent range over points with positive weight.
    pub fn exponent_range(&self) -> (f64, f64) {
        self.weights
            .iter()
            .zip(&self.exponents)
            .filter(|(w, _)| **w > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, p)| {
                (lo.min(*p), hi.max(*p))
            })
    }

    pub fn is_zero(&self) -> bool {
        self.values
            .iter()
            .zip(&self.weights)
            .all(|(v, w)| *v == 0.0 || *w == 0.0)
    }

    /// Luxemburg norm by bisection on λ ↦ ρ(u/λ).
    pub fn luxemburg(&self, tol: f64) -> LuxemburgNorm {
        if self.is_zero() {
            return LuxemburgNorm {
                value: 0.0,
                iterations: 0,
                residual: 0.0,
            };
        }
        let mut lo = BRACKET_LOW;
        let mut hi = 1.0;
        let mut iterations = 0;
        while self.scaled_modular(hi) > 1.0 && iterations < MAX_BISECTIONS {
            lo = hi;
            hi *= 2.0;
            iterations += 1;
        }
        while self.scaled_modular(lo) <= 1.0 && iterations < MAX_BISECTIONS {
            hi = lo;
            lo *= 0.5;
            iterations += 1;
        }
        while hi - lo > tol * hi && iterations < MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.scaled_modular(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
        }
        LuxemburgNorm {
            value: hi,
            iterations,
            residual: 1.0 - self.scaled_modular(hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Modular {
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LuxemburgNorm {
    pub value: f64,
    pub iterations: usize,
    /// 1 − ρ(u/value); nonnegative by construction.
    pub residual: f64,
}

pub fn modular(u: &(impl Quadrature + ?Sized), p: &ExponentField) -> Result<Modular> {
    Ok(Modular {
        value: WeightedSamples::from_field(u, p)?.modular(),
    })
}

pub fn luxemburg_norm(
    u: &(impl Quadrature + ?Sized),
    p: &ExponentField,
    tol: f64,
) -> Result<LuxemburgNorm> {
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(crate::error::Error::Domain(format!(
            "tolerance must lie in (0, 1e-3], got {tol}"
        )));
    }
    Ok(WeightedSamples::from_field(u, p)?.luxemburg(tol))
}

/// Slacks (right − left) of the modular/norm sandwich.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SandwichVerdict {
    pub modular: f64,
    pub norm: f64,
    pub p_minus: f64,
    pub p_plus: f64,
    pub norm_lower_slack: f64,
    pub norm_upper_slack: f64,
    pub modular_lower_slack: f64,
    pub modular_upper_slack: f64,
    pub norm_by_modular_slack: f64,
}

impl SandwichVerdict {
    pub fn slacks(&self) -> [f64; 5] {
        [
            self.norm_lower_slack,
            self.norm_upper_slack,
            self.modular_lower_slack,
            self.modular_upper_slack,
            self.norm_by_modular_slack,
        ]
    }

    pub fn min_slack(&self) -> f64 {
        self.slacks().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn passed(&self) -> bool {
        self.min_slack() >= VERDICT_SLACK
    }
}

pub fn check_prop1(u: &(impl Quadrature + ?Sized), p: &ExponentField) -> Result<SandwichVerdict> {
    Ok(sandwich(&WeightedSamples::from_field(u, p)?))
}

/// The three modular/norm inequalities:
/// (i) min(ρ^{1/p+}, ρ^{1/p-}) ≤ ‖u‖ ≤ max(…),
/// (ii) min(‖u‖^{p-}, ‖u‖^{p+}) ≤ ρ ≤ max(…),
/// (iii) ‖u‖ ≤ ρ + 1.
pub fn sandwich(samples: &WeightedSamples) -> SandwichVerdict {
    let rho = samples.modular();
    let norm = samples.luxemburg(CHECK_TOL).value;
    let (p_minus, p_plus) = samples.exponent_range();
    let (a, b) = (rho.powf(1.0 / p_plus), rho.powf(1.0 / p_minus));
    let (c, d) = (norm.powf(p_minus), norm.powf(p_plus));
    SandwichVerdict {
        modular: rho,
        norm,
        p_minus,
        p_plus,
        norm_lower_slack: norm - a.min(b),
        norm_upper_slack: a.max(b) - norm,
        modular_lower_slack: rho - c.min(d),
        modular_upper_slack: c.max(d) - rho,
        norm_by_modular_slack: rho + 1.0 - norm,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HolderVerdict {
    pub pairing: f64,
    pub norm_u: f64,
    pub norm_v: f64,
    pub slack: f64,
}

impl HolderVerdict {
    pub fn passed(&self) -> bool {
        self.slack >= VERDICT_SLACK
    }
}

/// |∫uv| ≤ 2‖u‖_{p(·)}‖v‖_{p'(·)}.
pub fn holder_pairing_bound<Q: Quadrature + ?Sized>(
    u: &Q,
    v: &Q,
    p: &ExponentField,
) -> Result<HolderVerdict> {
    let su = WeightedSamples::from_field(u, p)?;
    let mut sv = WeightedSamples::from_field(v, p)?;
    for e in &mut sv.exponents {
        *e = conjugate_exponent(*e)?;
    }
    Ok(holder_samples(&su, &sv))
}

/// Hölder check on samples sharing a measure; `v` carries the conjugate exponents.
pub fn holder_samples(u: &WeightedSamples, v: &WeightedSamples) -> HolderVerdict {
    let pairing: f64 = u
        .weights
        .iter()
        .zip(&u.values)
        .zip(&v.values)
        .map(|((w, a), b)| w * a * b)
        .sum::<f64>()
        .abs();
    let norm_u = u.luxemburg(CHECK_TOL).value;
    let norm_v = v.luxemburg(CHECK_TOL).value;
    HolderVerdict {
        pairing,
        norm_u,
        norm_v,
        slack: 2.0 * norm_u * norm_v - pairing,
    }
}
