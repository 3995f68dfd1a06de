//! Continuous problem data, structural hypotheses and derived exponents.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::FieldExpr;

/// Samples per axis used to extract inf/sup of fields in 1D.
pub const DENSE_SAMPLES_1D: usize = 2048;
/// Samples per axis used to extract inf/sup of fields in 2D.
pub const DENSE_SAMPLES_2D: usize = 256;

const GAMMA_GRADIENT_STEP: f64 = 1e-6;
const GAMMA_GRADIENT_LIMIT: f64 = 1e4;

/// Interval (N = 1) or axis-aligned rectangle (N = 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Domain {
    pub dimension: usize,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Domain> {
        Domain::new(1, [a, 0.0], [b, 0.0])
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64)) -> Result<Domain> {
        Domain::new(2, [x.0, y.0], [x.1, y.1])
    }

    pub fn new(dimension: usize, lower: [f64; 2], upper: [f64; 2]) -> Result<Domain> {
        if !(1..=2).contains(&dimension) {
            return Err(Error::MalformedSpec(format!(
                "dimension must be 1 or 2, got {dimension}"
            )));
        }
        for axis in 0..dimension {
            if !(lower[axis].is_finite() && upper[axis].is_finite() && lower[axis] < upper[axis]) {
                return Err(Error::MalformedSpec(format!(
                    "axis {axis} extent [{}, {}] is empty or not finite",
                    lower[axis], upper[axis]
                )));
            }
        }
        let (mut lower, mut upper) = (lower, upper);
        if dimension == 1 {
            lower[1] = 0.0;
            upper[1] = 0.0;
        }
        Ok(Domain {
            dimension,
            lower,
            upper,
        })
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn shortest_side(&self) -> f64 {
        (0..self.dimension)
            .map(|a| self.side(a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn measure(&self) -> f64 {
        (0..self.dimension).map(|a| self.side(a)).product()
    }

    fn default_samples(&self) -> usize {
        if self.dimension == 1 {
            DENSE_SAMPLES_1D
        } else {
            DENSE_SAMPLES_2D
        }
    }

    /// Sample points of the closed domain. The first `count` entries of a fixed
    /// dyadic sequence are used per axis, so sample sets are nested in `count`.
    pub fn nested_samples(&self, count: usize) -> Vec<[f64; 2]> {
        let t = nested_unit_samples(count);
        let map = |axis: usize, s: f64| self.lower[axis] + s * self.side(axis);
        if self.dimension == 1 {
            t.iter().map(|&s| [map(0, s), 0.0]).collect()
        } else {
            let mut out = Vec::with_capacity(t.len() * t.len());
            for &sy in &t {
                for &sx in &t {
                    out.push([map(0, sx), map(1, sy)]);
                }
            }
            out
        }
    }
}

/// 0, 1, 1/2, 1/4, 3/4, 1/8, 3/8, 5/8, 7/8, ... truncated to `count` entries.
fn nested_unit_samples(count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    out.extend([0.0, 1.0].into_iter().take(count));
    let mut denom = 2u64;
    while out.len() < count {
        let mut num = 1u64;
        while num < denom && out.len() < count {
            out.push(num as f64 / denom as f64);
            num += 2;
        }
        denom *= 2;
    }
    out
}

fn sampled_range(expr: &FieldExpr, domain: &Domain, count: usize) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for point in domain.nested_samples(count) {
        let v = expr.eval(point)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone)]
pub struct ExponentField {
    pub expr: FieldExpr,
    pub inf_value: f64,
    pub sup_value: f64,
}

impl ExponentField {
    pub fn new(expr: FieldExpr, domain: &Domain) -> Result<ExponentField> {
        let (inf_value, sup_value) = sampled_range(&expr, domain, domain.default_samples())?;
        Ok(ExponentField {
            expr,
            inf_value,
            sup_value,
        })
    }

    pub fn constant(value: f64) -> ExponentField {
        ExponentField {
            expr: FieldExpr::constant(value),
            inf_value: value,
            sup_value: value,
        }
    }

    pub fn eval(&self, point: [f64; 2]) -> Result<f64> {
        self.expr.eval(point)
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub expr: FieldExpr,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl CoefficientField {
    pub fn new(expr: FieldExpr, domain: &Domain) -> Result<CoefficientField> {
        let (lower_bound, upper_bound) = sampled_range(&expr, domain, domain.default_samples())?;
        Ok(CoefficientField {
            expr,
            lower_bound,
            upper_bound,
        })
    }

    pub fn constant(value: f64) -> CoefficientField {
        CoefficientField {
            expr: FieldExpr::constant(value),
            lower_bound: value,
            upper_bound: value,
        }
    }

    pub fn eval(&self, point: [f64; 2]) -> Result<f64> {
        self.expr.eval(point)
    }
}

/// The datum (Ω, p, r, γ, a, b, f).
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub domain: Domain,
    pub p: ExponentField,
    pub r: ExponentField,
    pub gamma: ExponentField,
    pub a: CoefficientField,
    pub b: CoefficientField,
    pub f: FieldExpr,
}

/// Field expressions of a problem before bounds are extracted.
#[derive(Debug, Clone)]
pub struct ProblemExprs {
    pub p: FieldExpr,
    pub r: FieldExpr,
    pub gamma: FieldExpr,
    pub a: FieldExpr,
    pub b: FieldExpr,
    pub f: FieldExpr,
}

impl ProblemSpec {
    pub fn new(domain: Domain, exprs: ProblemExprs) -> Result<ProblemSpec> {
        if domain.dimension == 1 {
            let named = [
                ("p", &exprs.p),
                ("r", &exprs.r),
                ("gamma", &exprs.gamma),
                ("a", &exprs.a),
                ("b", &exprs.b),
                ("f", &exprs.f),
            ];
            for (name, e) in named {
                if e.uses_y() {
                    return Err(Error::MalformedSpec(format!(
                        "field `{name}` uses `y` on a one-dimensional domain"
                    )));
                }
            }
        }
        Ok(ProblemSpec {
            p: ExponentField::new(exprs.p, &domain)?,
            r: ExponentField::new(exprs.r, &domain)?,
            gamma: ExponentField::new(exprs.gamma, &domain)?,
            a: CoefficientField::new(exprs.a, &domain)?,
            b: CoefficientField::new(exprs.b, &domain)?,
            f: exprs.f,
            domain,
        })
    }

    /// Problem with constant p, r, γ, a, b and source expression `f`.
    pub fn constant(
        domain: Domain,
        p: f64,
        r: f64,
        gamma: f64,
        a: f64,
        b: f64,
        f: FieldExpr,
    ) -> ProblemSpec {
        ProblemSpec {
            domain,
            p: ExponentField::constant(p),
            r: ExponentField::constant(r),
            gamma: ExponentField::constant(gamma),
            a: CoefficientField::constant(a),
            b: CoefficientField::constant(b),
            f,
        }
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Hypothesis {
    /// 1 < p⁻.
    ExponentAboveOne,
    /// p⁺ < N; only a warning for N ∈ {1, 2}.
    ExponentBelowDimension,
    /// p(x) − 1 < r(x).
    LowerOrderExponent,
    /// 0 < γ⁻ ≤ γ⁺ < 1.
    SingularExponentRange,
    /// |∇γ| bounded.
    SingularExponentGradient,
    /// 0 < α ≤ a(x).
    DiffusionBounds,
    /// 0 < μ ≤ b(x).
    LowerOrderBounds,
    /// p(x) > 1 + (1 − γ(x)) / r(x).
    RegularityCondition,
    /// f ≥ 0 and not identically zero.
    SourceSign,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub hypothesis: Hypothesis,
    pub passed: bool,
    /// Failures of a non-hard check are warnings only.
    pub hard: bool,
    /// Smallest sampled value of (right side − left side).
    pub margin: f64,
    pub worst_point: [f64; 2],
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ExtractedBounds {
    pub p_minus: f64,
    pub p_plus: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub samples_per_axis: usize,
    pub checks: Vec<HypothesisCheck>,
    pub bounds: ExtractedBounds,
}

impl HypothesisReport {
    /// All hard hypotheses hold.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.hard)
    }

    pub fn check(&self, h: Hypothesis) -> &HypothesisCheck {
        self.checks
            .iter()
            .find(|c| c.hypothesis == h)
            .expect("every hypothesis is checked")
    }

    pub fn failures(&self) -> Vec<Hypothesis> {
        self.checks
            .iter()
            .filter(|c| c.hard && !c.passed)
            .map(|c| c.hypothesis)
            .collect()
    }

    pub fn warnings(&self) -> Vec<Hypothesis> {
        self.checks
            .iter()
            .filter(|c| !c.hard && !c.passed)
            .map(|c| c.hypothesis)
            .collect()
    }
}

struct Worst {
    margin: f64,
    point: [f64; 2],
}

impl Worst {
    fn new() -> Worst {
        Worst {
            margin: f64::INFINITY,
            point: [f64::NAN; 2],
        }
    }

    fn update(&mut self, margin: f64, point: [f64; 2]) {
        // A NaN margin is a violation and sticks.
        if self.margin.is_nan() {
            return;
        }
        if margin.is_nan() || margin < self.margin {
            self.margin = margin;
            self.point = point;
        }
    }

    fn check(self, hypothesis: Hypothesis, hard: bool, detail: String) -> HypothesisCheck {
        HypothesisCheck {
            hypothesis,
            passed: self.margin > 0.0,
            hard,
            margin: self.margin,
            worst_point: self.point,
            detail,
        }
    }
}

fn gamma_gradient(spec: &ProblemSpec, point: [f64; 2]) -> Result<f64> {
    let mut sq = 0.0;
    for axis in 0..spec.dimension() {
        let lo = spec.domain.lower[axis];
        let hi = spec.domain.upper[axis];
        let mut minus = point;
        let mut plus = point;
        minus[axis] = (point[axis] - GAMMA_GRADIENT_STEP).max(lo);
        plus[axis] = (point[axis] + GAMMA_GRADIENT_STEP).min(hi);
        let dq = (spec.gamma.eval(plus)? - spec.gamma.eval(minus)?) / (plus[axis] - minus[axis]);
        sq += dq * dq;
    }
    Ok(sq.sqrt())
}

/// Check every structural hypothesis on a nested sample set of the closed domain.
pub fn validate_hypotheses(spec: &ProblemSpec, samples_per_axis: usize) -> Result<HypothesisReport> {
    if samples_per_axis < 2 {
        return Err(Error::Domain(format!(
            "samples_per_axis must be at least 2, got {samples_per_axis}"
        )));
    }
    let n_dim = spec.dimension() as f64;
    let mut p_above_one = Worst::new();
    let mut p_below_dim = Worst::new();
    let mut lower_order = Worst::new();
    let mut gamma_range = Worst::new();
    let mut gamma_grad = Worst::new();
    let mut a_bounds = Worst::new();
    let mut b_bounds = Worst::new();
    let mut regularity = Worst::new();
    let mut source = Worst::new();
    let mut source_max = f64::NEG_INFINITY;
    let mut source_max_point = [f64::NAN; 2];
    let mut singular_source_points = 0usize;

    let mut bounds = ExtractedBounds {
        p_minus: f64::INFINITY,
        p_plus: f64::NEG_INFINITY,
        r_minus: f64::INFINITY,
        r_plus: f64::NEG_INFINITY,
        gamma_minus: f64::INFINITY,
        gamma_plus: f64::NEG_INFINITY,
        alpha: f64::INFINITY,
        beta: f64::NEG_INFINITY,
        mu: f64::INFINITY,
        nu: f64::NEG_INFINITY,
    };

    let samples = spec.domain.nested_samples(samples_per_axis);
    for &x in &samples {
        let eval = |field: &FieldExpr, name: &str| {
            field
                .eval(x)
                .map_err(|e| Error::MalformedSpec(format!("field `{name}`: {e}")))
        };
        let p = eval(&spec.p.expr, "p")?;
        let r = eval(&spec.r.expr, "r")?;
        let gamma = eval(&spec.gamma.expr, "gamma")?;
        let a = eval(&spec.a.expr, "a")?;
        let b = eval(&spec.b.expr, "b")?;

        bounds.p_minus = bounds.p_minus.min(p);
        bounds.p_plus = bounds.p_plus.max(p);
        bounds.r_minus = bounds.r_minus.min(r);
        bounds.r_plus = bounds.r_plus.max(r);
        bounds.gamma_minus = bounds.gamma_minus.min(gamma);
        bounds.gamma_plus = bounds.gamma_plus.max(gamma);
        bounds.alpha = bounds.alpha.min(a);
        bounds.beta = bounds.beta.max(a);
        bounds.mu = bounds.mu.min(b);
        bounds.nu = bounds.nu.max(b);

        p_above_one.update(p - 1.0, x);
        p_below_dim.update(n_dim - p, x);
        lower_order.update(r - (p - 1.0), x);
        gamma_range.update(gamma.min(1.0 - gamma), x);
        let grad = gamma_gradient(spec, x)
            .map_err(|e| Error::MalformedSpec(format!("field `gamma`: {e}")))?;
        gamma_grad.update(GAMMA_GRADIENT_LIMIT - grad, x);
        a_bounds.update(a, x);
        b_bounds.update(b, x);
        let threshold = if r > 0.0 {
            1.0 + (1.0 - gamma) / r
        } else {
            f64::INFINITY
        };
        regularity.update(p - threshold, x);

        // An L¹ source may be singular at isolated points; those are skipped.
        match spec.f.eval(x) {
            Ok(f) => {
                source.update(if f >= 0.0 { f64::INFINITY } else { f }, x);
                if f > source_max {
                    source_max = f;
                    source_max_point = x;
                }
            }
            Err(_) => singular_source_points += 1,
        }
    }

    if singular_source_points == samples.len() {
        return Err(Error::MalformedSpec(
            "source `f` cannot be evaluated at any sample point".into(),
        ));
    }
    let mut source_check = source.check(
        Hypothesis::SourceSign,
        true,
        format!(
            "f must be nonnegative and not identically zero; max sampled f = {source_max:e}; {singular_source_points} singular sample(s) skipped"
        ),
    );
    if source_check.passed && source_max <= 0.0 {
        source_check.passed = false;
        source_check.margin = source_max;
        source_check.worst_point = source_max_point;
    }

    let checks = vec![
        p_above_one.check(
            Hypothesis::ExponentAboveOne,
            true,
            format!("p- = {} must exceed 1", bounds.p_minus),
        ),
        p_below_dim.check(
            Hypothesis::ExponentBelowDimension,
            spec.dimension() > 2,
            format!(
                "p+ = {} against N = {}; warning only for N <= 2",
                bounds.p_plus,
                spec.dimension()
            ),
        ),
        lower_order.check(
            Hypothesis::LowerOrderExponent,
            true,
            "p(x) - 1 < r(x) at every sample".into(),
        ),
        gamma_range.check(
            Hypothesis::SingularExponentRange,
            true,
            format!(
                "gamma- = {}, gamma+ = {} must lie in (0, 1)",
                bounds.gamma_minus, bounds.gamma_plus
            ),
        ),
        gamma_grad.check(
            Hypothesis::SingularExponentGradient,
            true,
            format!("sampled |grad gamma| must stay below {GAMMA_GRADIENT_LIMIT:e}"),
        ),
        a_bounds.check(
            Hypothesis::DiffusionBounds,
            true,
            format!("alpha = {}, beta = {}", bounds.alpha, bounds.beta),
        ),
        b_bounds.check(
            Hypothesis::LowerOrderBounds,
            true,
            format!("mu = {}, nu = {}", bounds.mu, bounds.nu),
        ),
        regularity.check(
            Hypothesis::RegularityCondition,
            true,
            "p(x) > 1 + (1 - gamma(x)) / r(x) at every sample".into(),
        ),
        source_check,
    ];

    Ok(HypothesisReport {
        samples_per_axis,
        checks,
        bounds,
    })
}

/// q(x) = p(x) / (1 + (1 − γ(x)) / r(x)).
pub fn derived_exponent_q(spec: &ProblemSpec, point: [f64; 2]) -> Result<f64> {
    let p = spec.p.eval(point)?;
    let r = spec.r.eval(point)?;
    let gamma = spec.gamma.eval(point)?;
    Ok(q_from_exponents(p, r, gamma))
}

pub(crate) fn q_from_exponents(p: f64, r: f64, gamma: f64) -> f64 {
    p / (1.0 + (1.0 - gamma) / r)
}

/// p' with 1/p + 1/p' = 1.
pub fn conjugate_exponent(p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!(
            "conjugate exponent needs p > 1, got {p}"
        )));
    }
    Ok(p / (p - 1.0))
}

/// Sobolev exponent Np/(N − p).
pub fn sobolev_exponent(p: f64, dimension: usize) -> Result<f64> {
    let n = dimension as f64;
    if !(p > 1.0) || p >= n {
        return Err(Error::Domain(format!(
            "Sobolev exponent needs 1 < p < N, got p = {p}, N = {dimension}"
        )));
    }
    Ok(n * p / (n - p))
}
