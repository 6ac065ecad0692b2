//! Problem data: Kirchhoff functions, potentials and coupling, and sampled
//! checks of the structural hypotheses (M1)-(M4), (V1)-(V3'), (V4), (V5).

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{grad_sq_integral, Grid, ScalarField};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type PointFn = Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>;
pub type PointGradFn = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;

/// One `a s^γ` term of the `quadratic_plus_powers` family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub coeff: f64,
    pub exponent: f64,
}

#[derive(Clone)]
pub enum KirchhoffFamily {
    /// `α ≡ 0`, the pure Schrödinger limit.
    Zero,
    /// `α(s) = b s²/2`
    Quadratic { b: f64 },
    /// `α(s) = b s²/2 + Σ aᵢ s^γᵢ`, `γᵢ ∈ (0, 1)`
    QuadraticPlusPowers { b: f64, terms: Vec<PowerTerm> },
    /// `α(s) = ∫₀ˢ ln(1 + r) dr = (1 + s) ln(1 + s) − s`
    LogIntegral,
    Custom {
        name: String,
        value: ScalarFn,
        deriv: ScalarFn,
        deriv2: ScalarFn,
        linear_bound: f64,
    },
}

impl fmt::Debug for KirchhoffFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Quadratic { b } => write!(f, "Quadratic {{ b: {b} }}"),
            Self::QuadraticPlusPowers { b, terms } => {
                write!(f, "QuadraticPlusPowers {{ b: {b}, terms: {terms:?} }}")
            }
            Self::LogIntegral => write!(f, "LogIntegral"),
            Self::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// Parameters accepted by [`make_family`], as they appear in config files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub a: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma: Vec<f64>,
}

/// A Kirchhoff function `α` with its first two derivatives and the constant
/// `b` of the linear bound `α'(s) ≤ b s`.
#[derive(Debug, Clone)]
pub struct KirchhoffSpec {
    family: KirchhoffFamily,
}

impl KirchhoffSpec {
    pub fn zero() -> Self {
        Self {
            family: KirchhoffFamily::Zero,
        }
    }

    pub fn quadratic(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidFamily(format!(
                "quadratic needs b > 0, got {b}"
            )));
        }
        Ok(Self {
            family: KirchhoffFamily::Quadratic { b },
        })
    }

    pub fn quadratic_plus_powers(b: f64, terms: &[PowerTerm]) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidFamily(format!(
                "quadratic_plus_powers needs b > 0, got {b}"
            )));
        }
        for t in terms {
            if !(t.coeff > 0.0 && t.coeff.is_finite()) {
                return Err(Error::InvalidFamily(format!(
                    "power coefficients must be positive, got {}",
                    t.coeff
                )));
            }
            if !(t.exponent > 0.0 && t.exponent < 1.0) {
                return Err(Error::InvalidFamily(format!(
                    "power exponents must lie in (0, 1), got {}",
                    t.exponent
                )));
            }
        }
        Ok(Self {
            family: KirchhoffFamily::QuadraticPlusPowers {
                b,
                terms: terms.to_vec(),
            },
        })
    }

    pub fn log_integral() -> Self {
        Self {
            family: KirchhoffFamily::LogIntegral,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        value: ScalarFn,
        deriv: ScalarFn,
        deriv2: ScalarFn,
        linear_bound: f64,
    ) -> Self {
        Self {
            family: KirchhoffFamily::Custom {
                name: name.into(),
                value,
                deriv,
                deriv2,
                linear_bound,
            },
        }
    }

    pub fn family(&self) -> &KirchhoffFamily {
        &self.family
    }

    pub fn tag(&self) -> &str {
        match &self.family {
            KirchhoffFamily::Zero => "zero",
            KirchhoffFamily::Quadratic { .. } => "quadratic",
            KirchhoffFamily::QuadraticPlusPowers { .. } => "quadratic_plus_powers",
            KirchhoffFamily::LogIntegral => "log_integral",
            KirchhoffFamily::Custom { name, .. } => name,
        }
    }

    /// Constant `b` with `α'(s) ≤ b s`.
    pub fn linear_bound(&self) -> f64 {
        match &self.family {
            KirchhoffFamily::Zero => 0.0,
            KirchhoffFamily::Quadratic { b } | KirchhoffFamily::QuadraticPlusPowers { b, .. } => *b,
            KirchhoffFamily::LogIntegral => 1.0,
            KirchhoffFamily::Custom { linear_bound, .. } => *linear_bound,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match &self.family {
            KirchhoffFamily::Zero => 0.0,
            KirchhoffFamily::Quadratic { b } => 0.5 * b * s * s,
            KirchhoffFamily::QuadraticPlusPowers { b, terms } => {
                0.5 * b * s * s
                    + terms
                        .iter()
                        .map(|t| t.coeff * s.powf(t.exponent))
                        .sum::<f64>()
            }
            KirchhoffFamily::LogIntegral => log_integral_value(s),
            KirchhoffFamily::Custom { value, .. } => value(s),
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        match &self.family {
            KirchhoffFamily::Zero => 0.0,
            KirchhoffFamily::Quadratic { b } => b * s,
            KirchhoffFamily::QuadraticPlusPowers { b, terms } => {
                b * s
                    + terms
                        .iter()
                        .map(|t| t.coeff * t.exponent * s.powf(t.exponent - 1.0))
                        .sum::<f64>()
            }
            KirchhoffFamily::LogIntegral => s.ln_1p(),
            KirchhoffFamily::Custom { deriv, .. } => deriv(s),
        }
    }

    pub fn deriv2(&self, s: f64) -> f64 {
        match &self.family {
            KirchhoffFamily::Zero => 0.0,
            KirchhoffFamily::Quadratic { b } => *b,
            KirchhoffFamily::QuadraticPlusPowers { b, terms } => {
                b + terms
                    .iter()
                    .map(|t| t.coeff * t.exponent * (t.exponent - 1.0) * s.powf(t.exponent - 2.0))
                    .sum::<f64>()
            }
            KirchhoffFamily::LogIntegral => 1.0 / (1.0 + s),
            KirchhoffFamily::Custom { deriv2, .. } => deriv2(s),
        }
    }

    /// `α'(s) s`, taken as 0 at `s = 0` even when `α'` blows up there.
    pub fn deriv_times(&self, s: f64) -> f64 {
        if s == 0.0 {
            0.0
        } else {
            self.deriv(s) * s
        }
    }
}

/// `(1+s) ln(1+s) − s`, with the alternating series near zero where the
/// closed form cancels.
fn log_integral_value(s: f64) -> f64 {
    if s < 0.1 {
        // Σ_{k≥2} (−1)^k s^k / (k (k−1))
        let mut term = s * s;
        let mut acc = 0.0;
        for k in 2..40 {
            let kf = k as f64;
            let contrib = term / (kf * (kf - 1.0));
            acc += if k % 2 == 0 { contrib } else { -contrib };
            if contrib < 1e-18 * acc.abs() {
                break;
            }
            term *= s;
        }
        acc
    } else {
        (1.0 + s) * s.ln_1p() - s
    }
}

/// Builds a built-in family from its config tag and parameters.
pub fn make_family(tag: &str, params: &FamilyParams) -> Result<KirchhoffSpec> {
    let need_b = || {
        params
            .b
            .ok_or_else(|| Error::InvalidFamily(format!("family {tag} requires parameter b")))
    };
    match tag {
        "zero" => Ok(KirchhoffSpec::zero()),
        "quadratic" => KirchhoffSpec::quadratic(need_b()?),
        "quadratic_plus_powers" => {
            if params.a.len() != params.gamma.len() {
                return Err(Error::InvalidFamily(format!(
                    "{} coefficients a but {} exponents gamma",
                    params.a.len(),
                    params.gamma.len()
                )));
            }
            let terms: Vec<PowerTerm> = params
                .a
                .iter()
                .zip(&params.gamma)
                .map(|(&coeff, &exponent)| PowerTerm { coeff, exponent })
                .collect();
            KirchhoffSpec::quadratic_plus_powers(need_b()?, &terms)
        }
        "log_integral" => Ok(KirchhoffSpec::log_integral()),
        other => Err(Error::InvalidFamily(format!("unknown family {other:?}"))),
    }
}

/// Where a potential's values (and possibly gradient) come from.
#[derive(Clone)]
pub enum PotentialSource {
    Expr(Expr),
    Function {
        name: String,
        value: PointFn,
        gradient: Option<PointGradFn>,
    },
    /// Bare grid samples; no gradient information.
    Samples(ScalarField),
}

impl fmt::Debug for PotentialSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Expr(e) => write!(f, "Expr({})", e.source()),
            Self::Function { name, gradient, .. } => write!(
                f,
                "Function({name}, gradient: {})",
                if gradient.is_some() {
                    "analytic"
                } else {
                    "finite differences"
                }
            ),
            Self::Samples(_) => write!(f, "Samples"),
        }
    }
}

impl PotentialSource {
    pub fn constant(c: f64) -> Self {
        Self::Expr(Expr::parse(&format!("{c:e}")).expect("numeric literal parses"))
    }

    pub fn expr(src: &str) -> Result<Self> {
        Ok(Self::Expr(Expr::parse(src)?))
    }

    pub fn function(
        name: impl Into<String>,
        value: PointFn,
        gradient: Option<PointGradFn>,
    ) -> Self {
        Self::Function {
            name: name.into(),
            value,
            gradient,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Expr(e) => e.source().to_string(),
            Self::Function { name, .. } => name.clone(),
            Self::Samples(_) => "<samples>".into(),
        }
    }

    fn eval(&self, x: [f64; 3]) -> Option<f64> {
        match self {
            Self::Expr(e) => Some(e.eval(x)),
            Self::Function { value, .. } => Some(value(x)),
            Self::Samples(_) => None,
        }
    }

    fn gradient(&self, x: [f64; 3]) -> Option<[f64; 3]> {
        match self {
            Self::Expr(e) => Some(e.eval_with_gradient(x).1),
            Self::Function {
                value,
                gradient: Some(g),
                ..
            } => {
                let _ = value;
                Some(g(x))
            }
            Self::Function {
                value,
                gradient: None,
                ..
            } => {
                let mut g = [0.0; 3];
                for (axis, slot) in g.iter_mut().enumerate() {
                    let step = 1e-5 * x[axis].abs().max(1.0);
                    let mut a = x;
                    let mut b = x;
                    a[axis] += step;
                    b[axis] -= step;
                    *slot = (value(a) - value(b)) / (2.0 * step);
                }
                Some(g)
            }
            Self::Samples(_) => None,
        }
    }

    fn sample(&self, grid: Grid) -> Result<ScalarField> {
        let field = match self {
            Self::Samples(f) => {
                if f.grid() != &grid {
                    return Err(Error::GridMismatch);
                }
                f.clone()
            }
            _ => ScalarField::from_fn(grid, |x| self.eval(x).expect("generator")),
        };
        if !field.is_finite() {
            return Err(Error::InvalidField(format!(
                "potential {} is not finite on the grid",
                self.describe()
            )));
        }
        Ok(field)
    }
}

/// A potential together with its cached grid samples.
#[derive(Debug, Clone)]
pub struct Potential {
    source: PotentialSource,
    field: ScalarField,
}

impl Potential {
    pub fn new(source: PotentialSource, grid: Grid) -> Result<Self> {
        let field = source.sample(grid)?;
        Ok(Self { source, field })
    }

    pub fn source(&self) -> &PotentialSource {
        &self.source
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn is_constant(&self) -> bool {
        let v = self.field.values();
        let (lo, hi) = v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        hi - lo <= 1e-14 * hi.abs().max(lo.abs())
    }

    /// `⟨∇V(x), x⟩` at every grid point, `x` measured from the box center.
    pub fn radial_derivative(&self) -> Result<ScalarField> {
        let grid = *self.field.grid();
        if let PotentialSource::Samples(_) = self.source {
            return Err(Error::Unsupported(
                "potential given as bare samples carries no gradient information".into(),
            ));
        }
        Ok(ScalarField::from_fn(grid, |x| {
            let g = self.source.gradient(x).expect("generator has gradient");
            g[0] * x[0] + g[1] * x[1] + g[2] * x[2]
        }))
    }
}

/// `V₁`, `V₂`, `λ`, the coupling constant `δ`, and the declared periods.
#[derive(Debug, Clone)]
pub struct PotentialSet {
    pub v1: Potential,
    pub v2: Potential,
    pub lambda: Potential,
    pub delta: f64,
    pub periods: [u32; 3],
}

impl PotentialSet {
    /// Samples the three generators and checks `0 < δ < min{a₁, a₂}`.
    pub fn new(
        grid: Grid,
        v1: PotentialSource,
        v2: PotentialSource,
        lambda: PotentialSource,
        delta: f64,
        periods: [u32; 3],
        coefficients: [f64; 2],
    ) -> Result<Self> {
        let a_min = coefficients[0].min(coefficients[1]);
        if !(delta > 0.0 && delta < a_min) {
            return Err(Error::AssumptionViolation {
                hypothesis: "(V3)",
                detail: format!("need 0 < delta < min(a1, a2) = {a_min}, got delta = {delta}"),
            });
        }
        if periods.contains(&0) {
            return Err(Error::InvalidProblem("periods must be positive".into()));
        }
        Ok(Self {
            v1: Potential::new(v1, grid)?,
            v2: Potential::new(v2, grid)?,
            lambda: Potential::new(lambda, grid)?,
            delta,
            periods,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.v1.field.grid()
    }
}

/// A complete instance of the coupled system.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub a1: f64,
    pub a2: f64,
    pub alpha: KirchhoffSpec,
    pub beta: KirchhoffSpec,
    pub potentials: PotentialSet,
    pub mu: f64,
    pub p: f64,
    pub q: f64,
}

impl ProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a1: f64,
        a2: f64,
        alpha: KirchhoffSpec,
        beta: KirchhoffSpec,
        potentials: PotentialSet,
        mu: f64,
        p: f64,
        q: f64,
    ) -> Result<Self> {
        if !(a1 > 0.0 && a2 > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "a1 and a2 must be positive, got a1 = {a1}, a2 = {a2}"
            )));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidProblem(format!("mu must be >= 0, got {mu}")));
        }
        check_exponents(p, q)?;
        let a_min = a1.min(a2);
        if !(potentials.delta < a_min) {
            return Err(Error::AssumptionViolation {
                hypothesis: "(V3)",
                detail: format!(
                    "delta = {} is not below min(a1, a2) = {a_min}",
                    potentials.delta
                ),
            });
        }
        Ok(Self {
            a1,
            a2,
            alpha,
            beta,
            potentials,
            mu,
            p,
            q,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.potentials.grid()
    }

    pub fn a_min(&self) -> f64 {
        self.a1.min(self.a2)
    }

    pub fn delta(&self) -> f64 {
        self.potentials.delta
    }

    /// Coercivity constant `min{a₁, a₂} − δ`.
    pub fn coercivity(&self) -> f64 {
        self.a_min() - self.delta()
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        let mut out = self.clone();
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidProblem(format!("mu must be >= 0, got {mu}")));
        }
        out.mu = mu;
        Ok(out)
    }

    pub fn v1(&self) -> &ScalarField {
        self.potentials.v1.field()
    }

    pub fn v2(&self) -> &ScalarField {
        self.potentials.v2.field()
    }

    pub fn lambda(&self) -> &ScalarField {
        self.potentials.lambda.field()
    }
}

pub fn check_exponents(p: f64, q: f64) -> Result<()> {
    if !(4.0 < p && p <= q && q <= 6.0) {
        return Err(Error::InvalidProblem(format!(
            "exponents must satisfy 4 < p <= q <= 6, got p = {p}, q = {q}"
        )));
    }
    Ok(())
}

/// Outcome of one sampled hypothesis check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    /// Informational checks (such as the positivity flag (V3')) do not gate
    /// the overall verdict.
    pub required: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_constant: Option<f64>,
}

impl HypothesisCheck {
    fn new(name: &str, required: bool) -> Self {
        Self {
            name: name.to_string(),
            passed: true,
            required,
            detail: String::new(),
            counterexample: None,
            warning: None,
            best_constant: None,
        }
    }

    fn fail(&mut self, at: String) {
        if self.passed {
            self.passed = false;
            self.counterexample = Some(at);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<HypothesisCheck>,
}

impl ValidationReport {
    pub fn all_required_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.required)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.checks.extend(other.checks);
    }
}

const M_TOL: f64 = 1e-12;

/// Log-spaced sample points on `[1e-6, 1e6]`.
pub fn log_samples(count: usize) -> Vec<f64> {
    let (lo, hi) = (-6.0f64, 6.0f64);
    (0..count)
        .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (count - 1) as f64))
        .collect()
}

fn within(lhs: f64, rhs: f64, scale: f64) -> bool {
    lhs <= rhs + M_TOL * scale
}

/// Sampled check of (M1)-(M4) for the pair `(α, β)`.
pub fn validate_m(alpha: &KirchhoffSpec, beta: &KirchhoffSpec, samples: usize) -> ValidationReport {
    let samples = samples.max(2);
    let s = log_samples(samples);
    let mut m1 = HypothesisCheck::new("(M1)", true);
    let mut m2 = HypothesisCheck::new("(M2)", true);
    let mut m3 = HypothesisCheck::new("(M3)", true);
    let mut m4 = HypothesisCheck::new("(M4)", true);
    let mut plateau = false;

    for (label, f) in [("alpha", alpha), ("beta", beta)] {
        let d: Vec<f64> = s.iter().map(|&x| f.deriv(x)).collect();
        let b = f.linear_bound();
        for k in 0..s.len() {
            let (x, dx) = (s[k], d[k]);
            if k + 1 < s.len() {
                let (y, dy) = (s[k + 1], d[k + 1]);
                if !within(dx, dy, dx.abs().max(dy.abs())) {
                    m1.fail(format!(
                        "{label}'({x:.6e}) = {dx:.6e} > {label}'({y:.6e}) = {dy:.6e}"
                    ));
                } else if (dy - dx).abs() <= M_TOL * dx.abs().max(dy.abs()).max(f64::MIN_POSITIVE) {
                    plateau = true;
                }
                let (rx, ry) = (dx / x, dy / y);
                if !within(ry, rx, rx.abs().max(ry.abs())) {
                    m2.fail(format!(
                        "{label}'(s)/s increases: {rx:.6e} at s = {x:.6e}, {ry:.6e} at s = {y:.6e}"
                    ));
                }
            }
            if !within(dx, b * x, dx.abs().max(b * x)) {
                m3.fail(format!(
                    "{label}'({x:.6e}) = {dx:.6e} > b s = {:.6e}",
                    b * x
                ));
            }
            let lhs = f.deriv2(x) * x;
            if !within(lhs, dx, lhs.abs().max(dx.abs())) {
                m4.fail(format!(
                    "{label}''(s) s = {lhs:.6e} > {label}'(s) = {dx:.6e} at s = {x:.6e}"
                ));
            }
        }
    }

    // Two-sided bracket on the product grid.
    let pa: Vec<(f64, f64)> = s
        .iter()
        .map(|&x| (alpha.value(x), alpha.deriv(x) * x))
        .collect();
    let pb: Vec<(f64, f64)> = s
        .iter()
        .map(|&x| (beta.value(x), beta.deriv(x) * x))
        .collect();
    'outer: for (i, &(va, da)) in pa.iter().enumerate() {
        for (j, &(vb, db)) in pb.iter().enumerate() {
            let mid = va + vb;
            let hi = da + db;
            let lo = 0.5 * hi;
            let scale = mid.abs().max(hi.abs());
            if !within(lo, mid, scale) || !within(mid, hi, scale) {
                m3.fail(format!(
                    "bracket fails at s = {:.6e}, t = {:.6e}: {lo:.6e} <= {mid:.6e} <= {hi:.6e}",
                    s[i], s[j]
                ));
                break 'outer;
            }
        }
    }

    m1.detail = "alpha', beta' increasing".into();
    if plateau {
        m1.warning =
            Some("derivative is constant on part of the range (non-strict monotonicity)".into());
    }
    m2.detail = "alpha'(s)/s, beta'(t)/t non-increasing".into();
    m3.detail = format!(
        "alpha' <= {} s, beta' <= {} t, and the two-sided bracket",
        alpha.linear_bound(),
        beta.linear_bound()
    );
    m4.detail = "alpha''(s) s <= alpha'(s), beta''(t) t <= beta'(t)".into();
    ValidationReport {
        checks: vec![m1, m2, m3, m4],
    }
}

const V_TOL: f64 = 1e-12;

/// Pointwise checks of (V1)-(V3') on the grid plus the sampled (V2) infimum.
pub fn validate_v(potentials: &PotentialSet, a1: f64, a2: f64) -> ValidationReport {
    let grid = *potentials.grid();
    let v1 = potentials.v1.field().values();
    let v2 = potentials.v2.field().values();
    let lam = potentials.lambda.field().values();
    let delta = potentials.delta;

    let mut c1 = HypothesisCheck::new("(V1)", true);
    c1.detail = format!("periodic with periods {:?}", potentials.periods);
    for (axis, &per) in potentials.periods.iter().enumerate() {
        let ratio = grid.box_length() / per as f64;
        if (ratio - ratio.round()).abs() > 1e-9 {
            c1.fail(format!(
                "box length {} is not a multiple of the period {per} along axis {axis}",
                grid.box_length()
            ));
        }
    }
    for (name, pot) in [
        ("V1", &potentials.v1),
        ("V2", &potentials.v2),
        ("lambda", &potentials.lambda),
    ] {
        if !c1.passed {
            break;
        }
        if let PotentialSource::Samples(_) = pot.source {
            c1.warning = Some("sampled potentials cannot be checked for periodicity".into());
            continue;
        }
        'scan: for idx in 0..grid.len() {
            let x = grid.point(idx);
            let base = pot.source.eval(x).expect("generator");
            for axis in 0..3 {
                let mut y = x;
                y[axis] += potentials.periods[axis] as f64;
                let shifted = pot.source.eval(y).expect("generator");
                if (shifted - base).abs() > 1e-9 * (1.0 + base.abs()) {
                    c1.fail(format!(
                        "{name}({x:?}) = {base:.6e} but shifted by one period along axis {axis} gives {shifted:.6e}"
                    ));
                    break 'scan;
                }
            }
        }
    }

    let mut c2 = HypothesisCheck::new("(V2)", true);
    for (name, vals) in [("V1", v1), ("V2", v2)] {
        if let Some(idx) = vals.iter().position(|&v| v < 0.0) {
            c2.fail(format!(
                "{name}({:?}) = {:.6e} < 0",
                grid.point(idx),
                vals[idx]
            ));
        }
    }
    let inf1 = rayleigh_infimum(potentials.v1.field(), 20, 0x5eed);
    let inf2 = rayleigh_infimum(potentials.v2.field(), 20, 0x5eed + 1);
    if c2.passed && !(inf1 > V_TOL && inf2 > V_TOL) {
        c2.fail(format!(
            "smallest sampled Rayleigh quotients of -Δ+V are {inf1:.6e} (V1) and {inf2:.6e} (V2)"
        ));
    }
    c2.detail =
        format!("V_i >= 0; sampled inf of (-Δ+V_i) Rayleigh quotient: {inf1:.6e}, {inf2:.6e}");
    c2.best_constant = Some(inf1.min(inf2));

    let mut c3 = HypothesisCheck::new("(V3)", true);
    let a_min = a1.min(a2);
    if !(delta > 0.0 && delta < a_min) {
        c3.fail(format!(
            "delta = {delta} outside (0, min(a1, a2) = {a_min})"
        ));
    }
    let mut worst = 0.0f64;
    for idx in 0..grid.len() {
        let bound = delta * (v1[idx] * v2[idx]).max(0.0).sqrt();
        let l = lam[idx].abs();
        if l > 0.0 {
            let ratio = l / (v1[idx] * v2[idx]).max(0.0).sqrt();
            worst = worst.max(ratio);
        }
        if l > bound * (1.0 + V_TOL) + V_TOL * f64::MIN_POSITIVE {
            c3.fail(format!(
                "|lambda({:?})| = {l:.6e} > delta sqrt(V1 V2) = {bound:.6e}",
                grid.point(idx)
            ));
        }
    }
    c3.detail = format!("|lambda| <= delta sqrt(V1 V2) with delta = {delta}");
    c3.best_constant = Some(worst);

    let mut c3p = HypothesisCheck::new("(V3')", false);
    c3p.detail = "lambda > 0 everywhere (positivity of the ground state)".into();
    if let Some(idx) = lam.iter().position(|&l| !(l > 0.0)) {
        c3p.fail(format!("lambda({:?}) = {:.6e}", grid.point(idx), lam[idx]));
    }

    ValidationReport {
        checks: vec![c1, c2, c3, c3p],
    }
}

/// Smallest Rayleigh quotient of `-Δ + V` over the constant field and
/// `trials - 1` random smooth fields.
fn rayleigh_infimum(potential: &ScalarField, trials: usize, seed: u64) -> f64 {
    let grid = *potential.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.box_length();
    let mut best = f64::INFINITY;
    for trial in 0..trials {
        let f = if trial == 0 {
            ScalarField::constant(grid, 1.0)
        } else {
            let modes: Vec<([f64; 3], f64, f64)> = (0..4)
                .map(|_| {
                    let k = [
                        rng.gen_range(0..3) as f64,
                        rng.gen_range(0..3) as f64,
                        rng.gen_range(0..3) as f64,
                    ];
                    (
                        k,
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let offset = rng.gen_range(-1.0..1.0);
            ScalarField::from_fn(grid, |x| {
                offset
                    + modes
                        .iter()
                        .map(|(k, amp, phase)| {
                            let arg = std::f64::consts::TAU
                                * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2])
                                / l;
                            amp * (arg + phase).cos()
                        })
                        .sum::<f64>()
            })
        };
        let mass = f.inner(&f).unwrap_or(0.0);
        if mass <= 0.0 {
            continue;
        }
        let grad = grad_sq_integral(&f).unwrap_or(0.0);
        let pot = f
            .values()
            .iter()
            .zip(potential.values())
            .map(|(u, v)| v * u * u)
            .sum::<f64>()
            * grid.cell_volume();
        best = best.min((grad + pot) / mass);
    }
    best
}

/// Sign conditions (V4) `0 ≤ ⟨∇Vᵢ, x⟩ ≤ C Vᵢ` and (V5) `⟨∇λ, x⟩ ≤ 0`, with
/// `x` measured from the box center.
pub fn validate_v45(potentials: &PotentialSet) -> Result<ValidationReport> {
    let grid = *potentials.grid();
    let mut c4 = HypothesisCheck::new("(V4)", true);
    let mut best_c = 0.0f64;
    for (name, pot) in [("V1", &potentials.v1), ("V2", &potentials.v2)] {
        let radial = pot.radial_derivative()?;
        for (idx, (&r, &v)) in radial.values().iter().zip(pot.field().values()).enumerate() {
            let x = grid.point(idx);
            let tol = V_TOL * (1.0 + x.iter().map(|c| c.abs()).sum::<f64>());
            if r < -tol {
                c4.fail(format!("<grad {name}, x> = {r:.6e} < 0 at {x:?}"));
            }
            if v > tol {
                best_c = best_c.max(r / v);
            } else if r > tol {
                c4.fail(format!(
                    "<grad {name}, x> = {r:.6e} > 0 where {name} = {v:.6e} vanishes, at {x:?}"
                ));
            }
        }
    }
    c4.detail = "0 <= <grad V_i, x> <= C V_i".into();
    c4.best_constant = Some(best_c);

    let mut c5 = HypothesisCheck::new("(V5)", true);
    let radial = potentials.lambda.radial_derivative()?;
    let mut best_l = 0.0f64;
    for (idx, (&r, &l)) in radial
        .values()
        .iter()
        .zip(potentials.lambda.field().values())
        .enumerate()
    {
        let x = grid.point(idx);
        let tol = V_TOL * (1.0 + x.iter().map(|c| c.abs()).sum::<f64>());
        if r > tol {
            c5.fail(format!("<grad lambda, x> = {r:.6e} > 0 at {x:?}"));
        }
        if l.abs() > tol {
            best_l = best_l.max(r.abs() / l.abs());
        }
    }
    c5.detail = "<grad lambda, x> <= 0".into();
    c5.best_constant = Some(best_l);
    Ok(ValidationReport {
        checks: vec![c4, c5],
    })
}
