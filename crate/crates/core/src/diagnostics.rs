//! Sobolev constant estimate, the critical level bound, the Pohozaev residual
//! and the nonexistence certificate for `p = q = 6`.

use serde::{Deserialize, Serialize};

use crate::energy::state_scalars;
use crate::error::{Error, Result};
use crate::grid::{grad_sq_integral, lp_norm_pow, Grid, ScalarField, StatePair};
use crate::model::ProblemSpec;

/// Best constant of `D^{1,2}(R³) ↪ L⁶(R³)`, `3 (π/2)^{4/3}`.
pub const SOBOLEV_CONSTANT: f64 = 5.477_904_089_531_331;

/// `(1 + |x|²)^{-1/2}`, an extremal of the Sobolev quotient.
pub fn bubble(x: [f64; 3]) -> f64 {
    (1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
        .sqrt()
        .recip()
}

/// `∫|∇f|² / (∫f⁶)^{1/3}` on the grid.
pub fn sobolev_quotient(f: &ScalarField) -> Result<f64> {
    let den = lp_norm_pow(f, 6.0)?;
    if den == 0.0 {
        return Err(Error::InvalidField(
            "Sobolev quotient of the zero field".into(),
        ));
    }
    Ok(grad_sq_integral(f)? / den.cbrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevLevel {
    pub box_length: f64,
    pub n: usize,
    pub quotient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevEstimate {
    pub estimate: f64,
    pub error_bar: f64,
    pub levels: Vec<SobolevLevel>,
    /// Pairwise extrapolates of consecutive levels.
    pub extrapolates: Vec<f64>,
}

/// Box lengths double while the spacing shrinks like `L^{-1/2}`, so that
/// truncation and discretization errors both decay like `1/L`.
pub const DEFAULT_LADDER: [(f64, usize); 3] = [(8.0, 16), (16.0, 45), (32.0, 128)];

/// Bubble quotient on each `(L, n)` level, extrapolated linearly in `1/L`.
///
/// The error bar is the spread of the last two extrapolates (or infinite
/// with fewer than three levels).
pub fn sobolev_constant(ladder: &[(f64, usize)]) -> Result<SobolevEstimate> {
    if ladder.is_empty() {
        return Err(Error::InvalidGrid("empty refinement ladder".into()));
    }
    let mut levels = Vec::with_capacity(ladder.len());
    for &(l, n) in ladder {
        let grid = Grid::new(n, l)?;
        let quotient = sobolev_quotient(&ScalarField::from_fn(grid, bubble))?;
        levels.push(SobolevLevel {
            box_length: l,
            n,
            quotient,
        });
    }
    if levels
        .windows(2)
        .any(|w| !(w[1].box_length > w[0].box_length))
    {
        return Err(Error::InvalidGrid(
            "ladder box lengths must increase".into(),
        ));
    }
    let extrapolates: Vec<f64> = levels
        .windows(2)
        .map(|w| {
            let (l0, l1) = (w[0].box_length, w[1].box_length);
            (l1 * w[1].quotient - l0 * w[0].quotient) / (l1 - l0)
        })
        .collect();
    let (estimate, error_bar) = match extrapolates.as_slice() {
        [] => (levels[0].quotient, f64::INFINITY),
        [e] => (*e, f64::INFINITY),
        [.., a, b] => (*b, (b - a).abs()),
    };
    Ok(SobolevEstimate {
        estimate,
        error_bar,
        levels,
        extrapolates,
    })
}

/// `(1/4 − 1/p) [(min{a₁, a₂} − δ) S]^{3/2}`
pub fn level_bound(a1: f64, a2: f64, delta: f64, p: f64, s: f64) -> Result<f64> {
    if !(p > 4.0) {
        return Err(Error::InvalidProblem(format!(
            "level bound needs p > 4, got {p}"
        )));
    }
    let m = a1.min(a2) - delta;
    if !(m > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "level bound needs delta < min(a1, a2), got delta = {delta}"
        )));
    }
    if !(s > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "Sobolev constant must be positive, got {s}"
        )));
    }
    Ok((0.25 - 1.0 / p) * (m * s).powf(1.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PohozaevTerm {
    pub name: String,
    /// `"lhs"` or `"rhs"`
    pub side: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PohozaevReport {
    /// `"critical"` for `p = q = 6`, `"extended"` for the subcritical
    /// generalization.
    pub form: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual_abs: f64,
    pub residual_rel: f64,
    pub boundary_mass: f64,
    pub term_table: Vec<PohozaevTerm>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PohozaevReport {
    /// The term table as CSV with header `side,term,value`.
    pub fn term_table_csv(&self) -> String {
        let mut out = String::from("side,term,value\n");
        for t in &self.term_table {
            out.push_str(&format!("{},{},{:.17e}\n", t.side, t.name, t.value));
        }
        out
    }
}

pub const BOUNDARY_MASS_WARN: f64 = 1e-3;

/// Fraction of `∫(u² + v²)` on grid points within one cell of the boundary.
pub fn boundary_mass(state: &StatePair) -> f64 {
    let grid = state.grid();
    let (mut edge, mut total) = (0.0, 0.0);
    for (idx, (u, v)) in state.u.values().iter().zip(state.v.values()).enumerate() {
        let m = u * u + v * v;
        total += m;
        if grid.near_boundary(idx) {
            edge += m;
        }
    }
    if total > 0.0 {
        edge / total
    } else {
        0.0
    }
}

/// Kirchhoff factors `(a₁ + α'(‖u‖²), a₂ + β'(‖v‖²))`.
fn kirchhoff_factors(problem: &ProblemSpec, state: &StatePair) -> Result<(f64, f64)> {
    let s = state_scalars(problem, state)?;
    let k =
        |a: f64, f: &crate::model::KirchhoffSpec, n: f64| if n == 0.0 { a } else { a + f.deriv(n) };
    Ok((
        k(problem.a1, &problem.alpha, s.nu),
        k(problem.a2, &problem.beta, s.nv),
    ))
}

fn weighted(w: &ScalarField, a: &ScalarField, b: &ScalarField) -> f64 {
    w.values()
        .iter()
        .zip(a.values())
        .zip(b.values())
        .map(|((w, a), b)| w * a * b)
        .sum::<f64>()
        * w.grid().cell_volume()
}

/// Residual of the Pohozaev identity, with `x` measured from the box center.
///
/// For `p = q = 6` the identity is the one classical solutions satisfy; for
/// other exponents the power terms carry the weights `6/p` and `6/q` and the
/// report is labelled `"extended"`.
pub fn pohozaev_residual(problem: &ProblemSpec, state: &StatePair) -> Result<PohozaevReport> {
    let pots = &problem.potentials;
    let rv1 = pots.v1.radial_derivative()?;
    let rv2 = pots.v2.radial_derivative()?;
    let rlam = pots.lambda.radial_derivative()?;
    let (ku, kv) = kirchhoff_factors(problem, state)?;
    let (u, v) = (&state.u, &state.v);

    let grad_u = grad_sq_integral(u)?;
    let grad_v = grad_sq_integral(v)?;
    let pot_u = weighted(problem.v1(), u, u);
    let pot_v = weighted(problem.v2(), v, v);
    let lhs_terms = [
        ("k_u*grad_u", ku * grad_u),
        ("3*k_u*V1_u2", 3.0 * ku * pot_u),
        ("k_v*grad_v", kv * grad_v),
        ("3*k_v*V2_v2", 3.0 * kv * pot_v),
    ];
    let rhs_terms = [
        ("2*x.grad_lambda_uv", 2.0 * weighted(&rlam, u, v)),
        ("-k_u*x.grad_V1_u2", -ku * weighted(&rv1, u, u)),
        ("-k_v*x.grad_V2_v2", -kv * weighted(&rv2, v, v)),
        (
            "6/p*mu*u^p",
            6.0 / problem.p * problem.mu * lp_norm_pow(u, problem.p)?,
        ),
        ("6/q*v^q", 6.0 / problem.q * lp_norm_pow(v, problem.q)?),
        ("6*lambda_uv", 6.0 * weighted(problem.lambda(), u, v)),
    ];
    let lhs: f64 = lhs_terms.iter().map(|t| t.1).sum();
    let rhs: f64 = rhs_terms.iter().map(|t| t.1).sum();
    let residual_abs = (lhs - rhs).abs();
    let denom = lhs.abs() + rhs.abs() + f64::MIN_POSITIVE;
    let residual_rel = if residual_abs == 0.0 {
        0.0
    } else {
        (residual_abs / denom).min(1.0)
    };
    let bm = boundary_mass(state);
    let mut warnings = Vec::new();
    if bm > BOUNDARY_MASS_WARN {
        warnings.push(format!(
            "boundary mass {bm:.3e} exceeds {BOUNDARY_MASS_WARN:e}; x-weighted integrals are unreliable"
        ));
    }
    let term_table = lhs_terms
        .iter()
        .map(|(n, v)| ("lhs", n, v))
        .chain(rhs_terms.iter().map(|(n, v)| ("rhs", n, v)))
        .map(|(side, name, value)| PohozaevTerm {
            name: name.to_string(),
            side: side.to_string(),
            value: *value,
        })
        .collect();
    Ok(PohozaevReport {
        form: if problem.p == 6.0 && problem.q == 6.0 {
            "critical".into()
        } else {
            "extended".into()
        },
        lhs,
        rhs,
        residual_abs,
        residual_rel,
        boundary_mass: bm,
        term_table,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Contradiction,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonexistenceCertificate {
    /// `∫[k_u V₁u² + k_v V₂v² − 2λuv]`
    #[serde(rename = "Q")]
    pub q_value: f64,
    /// Upper bound on `Q` valid for exact solutions; `≤ 0` under (V4), (V5).
    pub pohozaev_bound: f64,
    /// `(min{a₁, a₂} − δ) ∫(V₁u² + V₂v²)`, a positive lower bound on `Q`.
    pub strict_lower: f64,
    /// `Q − pohozaev_bound`, zero for exact solutions.
    pub gap: f64,
    pub verdict: Verdict,
}

/// Checks whether a positive pair could be an exact solution when
/// `p = q = 6`: for such solutions `Q` equals `pohozaev_bound`, yet the
/// coupling hypothesis forces `Q ≥ strict_lower`.
pub fn nonexistence_certificate(
    problem: &ProblemSpec,
    state: &StatePair,
) -> Result<NonexistenceCertificate> {
    if problem.p != 6.0 || problem.q != 6.0 {
        return Err(Error::WrongRegime(format!(
            "the certificate needs p = q = 6, got p = {}, q = {}",
            problem.p, problem.q
        )));
    }
    if !(state.u.values().iter().all(|&x| x > 0.0) && state.v.values().iter().all(|&x| x > 0.0)) {
        return Err(Error::Precondition(
            "the certificate needs u > 0 and v > 0 pointwise".into(),
        ));
    }
    let v45 = crate::model::validate_v45(&problem.potentials)?;
    if let Some(c) = v45.checks.iter().find(|c| !c.passed) {
        return Err(Error::AssumptionViolation {
            hypothesis: if c.name == "(V4)" { "(V4)" } else { "(V5)" },
            detail: c.counterexample.clone().unwrap_or_default(),
        });
    }
    let pots = &problem.potentials;
    let (ku, kv) = kirchhoff_factors(problem, state)?;
    let (u, v) = (&state.u, &state.v);
    let pot_u = weighted(problem.v1(), u, u);
    let pot_v = weighted(problem.v2(), v, v);
    let q_value = ku * pot_u + kv * pot_v - 2.0 * weighted(problem.lambda(), u, v);
    let pohozaev_bound = weighted(&pots.lambda.radial_derivative()?, u, v)
        - 0.5
            * (ku * weighted(&pots.v1.radial_derivative()?, u, u)
                + kv * weighted(&pots.v2.radial_derivative()?, v, v));
    let strict_lower = problem.coercivity() * (pot_u + pot_v);
    Ok(NonexistenceCertificate {
        q_value,
        pohozaev_bound,
        strict_lower,
        gap: q_value - pohozaev_bound,
        verdict: if strict_lower > pohozaev_bound {
            Verdict::Contradiction
        } else {
            Verdict::Inconclusive
        },
    })
}
