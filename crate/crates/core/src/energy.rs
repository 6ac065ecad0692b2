//! The energy functional, its gradient, the Nehari functional and the
//! projection of a state onto the Nehari manifold along its ray.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{pow_abs, schrodinger_apply, ScalarField, StatePair};
use crate::model::ProblemSpec;

/// The five integrals that determine the energy along a ray `t ↦ t s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateScalars {
    /// `‖u‖²_{E₁}`
    pub nu: f64,
    /// `‖v‖²_{E₂}`
    pub nv: f64,
    /// `∫|u|^p`
    pub pu: f64,
    /// `∫|v|^q`
    pub qv: f64,
    /// `∫λuv`
    pub coupling: f64,
}

/// Energy split into its terms; `total` is their signed sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub quadratic: f64,
    pub kirchhoff: f64,
    pub power_u: f64,
    pub power_v: f64,
    pub coupling: f64,
    pub total: f64,
}

/// Scalars, energy, and the `L²` gradient of one state.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub scalars: StateScalars,
    pub energy: EnergyBreakdown,
    pub gradient: StatePair,
}

fn check_state(problem: &ProblemSpec, state: &StatePair) -> Result<()> {
    if state.grid() != problem.grid() {
        return Err(Error::GridMismatch);
    }
    if !(state.u.is_finite() && state.v.is_finite()) {
        return Err(Error::InvalidField("state has non-finite values".into()));
    }
    Ok(())
}

fn quad_form(f: &ScalarField, af: &ScalarField) -> f64 {
    f.inner(af).expect("same grid").max(0.0)
}

pub fn state_scalars(problem: &ProblemSpec, state: &StatePair) -> Result<StateScalars> {
    check_state(problem, state)?;
    let au = schrodinger_apply(&state.u, problem.v1());
    let av = schrodinger_apply(&state.v, problem.v2());
    Ok(scalars_with(problem, state, &au, &av))
}

fn scalars_with(
    problem: &ProblemSpec,
    state: &StatePair,
    au: &ScalarField,
    av: &ScalarField,
) -> StateScalars {
    let dv = problem.grid().cell_volume();
    let (p, q) = (problem.p, problem.q);
    let pu = state.u.values().iter().map(|&x| pow_abs(x, p)).sum::<f64>() * dv;
    let qv = state.v.values().iter().map(|&x| pow_abs(x, q)).sum::<f64>() * dv;
    let coupling = state
        .u
        .values()
        .iter()
        .zip(state.v.values())
        .zip(problem.lambda().values())
        .map(|((u, v), l)| l * u * v)
        .sum::<f64>()
        * dv;
    StateScalars {
        nu: quad_form(&state.u, au),
        nv: quad_form(&state.v, av),
        pu,
        qv,
        coupling,
    }
}

pub fn energy_from_scalars(problem: &ProblemSpec, s: &StateScalars) -> EnergyBreakdown {
    let quadratic = 0.5 * (problem.a1 * s.nu + problem.a2 * s.nv);
    let kirchhoff = 0.5 * (problem.alpha.value(s.nu) + problem.beta.value(s.nv));
    let power_u = problem.mu * s.pu / problem.p;
    let power_v = s.qv / problem.q;
    let total = quadratic + kirchhoff - power_u - power_v - s.coupling;
    EnergyBreakdown {
        quadratic,
        kirchhoff,
        power_u,
        power_v,
        coupling: s.coupling,
        total,
    }
}

/// `I(u, v)` with its individual terms.
pub fn energy(problem: &ProblemSpec, state: &StatePair) -> Result<EnergyBreakdown> {
    let s = state_scalars(problem, state)?;
    Ok(energy_from_scalars(problem, &s))
}

/// Kirchhoff factor `a + α'(‖u‖²)`, equal to `a` on the zero field.
fn kirchhoff_factor(a: f64, f: &crate::model::KirchhoffSpec, n: f64) -> f64 {
    if n == 0.0 {
        a
    } else {
        a + f.deriv(n)
    }
}

/// Energy and its `L²` gradient `(G_u, G_v)` in one pass.
pub fn evaluate(problem: &ProblemSpec, state: &StatePair) -> Result<Evaluation> {
    check_state(problem, state)?;
    let au = schrodinger_apply(&state.u, problem.v1());
    let av = schrodinger_apply(&state.v, problem.v2());
    let scalars = scalars_with(problem, state, &au, &av);
    let ku = kirchhoff_factor(problem.a1, &problem.alpha, scalars.nu);
    let kv = kirchhoff_factor(problem.a2, &problem.beta, scalars.nv);
    let (mu, p, q) = (problem.mu, problem.p, problem.q);
    let lam = problem.lambda().values();
    let (u, v) = (state.u.values(), state.v.values());
    let gu: Vec<f64> = (0..u.len())
        .map(|i| ku * au.values()[i] - mu * signed_pow(u[i], p - 1.0) - lam[i] * v[i])
        .collect();
    let gv: Vec<f64> = (0..v.len())
        .map(|i| kv * av.values()[i] - signed_pow(v[i], q - 1.0) - lam[i] * u[i])
        .collect();
    let grid = *problem.grid();
    Ok(Evaluation {
        scalars,
        energy: energy_from_scalars(problem, &scalars),
        gradient: StatePair {
            u: ScalarField::from_vec_unchecked(grid, gu),
            v: ScalarField::from_vec_unchecked(grid, gv),
        },
    })
}

/// `|x|^r sign(x)`
#[inline]
fn signed_pow(x: f64, r: f64) -> f64 {
    pow_abs(x, r).copysign(x)
}

/// `L²` gradient of the energy.
pub fn energy_gradient(problem: &ProblemSpec, state: &StatePair) -> Result<StatePair> {
    Ok(evaluate(problem, state)?.gradient)
}

/// `J(u, v) = ⟨I'(u, v), (u, v)⟩`, whose zero set away from the origin is the
/// Nehari manifold.
pub fn nehari_j(problem: &ProblemSpec, state: &StatePair) -> Result<f64> {
    if state.is_zero() {
        return Err(Error::UndefinedOnOrigin);
    }
    let s = state_scalars(problem, state)?;
    Ok(FiberCoefficients::new(problem, s).dg(1.0))
}

/// The fiber map `g(t) = I(t s)` for a fixed state `s`, expressed through
/// that state's scalars.
#[derive(Debug, Clone, Copy)]
pub struct FiberCoefficients<'a> {
    problem: &'a ProblemSpec,
    s: StateScalars,
    /// `a₁‖u‖² + a₂‖v‖² − 2∫λuv`, positive for nonzero states.
    quadratic: f64,
}

impl<'a> FiberCoefficients<'a> {
    pub fn new(problem: &'a ProblemSpec, s: StateScalars) -> Self {
        let quadratic = problem.a1 * s.nu + problem.a2 * s.nv - 2.0 * s.coupling;
        Self {
            problem,
            s,
            quadratic,
        }
    }

    pub fn scalars(&self) -> &StateScalars {
        &self.s
    }

    pub fn g(&self, t: f64) -> f64 {
        let pr = self.problem;
        let t2 = t * t;
        0.5 * t2 * self.quadratic
            + 0.5 * (pr.alpha.value(t2 * self.s.nu) + pr.beta.value(t2 * self.s.nv))
            - pr.mu * t.powf(pr.p) * self.s.pu / pr.p
            - t.powf(pr.q) * self.s.qv / pr.q
    }

    /// `g'(t) / t`
    pub fn h(&self, t: f64) -> f64 {
        let pr = self.problem;
        let t2 = t * t;
        self.quadratic
            + (pr.alpha.deriv_times(t2 * self.s.nu) + pr.beta.deriv_times(t2 * self.s.nv)) / t2
            - pr.mu * t.powf(pr.p - 2.0) * self.s.pu
            - t.powf(pr.q - 2.0) * self.s.qv
    }

    pub fn dg(&self, t: f64) -> f64 {
        t * self.h(t)
    }

    pub fn d2g(&self, t: f64) -> f64 {
        let pr = self.problem;
        let t2 = t * t;
        let (nu, nv) = (self.s.nu, self.s.nv);
        let kirch = |f: &crate::model::KirchhoffSpec, n: f64| {
            if n == 0.0 {
                0.0
            } else {
                f.deriv(t2 * n) * n + 2.0 * t2 * n * n * f.deriv2(t2 * n)
            }
        };
        self.quadratic + kirch(&pr.alpha, nu) + kirch(&pr.beta, nv)
            - pr.mu * (pr.p - 1.0) * t.powf(pr.p - 2.0) * self.s.pu
            - (pr.q - 1.0) * t.powf(pr.q - 2.0) * self.s.qv
    }
}

/// `(g(t), g'(t))` for the ray through `state`.
pub fn fiber(problem: &ProblemSpec, state: &StatePair, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveFiberParameter(t));
    }
    let f = FiberCoefficients::new(problem, state_scalars(problem, state)?);
    Ok((f.g(t), f.dg(t)))
}

#[derive(Debug, Clone)]
pub struct NehariProjection {
    /// The unique `t₀ > 0` with `t₀ s` on the Nehari manifold.
    pub t0: f64,
    pub state: StatePair,
    /// `I(t₀ s) = max_{t>0} I(t s)`
    pub energy: f64,
}

const T_MIN: f64 = 1e-12;
const T_MAX: f64 = 1e12;
const T_REL_TOL: f64 = 1e-12;

/// Locates the positive root of `g'(t)/t` for the given scalars.
pub fn fiber_root(f: &FiberCoefficients<'_>) -> Result<f64> {
    let s = f.scalars();
    if s.nu == 0.0 && s.nv == 0.0 {
        return Err(Error::UndefinedOnOrigin);
    }
    if f.problem.mu * s.pu == 0.0 && s.qv == 0.0 {
        return Err(Error::ProjectionFailure(
            "the ray carries no nonlinear mass, so the energy grows without bound along it".into(),
        ));
    }
    // h is positive near 0 and negative for large t.
    let (mut lo, mut hi) = (1.0, 1.0);
    if f.h(1.0) > 0.0 {
        while f.h(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > T_MAX {
                return Err(Error::ProjectionFailure(format!(
                    "no sign change of g'(t) below t = {T_MAX:e}"
                )));
            }
        }
    } else {
        while f.h(lo) <= 0.0 {
            hi = lo;
            lo *= 0.5;
            if lo < T_MIN {
                return Err(Error::ProjectionFailure(format!(
                    "no sign change of g'(t) above t = {T_MIN:e}"
                )));
            }
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..300 {
        let ht = f.h(t);
        if !ht.is_finite() {
            return Err(Error::ProjectionFailure(format!(
                "g'(t)/t is not finite at t = {t}"
            )));
        }
        if ht > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= T_REL_TOL * t {
            return Ok(0.5 * (lo + hi));
        }
        // Newton on h, with h'(t) = (g''(t) - h(t)) / t.
        let dh = (f.d2g(t) - ht) / t;
        let newton = t - ht / dh;
        if dh.is_finite() && dh < 0.0 && newton > lo && newton < hi {
            if (newton - t).abs() <= 0.1 * T_REL_TOL * t {
                return Ok(newton);
            }
            t = newton;
        } else {
            t = 0.5 * (lo + hi);
        }
    }
    Err(Error::ProjectionFailure(format!(
        "root search did not settle: bracket [{lo}, {hi}]"
    )))
}

/// Radial projection of a nonzero state onto the Nehari manifold.
pub fn nehari_project(problem: &ProblemSpec, state: &StatePair) -> Result<NehariProjection> {
    if state.is_zero() {
        return Err(Error::UndefinedOnOrigin);
    }
    let f = FiberCoefficients::new(problem, state_scalars(problem, state)?);
    let t0 = fiber_root(&f)?;
    Ok(NehariProjection {
        t0,
        state: state.scale(t0),
        energy: f.g(t0),
    })
}
