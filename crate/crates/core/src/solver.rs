//! Ground states by projected Sobolev-gradient descent on the Nehari
//! manifold, sign normalization, and the critical-case `μ` sweep.
//!
//! Each step moves against the Riesz representative of `I'` in the product
//! `E₁ × E₂` metric, `R = (−Δ + V)^{-1} G`, and reprojects the result onto the
//! Nehari manifold along its ray. Step sizes follow Armijo backtracking on
//! the projected energy.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{level_bound, pohozaev_residual, PohozaevReport, SOBOLEV_CONSTANT};
use crate::energy::{evaluate, nehari_project, Evaluation, FiberCoefficients};
use crate::error::{Error, Result};
use crate::grid::{read_field, ScalarField, StatePair};
use crate::model::ProblemSpec;
use crate::spectral::{ShiftedLaplacianSolver, Spectral};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitKind {
    GaussianBump,
    RandomSmooth,
    File { u: PathBuf, v: PathBuf },
}

/// Which components start nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentMask {
    Both,
    UOnly,
    VOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Backtrack {
    pub shrink: f64,
    pub max_halvings: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step0: f64,
    pub backtrack: Backtrack,
    pub seed: u64,
    pub init: InitKind,
    pub components: ComponentMask,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step growth after an accepted step.
    pub growth: f64,
    pub max_step: f64,
    /// Stall once more than this fraction of the gradient energy sits in
    /// the upper half of the resolvable band; values `>= 1` disable the check.
    pub resolution_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: 1e-7,
            step0: 1.0,
            backtrack: Backtrack {
                shrink: 0.5,
                max_halvings: 40,
            },
            seed: 0,
            init: InitKind::GaussianBump,
            components: ComponentMask::Both,
            armijo: 1e-4,
            growth: 1.5,
            max_step: 50.0,
            resolution_threshold: 0.25,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProblem(m));
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.grad_tol > 0.0) {
            return bad(format!("grad_tol must be positive, got {}", self.grad_tol));
        }
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return bad(format!("step0 must be positive, got {}", self.step0));
        }
        if !(self.backtrack.shrink > 0.0 && self.backtrack.shrink < 1.0) {
            return bad(format!(
                "shrink must lie in (0, 1), got {}",
                self.backtrack.shrink
            ));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad(format!("armijo must lie in (0, 1), got {}", self.armijo));
        }
        if !(self.resolution_threshold > 0.0) {
            return bad("resolution_threshold must be positive".into());
        }
        if !(self.growth >= 1.0) || !(self.max_step >= self.step0) {
            return bad("growth must be >= 1 and max_step >= step0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    /// Backtracking exhausted without sufficient decrease.
    StepCollapse,
    /// The iterate concentrated on the grid scale.
    ResolutionLoss,
}

impl SolveStatus {
    pub fn is_stall(self) -> bool {
        self != SolveStatus::Converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub t0: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub state: Option<StatePair>,
    pub c_n_estimate: f64,
    pub grad_norm_rel: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: SolveStatus,
    pub sign_normalized: bool,
    /// `|J(state)|` over the sum of the magnitudes of its terms.
    pub nehari_residual: f64,
    /// `‖(u, v)‖²_E`
    pub norm_sq: f64,
    pub initial_energy: f64,
    pub high_frequency_fraction: f64,
    pub energy_trace: Vec<TraceEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pohozaev: Option<PohozaevReport>,
    pub wall_time: f64,
}

impl SolveReport {
    pub fn state(&self) -> &StatePair {
        self.state.as_ref().expect("report carries its state")
    }

    /// The trace as CSV with header `iter,energy,grad_norm,t0,step`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,energy,grad_norm,t0,step\n");
        for e in &self.energy_trace {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                e.iter, e.energy, e.grad_norm, e.t0, e.step
            ));
        }
        out
    }
}

/// Riesz map of the `E₁ × E₂` inner product.
pub struct RieszMap {
    spectral: Arc<Spectral>,
    u: ShiftedLaplacianSolver,
    v: ShiftedLaplacianSolver,
}

impl RieszMap {
    pub fn new(problem: &ProblemSpec) -> Result<Self> {
        let spectral = Arc::new(Spectral::new(*problem.grid()));
        Ok(Self {
            u: ShiftedLaplacianSolver::new(spectral.clone(), problem.v1().clone())?,
            v: ShiftedLaplacianSolver::new(spectral.clone(), problem.v2().clone())?,
            spectral,
        })
    }

    pub fn apply(&self, g: &StatePair) -> Result<StatePair> {
        Ok(StatePair {
            u: self.u.solve(&g.u)?,
            v: self.v.solve(&g.v)?,
        })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }
}

/// `‖I'(s)‖_{E*} / max(1, ‖s‖_E)` and the Riesz representative.
fn relative_gradient(riesz: &RieszMap, eval: &Evaluation) -> Result<(f64, f64, StatePair)> {
    let r = riesz.apply(&eval.gradient)?;
    let dual_sq = eval.gradient.inner(&r)?.max(0.0);
    let norm = (eval.scalars.nu + eval.scalars.nv).sqrt();
    Ok((dual_sq.sqrt() / norm.max(1.0), dual_sq, r))
}

fn nehari_residual(problem: &ProblemSpec, eval: &Evaluation) -> f64 {
    let s = &eval.scalars;
    let f = FiberCoefficients::new(problem, *s);
    let scale = problem.a1 * s.nu
        + problem.a2 * s.nv
        + problem.alpha.deriv_times(s.nu)
        + problem.beta.deriv_times(s.nv)
        + 2.0 * s.coupling.abs()
        + problem.mu * s.pu
        + s.qv;
    if scale > 0.0 {
        f.dg(1.0).abs() / scale
    } else {
        0.0
    }
}

fn mask(state: StatePair, components: ComponentMask) -> StatePair {
    let grid = *state.grid();
    match components {
        ComponentMask::Both => state,
        ComponentMask::UOnly => StatePair {
            u: state.u,
            v: ScalarField::zeros(grid),
        },
        ComponentMask::VOnly => StatePair {
            u: ScalarField::zeros(grid),
            v: state.v,
        },
    }
}

/// Starting state before projection.
pub fn initial_state(problem: &ProblemSpec, cfg: &SolverConfig) -> Result<StatePair> {
    let grid = *problem.grid();
    let state = match &cfg.init {
        InitKind::GaussianBump => {
            let w = grid.box_length() / 8.0;
            let f = ScalarField::from_fn(grid, |x| {
                (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (2.0 * w * w)).exp()
            });
            StatePair { u: f.clone(), v: f }
        }
        InitKind::RandomSmooth => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let spectral = Spectral::new(grid);
            let shift = (8.0 / grid.box_length()).powi(2);
            let mut smooth = || -> Result<ScalarField> {
                let noise: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let once = spectral.solve_shifted(&ScalarField::new(grid, noise)?, shift)?;
                let twice = spectral.solve_shifted(&once, shift)?;
                let m = twice.max_abs();
                Ok(if m > 0.0 { twice.scale(1.0 / m) } else { twice })
            };
            StatePair {
                u: smooth()?,
                v: smooth()?,
            }
        }
        InitKind::File { u, v } => {
            let (fu, _) = read_field(u)?;
            let (fv, _) = read_field(v)?;
            if fu.grid() != &grid || fv.grid() != &grid {
                return Err(Error::GridMismatch);
            }
            StatePair { u: fu, v: fv }
        }
    };
    Ok(mask(state, cfg.components))
}

fn has_negative(s: &StatePair) -> bool {
    s.u.values().iter().chain(s.v.values()).any(|&x| x < 0.0)
}

fn lambda_nonnegative(problem: &ProblemSpec) -> bool {
    problem.lambda().values().iter().all(|&l| l >= 0.0)
}

/// Reprojection of `(|u|, |v|)`; when `λ ≥ 0` its energy cannot exceed the
/// projected energy of `s`.
pub fn sign_normalize(problem: &ProblemSpec, s: &StatePair) -> Result<StatePair> {
    let out = nehari_project(problem, &s.abs())?;
    if lambda_nonnegative(problem) {
        let reference = nehari_project(problem, s)?.energy;
        if out.energy > reference + 1e-10 * reference.abs().max(1.0) {
            return Err(Error::AssumptionViolation {
                hypothesis: "(V3')",
                detail: format!(
                    "sign normalization raised the energy from {reference} to {}",
                    out.energy
                ),
            });
        }
    }
    Ok(out.state)
}

/// Descent from the configured initial state.
pub fn solve_ground_state(problem: &ProblemSpec, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let init = initial_state(problem, cfg)?;
    solve_from(problem, cfg, &init)
}

/// Descent from an explicit initial state.
pub fn solve_from(
    problem: &ProblemSpec,
    cfg: &SolverConfig,
    init: &StatePair,
) -> Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();
    let riesz = RieszMap::new(problem)?;
    let proj = nehari_project(problem, init)?;
    let initial_energy = proj.energy;
    let mut t0 = proj.t0;
    let mut state = proj.state;
    let mut eval = evaluate(problem, &state)?;
    let mut step = cfg.step0;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIters;
    let mut hf;
    let can_normalize = lambda_nonnegative(problem);
    let mut sign_normalized = false;

    loop {
        let (rel, dual_sq, direction) = relative_gradient(&riesz, &eval)?;
        trace.push(TraceEntry {
            iter: iterations,
            energy: eval.energy.total,
            grad_norm: rel,
            t0,
            step,
        });
        if rel <= cfg.grad_tol {
            if can_normalize && !sign_normalized && has_negative(&state) {
                state = sign_normalize(problem, &state)?;
                sign_normalized = true;
                eval = evaluate(problem, &state)?;
                continue;
            }
            status = SolveStatus::Converged;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
        if cfg.resolution_threshold < 1.0 && iterations % 10 == 0 {
            hf = concentration(&riesz, &state);
            if hf > cfg.resolution_threshold {
                status = SolveStatus::ResolutionLoss;
                break;
            }
        }
        let energy = eval.energy.total;
        let slack = 1e-14 * energy_scale(&eval);
        let mut trial_step = step;
        let mut accepted = None;
        for _ in 0..=cfg.backtrack.max_halvings {
            let trial = state.add_scaled(-trial_step, &direction)?;
            if !trial.is_zero() {
                let p = nehari_project(problem, &trial)?;
                if p.energy <= energy - cfg.armijo * trial_step * dual_sq + slack {
                    accepted = Some(p);
                    break;
                }
            }
            trial_step *= cfg.backtrack.shrink;
        }
        let Some(p) = accepted else {
            status = SolveStatus::StepCollapse;
            break;
        };
        iterations += 1;
        t0 = p.t0;
        state = p.state;
        eval = evaluate(problem, &state)?;
        step = (trial_step * cfg.growth).min(cfg.max_step);
    }

    // Stalled runs still hand back a nonnegative last iterate.
    if status.is_stall() && can_normalize && has_negative(&state) {
        state = sign_normalize(problem, &state)?;
        sign_normalized = true;
        eval = evaluate(problem, &state)?;
    }
    let (rel, _, _) = relative_gradient(&riesz, &eval)?;
    hf = concentration(&riesz, &state);
    let pohozaev = match pohozaev_residual(problem, &state) {
        Ok(r) => Some(r),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(SolveReport {
        c_n_estimate: eval.energy.total,
        grad_norm_rel: rel,
        iterations,
        converged: status == SolveStatus::Converged,
        status,
        sign_normalized,
        nehari_residual: nehari_residual(problem, &eval),
        norm_sq: eval.scalars.nu + eval.scalars.nv,
        initial_energy,
        high_frequency_fraction: hf,
        energy_trace: trace,
        pohozaev,
        wall_time: start.elapsed().as_secs_f64(),
        state: Some(state),
    })
}

fn energy_scale(eval: &Evaluation) -> f64 {
    let e = &eval.energy;
    e.quadratic.abs() + e.kirchhoff.abs() + e.power_u.abs() + e.power_v.abs() + e.coupling.abs()
}

fn concentration(riesz: &RieszMap, s: &StatePair) -> f64 {
    let sp = riesz.spectral();
    sp.high_frequency_fraction(&s.u)
        .max(sp.high_frequency_fraction(&s.v))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    /// Energy of the last iterate, converged or not.
    pub c_n: Option<f64>,
    pub converged: bool,
    pub status: Option<SolveStatus>,
    pub grad_norm_rel: Option<f64>,
    pub below_bound: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub bound: f64,
    pub sobolev: f64,
    /// Smallest sampled `μ` whose level lies strictly below the bound.
    pub empirical_mu0: Option<f64>,
}

impl SweepReport {
    /// CSV with header `mu,c_n,bound,below_bound`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mu,c_n,bound,below_bound\n");
        for r in &self.rows {
            let c = r
                .c_n
                .map(|c| format!("{c:.17e}"))
                .unwrap_or_else(|| "nan".into());
            out.push_str(&format!(
                "{},{},{:.17e},{}\n",
                r.mu, c, self.bound, r.below_bound
            ));
        }
        out
    }
}

/// Solves the critical problem for each `μ` and compares the levels with the
/// compactness threshold. Failed solves are recorded and the sweep goes on.
pub fn mu_sweep(
    template: &ProblemSpec,
    mu_list: &[f64],
    cfg: &SolverConfig,
    workers: usize,
) -> Result<SweepReport> {
    if template.q != 6.0 {
        return Err(Error::WrongRegime(format!(
            "the sweep targets the critical case q = 6, got q = {}",
            template.q
        )));
    }
    if mu_list.is_empty() || mu_list[0] <= 0.0 || mu_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidProblem(
            "mu list must be positive and increasing".into(),
        ));
    }
    cfg.validate()?;
    let sobolev = SOBOLEV_CONSTANT;
    let bound = level_bound(
        template.a1,
        template.a2,
        template.delta(),
        template.p,
        sobolev,
    )?;
    let run = |&mu: &f64| -> SweepRow {
        let outcome = template
            .with_mu(mu)
            .and_then(|pr| solve_ground_state(&pr, cfg));
        match outcome {
            Ok(r) => SweepRow {
                mu,
                c_n: Some(r.c_n_estimate),
                converged: r.converged,
                status: Some(r.status),
                grad_norm_rel: Some(r.grad_norm_rel),
                below_bound: r.c_n_estimate < bound,
                error: None,
            },
            Err(e) => SweepRow {
                mu,
                c_n: None,
                converged: false,
                status: None,
                grad_norm_rel: None,
                below_bound: false,
                error: Some(e.to_string()),
            },
        }
    };
    let rows: Vec<SweepRow> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidProblem(format!("cannot start worker pool: {e}")))?;
        pool.install(|| mu_list.par_iter().map(run).collect())
    } else {
        mu_list.iter().map(run).collect()
    };
    let empirical_mu0 = rows.iter().find(|r| r.below_bound).map(|r| r.mu);
    Ok(SweepReport {
        rows,
        bound,
        sobolev,
        empirical_mu0,
    })
}
