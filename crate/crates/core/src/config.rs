//! TOML run configuration: problem data, grid and solver settings.
//!
//! Syntax errors carry the parser's position; semantic errors point at the
//! line of the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{
    check_exponents, make_family, FamilyParams, PotentialSet, PotentialSource, ProblemSpec,
};
use crate::solver::{Backtrack, ComponentMask, InitKind, SolverConfig};

/// A potential given either as a number or as an expression in `x, y, z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExprValue {
    Number(f64),
    Text(String),
}

impl ExprValue {
    fn source(&self) -> Result<PotentialSource> {
        match self {
            ExprValue::Number(c) => Ok(PotentialSource::constant(*c)),
            ExprValue::Text(s) => PotentialSource::expr(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub family: String,
    #[serde(default)]
    pub params: FamilyParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(rename = "L")]
    pub box_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitName {
    GaussianBump,
    RandomSmooth,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step0: f64,
    pub shrink: f64,
    pub max_halvings: u32,
    pub seed: u64,
    pub init: InitName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_u: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_v: Option<PathBuf>,
    pub components: ComponentMask,
    pub armijo: f64,
    pub growth: f64,
    pub max_step: f64,
    pub resolution_threshold: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
            step0: d.step0,
            shrink: d.backtrack.shrink,
            max_halvings: d.backtrack.max_halvings,
            seed: d.seed,
            init: InitName::GaussianBump,
            init_u: None,
            init_v: None,
            components: d.components,
            armijo: d.armijo,
            growth: d.growth,
            max_step: d.max_step,
            resolution_threshold: d.resolution_threshold,
        }
    }
}

fn default_periods() -> [u32; 3] {
    [1, 1, 1]
}

/// The file contents with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub a1: f64,
    pub a2: f64,
    pub mu: f64,
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    #[serde(rename = "V1_expr")]
    pub v1_expr: ExprValue,
    #[serde(rename = "V2_expr")]
    pub v2_expr: ExprValue,
    pub lambda_expr: ExprValue,
    #[serde(default = "default_periods")]
    pub periods: [u32; 3],
    pub alpha: FamilyConfig,
    pub beta: FamilyConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub problem: ProblemSpec,
    pub solver: SolverConfig,
}

impl RunConfig {
    /// Resolved configuration as JSON with sorted keys, independent of the
    /// order of keys in the source file.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(&self.raw).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let src = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&src, base)
}

/// Parses a configuration; relative paths resolve against `base_dir`.
pub fn parse_config(src: &str, base_dir: &Path) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(src, s.start)).unwrap_or((1, 1));
        Error::Config {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    let at = |table: Option<&str>, key: &str, err: Error| {
        let (line, column) = locate_key(src, table, key).unwrap_or((1, 1));
        Error::Config {
            line,
            column,
            message: err.to_string(),
        }
    };

    check_exponents(raw.p, raw.q).map_err(|e| {
        let key = if raw.p > 4.0 && raw.p <= 6.0 && raw.p <= raw.q {
            "q"
        } else {
            "p"
        };
        at(None, key, e)
    })?;
    let grid = Grid::new(raw.grid.n, raw.grid.box_length).map_err(|e| at(Some("grid"), "n", e))?;
    let alpha = make_family(&raw.alpha.family, &raw.alpha.params)
        .map_err(|e| at(Some("alpha"), "family", e))?;
    let beta = make_family(&raw.beta.family, &raw.beta.params)
        .map_err(|e| at(Some("beta"), "family", e))?;
    let v1 = raw.v1_expr.source().map_err(|e| at(None, "V1_expr", e))?;
    let v2 = raw.v2_expr.source().map_err(|e| at(None, "V2_expr", e))?;
    let lambda = raw
        .lambda_expr
        .source()
        .map_err(|e| at(None, "lambda_expr", e))?;
    let pots = PotentialSet::new(
        grid,
        v1,
        v2,
        lambda,
        raw.delta,
        raw.periods,
        [raw.a1, raw.a2],
    )
    .map_err(|e| match e {
        Error::InvalidField(_) => at(None, "V1_expr", e),
        Error::InvalidProblem(_) => at(None, "periods", e),
        e => at(None, "delta", e),
    })?;
    let problem = ProblemSpec::new(raw.a1, raw.a2, alpha, beta, pots, raw.mu, raw.p, raw.q)
        .map_err(|e| {
            let key = if !(raw.a1 > 0.0) {
                "a1"
            } else if !(raw.a2 > 0.0) {
                "a2"
            } else if !(raw.mu >= 0.0) {
                "mu"
            } else {
                "delta"
            };
            at(None, key, e)
        })?;

    let s = &raw.solver;
    let init = match s.init {
        InitName::GaussianBump => InitKind::GaussianBump,
        InitName::RandomSmooth => InitKind::RandomSmooth,
        InitName::File => {
            let (Some(u), Some(v)) = (&s.init_u, &s.init_v) else {
                return Err(at(
                    Some("solver"),
                    "init",
                    Error::InvalidProblem("init = \"file\" needs init_u and init_v".into()),
                ));
            };
            InitKind::File {
                u: base_dir.join(u),
                v: base_dir.join(v),
            }
        }
    };
    let solver = SolverConfig {
        max_iters: s.max_iters,
        grad_tol: s.grad_tol,
        step0: s.step0,
        backtrack: Backtrack {
            shrink: s.shrink,
            max_halvings: s.max_halvings,
        },
        seed: s.seed,
        init,
        components: s.components,
        armijo: s.armijo,
        growth: s.growth,
        max_step: s.max_step,
        resolution_threshold: s.resolution_threshold,
    };
    solver
        .validate()
        .map_err(|e| at(Some("solver"), solver_key(&solver), e))?;
    Ok(RunConfig {
        raw,
        problem,
        solver,
    })
}

fn solver_key(s: &SolverConfig) -> &'static str {
    if s.max_iters < 1 {
        "max_iters"
    } else if !(s.grad_tol > 0.0) {
        "grad_tol"
    } else if !(s.step0 > 0.0) {
        "step0"
    } else if !(s.backtrack.shrink > 0.0 && s.backtrack.shrink < 1.0) {
        "shrink"
    } else if !(s.armijo > 0.0 && s.armijo < 1.0) {
        "armijo"
    } else if !(s.resolution_threshold > 0.0) {
        "resolution_threshold"
    } else {
        "growth"
    }
}

/// 1-based line and column of a byte offset.
fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Position of `key = ...` inside `[table]` (or at top level for `None`).
fn locate_key(src: &str, table: Option<&str>, key: &str) -> Option<(usize, usize)> {
    let mut current: Option<String> = None;
    for (i, line) in src.lines().enumerate() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix('[') {
            current = Some(rest.trim_end().trim_end_matches(']').trim().to_string());
            continue;
        }
        if current.as_deref() != table {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some((i + 1, line.len() - trimmed.len() + 1));
            }
        }
    }
    // Inline tables such as `grid = { n = 8, L = 4 }` fall back to the table key.
    table.and_then(|t| locate_key(src, None, t))
}
