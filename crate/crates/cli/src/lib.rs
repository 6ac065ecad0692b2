//! Subcommand implementations for the `nehari` binary.
//!
//! Every command returns its process exit code: 0 on success or convergence,
//! 2 when the solver stalls, and errors map to 1 in `main`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nehari_core::config::{load_config, RunConfig};
use nehari_core::diagnostics::{
    nonexistence_certificate, pohozaev_residual, sobolev_constant, NonexistenceCertificate,
    PohozaevReport, SobolevEstimate, DEFAULT_LADDER, SOBOLEV_CONSTANT,
};
use nehari_core::grid::{read_field, sidecar_path, write_field};
use nehari_core::model::{validate_m, validate_v, validate_v45, ValidationReport};
use nehari_core::solver::{mu_sweep, solve_ground_state, SolveReport, SolveStatus};
use nehari_core::StatePair;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_STALL: i32 = 2;

/// Environment variable consulted when no output directory is given.
pub const OUT_ENV: &str = "NEHARI_OUT";

/// Samples per Kirchhoff function used by `validate`.
const M_SAMPLES: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub role: String,
}

/// Record of one run. Lists every other file the run wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the resolved configuration with sorted keys.
    pub config_hash: Option<String>,
    pub command: Vec<String>,
    pub outputs: Vec<OutputEntry>,
    pub version: String,
    pub seed: Option<u64>,
}

/// Collects written files and finally emits `manifest.json`.
struct Artifacts {
    dir: PathBuf,
    outputs: Vec<OutputEntry>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, path: &Path, role: &str) {
        let rel = path.strip_prefix(&self.dir).unwrap_or(path);
        self.outputs.push(OutputEntry {
            path: rel.to_string_lossy().into_owned(),
            role: role.to_string(),
        });
    }

    fn text(&mut self, name: &str, role: &str, contents: &str) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.record(&path, role);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, role: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, role, &s)
    }

    fn state(&mut self, prefix: &str, state: &StatePair) -> Result<()> {
        for (name, field, role) in [("u", &state.u, "field_u"), ("v", &state.v, "field_v")] {
            let path = self.path(&format!("{prefix}{name}.bin"));
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            let side = write_field(&path, field, name)?;
            self.record(&path, role);
            self.record(&side, &format!("{role}_sidecar"));
        }
        Ok(())
    }

    fn finish(self, config: Option<&RunConfig>, command: Vec<String>) -> Result<PathBuf> {
        let manifest = RunManifest {
            config_hash: config.map(config_hash),
            command,
            outputs: self.outputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.map(|c| c.solver.seed),
        };
        let path = self.dir.join("manifest.json");
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        fs::write(&path, s)?;
        Ok(path)
    }
}

pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical_json().as_bytes()))
}

/// Resolves the output directory: explicit flag first, then [`OUT_ENV`].
pub fn resolve_out(out: Option<&Path>) -> Result<PathBuf> {
    match out {
        Some(p) => Ok(p.to_path_buf()),
        None => match std::env::var_os(OUT_ENV) {
            Some(p) => Ok(PathBuf::from(p)),
            None => bail!("no output directory: pass --out or set {OUT_ENV}"),
        },
    }
}

fn load(path: &Path) -> Result<RunConfig> {
    load_config(path).with_context(|| format!("invalid config {}", path.display()))
}

fn is_critical_pair(cfg: &RunConfig) -> bool {
    cfg.problem.p == 6.0 && cfg.problem.q == 6.0
}

/// Certificate for `p = q = 6`, or the reason it does not apply.
fn try_certificate(
    cfg: &RunConfig,
    state: &StatePair,
) -> (Option<NonexistenceCertificate>, Option<String>) {
    if !is_critical_pair(cfg) {
        return (None, None);
    }
    match nonexistence_certificate(&cfg.problem, state) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

#[derive(Debug, Serialize)]
pub struct SolveOutput {
    pub config_hash: String,
    pub exit_code: i32,
    #[serde(flatten)]
    pub report: SolveReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<NonexistenceCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_error: Option<String>,
}

/// Reports go through a sorted `Value` so key order never depends on
/// struct layout changes.
fn sorted<T: Serialize>(value: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(value)?)
}

pub fn cmd_solve(
    config_path: &Path,
    out_dir: &Path,
    deterministic: bool,
    command: Vec<String>,
) -> Result<i32> {
    let cfg = load(config_path)?;
    let report = solve_ground_state(&cfg.problem, &cfg.solver).context("solve failed")?;
    let exit_code = match report.status {
        SolveStatus::Converged => EXIT_OK,
        _ => EXIT_STALL,
    };
    let (certificate, certificate_error) = try_certificate(&cfg, report.state());
    let mut art = Artifacts::new(out_dir)?;
    let state = report.state().clone();
    let trace = report.trace_csv();
    let mut report = report;
    if deterministic {
        report.wall_time = 0.0;
    }
    let output = SolveOutput {
        config_hash: config_hash(&cfg),
        exit_code,
        report,
        certificate,
        certificate_error,
    };
    art.json("report.json", "report", &sorted(&output)?)?;
    art.text("trace.csv", "trace", &trace)?;
    art.state("", &state)?;
    art.finish(Some(&cfg), command)?;
    print_solve_summary(&output);
    Ok(exit_code)
}

fn print_solve_summary(out: &SolveOutput) {
    let r = &out.report;
    println!(
        "status {:?}  c_N {:.10e}  rel grad {:.3e}  iterations {}",
        r.status, r.c_n_estimate, r.grad_norm_rel, r.iterations
    );
    if let Some(p) = &r.pohozaev {
        println!("pohozaev residual_rel {:.3e}", p.residual_rel);
    }
    if let Some(c) = &out.certificate {
        println!(
            "certificate Q {:.6e}  pohozaev_bound {:.6e}  strict_lower {:.6e}  {:?}",
            c.q_value, c.pohozaev_bound, c.strict_lower, c.verdict
        );
    }
    if let Some(e) = &out.certificate_error {
        println!("certificate unavailable: {e}");
    }
}

/// Parses a comma separated list of positive numbers.
pub fn parse_mu_list(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .with_context(|| format!("bad mu value {s:?}"))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    config_hash: String,
    bound: f64,
    sobolev: f64,
    empirical_mu0: Option<f64>,
    rows: &'a [nehari_core::solver::SweepRow],
}

pub fn cmd_sweep_mu(
    config_path: &Path,
    mu_list: &[f64],
    out_dir: &Path,
    workers: usize,
    deterministic: bool,
    command: Vec<String>,
) -> Result<i32> {
    let cfg = load(config_path)?;
    if cfg.problem.q != 6.0 {
        bail!(
            "sweep-mu needs the critical exponent q = 6, got q = {}",
            cfg.problem.q
        );
    }
    let workers = if deterministic { 1 } else { workers.max(1) };
    let sweep = mu_sweep(&cfg.problem, mu_list, &cfg.solver, workers)?;
    let mut art = Artifacts::new(out_dir)?;
    art.text("sweep.csv", "sweep", &sweep.to_csv())?;
    for row in &sweep.rows {
        art.json(
            &format!("mu_{}/report.json", row.mu),
            "mu_report",
            &sorted(row)?,
        )?;
    }
    let summary = SweepSummary {
        config_hash: config_hash(&cfg),
        bound: sweep.bound,
        sobolev: sweep.sobolev,
        empirical_mu0: sweep.empirical_mu0,
        rows: &sweep.rows,
    };
    art.json("report.json", "report", &sorted(&summary)?)?;
    art.finish(Some(&cfg), command)?;
    println!("bound {:.10e}", sweep.bound);
    for row in &sweep.rows {
        match (row.c_n, &row.error) {
            (Some(c), _) => println!(
                "mu {:<8} c_N {:.10e}  below_bound {}  status {:?}",
                row.mu,
                c,
                row.below_bound,
                row.status.unwrap_or(SolveStatus::MaxIters)
            ),
            (None, Some(e)) => println!("mu {:<8} failed: {e}", row.mu),
            (None, None) => println!("mu {:<8} failed", row.mu),
        }
    }
    match sweep.empirical_mu0 {
        Some(m) => println!("empirical mu0 {m}"),
        None => println!("no sampled mu falls below the bound"),
    }
    Ok(EXIT_OK)
}

/// Runs every hypothesis check the configuration supports.
pub fn validation_report(cfg: &RunConfig) -> ValidationReport {
    let p = &cfg.problem;
    let mut report = validate_m(&p.alpha, &p.beta, M_SAMPLES);
    report.extend(validate_v(&p.potentials, p.a1, p.a2));
    if let Ok(v45) = validate_v45(&p.potentials) {
        for mut c in v45.checks {
            c.required = false;
            report.checks.push(c);
        }
    }
    report
}

pub fn format_validation(report: &ValidationReport) -> String {
    let mut out = format!("{:<8} {:<6} {:<9} detail\n", "check", "status", "required");
    for c in &report.checks {
        let status = if c.passed { "pass" } else { "FAIL" };
        let required = if c.required { "yes" } else { "no" };
        out.push_str(&format!(
            "{:<8} {:<6} {:<9} {}",
            c.name, status, required, c.detail
        ));
        if let Some(at) = &c.counterexample {
            out.push_str(&format!("  first failure: {at}"));
        }
        if let Some(w) = &c.warning {
            out.push_str(&format!("  warning: {w}"));
        }
        if let Some(b) = c.best_constant {
            out.push_str(&format!("  best C {b:.6e}"));
        }
        out.push('\n');
    }
    out
}

pub fn cmd_validate(
    config_path: &Path,
    out_dir: Option<&Path>,
    command: Vec<String>,
) -> Result<i32> {
    let cfg = load(config_path)?;
    let report = validation_report(&cfg);
    print!("{}", format_validation(&report));
    if let Some(dir) = out_dir {
        let mut art = Artifacts::new(dir)?;
        art.json("validation.json", "validation", &sorted(&report)?)?;
        art.finish(Some(&cfg), command)?;
    }
    Ok(if report.all_required_passed() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

#[derive(Debug, Serialize)]
pub struct PohozaevOutput {
    pub config_hash: String,
    pub pohozaev: PohozaevReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<NonexistenceCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_error: Option<String>,
}

pub fn read_state(cfg: &RunConfig, u: &Path, v: &Path) -> Result<StatePair> {
    let grid = *cfg.problem.grid();
    let mut fields = Vec::with_capacity(2);
    for path in [u, v] {
        let (field, side) = read_field(path).with_context(|| {
            format!(
                "cannot read {} and {}",
                path.display(),
                sidecar_path(path).display()
            )
        })?;
        if *field.grid() != grid {
            bail!(
                "grid mismatch: {} has n = {}, L = {}, the config has n = {}, L = {}",
                path.display(),
                side.n,
                side.box_length,
                grid.n(),
                grid.box_length()
            );
        }
        fields.push(field);
    }
    let v = fields.pop().expect("two fields");
    let u = fields.pop().expect("two fields");
    Ok(StatePair::new(u, v)?)
}

pub fn cmd_pohozaev(
    config_path: &Path,
    u: &Path,
    v: &Path,
    out_dir: &Path,
    command: Vec<String>,
) -> Result<i32> {
    let cfg = load(config_path)?;
    let state = read_state(&cfg, u, v)?;
    let pohozaev = pohozaev_residual(&cfg.problem, &state)?;
    let (certificate, certificate_error) = try_certificate(&cfg, &state);
    let mut art = Artifacts::new(out_dir)?;
    art.text(
        "pohozaev_terms.csv",
        "pohozaev_terms",
        &pohozaev.term_table_csv(),
    )?;
    let out = PohozaevOutput {
        config_hash: config_hash(&cfg),
        pohozaev,
        certificate,
        certificate_error,
    };
    art.json("pohozaev.json", "pohozaev", &sorted(&out)?)?;
    art.finish(Some(&cfg), command)?;
    println!(
        "lhs {:.10e}  rhs {:.10e}  residual_rel {:.3e}  boundary_mass {:.3e}",
        out.pohozaev.lhs, out.pohozaev.rhs, out.pohozaev.residual_rel, out.pohozaev.boundary_mass
    );
    for w in &out.pohozaev.warnings {
        println!("warning: {w}");
    }
    if let Some(c) = &out.certificate {
        println!(
            "certificate Q {:.6e}  pohozaev_bound {:.6e}  strict_lower {:.6e}  {:?}",
            c.q_value, c.pohozaev_bound, c.strict_lower, c.verdict
        );
    }
    Ok(EXIT_OK)
}

/// Parses `L:n,L:n,...` refinement ladders.
pub fn parse_ladder(spec: &str) -> Result<Vec<(f64, usize)>> {
    spec.split(',')
        .map(|item| {
            let (l, n) = item
                .trim()
                .split_once(':')
                .with_context(|| format!("ladder entry {item:?} is not L:n"))?;
            Ok((l.trim().parse()?, n.trim().parse()?))
        })
        .collect()
}

pub fn cmd_sobolev(
    ladder: Option<&[(f64, usize)]>,
    out_dir: Option<&Path>,
    command: Vec<String>,
) -> Result<i32> {
    let ladder = ladder.unwrap_or(&DEFAULT_LADDER);
    let est: SobolevEstimate = sobolev_constant(ladder)?;
    for lvl in &est.levels {
        println!(
            "L {:<6} n {:<5} quotient {:.8}",
            lvl.box_length, lvl.n, lvl.quotient
        );
    }
    println!("S estimate {:.8} +/- {:.2e}", est.estimate, est.error_bar);
    println!(
        "relative deviation from the closed form {:.3e}",
        (est.estimate - SOBOLEV_CONSTANT).abs() / SOBOLEV_CONSTANT
    );
    if let Some(dir) = out_dir {
        let mut art = Artifacts::new(dir)?;
        art.json("sobolev.json", "sobolev", &sorted(&est)?)?;
        art.finish(None, command)?;
    }
    Ok(EXIT_OK)
}
