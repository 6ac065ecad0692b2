//! Periodic cubic grid, scalar fields on it, and the discrete integrals and
//! operators every functional is built from.
//!
//! The box is `[-L/2, L/2)^3` sampled at `x_i = -L/2 + i h`, `h = L / n`,
//! with values stored row-major in `(x, y, z)` order. All integrals use the
//! uniform weight `h^3`, which on a periodic grid coincides with the
//! trapezoid rule.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic discretization of the cube `[-L/2, L/2)^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    box_length: f64,
}

impl Grid {
    pub fn new(n: usize, box_length: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidGrid(format!("need n >= 4, got {n}")));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box length must be positive, got {box_length}"
            )));
        }
        Ok(Self { n, box_length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Quadrature weight `h^3`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn volume(&self) -> f64 {
        self.box_length.powi(3)
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.n;
        let j = (idx / self.n) % self.n;
        let i = idx / (self.n * self.n);
        [i, j, k]
    }

    /// Coordinate of grid line `i`, measured from the box center.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.box_length + i as f64 * self.spacing()
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.unravel(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// True for points at distance at most one cell from a box face.
    pub fn near_boundary(&self, idx: usize) -> bool {
        let n = self.n;
        self.unravel(idx)
            .iter()
            .any(|&i| i == 0 || i == 1 || i == n - 1)
    }
}

/// Grid samples of a real function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!(
                "non-finite value at index {pos}"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Builds a field without the finiteness scan; callers guarantee the length.
    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at every grid point (coordinates from the box center).
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.point(idx))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self::from_vec_unchecked(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c * other`
    pub fn add_scaled(&self, c: f64, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + c * b)
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `integrate(self * other)` without allocating the product.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same_grid(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Cyclic shift by whole grid cells along each axis.
    pub fn shifted(&self, by: [isize; 3]) -> Self {
        let n = self.grid.n as isize;
        let mut out = vec![0.0; self.values.len()];
        for (idx, slot) in out.iter_mut().enumerate() {
            let [i, j, k] = self.grid.unravel(idx);
            let si = (i as isize - by[0]).rem_euclid(n) as usize;
            let sj = (j as isize - by[1]).rem_euclid(n) as usize;
            let sk = (k as isize - by[2]).rem_euclid(n) as usize;
            *slot = self.values[self.grid.index(si, sj, sk)];
        }
        Self::from_vec_unchecked(self.grid, out)
    }
}

/// A state `(u, v)` of the coupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub u: ScalarField,
    pub v: ScalarField,
}

impl StatePair {
    pub fn new(u: ScalarField, v: ScalarField) -> Result<Self> {
        u.check_same_grid(&v)?;
        Ok(Self { u, v })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            u: ScalarField::zeros(grid),
            v: ScalarField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn is_zero(&self) -> bool {
        self.u.is_zero() && self.v.is_zero()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            u: self.u.scale(c),
            v: self.v.scale(c),
        }
    }

    pub fn add_scaled(&self, c: f64, other: &Self) -> Result<Self> {
        Ok(Self {
            u: self.u.add_scaled(c, &other.u)?,
            v: self.v.add_scaled(c, &other.v)?,
        })
    }

    pub fn abs(&self) -> Self {
        Self {
            u: self.u.abs(),
            v: self.v.abs(),
        }
    }

    /// `integrate(u1 u2) + integrate(v1 v2)`
    pub fn inner(&self, other: &Self) -> Result<f64> {
        Ok(self.u.inner(&other.u)? + self.v.inner(&other.v)?)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let du = self
            .u
            .values()
            .iter()
            .zip(other.u.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let dv = self
            .v
            .values()
            .iter()
            .zip(other.v.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        du.max(dv)
    }

    pub fn shifted(&self, by: [isize; 3]) -> Self {
        Self {
            u: self.u.shifted(by),
            v: self.v.shifted(by),
        }
    }
}

fn check_finite(f: &ScalarField) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::InvalidField("field has non-finite entries".into()));
    }
    Ok(())
}

/// Midpoint-rule integral `h^3 * sum(f)`.
pub fn integrate(f: &ScalarField) -> Result<f64> {
    check_finite(f)?;
    Ok(f.values.iter().sum::<f64>() * f.grid.cell_volume())
}

/// Seven-point periodic Laplacian.
pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    check_finite(f)?;
    Ok(laplacian_unchecked(f))
}

pub(crate) fn laplacian_unchecked(f: &ScalarField) -> ScalarField {
    let grid = f.grid;
    let n = grid.n;
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let vals = &f.values;
    let mut out = vec![0.0; vals.len()];
    let nn = n * n;
    for i in 0..n {
        let ip = if i + 1 == n { 0 } else { i + 1 };
        let im = if i == 0 { n - 1 } else { i - 1 };
        for j in 0..n {
            let jp = if j + 1 == n { 0 } else { j + 1 };
            let jm = if j == 0 { n - 1 } else { j - 1 };
            let row = (i * n + j) * n;
            let row_ip = (ip * n + j) * n;
            let row_im = (im * n + j) * n;
            let row_jp = (i * n + jp) * n;
            let row_jm = (i * n + jm) * n;
            for k in 0..n {
                let kp = if k + 1 == n { 0 } else { k + 1 };
                let km = if k == 0 { n - 1 } else { k - 1 };
                let c = vals[row + k];
                let s = vals[row_ip + k]
                    + vals[row_im + k]
                    + vals[row_jp + k]
                    + vals[row_jm + k]
                    + vals[row + kp]
                    + vals[row + km];
                out[row + k] = (s - 6.0 * c) * inv_h2;
            }
        }
    }
    debug_assert_eq!(out.len(), nn * n);
    ScalarField::from_vec_unchecked(grid, out)
}

/// Relative slack below zero tolerated before `grad_sq_integral` clamps.
const GRAD_CLAMP_TOL: f64 = 1e-12;

/// `∫|∇f|^2` in summation-by-parts form `-∫ f Δf`, clamped at zero.
pub fn grad_sq_integral(f: &ScalarField) -> Result<f64> {
    check_finite(f)?;
    let lap = laplacian_unchecked(f);
    let g = -f.inner(&lap)?;
    Ok(clamp_nonneg(g, f))
}

fn clamp_nonneg(g: f64, f: &ScalarField) -> f64 {
    if g >= 0.0 {
        return g;
    }
    let scale = f.inner(f).unwrap_or(0.0) / (f.grid.spacing() * f.grid.spacing());
    debug_assert!(g >= -GRAD_CLAMP_TOL * scale.max(f64::MIN_POSITIVE) - 1e-300);
    0.0
}

/// `(h^3 Σ |f|^r)^(1/r)`
pub fn lp_norm(f: &ScalarField, r: f64) -> Result<f64> {
    Ok(lp_norm_pow(f, r)?.powf(1.0 / r))
}

/// `h^3 Σ |f|^r`, i.e. `lp_norm(f, r)^r` without the final root.
pub fn lp_norm_pow(f: &ScalarField, r: f64) -> Result<f64> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::InvalidExponent(r));
    }
    check_finite(f)?;
    let s: f64 = f.values.iter().map(|v| pow_abs(*v, r)).sum();
    Ok(s * f.grid.cell_volume())
}

#[inline]
pub(crate) fn pow_abs(v: f64, r: f64) -> f64 {
    let a = v.abs();
    if a == 0.0 {
        0.0
    } else if r == 2.0 {
        a * a
    } else if r == 6.0 {
        let a2 = a * a;
        a2 * a2 * a2
    } else {
        a.powf(r)
    }
}

/// `‖f‖²_E = ∫|∇f|² + ∫ V f²` for a nonnegative weight `V`.
pub fn weighted_norm_sq(f: &ScalarField, potential: &ScalarField) -> Result<f64> {
    f.check_same_grid(potential)?;
    if let Some(pos) = potential.values.iter().position(|&v| v < 0.0) {
        return Err(Error::AssumptionViolation {
            hypothesis: "(V2)",
            detail: format!(
                "potential is negative ({}) at {:?}",
                potential.values[pos],
                potential.grid.point(pos)
            ),
        });
    }
    let grad = grad_sq_integral(f)?;
    let weighted: f64 = f
        .values
        .iter()
        .zip(&potential.values)
        .map(|(u, v)| v * u * u)
        .sum::<f64>()
        * f.grid.cell_volume();
    Ok(grad + weighted)
}

/// `(-Δ + V) f`
pub(crate) fn schrodinger_apply(f: &ScalarField, potential: &ScalarField) -> ScalarField {
    let mut out = laplacian_unchecked(f);
    for ((o, &u), &v) in out.values.iter_mut().zip(&f.values).zip(&potential.values) {
        *o = v * u - *o;
    }
    out
}

/// Sidecar metadata stored next to a field dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub n: usize,
    pub box_length: f64,
    pub label: String,
}

/// Path of the JSON sidecar belonging to a binary dump.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `n` as little-endian u64 followed by the `n^3` values as
/// little-endian f64, plus a JSON sidecar. Returns the sidecar path.
pub fn write_field(path: &Path, field: &ScalarField, label: &str) -> Result<PathBuf> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(field.grid.n as u64).to_le_bytes())?;
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;

    let sidecar = FieldSidecar {
        n: field.grid.n,
        box_length: field.grid.box_length,
        label: label.to_string(),
    };
    let side = sidecar_path(path);
    let json =
        serde_json::to_string_pretty(&sidecar).map_err(|e| Error::InvalidField(e.to_string()))?;
    std::fs::write(&side, json + "\n")?;
    Ok(side)
}

/// Reads a dump written by [`write_field`], taking the box length from the
/// sidecar.
pub fn read_field(path: &Path) -> Result<(ScalarField, FieldSidecar)> {
    let side_text = std::fs::read_to_string(sidecar_path(path))?;
    let sidecar: FieldSidecar = serde_json::from_str(&side_text)
        .map_err(|e| Error::InvalidField(format!("bad sidecar: {e}")))?;

    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 8];
    r.read_exact(&mut header)?;
    let n = u64::from_le_bytes(header) as usize;
    if n != sidecar.n {
        return Err(Error::InvalidField(format!(
            "header n = {n} disagrees with sidecar n = {}",
            sidecar.n
        )));
    }
    let grid = Grid::new(n, sidecar.box_length)?;
    let mut buf = Vec::with_capacity(grid.len() * 8);
    r.read_to_end(&mut buf)?;
    if buf.len() != grid.len() * 8 {
        return Err(Error::InvalidField(format!(
            "expected {} bytes of data, found {}",
            grid.len() * 8,
            buf.len()
        )));
    }
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((ScalarField::new(grid, values)?, sidecar))
}
