//! FFT diagonalization of the periodic seven-point Laplacian.
//!
//! Used to apply `(-Δ + V)^{-1}` (the Riesz map of the weighted `E_i` inner
//! product) and to measure how much of a field's gradient energy sits in the
//! upper half of the resolvable band.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{schrodinger_apply, Grid, ScalarField};

pub struct Spectral {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Eigenvalues of `-Δ_h` per axis index.
    symbol_1d: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .finish()
    }
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let h = grid.spacing();
        let symbol_1d = (0..n)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                2.0 * (1.0 - theta.cos()) / (h * h)
            })
            .collect();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            symbol_1d,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex<f64>], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        let mut line = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        // z is contiguous
        for chunk in data.chunks_exact_mut(n) {
            fft.process_with_scratch(chunk, &mut scratch);
        }
        // y
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    line[j] = data[(i * n + j) * n + k];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for j in 0..n {
                    data[(i * n + j) * n + k] = line[j];
                }
            }
        }
        // x
        for j in 0..n {
            for k in 0..n {
                for i in 0..n {
                    line[i] = data[(i * n + j) * n + k];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for i in 0..n {
                    data[(i * n + j) * n + k] = line[i];
                }
            }
        }
    }

    fn to_spectrum(&self, f: &ScalarField) -> Vec<Complex<f64>> {
        let mut data: Vec<Complex<f64>> =
            f.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    fn inverse_transform(&self, mut data: Vec<Complex<f64>>) -> ScalarField {
        self.transform(&mut data, &self.inverse);
        let norm = 1.0 / self.grid.len() as f64;
        ScalarField::from_vec_unchecked(self.grid, data.iter().map(|c| c.re * norm).collect())
    }

    #[inline]
    fn symbol(&self, idx: usize) -> f64 {
        let [i, j, k] = self.grid.unravel(idx);
        self.symbol_1d[i] + self.symbol_1d[j] + self.symbol_1d[k]
    }

    /// Solves `(-Δ + c) x = b` exactly for a constant `c > 0`.
    pub fn solve_shifted(&self, b: &ScalarField, c: f64) -> Result<ScalarField> {
        if !(c > 0.0) {
            return Err(Error::Precondition(format!(
                "shifted Laplacian needs a positive shift, got {c}"
            )));
        }
        b.check_same_grid(&ScalarField::zeros(self.grid))?;
        let mut spec = self.to_spectrum(b);
        for (idx, z) in spec.iter_mut().enumerate() {
            *z /= self.symbol(idx) + c;
        }
        Ok(self.inverse_transform(spec))
    }

    /// Fraction of `∫|∇f|²` carried by modes whose largest axis wavenumber
    /// lies in the upper half of the band, `|k| > n/4`.
    pub fn high_frequency_fraction(&self, f: &ScalarField) -> f64 {
        let n = self.grid.n();
        let spec = self.to_spectrum(f);
        let folded = |k: usize| k.min(n - k);
        let cutoff = n / 4;
        let (mut hi, mut total) = (0.0, 0.0);
        for (idx, z) in spec.iter().enumerate() {
            let e = self.symbol(idx) * z.norm_sqr();
            total += e;
            let [i, j, k] = self.grid.unravel(idx);
            if folded(i).max(folded(j)).max(folded(k)) > cutoff {
                hi += e;
            }
        }
        if total > 0.0 {
            hi / total
        } else {
            0.0
        }
    }
}

/// Inverse of `-Δ + V` for a fixed nonnegative potential with positive mean.
///
/// Constant potentials are inverted directly in Fourier space; otherwise
/// conjugate gradients run preconditioned by `(-Δ + mean V)^{-1}`.
#[derive(Debug)]
pub struct ShiftedLaplacianSolver {
    spectral: Arc<Spectral>,
    potential: ScalarField,
    mean: f64,
    constant: bool,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl ShiftedLaplacianSolver {
    pub fn new(spectral: Arc<Spectral>, potential: ScalarField) -> Result<Self> {
        potential.check_same_grid(&ScalarField::zeros(*spectral.grid()))?;
        let vals = potential.values();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if !(mean > 0.0) {
            return Err(Error::AssumptionViolation {
                hypothesis: "(V2)",
                detail: "potential has nonpositive mean; -Δ+V is singular on the periodic box"
                    .into(),
            });
        }
        let (lo, hi) = vals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let constant = hi - lo <= 1e-14 * hi.abs();
        Ok(Self {
            spectral,
            potential,
            mean,
            constant,
            rel_tol: 1e-12,
            max_iters: 500,
        })
    }

    pub fn apply(&self, x: &ScalarField) -> ScalarField {
        schrodinger_apply(x, &self.potential)
    }

    pub fn solve(&self, b: &ScalarField) -> Result<ScalarField> {
        if self.constant {
            return self.spectral.solve_shifted(b, self.mean);
        }
        let b_norm = b.inner(b)?.sqrt();
        if b_norm == 0.0 {
            return Ok(ScalarField::zeros(*b.grid()));
        }
        let mut x = self.spectral.solve_shifted(b, self.mean)?;
        let mut r = b.add_scaled(-1.0, &self.apply(&x))?;
        let mut z = self.spectral.solve_shifted(&r, self.mean)?;
        let mut p = z.clone();
        let mut rz = r.inner(&z)?;
        for _ in 0..self.max_iters {
            if r.inner(&r)?.sqrt() <= self.rel_tol * b_norm {
                return Ok(x);
            }
            let ap = self.apply(&p);
            let alpha = rz / p.inner(&ap)?;
            x = x.add_scaled(alpha, &p)?;
            r = r.add_scaled(-alpha, &ap)?;
            z = self.spectral.solve_shifted(&r, self.mean)?;
            let rz_new = r.inner(&z)?;
            p = z.add_scaled(rz_new / rz, &p)?;
            rz = rz_new;
        }
        if r.inner(&r)?.sqrt() <= 1e3 * self.rel_tol * b_norm {
            return Ok(x);
        }
        Err(Error::Precondition(
            "conjugate gradients did not converge for -Δ+V".into(),
        ))
    }
}
