//! Comparisons against independent reimplementations and closed forms.

use nehari_core::diagnostics::{bubble, pohozaev_residual, sobolev_quotient, SOBOLEV_CONSTANT};
use nehari_core::energy::{energy, nehari_project, state_scalars};
use nehari_core::model::{KirchhoffSpec, PotentialSet, PotentialSource, ProblemSpec};
use nehari_core::{Grid, ScalarField, StatePair};
use std::f64::consts::PI;

fn problem(n: usize, l: f64, v1: &str, v2: &str, lambda: &str, p: f64, q: f64) -> ProblemSpec {
    let g = Grid::new(n, l).unwrap();
    let pots = PotentialSet::new(
        g,
        PotentialSource::expr(v1).unwrap(),
        PotentialSource::expr(v2).unwrap(),
        PotentialSource::expr(lambda).unwrap(),
        0.5,
        [2, 2, 2],
        [1.0, 1.2],
    )
    .unwrap();
    ProblemSpec::new(
        1.0,
        1.2,
        KirchhoffSpec::quadratic(0.05).unwrap(),
        KirchhoffSpec::log_integral(),
        pots,
        0.7,
        p,
        q,
    )
    .unwrap()
}

fn smooth_state(g: Grid, seed: f64) -> StatePair {
    let u = ScalarField::from_fn(g, |[x, y, z]| {
        (-(x * x + y * y + z * z) / 3.0).exp() * (1.0 + 0.3 * (seed * x).sin())
    });
    let v = ScalarField::from_fn(g, |[x, y, z]| {
        0.5 * (-((x - 0.5).powi(2) + y * y + (z + 0.3).powi(2)) / 2.0).exp()
            + 0.1 * (seed * y).cos()
    });
    StatePair::new(u, v).unwrap()
}

/// Direct loop evaluation of the energy with its own stencil and quadrature.
fn oracle_energy(pr: &ProblemSpec, s: &StatePair) -> f64 {
    let g = *pr.grid();
    let n = g.n();
    let h = g.box_length() / n as f64;
    let w = h * h * h;
    let at = |f: &ScalarField, i: usize, j: usize, k: usize| {
        f.values()[((i % n) * n + (j % n)) * n + (k % n)]
    };
    let (v1, v2, lam) = (pr.v1(), pr.v2(), pr.lambda());
    let (mut nu, mut nv, mut pu, mut qv, mut cpl) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let e = |f: &ScalarField, pot: &ScalarField| {
                    let c = at(f, i, j, k);
                    let nb = at(f, i + 1, j, k)
                        + at(f, i + n - 1, j, k)
                        + at(f, i, j + 1, k)
                        + at(f, i, j + n - 1, k)
                        + at(f, i, j, k + 1)
                        + at(f, i, j, k + n - 1);
                    c * ((6.0 * c - nb) / (h * h) + at(pot, i, j, k) * c)
                };
                nu += w * e(&s.u, v1);
                nv += w * e(&s.v, v2);
                let (u, v) = (at(&s.u, i, j, k), at(&s.v, i, j, k));
                pu += w * u.abs().powf(pr.p);
                qv += w * v.abs().powf(pr.q);
                cpl += w * at(lam, i, j, k) * u * v;
            }
        }
    }
    let b = 0.05;
    let alpha = 0.5 * b * nu * nu;
    let beta = (1.0 + nv) * (1.0 + nv).ln() - nv;
    0.5 * (pr.a1 * nu + pr.a2 * nv) + 0.5 * (alpha + beta) - pr.mu * pu / pr.p - qv / pr.q - cpl
}

#[test]
fn energy_matches_direct_loop_oracle() {
    let pr = problem(
        12,
        6.0,
        "1 + 0.3*cos(pi*x)",
        "0.8",
        "0.2 + 0.1*sin(pi*y)",
        4.5,
        5.5,
    );
    for seed in [0.7, 1.3, 2.9] {
        let s = smooth_state(*pr.grid(), seed);
        let got = energy(&pr, &s).unwrap().total;
        let want = oracle_energy(&pr, &s);
        assert!(
            (got - want).abs() <= 1e-11 * want.abs().max(1.0),
            "{got} vs {want}"
        );
    }
}

#[test]
fn decoupled_fiber_root_matches_closed_form() {
    let g = Grid::new(12, 6.0).unwrap();
    let pots = PotentialSet::new(
        g,
        PotentialSource::constant(1.0),
        PotentialSource::constant(1.0),
        PotentialSource::constant(0.0),
        0.5,
        [1, 1, 1],
        [1.0, 1.0],
    )
    .unwrap();
    let pr = ProblemSpec::new(
        1.3,
        1.0,
        KirchhoffSpec::zero(),
        KirchhoffSpec::zero(),
        pots,
        2.0,
        5.0,
        5.0,
    )
    .unwrap();
    let u = smooth_state(g, 1.0).u;
    let s = StatePair::new(u, ScalarField::zeros(g)).unwrap();
    let sc = state_scalars(&pr, &s).unwrap();
    let closed = (pr.a1 * sc.nu / (pr.mu * sc.pu)).powf(1.0 / (pr.p - 2.0));
    let t0 = nehari_project(&pr, &s).unwrap().t0;
    assert!((t0 - closed).abs() <= 1e-9 * closed, "{t0} vs {closed}");
}

/// Closed-form value of the best constant, `3 (π/2)^{4/3}`.
#[test]
fn sobolev_constant_closed_form() {
    let s = 3.0 * (PI / 2.0).powf(4.0 / 3.0);
    assert!((s - SOBOLEV_CONSTANT).abs() < 1e-12);
}

/// Radial quadrature of the bubble quotient reproduces the closed form.
#[test]
fn bubble_quotient_by_radial_quadrature() {
    let m = 400_000;
    let r_max = 4000.0f64;
    let dr = r_max / m as f64;
    let (mut grad, mut six) = (0.0, 0.0);
    for i in 0..m {
        let r = (i as f64 + 0.5) * dr;
        let d = 1.0 + r * r;
        // U = d^{-1/2}, U' = -r d^{-3/2}
        grad += 4.0 * PI * r * r * r * r / (d * d * d) * dr;
        six += 4.0 * PI * r * r / (d * d * d) * dr;
    }
    let q = grad / six.powf(1.0 / 3.0);
    assert!(
        (q - SOBOLEV_CONSTANT).abs() / SOBOLEV_CONSTANT < 1e-3,
        "{q}"
    );
    assert!((bubble([0.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
}

/// Gaussian quotient in the continuum is `(3/2) π √3 ≈ 8.16`.
#[test]
fn gaussian_quotient_approaches_continuum_value() {
    let g = Grid::new(48, 12.0).unwrap();
    let f = ScalarField::from_fn(g, |[x, y, z]| (-(x * x + y * y + z * z)).exp());
    let q = sobolev_quotient(&f).unwrap();
    let exact = 1.5 * PI * 3f64.sqrt();
    assert!((q - exact).abs() / exact < 0.02, "{q} vs {exact}");
    assert!(q >= SOBOLEV_CONSTANT);
}

#[test]
fn pohozaev_terms_vanish_on_zero_state() {
    let pr = problem(10, 6.0, "1", "1", "0.3", 4.5, 5.0);
    let r = pohozaev_residual(&pr, &StatePair::zeros(*pr.grid())).unwrap();
    assert_eq!(r.residual_abs, 0.0);
    assert_eq!(r.residual_rel, 0.0);
}
