//! Randomized invariants of the discrete functional.

use nehari_core::diagnostics::{sobolev_quotient, SOBOLEV_CONSTANT};
use nehari_core::energy::{
    energy, energy_gradient, fiber, nehari_j, nehari_project, state_scalars,
};
use nehari_core::grid::{integrate, laplacian, read_field, write_field};
use nehari_core::model::{KirchhoffSpec, PotentialSet, PotentialSource, ProblemSpec};
use nehari_core::{Grid, ScalarField, StatePair};
use proptest::prelude::*;

const N: usize = 8;
const L: f64 = 6.0;

fn grid() -> Grid {
    Grid::new(N, L).unwrap()
}

fn problem(lambda: f64, constant: bool, p: f64, q: f64) -> ProblemSpec {
    let g = grid();
    let v1 = if constant {
        PotentialSource::constant(1.0)
    } else {
        PotentialSource::expr("1 + 0.4*cos(2*pi*x/3)").unwrap()
    };
    let pots = PotentialSet::new(
        g,
        v1,
        PotentialSource::constant(0.8),
        PotentialSource::constant(lambda),
        0.5,
        [3, 3, 3],
        [1.0, 1.0],
    )
    .unwrap();
    ProblemSpec::new(
        1.0,
        1.0,
        KirchhoffSpec::quadratic(0.05).unwrap(),
        KirchhoffSpec::log_integral(),
        pots,
        1.0,
        p,
        q,
    )
    .unwrap()
}

/// Low-mode trigonometric field from a coefficient vector.
fn field_from(c: &[f64]) -> ScalarField {
    let k = 2.0 * std::f64::consts::PI / L;
    ScalarField::from_fn(grid(), |[x, y, z]| {
        c[0] + c[1] * (k * x).cos()
            + c[2] * (k * y).sin()
            + c[3] * (k * z).cos()
            + c[4] * (k * (x + y)).sin()
            + c[5] * (-(x * x + y * y + z * z) / 2.0).exp()
    })
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 6)
}

fn state() -> impl Strategy<Value = StatePair> {
    (coeffs(), coeffs())
        .prop_filter("nonzero", |(a, b)| {
            a.iter().chain(b).any(|c| c.abs() > 0.05)
        })
        .prop_map(|(a, b)| StatePair::new(field_from(&a), field_from(&b)).unwrap())
}

fn exponents() -> impl Strategy<Value = (f64, f64)> {
    (4.1f64..6.0, 0.0f64..1.0).prop_map(|(p, t)| (p, p + t * (6.0 - p)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_is_symmetric(a in coeffs(), b in coeffs()) {
        let (f, g) = (field_from(&a), field_from(&b));
        let l = laplacian(&f).unwrap().inner(&g).unwrap();
        let r = f.inner(&laplacian(&g).unwrap()).unwrap();
        prop_assert!((l - r).abs() <= 1e-10 * (1.0 + l.abs()));
    }

    #[test]
    fn laplacian_integrates_to_zero(a in coeffs()) {
        let s = integrate(&laplacian(&field_from(&a)).unwrap()).unwrap();
        prop_assert!(s.abs() <= 1e-10);
    }

    #[test]
    fn energy_is_translation_invariant_for_constant_potentials(
        s in state(), dx in 0isize..8, dy in 0isize..8, dz in 0isize..8
    ) {
        let pr = problem(0.3, true, 4.5, 5.0);
        let e0 = energy(&pr, &s).unwrap().total;
        let e1 = energy(&pr, &s.shifted([dx, dy, dz])).unwrap().total;
        prop_assert!((e0 - e1).abs() <= 1e-10 * (1.0 + e0.abs()));
    }

    #[test]
    fn gradient_matches_directional_derivative(s in state(), d in state(), (p, q) in exponents()) {
        let pr = problem(0.3, false, p, q);
        let g = energy_gradient(&pr, &s).unwrap();
        let analytic = g.inner(&d).unwrap();
        let eps = 1e-5;
        let ep = energy(&pr, &s.add_scaled(eps, &d).unwrap()).unwrap().total;
        let em = energy(&pr, &s.add_scaled(-eps, &d).unwrap()).unwrap().total;
        let fd = (ep - em) / (2.0 * eps);
        let scale = analytic.abs().max(fd.abs()).max(1.0);
        prop_assert!((fd - analytic).abs() <= 1e-6 * scale, "fd {} analytic {}", fd, analytic);
    }

    #[test]
    fn projection_lands_on_the_manifold(s in state(), (p, q) in exponents()) {
        let pr = problem(0.3, false, p, q);
        let proj = nehari_project(&pr, &s).unwrap();
        let sc = state_scalars(&pr, &proj.state).unwrap();
        let j = nehari_j(&pr, &proj.state).unwrap();
        let size = pr.a1 * sc.nu + pr.a2 * sc.nv + pr.mu * sc.pu + sc.qv + 2.0 * sc.coupling.abs();
        prop_assert!(j.abs() <= 1e-8 * size, "J {} size {}", j, size);
        prop_assert!(proj.t0 > 0.0);
        // The fiber maximum sits at t0.
        let (g0, _) = fiber(&pr, &s, proj.t0).unwrap();
        for f in [0.5, 0.9, 1.1, 2.0] {
            let (g1, _) = fiber(&pr, &s, f * proj.t0).unwrap();
            prop_assert!(g1 <= g0 + 1e-12 * g0.abs());
        }
    }

    #[test]
    fn projection_is_ray_invariant(s in state(), c in 0.05f64..50.0) {
        let pr = problem(0.3, false, 4.5, 5.5);
        let a = nehari_project(&pr, &s).unwrap();
        let b = nehari_project(&pr, &s.scale(c)).unwrap();
        let scale = a.state.u.max_abs().max(a.state.v.max_abs()).max(1.0);
        prop_assert!(a.state.max_abs_diff(&b.state) <= 1e-8 * scale);
        prop_assert!((a.t0 - c * b.t0).abs() <= 1e-9 * a.t0);
    }

    #[test]
    fn coupled_quadratic_part_is_coercive(s in state(), lambda in -0.5f64..0.5) {
        // V1 ≥ 0.6 and V2 = 0.8, so |λ| ≤ δ √(0.6 · 0.8) keeps the coupling admissible.
        let lam = lambda * (0.6f64 * 0.8).sqrt();
        let pr = problem(lam, false, 4.5, 5.0);
        let sc = state_scalars(&pr, &s).unwrap();
        let lhs = pr.a1 * sc.nu + pr.a2 * sc.nv - 2.0 * sc.coupling;
        let rhs = pr.coercivity() * (sc.nu + sc.nv);
        prop_assert!(lhs - rhs >= -1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn energy_on_manifold_is_positive(s in state(), (p, q) in exponents()) {
        let pr = problem(0.3, false, p, q);
        prop_assert!(nehari_project(&pr, &s).unwrap().energy > 0.0);
    }

    #[test]
    fn gaussian_quotient_exceeds_best_constant(w in 0.6f64..1.2) {
        let g = Grid::new(24, 12.0).unwrap();
        let f = ScalarField::from_fn(g, |[x, y, z]| (-(x * x + y * y + z * z) / (w * w)).exp());
        let q = sobolev_quotient(&f).unwrap();
        prop_assert!(q >= SOBOLEV_CONSTANT * 0.98, "{}", q);
    }
}

#[test]
fn field_dump_round_trips() {
    let dir = std::env::temp_dir().join(format!("nehari-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f = field_from(&[0.1, 0.2, -0.3, 0.4, 0.5, -0.6]);
    let path = dir.join("f.bin");
    write_field(&path, &f, "u").unwrap();
    let (back, side) = read_field(&path).unwrap();
    assert_eq!(back.values(), f.values());
    assert_eq!(side.n, N);
    assert_eq!(side.label, "u");
    std::fs::remove_dir_all(&dir).unwrap();
}
