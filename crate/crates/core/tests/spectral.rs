use std::f64::consts::PI;

use liouville_disk::curvature_model::CurvatureData;
use liouville_disk::disk_geometry::BubbleParams;
use liouville_disk::quadrature::{circle_grid, disk_grid};
use liouville_disk::spectral_solver::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn probe_points() -> Vec<Complex64> {
    let mut pts = Vec::new();
    for i in 0..=10 {
        for j in 0..16 {
            pts.push(Complex64::from_polar(i as f64 / 10.0, 2.0 * PI * j as f64 / 16.0 + 0.1));
        }
    }
    pts
}

#[test]
fn manufactured_harmonic_solution_is_recovered() {
    let data = CurvatureData::canonical();
    let xi = Complex64::from_polar(1.0, 0.3);
    let exact = |z: Complex64| {
        let (r, t) = (z.norm(), z.arg());
        r.powi(3) * (3.0 * t).cos() + r * r * (2.0 * t).sin()
    };
    let u = solve_neumann(|_| 0.0, |z| 3.0 * (3.0 * z.arg()).cos() + 2.0 * (2.0 * z.arg()).sin(), &data, xi).unwrap();
    let err = probe_points().into_iter().map(|z| (u.value(z) - exact(z)).abs()).fold(0.0, f64::max);
    assert!(err < 1e-8, "max error {err:e}");
}

#[test]
fn manufactured_cubic_with_source() {
    let data = CurvatureData::tilted();
    let xi = Complex64::new(1.0, 0.0);
    let solver = SpectralSolver::at(SpectralConfig::default(), &data, xi).unwrap();
    // u = r³cosθ: -Δu = -8r cosθ, ∂_r u = 3cosθ
    let u = solver.solve_neumann(|z| -8.0 * z.re, |z| 3.0 * z.re).unwrap();
    let err = probe_points().into_iter().map(|z| (u.value(z) - z.norm_sqr() * z.re).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10, "max error {err:e}");
}

#[test]
fn weak_form_holds_for_random_test_functions() {
    let data = CurvatureData::canonical();
    let xi = Complex64::new(1.0, 0.0);
    let f = |z: Complex64| 2.0 - 4.0 * z.norm_sqr() + z.re * z.im.powi(3) + z.re.sin();
    let g = |z: Complex64| (2.0 * z.arg()).cos() + z.re + z.im.powi(3);
    let u = solve_neumann(f, g, &data, xi).unwrap();
    let disk = disk_grid(96, 192);
    let circle = circle_grid(192);
    let grad_u: Vec<[f64; 2]> = disk.nodes.iter().map(|&z| u.gradient(z)).collect();
    let mut rng = StdRng::seed_from_u64(7);
    for trial in 0..20 {
        // ζ = Σ a_{ij} x^i y^j, i + j ≤ 5
        let mut coeffs = Vec::new();
        for i in 0..=5u32 {
            for j in 0..=(5 - i) {
                coeffs.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
        let zeta =
            |z: Complex64| coeffs.iter().map(|&(i, j, a)| a * z.re.powi(i as i32) * z.im.powi(j as i32)).sum::<f64>();
        let grad_zeta = |z: Complex64| {
            let mut g = [0.0; 2];
            for &(i, j, a) in &coeffs {
                if i > 0 {
                    g[0] += a * i as f64 * z.re.powi(i as i32 - 1) * z.im.powi(j as i32);
                }
                if j > 0 {
                    g[1] += a * j as f64 * z.re.powi(i as i32) * z.im.powi(j as i32 - 1);
                }
            }
            g
        };
        let dirichlet: f64 = disk
            .nodes
            .iter()
            .zip(&grad_u)
            .zip(&disk.weights)
            .map(|((&z, gu), w)| {
                let gz = grad_zeta(z);
                w * (gu[0] * gz[0] + gu[1] * gz[1])
            })
            .sum();
        let source = disk.integrate(|z| f(z) * zeta(z)) + circle.integrate(|z| g(z) * zeta(z));
        assert!((dirichlet - source).abs() < 1e-8, "trial {trial}: defect {:e}", dirichlet - source);
    }
}

#[test]
fn kernel_functions_solve_the_homogeneous_problem() {
    for data in [CurvatureData::canonical(), CurvatureData::constant(2.0, 0.5), CurvatureData::tilted()] {
        let xi = Complex64::from_polar(1.0, -0.2);
        let b = BubbleParams::at(&data, xi).unwrap();
        let solver = SpectralSolver::new(SpectralConfig::default(), b, xi).unwrap();
        let hb = b.geodesic * b.boundary_scale();
        for which in [1u8, 2] {
            let z = |p: Complex64| b.kernel(which, p, xi);
            let u = solver.solve_neumann(|p| 2.0 * b.gaussian * b.bubble_exp(p) * z(p), |p| hb * z(p)).unwrap();
            let err = probe_points().into_iter().map(|p| (u.value(p) - z(p)).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "Z{which}: {err:e}");
        }
    }
}

#[test]
fn h1_norm_matches_finite_difference_gradient() {
    let config = SpectralConfig { modes: 8, radial: 8 };
    let u = SpectralField::from_function(config, |z| z.re * z.re - z.im * z.im).unwrap();
    let grid = disk_grid(32, 64);
    let h = 1e-5;
    let fd: f64 = grid
        .nodes
        .iter()
        .zip(&grid.weights)
        .map(|(&z, w)| {
            let dx = (u.value(z + h) - u.value(z - h)) / (2.0 * h);
            let dy = (u.value(z + Complex64::new(0.0, h)) - u.value(z - Complex64::new(0.0, h))) / (2.0 * h);
            w * (dx * dx + dy * dy)
        })
        .sum();
    assert!((u.h1_norm() - fd.sqrt()).abs() < 1e-8);
    assert!((u.h1_norm() - (2.0 * PI).sqrt()).abs() < 1e-12);
}

#[test]
fn field_dump_has_one_row_per_lattice_point() {
    let u = SpectralField::from_function(SpectralConfig { modes: 4, radial: 4 }, |z| z.re).unwrap();
    let rows = u.dump(4, 8);
    assert_eq!(rows.len(), 5 * 8);
    let last = rows.last().unwrap();
    assert!((last[2] - last[1].cos()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pi_l_output_is_compatible(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -2.0f64..2.0) {
        let interior = disk_grid(12, 24);
        let boundary = circle_grid(24);
        let f = interior.sample(|z| a + c * z.re * z.re);
        let g = boundary.sample(|z| b + z.im);
        let (ft, gt, _) = apply_pi_l(&f, &interior, &g, &boundary);
        prop_assert!((interior.integrate_values(&ft) + boundary.integrate_values(&gt)).abs() < 1e-12);
    }

    #[test]
    fn kernel_projection_is_idempotent(k in 0.3f64..3.0, h in 0.1f64..2.0, eta in -3.0f64..3.0, a in -1.0f64..1.0) {
        let data = CurvatureData::constant(k, h);
        let xi = Complex64::from_polar(1.0, eta);
        let config = SpectralConfig { modes: 4, radial: 12 };
        let u = SpectralField::from_function(config, |z| a * z.re + z.im * z.norm_sqr() - 0.5 * z.re * z.im).unwrap();
        let (once, _) = project_out_kernel(&u, &data, xi).unwrap();
        let (twice, c) = project_out_kernel(&once, &data, xi).unwrap();
        prop_assert!(once.add_scaled(&twice, -1.0).h1_norm() < 1e-12);
        prop_assert!(c[0].abs() < 1e-12 && c[1].abs() < 1e-12);
    }

    #[test]
    fn neumann_solution_is_normalized(k in 0.3f64..3.0, h in 0.1f64..2.0, m in 0.5f64..3.0) {
        let data = CurvatureData::constant(k, h);
        let xi = Complex64::new(1.0, 0.0);
        let solver = SpectralSolver::at(SpectralConfig { modes: 6, radial: 10 }, &data, xi).unwrap();
        // ∫2m + ∮(-m) = 0
        let u = solver.solve_neumann(|_| 2.0 * m, |_| -m).unwrap();
        prop_assert!(solver.normalization_defect(&u).abs() < 1e-11);
    }
}
