use tpm_core::cellproblems::{permeability_with_solution, CellField, CellSolution};
use tpm_core::linsolve::Backend;
use tpm_core::{build_geometry, permeability, ObstacleShape, PermeabilityTensor, Regime, SolverConfig};

fn solve(regime: Regime, shape: ObstacleShape, n: usize, nz: usize) -> PermeabilityTensor {
    let geom = build_geometry(shape, n, nz).unwrap();
    permeability(regime, &geom, &SolverConfig::with_tol(1e-11)).unwrap()
}

fn components(sol: &CellSolution) -> Vec<Vec<f64>> {
    sol.directions
        .iter()
        .flat_map(|d| match &d.field {
            CellField::Planar(f) => vec![f.u.clone(), f.v.clone(), f.p.clone()],
            CellField::Layered(f) => vec![f.u.clone(), f.v.clone(), f.w.clone(), f.p.clone()],
        })
        .collect()
}

fn rect(hx: f64, hy: f64) -> ObstacleShape {
    ObstacleShape::Rectangle { center: [0.0, 0.0], half_widths: [hx, hy] }
}

#[test]
fn krylov_matches_dense_oracle() {
    let cases = [
        (Regime::Htpm, ObstacleShape::disk(0.25), 16, 8),
        (Regime::Htpm, rect(0.3, 0.1), 12, 8),
        (Regime::Ptpm, ObstacleShape::disk(0.2), 8, 8),
        (Regime::Vtpm, ObstacleShape::Ellipse { center: [0.05, 0.0], semi_axes: [0.3, 0.15], rotation: 0.5 }, 16, 8),
    ];
    for (regime, shape, n, nz) in cases {
        let geom = build_geometry(shape, n, nz).unwrap();
        let krylov = SolverConfig::with_tol(1e-13);
        let dense = SolverConfig { backend: Backend::Dense, ..SolverConfig::default() };
        let (a, ka) = permeability_with_solution(regime, &geom, &krylov).unwrap();
        let (b, kb) = permeability_with_solution(regime, &geom, &dense).unwrap();
        for (x, y) in components(&a).iter().zip(components(&b).iter()) {
            let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let diff = x.iter().zip(y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            assert!(diff <= 1e-8 * scale, "{regime} n={n}: {diff} vs scale {scale}");
        }
        for (x, y) in ka.k.iter().flatten().zip(kb.k.iter().flatten()) {
            assert!((x - y).abs() <= 1e-9 * ka.frobenius_norm());
        }
    }
}

#[test]
fn rectangle_is_anisotropic_with_zero_cross_term() {
    for regime in Regime::ALL {
        let k = solve(regime, rect(0.3, 0.1), 32, 8);
        // the obstacle is long in x, so it blocks y-directed flow more
        assert!(k.k[0][0] > k.k[1][1] && k.k[1][1] > 0.0, "{regime}: {:?}", k.k);
        assert!(k.k[0][1].abs() <= 1e-8 * k.frobenius_norm());
    }
}

#[test]
fn transposed_obstacle_swaps_diagonal() {
    let shape = ObstacleShape::Ellipse { center: [0.05, -0.02], semi_axes: [0.3, 0.12], rotation: 0.4 };
    for regime in Regime::ALL {
        let a = solve(regime, shape, 24, 8);
        let b = solve(regime, shape.transposed(), 24, 8);
        let tol = 1e-8 * a.frobenius_norm();
        assert!((a.k[0][0] - b.k[1][1]).abs() <= tol, "{regime}");
        assert!((a.k[1][1] - b.k[0][0]).abs() <= tol, "{regime}");
        assert!((a.k[0][1] - b.k[0][1]).abs() <= tol, "{regime}");
    }
}

#[test]
fn positive_definite_on_random_directions() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(17);
    let shape = ObstacleShape::Ellipse { center: [0.0, 0.0], semi_axes: [0.35, 0.1], rotation: 0.7 };
    for regime in Regime::ALL {
        let k = solve(regime, shape, 24, 8);
        for _ in 0..100 {
            let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            assert!(k.quadratic_form([t.cos(), t.sin()]) > 0.0);
        }
    }
}

#[test]
fn nested_obstacles_reduce_permeability() {
    for regime in Regime::ALL {
        let mut previous: Option<PermeabilityTensor> = None;
        for r in [0.1, 0.2, 0.3, 0.4] {
            let k = solve(regime, ObstacleShape::disk(r), 32, 8);
            if let Some(p) = &previous {
                let d = [[p.k[0][0] - k.k[0][0], p.k[0][1] - k.k[0][1]], [p.k[1][0] - k.k[1][0], p.k[1][1] - k.k[1][1]]];
                let diff = PermeabilityTensor::new(regime, d, 32, 8);
                let [lo, _] = diff.eigenvalues();
                assert!(lo >= -1e-9 * p.frobenius_norm(), "{regime} r={r}: {lo}");
            }
            previous = Some(k);
        }
    }
}

#[test]
fn bounds_by_fluid_fraction() {
    let shape = ObstacleShape::disk(0.25);
    for regime in Regime::ALL {
        let geom = build_geometry(shape, 32, 8).unwrap();
        let k = permeability(regime, &geom, &SolverConfig::default()).unwrap();
        let phi = geom.fluid_fraction();
        for i in 0..2 {
            assert!(k.k[i][i] > 0.0 && k.k[i][i] < phi, "{regime}: {} vs {phi}", k.k[i][i]);
        }
        if regime == Regime::Ptpm {
            assert!(k.k[0][0] < 1.0 / 12.0);
        }
    }
}

#[test]
fn heleshaw_disk_below_the_dilute_upper_bound() {
    // an isotropic array of insulating inclusions with area fraction c has
    // conductivity at most (1 - c)/(1 + c)
    let geom = build_geometry(ObstacleShape::disk(0.25), 64, 8).unwrap();
    let k = permeability(Regime::Vtpm, &geom, &SolverConfig::default()).unwrap();
    let c = 1.0 - geom.fluid_fraction();
    assert!(k.k[0][0] <= (1.0 - c) / (1.0 + c));
    assert!(k.k[0][0] > 0.6);
}

#[test]
fn square_array_of_cylinders_matches_dilute_expansion() {
    // transverse Stokes flow through a square array of cylinders with area
    // fraction c: k = (-ln c - 1.476 + 2c - 1.774c² + 4.076c³) / (8π)
    let r: f64 = 0.25;
    let c = std::f64::consts::PI * r * r;
    let reference = (-c.ln() - 1.476 + 2.0 * c - 1.774 * c * c + 4.076 * c.powi(3)) / (8.0 * std::f64::consts::PI);
    let k64 = solve(Regime::Htpm, ObstacleShape::disk(r), 64, 8).k[0][0];
    let k128 = solve(Regime::Htpm, ObstacleShape::disk(r), 128, 8).k[0][0];
    let extrapolated = 2.0 * k128 - k64;
    assert!((extrapolated - reference).abs() <= 0.03 * reference, "{extrapolated} vs {reference}");
}

#[test]
fn disk_refinement_in_planar_regimes() {
    for regime in [Regime::Htpm, Regime::Vtpm] {
        let k: Vec<f64> = [32, 64, 128].iter().map(|&n| solve(regime, ObstacleShape::disk(0.25), n, 8).k[0][0]).collect();
        let rate = ((k[0] - k[1]) / (k[1] - k[2])).abs().log2();
        assert!(rate >= 1.0, "{regime}: rate {rate}, values {k:?}");
    }
}

#[test]
fn mesh_convergence_on_grid_aligned_obstacle() {
    // edges at multiples of 1/16, so every resolution represents the
    // obstacle exactly and only the discretization error remains
    let shape = rect(0.25, 0.125);
    for regime in Regime::ALL {
        let k: Vec<f64> = [16, 32, 64].iter().map(|&n| solve(regime, shape, n, 8).k[1][1]).collect();
        let (d1, d2) = ((k[0] - k[1]).abs(), (k[1] - k[2]).abs());
        assert!(d2 < d1, "{regime}: {k:?}");
        let rate = (d1 / d2).log2();
        assert!(rate >= 1.0, "{regime}: rate {rate}, values {k:?}");
    }
}
