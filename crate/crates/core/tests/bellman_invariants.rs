//! Surface-level invariants of the value iteration, checked against the
//! classical transform majorant and by direct node scans.

use umdlab_core::bellman::*;

/// `alpha_p (|y| - (p*-1)|x|) (|x| + |y|)^{p-1}` with
/// `alpha_p = p (1 - 1/p*)^{p-1}`; the classical majorant of the payoff for
/// the sign pair at p >= 2.
fn classical_majorant(p: f64, x: f64, y: f64) -> f64 {
    let p_star = p.max(p / (p - 1.0));
    let alpha = p * (1.0 - 1.0 / p_star).powf(p - 1.0);
    alpha * (y.abs() - (p_star - 1.0) * x.abs()) * (x.abs() + y.abs()).powf(p - 1.0)
}

#[test]
fn p4_above_threshold_converges_below_classical_majorant() {
    let (p, beta, l, m) = (4.0, 3.5, 4.0, 201usize);
    let maj = Surface::filled(l, m, |x, y| classical_majorant(p, x, y));
    let u0 = initial_surface(p, beta, l, m);

    // the majorant dominates the payoff on the grid
    for (a, b) in maj.values.iter().zip(&u0.values) {
        assert!(a >= b, "majorant fails to dominate the payoff");
    }
    // and is midpoint concave along the (1, +/-1) node directions
    for s in [-1i64, 1] {
        for ix in 1..m - 1 {
            for iy in 1..m - 1 {
                let jm = iy as i64 - s;
                let jp = iy as i64 + s;
                if jm < 0 || jp < 0 || jm >= m as i64 || jp >= m as i64 {
                    continue;
                }
                let mid = maj.at(ix, iy);
                let lo = maj.at(ix - 1, jm as usize);
                let hi = maj.at(ix + 1, jp as usize);
                assert!(
                    0.5 * (lo + hi) - mid <= 1e-9 * (1.0 + mid.abs()),
                    "majorant not concave along (1,{s}) at ({ix},{iy})"
                );
            }
        }
    }
    // and is exactly 4-homogeneous, so the reinjection is neutral on it
    for (x, y) in [(1.0, 2.0), (-3.0, 0.5), (2.2, -1.8)] {
        let whole = classical_majorant(p, x, y);
        let half = classical_majorant(p, x / 2.0, y / 2.0);
        assert!((whole - 16.0 * half).abs() < 1e-9 * (1.0 + whole.abs()));
    }

    let mut grid = BellmanGrid::new(p, -1.0, 1.0, beta, l, m).unwrap();
    let out = grid.iterate(400, 1e-8);
    assert_eq!(out.status, Status::Converged);
    // every iterate, hence the limit, stays below the majorant
    for (ix, iy, v) in (0..m).flat_map(|ix| (0..m).map(move |iy| (ix, iy, ix * m + iy))) {
        let u = grid.surface.values[v];
        let cap = maj.at(ix, iy);
        assert!(
            u <= cap + 1e-6 * (1.0 + cap.abs()),
            "iterate escapes the majorant at ({ix},{iy}): {u} > {cap}"
        );
    }
    // diagonal negativity at the transform endpoints
    assert!(grid.diagonal_max() <= 1e-8);

    // the converged surface is concave along the defining directions at the
    // sampled nodes
    let u = &grid.surface;
    for s in [-1i64, 1] {
        for ix in 1..m - 1 {
            for iy in 1..m - 1 {
                let jm = iy as i64 - s;
                let jp = iy as i64 + s;
                if jm < 0 || jp < 0 || jm >= m as i64 || jp >= m as i64 {
                    continue;
                }
                let gap = 0.5 * (u.at(ix - 1, jm as usize) + u.at(ix + 1, jp as usize))
                    - u.at(ix, iy);
                assert!(gap <= 1e-7, "direction (1,{s}) violated by {gap} at ({ix},{iy})");
            }
        }
    }

    // midpoint convexity in y within the discretization bias of the payoff
    // scale (the boundary rows carry the chord-truncation bias)
    let grid_tol = 1e-3 * (beta.powf(p) + 1.0) * l.powf(p);
    assert!(convexity_in_y_violation(u) <= grid_tol);

    // the biconcave companion on its interpolation-free sublattice
    let v = v_transform(u, -1.0, 1.0).unwrap();
    let mut worst: f64 = f64::NEG_INFINITY;
    for ix in 0..m {
        for iy in 2..m - 2 {
            if (ix + iy) % 2 != 0 {
                continue;
            }
            for (dx, dy) in [(0i64, 2i64), (2, 0)] {
                let jx0 = ix as i64 - dx;
                let jx1 = ix as i64 + dx;
                let jy0 = iy as i64 - dy;
                let jy1 = iy as i64 + dy;
                if jx0 < 0 || jy0 < 0 || jx1 >= m as i64 || jy1 >= m as i64 {
                    continue;
                }
                let a = v.at(jx0 as usize, jy0 as usize);
                let b = v.at(ix, iy);
                let c = v.at(jx1 as usize, jy1 as usize);
                if a.is_nan() || b.is_nan() || c.is_nan() {
                    continue;
                }
                worst = worst.max(0.5 * (a + c) - b);
            }
        }
    }
    assert!(worst <= 1e-7, "biconcavity violated by {worst}");

    // interpolated directional scans stay within the same grid bias
    let rep = directional_concavity_report(&v, 1.0, -0.3, -1.0, 1.0).unwrap();
    assert!(rep.covered);
    assert!(rep.max_violation <= grid_tol);
}

#[test]
fn p2_certified_ordering_against_achieved_ratios() {
    // an achieved transform ratio can never exceed the bisection threshold
    // plus its width: at p = 2 the best ratio is exactly 1
    let out = beta_threshold(2.0, -1.0, 1.0, 4.0, 101, (0.5, 1.5), 80, 1e-9).unwrap();
    let achieved = 1.0; // unimodular plans are isometries at p = 2
    assert!(out.beta_hat + BISECTION_WIDTH >= achieved - 1e-6);
}

#[test]
fn grid_refinement_threshold_stability() {
    let coarse = beta_threshold(2.0, 0.0, 1.0, 4.0, 101, (0.5, 1.5), 80, 1e-9).unwrap();
    let fine = beta_threshold(2.0, 0.0, 1.0, 4.0, 201, (0.5, 1.5), 80, 1e-9).unwrap();
    let budget = 2.0 * BISECTION_WIDTH + 0.1;
    assert!(
        (coarse.beta_hat - fine.beta_hat).abs() <= budget,
        "thresholds drifted: {} vs {}",
        coarse.beta_hat,
        fine.beta_hat
    );
}

#[test]
fn surface_export_round_trip() {
    let grid = BellmanGrid::new(2.0, -1.0, 1.0, 1.0, 2.0, 21).unwrap();
    let dir = std::env::temp_dir().join("umdlab_surface_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("u.csv");
    grid.surface.write_csv(&path).unwrap();
    let body = std::fs::read_to_string(&path).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next().unwrap(), "x,y,u");
    assert_eq!(body.lines().count(), 21 * 21 + 1);
    let meta = SurfaceMetadata {
        p: 2.0,
        b: -1.0,
        big_b: 1.0,
        beta: 1.0,
        status: Status::Converged,
        iterations: 1,
        half_width: 2.0,
        resolution: 21,
    };
    let text = serde_json::to_string(&meta).unwrap();
    assert!(text.contains("\"B\":1.0"));
    std::fs::remove_dir_all(&dir).ok();
}
