//! Quadrature and reduction identities between symbol families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umdlab_core::sets::PointSet;
use umdlab_core::spaces::{c, Scalar};
use umdlab_core::symbols::*;

/// Composite Simpson quadrature, the oracle for the averaged power
/// quotient; the integrand is smooth in the exponent.
fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> Scalar) -> Scalar {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * (h / 3.0)
}

#[test]
fn kappa_quotient_matches_exponent_average() {
    let (u, v) = (0.3, 1.7);
    let (a1, a2) = (c(1.0, -0.5), c(-0.25, 2.0));
    let spec = SymbolSpec::KappaQuotient { u, v, a1, a2 };
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let mut checked = 0;
    while checked < 100 {
        let xi = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        if xi[0] == 0.0 && xi[1] == 0.0 {
            continue;
        }
        checked += 1;
        let got = spec.eval(&xi).unwrap();
        let want = simpson(u, v, 2048, |alpha| {
            let w1 = xi[0].abs().powf(alpha);
            let w2 = xi[1].abs().powf(alpha);
            (a1 * w1 + a2 * w2) / (w1 + w2)
        }) / (v - u);
        assert!(
            (got - want).norm() < 1e-6,
            "mismatch at {xi:?}: kappa form {got}, quadrature {want}"
        );
    }
    // equal moduli average the two coefficients
    let mid = spec.eval(&[3.0, -3.0]).unwrap();
    assert!((mid - (a1 + a2) / 2.0).norm() < 1e-12);
    // axis points pick out one coefficient
    assert!((spec.eval(&[2.0, 0.0]).unwrap() - a1).norm() < 1e-12);
    assert!((spec.eval(&[0.0, 2.0]).unwrap() - a2).norm() < 1e-12);
    // the zero-exponent endpoint is admissible too
    let spec0 = SymbolSpec::KappaQuotient { u: 0.0, v: 2.0, a1, a2 };
    let got = spec0.eval(&[1.5, -0.5]).unwrap();
    let want = simpson(1e-12, 2.0, 4096, |alpha| {
        let w1 = 1.5f64.powf(alpha);
        let w2 = 0.5f64.powf(alpha);
        (a1 * w1 + a2 * w2) / (w1 + w2)
    }) / 2.0;
    assert!((got - want).norm() < 1e-5);
}

#[test]
fn banuelos_bogdan_reduction_thousand_points() {
    let d = 2;
    let coeffs = [c(0.75, -0.5), c(-1.0, 0.25)];
    let atoms: Vec<SphereAtom> = (0..d)
        .map(|j| {
            let mut dir = vec![0.0; d];
            dir[j] = 1.0;
            SphereAtom { direction: dir, mass: 1.0, value: coeffs[j] }
        })
        .collect();
    let bb = SymbolSpec::BanuelosBogdan { d, levy_atoms: vec![], sphere_atoms: atoms };
    let pq = SymbolSpec::PowerQuotient { d, alpha: 2.0, a: coeffs.to_vec() };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1000 {
        let xi: Vec<f64> = (0..d).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let a = bb.eval(&xi).unwrap();
        let b = pq.eval(&xi).unwrap();
        assert!((a - b).norm() < 1e-12, "mismatch at {xi:?}");
    }
}

#[test]
fn orthogonal_composition_preserves_the_sampled_range_hull() {
    let base = SymbolSpec::PowerQuotient {
        d: 2,
        alpha: 2.0,
        a: vec![c(1.0, 0.0), c(-1.0, 0.0)],
    };
    let theta: f64 = 0.7;
    let rot = vec![
        vec![theta.cos(), -theta.sin()],
        vec![theta.sin(), theta.cos()],
    ];
    let composed = compose(&base, rot).unwrap();
    let rep_base = validate(&base, 2000, 5).unwrap();
    let rep_comp = validate(&composed, 2000, 5).unwrap();
    assert!(rep_comp.even && rep_comp.homogeneous);
    let hull_tol = 0.05;
    assert!((rep_base.range_hull.diameter() - rep_comp.range_hull.diameter()).abs() < hull_tol);
    for &z in rep_comp.range_hull.extreme_points() {
        // every sampled value of the composition lies in (a slightly
        // fattened copy of) the base range hull
        let grown = PointSet::new(
            rep_base
                .range_hull
                .extreme_points()
                .iter()
                .flat_map(|&w| {
                    [
                        w + c(hull_tol, 0.0),
                        w - c(hull_tol, 0.0),
                        w + c(0.0, hull_tol),
                        w - c(0.0, hull_tol),
                    ]
                })
                .collect(),
        )
        .unwrap()
        .convex_hull();
        assert!(grown.contains(z), "composed range escapes: {z}");
    }
}

#[test]
fn padding_then_restricting_reproduces_base_eval() {
    let base = SymbolSpec::SphericalPower {
        d: 2,
        alpha: 1.3,
        sphere_atoms: vec![
            SphereAtom { direction: vec![1.0, 0.0], mass: 1.0, value: c(1.0, 0.0) },
            SphereAtom {
                direction: vec![0.5f64.sqrt(), 0.5f64.sqrt()],
                mass: 0.7,
                value: c(0.0, 1.0),
            },
        ],
    };
    let padded = pad(&base, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let xi2: Vec<f64> = (0..2).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let xi4 = [xi2[0], xi2[1], rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
        assert_eq!(base.eval(&xi2).unwrap(), padded.eval(&xi4).unwrap());
    }
}

#[test]
fn homogeneous_families_are_scale_exact_on_axis_points() {
    let specs: Vec<SymbolSpec> = vec![
        SymbolSpec::PowerQuotient { d: 2, alpha: 1.5, a: vec![c(1.0, 0.0), c(0.0, 1.0)] },
        SymbolSpec::BeurlingAhlfors,
        SymbolSpec::Counterexample { d: 2 },
        SymbolSpec::KappaQuotient { u: 0.1, v: 1.9, a1: c(1.0, 0.0), a2: c(0.0, 0.0) },
    ];
    for spec in &specs {
        for j in 0..2 {
            for c_scale in [0.5, 2.0, 10.0] {
                let mut xi = vec![0.0; 2];
                xi[j] = 3.0;
                let v1 = spec.eval(&xi).unwrap();
                xi[j] *= c_scale;
                let v2 = spec.eval(&xi).unwrap();
                assert_eq!(v1, v2, "{} not scale-exact on axis {j}", spec.tag());
            }
        }
    }
}
