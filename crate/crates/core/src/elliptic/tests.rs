use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::grid::{BoundaryClass, GridSpec, ScalarField};

fn thermo() -> Thermo {
    Thermo::new(298.0, 16.6).unwrap()
}

fn rfield(g: GridSpec, rng: &mut ChaCha8Rng, mut f: impl FnMut(&mut ChaCha8Rng) -> f64) -> ScalarField {
    ScalarField::from_vec(g, (0..g.len()).map(|_| f(rng)).collect()).unwrap()
}

fn l2(a: &ScalarField, b: &ScalarField) -> f64 {
    let g = a.grid();
    let mut s = 0.0;
    for m in 0..g.len() {
        let (i, j, k) = g.coords(m);
        s += g.node_weight(i, j, k) * (a.values()[m] - b.values()[m]).powi(2);
    }
    s.sqrt()
}

fn boundary_of(exact: &ScalarField) -> BoundaryClass {
    BoundaryClass::from_field(exact)
}

/// Poisson with `u* = cos(pi y / ly) cos(pi x / lx)` driven through the
/// charge argument (`-lap u = 4 pi l_B q`).
fn poisson_mms(n: usize) -> (f64, usize) {
    let g = GridSpec::new(n, n, n, 1.0, 1.3, 0.8).unwrap();
    let t = thermo();
    let exact = ScalarField::from_fn(g, |x, y, _| (PI * y / g.ly).cos() * (PI * x / g.lx).cos());
    let k2 = PI * PI * (1.0 / (g.lx * g.lx) + 1.0 / (g.ly * g.ly));
    let charge = exact.scaled(k2 / (4.0 * PI * t.bjerrum()));
    let op = assemble_poisson(&t, &charge, 0.0, None, None, &boundary_of(&exact)).unwrap();
    let (u, stats) = solve(&op, &ScalarField::zeros(g), &MgSettings::default()).unwrap();
    (l2(&u, &exact), stats.cycles)
}

fn np_coefficient(g: &GridSpec) -> impl Fn(f64, f64, f64) -> [f64; 3] + '_ {
    // (D, dD/dx, dD/dy)
    move |x, y, _z| {
        let (sx, cx) = (PI * x / g.lx).sin_cos();
        let (sy, cy) = (PI * y / g.ly).sin_cos();
        [
            1.0 + 0.5 * sy * (1.0 + 0.5 * cx),
            -0.25 * PI / g.lx * sy * sx,
            0.5 * PI / g.ly * cy * (1.0 + 0.5 * cx),
        ]
    }
}

fn np_mms(n: usize) -> (f64, usize) {
    let g = GridSpec::new(n, n, n, 1.2, 1.0, 0.9).unwrap();
    let exact = ScalarField::from_fn(g, |x, y, z| y + (PI * x / g.lx).cos() * (PI * z / g.lz).cos() * (PI * y / g.ly).sin());
    let d = np_coefficient(&g);
    let coef = ScalarField::from_fn(g, |x, y, z| d(x, y, z)[0]);
    let source = ScalarField::from_fn(g, |x, y, z| {
        let (sx, cx) = (PI * x / g.lx).sin_cos();
        let (sy, cy) = (PI * y / g.ly).sin_cos();
        let (sz, cz) = (PI * z / g.lz).sin_cos();
        let ux = -PI / g.lx * sx * cz * sy;
        let uy = 1.0 + PI / g.ly * cx * cz * cy;
        let _uz = -PI / g.lz * cx * sz * sy;
        let lap = -PI * PI * (1.0 / (g.lx * g.lx) + 1.0 / (g.ly * g.ly) + 1.0 / (g.lz * g.lz)) * cx * cz * sy;
        let [dv, dx, dy] = d(x, y, z);
        -(dv * lap + dx * ux + dy * uy)
    });
    let op = StencilOperator::diffusion(&coef, None, &source, &boundary_of(&exact)).unwrap();
    let (u, stats) = solve(&op, &ScalarField::zeros(g), &MgSettings::default()).unwrap();
    (l2(&u, &exact), stats.cycles)
}

#[test]
fn zero_charge_zero_boundary_gives_zero() {
    let g = GridSpec::new(9, 9, 9, 1.0, 1.0, 1.0).unwrap();
    let op = assemble_poisson(&thermo(), &ScalarField::zeros(g), 0.0, None, None, &BoundaryClass::uniform(&g, 0.0, 0.0)).unwrap();
    let (u, stats) = solve(&op, &ScalarField::zeros(g), &MgSettings::default()).unwrap();
    assert_eq!(u.max_abs(), 0.0);
    assert_eq!(stats.cycles, 0);
}

#[test]
fn zero_charge_gives_linear_profile() {
    let g = GridSpec::new(9, 17, 5, 0.7, 2.0, 0.4).unwrap();
    let op = assemble_poisson(&thermo(), &ScalarField::zeros(g), 0.0, None, None, &BoundaryClass::uniform(&g, 0.0, 3.0)).unwrap();
    let tight = MgSettings {
        tolerance: 1e-14,
        ..MgSettings::default()
    };
    let (u, _) = solve(&op, &ScalarField::zeros(g), &tight).unwrap();
    let want = ScalarField::from_fn(g, |_, y, _| 3.0 * y / g.ly);
    assert!(crate::grid::max_abs_diff(&u, &want).unwrap() < 1e-12 * 3.0);
}

#[test]
fn poisson_manufactured_solution_is_second_order() {
    let (e1, c1) = poisson_mms(9);
    let (e2, c2) = poisson_mms(17);
    let (e3, c3) = poisson_mms(33);
    let o1 = (e1 / e2).log2();
    let o2 = (e2 / e3).log2();
    assert!(o1 >= 1.9 && o2 >= 1.9, "orders {o1} {o2}");
    assert!(c1.max(c2).max(c3) <= 25, "{c1} {c2} {c3}");
}

#[test]
fn np_manufactured_solution_is_second_order() {
    let (e1, _) = np_mms(9);
    let (e2, _) = np_mms(17);
    let (e3, c3) = np_mms(33);
    let o1 = (e1 / e2).log2();
    let o2 = (e2 / e3).log2();
    assert!(o1 >= 1.9 && o2 >= 1.9, "orders {o1} {o2}");
    assert!(c3 <= 25);
}

#[test]
fn constant_diffusivity_equal_faces_gives_constant() {
    let g = GridSpec::new(5, 9, 5, 1.0, 1.0, 1.0).unwrap();
    let op = assemble_np(&ScalarField::constant(g, 2.5), &BoundaryClass::uniform(&g, 0.7, 0.7)).unwrap();
    let (r, _) = solve(&op, &ScalarField::zeros(g), &MgSettings::default()).unwrap();
    assert!(r.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
}

#[test]
fn constant_diffusivity_gives_linear_profile() {
    let g = GridSpec::new(5, 9, 5, 1.0, 2.0, 1.0).unwrap();
    let op = assemble_np(&ScalarField::constant(g, 1e8), &BoundaryClass::uniform(&g, 1.0, 0.2)).unwrap();
    let (r, _) = solve(&op, &ScalarField::zeros(g), &MgSettings::default()).unwrap();
    let want = ScalarField::from_fn(g, |_, y, _| 1.0 - 0.8 * y / 2.0);
    assert!(crate::grid::max_abs_diff(&r, &want).unwrap() < 1e-12);
}

#[test]
fn two_slab_matches_series_resistance_profile() {
    let ny = 33;
    let g = GridSpec::new(5, ny, 5, 1.0, 1.0, 1.0).unwrap();
    let (d1, d2) = (1.0, 7.0);
    let jm = ny / 2;
    let coef = ScalarField::from_fn(g, |_, y, _| if y < jm as f64 * g.dy() - 1e-12 { d1 } else { d2 });
    let (a, b) = (1.0, 0.0);
    let op = assemble_np(&coef, &BoundaryClass::uniform(&g, a, b)).unwrap();
    let (r, _) = solve(&op, &ScalarField::zeros(g), &MgSettings::default()).unwrap();
    // interface at the face between node jm-1 and jm
    let yi = (jm as f64 - 0.5) * g.dy();
    let flux = (a - b) / (yi / d1 + (g.ly - yi) / d2);
    let exact = |y: f64| if y <= yi { a - flux * y / d1 } else { b + flux * (g.ly - y) / d2 };
    for j in 0..ny {
        let y = j as f64 * g.dy();
        assert!((r.get(2, j, 2) - exact(y)).abs() < 1e-10, "j={j}");
    }
    let s1 = r.get(2, 2, 2) - r.get(2, 1, 2);
    let s2 = r.get(2, ny - 2, 2) - r.get(2, ny - 3, 2);
    assert!((s1 / s2 - d2 / d1).abs() < 1e-8);
}

#[test]
fn recovers_known_solution_from_its_image() {
    let g = GridSpec::new(9, 17, 9, 1.0, 1.5, 0.9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let coef = rfield(g, &mut rng, |r| r.gen_range(0.5..2.0));
    let known = ScalarField::from_fn(g, |x, y, z| (x + 2.0 * y).sin() + z * z);
    let base = StencilOperator::diffusion(&coef, None, &ScalarField::zeros(g), &boundary_of(&known)).unwrap();
    let mut image = vec![0.0; g.len()];
    base.apply(known.values(), &mut image);
    // turn the image back into a source density
    let mut source = ScalarField::zeros(g);
    for m in 0..g.len() {
        let (i, j, k) = g.coords(m);
        if !base.is_dirichlet(m) {
            source.values_mut()[m] = (image[m] - base.rhs()[m]) / g.node_weight(i, j, k);
        }
    }
    let op = StencilOperator::diffusion(&coef, None, &source, &boundary_of(&known)).unwrap();
    let (x, _) = solve(&op, &ScalarField::zeros(g), &MgSettings::default()).unwrap();
    assert!(crate::grid::max_abs_diff(&x, &known).unwrap() < 1e-9 * known.max_abs());
}

#[test]
fn starting_from_the_solution_takes_no_cycles() {
    let g = GridSpec::new(9, 9, 9, 1.0, 1.0, 1.0).unwrap();
    let op = assemble_np(&ScalarField::constant(g, 1.0), &BoundaryClass::uniform(&g, 1.0, 1.0)).unwrap();
    let (_, stats) = solve(&op, &ScalarField::constant(g, 1.0), &MgSettings::default()).unwrap();
    assert_eq!(stats.cycles, 0);
}

#[test]
fn exhausting_cycles_reports_history() {
    let g = GridSpec::new(17, 17, 17, 1.0, 1.0, 1.0).unwrap();
    let op = assemble_np(&ScalarField::constant(g, 1.0), &BoundaryClass::uniform(&g, 1.0, 0.0)).unwrap();
    let settings = MgSettings {
        max_cycles: 1,
        tolerance: 1e-15,
        ..MgSettings::default()
    };
    match solve(&op, &ScalarField::zeros(g), &settings) {
        Err(Error::SolverDiverged { cycles, history, .. }) => {
            assert_eq!(cycles, 1);
            assert_eq!(history.len(), 2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn nonpositive_diffusivity_is_rejected() {
    let g = GridSpec::new(5, 5, 5, 1.0, 1.0, 1.0).unwrap();
    let mut d = ScalarField::constant(g, 1.0);
    d.set(2, 2, 2, 0.0);
    assert!(matches!(assemble_np(&d, &BoundaryClass::uniform(&g, 0.0, 0.0)), Err(Error::InvalidArgument(_))));
}

#[test]
fn result_independent_of_sweep_count() {
    let g = GridSpec::new(17, 17, 17, 1.0, 1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let coef = rfield(g, &mut rng, |r| r.gen_range(0.2..5.0));
    let op = assemble_np(&coef, &BoundaryClass::uniform(&g, 1.0, 0.3)).unwrap();
    let runs: Vec<ScalarField> = [(1, 1), (2, 2), (3, 3)]
        .iter()
        .map(|&(a, b)| {
            let s = MgSettings {
                pre_sweeps: a,
                post_sweeps: b,
                ..MgSettings::default()
            };
            solve(&op, &ScalarField::zeros(g), &s).unwrap().0
        })
        .collect();
    for r in &runs[1..] {
        assert!(crate::grid::max_abs_diff(r, &runs[0]).unwrap() < 1e-8);
    }
}

#[test]
fn plane_fluxes_are_conserved_for_rough_coefficients() {
    let g = GridSpec::new(9, 33, 17, 1.0, 3.0, 1.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let coef = rfield(g, &mut rng, |r| 10f64.powf(r.gen_range(-2.0..2.0)));
    let op = assemble_np(&coef, &BoundaryClass::uniform(&g, 2.0, 0.5)).unwrap();
    let settings = MgSettings {
        tolerance: 1e-13,
        ..MgSettings::default()
    };
    let (r, _) = solve(&op, &ScalarField::zeros(g), &settings).unwrap();
    let f = op.plane_fluxes(r.values());
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    for v in &f {
        assert!((v - mean).abs() <= 1e-8 * mean.abs(), "{v} vs {mean}");
    }
}

#[test]
fn mirror_symmetric_inputs_give_symmetric_solution() {
    let g = GridSpec::new(17, 17, 9, 1.0, 1.0, 0.6).unwrap();
    let coef = ScalarField::from_fn(g, |x, y, z| 1.0 + (x - 0.5).powi(2) * 4.0 + y + z);
    let charge = ScalarField::from_fn(g, |x, y, _| ((x - 0.5) * 6.0).cos() * y);
    let op = StencilOperator::diffusion(&coef, None, &charge, &BoundaryClass::uniform(&g, 0.2, -0.4)).unwrap();
    let (u, _) = solve(&op, &ScalarField::zeros(g), &MgSettings::default()).unwrap();
    for i in 0..g.nx {
        for j in 0..g.ny {
            for k in 0..g.nz {
                let d = (u.get(i, j, k) - u.get(g.nx - 1 - i, j, k)).abs();
                assert!(d < 1e-9, "{d}");
            }
        }
    }
}

#[test]
fn surface_charge_integrates_to_its_total() {
    // the lumped source over the z = 0 layer carries rho_f * area
    let g = GridSpec::new(9, 9, 9, 1.0, 2.0, 1.5).unwrap();
    let t = thermo();
    let op = assemble_poisson(&t, &ScalarField::zeros(g), 0.3, None, None, &BoundaryClass::uniform(&g, 0.0, 0.0)).unwrap();
    let mut total = 0.0;
    for m in 0..g.len() {
        let (_, j, k) = g.coords(m);
        if k == 0 && j > 0 && j < g.ny - 1 {
            total += op.rhs()[m];
        }
    }
    let interior_area = g.lx * (g.ly - g.dy());
    assert!((total - 4.0 * PI * t.bjerrum() * 0.3 * interior_area).abs() < 1e-10 * total);
}

#[test]
fn reaction_term_screens_the_profile() {
    // (-d2/dy2 + k^2) u = 0 with u(0) = 1, u(L) = 0 -> sinh profile
    let g = GridSpec::new(5, 129, 5, 1.0, 2.0, 1.0).unwrap();
    let k2 = 4.0;
    let op = StencilOperator::diffusion(
        &ScalarField::constant(g, 1.0),
        Some(&ScalarField::constant(g, k2)),
        &ScalarField::zeros(g),
        &BoundaryClass::uniform(&g, 1.0, 0.0),
    )
    .unwrap();
    let (u, _) = solve(&op, &ScalarField::zeros(g), &MgSettings::default()).unwrap();
    let k = k2.sqrt();
    for j in 0..g.ny {
        let y = j as f64 * g.dy();
        let want = (k * (g.ly - y)).sinh() / (k * g.ly).sinh();
        assert!((u.get(2, j, 2) - want).abs() < 1e-4);
    }
}

#[test]
fn slotboom_identity_and_round_trip() {
    let g = GridSpec::new(5, 5, 5, 1.0, 1.0, 1.0).unwrap();
    let t = thermo();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rho = rfield(g, &mut rng, |r| r.gen_range(1e-6..1.0));
    let zero = ScalarField::zeros(g);
    let (rb, db) = slotboom_forward(&rho, 1.0, 3.0, &zero, &zero, &zero, &t).unwrap();
    assert_eq!(rb.values(), rho.values());
    assert!(db.values().iter().all(|&d| d == 3.0));
    let u = rfield(g, &mut rng, |r| r.gen_range(-5.0..5.0));
    let mi = rfield(g, &mut rng, |r| r.gen_range(-0.1..0.1));
    let me = rfield(g, &mut rng, |r| r.gen_range(-0.1..0.1));
    let (rb, db) = slotboom_forward(&rho, -1.0, 3.0, &u, &mi, &me, &t).unwrap();
    let back = slotboom_invert(&rb, -1.0, &u, &mi, &me, &t).unwrap();
    for m in 0..g.len() {
        let r = rho.values()[m];
        assert!((back.values()[m] - r).abs() <= 1e-14 * r);
        assert!((rb.values()[m] * db.values()[m] - 3.0 * r).abs() <= 4e-16 * 3.0 * r);
    }
}

#[test]
fn slotboom_exponent_is_clipped() {
    let g = GridSpec::new(4, 4, 4, 1.0, 1.0, 1.0).unwrap();
    let t = thermo();
    let u = ScalarField::constant(g, 900.0);
    let z = ScalarField::zeros(g);
    let chi = slotboom_exponent(1.0, &u, &z, &z, &t).unwrap();
    assert!(chi.values().iter().all(|&c| c == EXPONENT_CLAMP));
    let (rb, db) = slotboom_forward(&ScalarField::constant(g, 1.0), -1.0, 1.0, &u, &z, &z, &t).unwrap();
    assert!(rb.values().iter().chain(db.values()).all(|v| v.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_is_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GridSpec::new(rng.gen_range(4..8), rng.gen_range(4..8), rng.gen_range(4..8), 1.0, 1.3, 0.7).unwrap();
        let coef = rfield(g, &mut rng, |r| r.gen_range(0.1..10.0));
        let reac = rfield(g, &mut rng, |r| r.gen_range(0.0..3.0));
        let op = StencilOperator::diffusion(&coef, Some(&reac), &ScalarField::zeros(g), &BoundaryClass::uniform(&g, 0.0, 0.0)).unwrap();
        let mut x: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for m in 0..g.len() {
            if op.is_dirichlet(m) {
                x[m] = 0.0;
                y[m] = 0.0;
            }
        }
        let mut ax = vec![0.0; g.len()];
        let mut ay = vec![0.0; g.len()];
        op.apply(&x, &mut ax);
        op.apply(&y, &mut ay);
        let a: f64 = ax.iter().zip(&y).map(|(p, q)| p * q).sum();
        let b: f64 = x.iter().zip(&ay).map(|(p, q)| p * q).sum();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    }
}
