use super::*;
use crate::cdft::StationarySites;
use crate::grid::{integrate, max_abs_diff};

fn ion(name: &str, valence: i32, bulk: f64) -> SpeciesSpec {
    SpeciesSpec {
        name: name.into(),
        valence,
        diameter: 0.1,
        diffusion: 1e-6,
        bulk_density: bulk,
        mobile: true,
        activity_size: Some(0.4),
    }
}

fn pair(bulk: f64) -> Vec<SpeciesSpec> {
    vec![ion("plus", 1, bulk), ion("minus", -1, bulk)]
}

struct Setup {
    grid: GridSpec,
    species: Vec<SpeciesSpec>,
    surface_charge: f64,
    bias: f64,
    site: Option<[f64; 3]>,
}

impl Setup {
    fn new(grid: GridSpec) -> Self {
        Self {
            grid,
            species: pair(0.05),
            surface_charge: 0.0,
            bias: 0.0,
            site: None,
        }
    }

    fn build(&self) -> Problem {
        let thermo = Thermo::new(298.0, 16.6).unwrap();
        let (wells, sites) = match self.site {
            Some(pos) => {
                let s = StationarySites {
                    positions: vec![pos],
                    sharpness: StationarySites::default_sharpness(0.2),
                };
                let w = SquareWellSpec {
                    species: 0,
                    sites: 0,
                    depth: 0.1,
                    contact: 0.15,
                    gamma: 1.2,
                };
                (vec![w], vec![s.density(&self.grid)])
            }
            None => (Vec::new(), Vec::new()),
        };
        let settings = FunctionalSettings {
            coulomb: false,
            ..FunctionalSettings::default()
        };
        Problem::new(
            self.grid,
            thermo,
            self.species.clone(),
            &wells,
            &sites,
            settings,
            self.surface_charge,
            self.bias,
            MgSettings::default(),
        )
        .unwrap()
    }
}

fn small_grid() -> GridSpec {
    GridSpec::new(9, 17, 9, 1.0, 2.0, 1.0).unwrap()
}

#[test]
fn neutral_free_system_stays_at_bulk() {
    // vanishing diameters: no hard-sphere or correlation terms at the faces
    let mut s = Setup::new(small_grid());
    for sp in &mut s.species {
        sp.diameter = 1e-4;
    }
    let p = s.build();
    let (st, rep) = equilibrium_init(&p, &GummelSettings::default()).unwrap();
    assert!(rep.equilibrium_iterations <= 2);
    assert!(st.u.max_abs() < 1e-12);
    for (r, s) in st.rho.iter().zip(&p.species) {
        assert!(r.values().iter().all(|v| (v / s.bulk_density - 1.0).abs() < 1e-12));
    }
}

#[test]
fn zero_bias_converges_from_the_seed() {
    let mut s = Setup::new(small_grid());
    s.surface_charge = 0.05;
    s.site = Some([0.5, 1.0, 0.5]);
    let p = s.build();
    let out = run_to_convergence(&p, &GummelSettings::default()).unwrap();
    assert!(out.report.converged);
    assert!(out.report.iterations <= 2, "{} iterations", out.report.iterations);
}

#[test]
fn surface_charge_is_screened() {
    // Debye length ~0.08 nm; the grounded y faces take a share of order
    // 2 lambda_D / ly of the field lines
    let grid = GridSpec::new(4, 161, 33, 0.3, 32.0, 1.0).unwrap();
    let mut s = Setup::new(grid);
    s.species = pair(2.0);
    s.surface_charge = 0.05;
    let p = s.build();
    let (st, _) = equilibrium_init(&p, &GummelSettings::default()).unwrap();
    let charge = p.functional.charge_density(&st.rho).unwrap();
    let fixed = 0.05 * grid.lx * grid.ly;
    let mobile = integrate(&charge);
    assert!((mobile + fixed).abs() < 0.01 * fixed, "mobile {mobile} fixed {fixed}");
}

#[test]
fn mirror_symmetric_inputs_give_symmetric_state() {
    let mut s = Setup::new(small_grid());
    s.surface_charge = 0.05;
    s.site = Some([0.5, 1.0, 0.5]);
    s.bias = 0.01;
    let p = s.build();
    let settings = GummelSettings {
        max_iterations: 5,
        ..GummelSettings::default()
    };
    let out = run_to_convergence(&p, &settings).unwrap();
    let g = p.grid;
    let mut worst = 0.0_f64;
    for f in std::iter::once(&out.state.u).chain(&out.state.rho) {
        let scale = f.max_abs();
        for i in 0..g.nx {
            for j in 0..g.ny {
                for k in 0..g.nz {
                    worst = worst.max((f.get(i, j, k) - f.get(g.nx - 1 - i, j, k)).abs() / scale);
                }
            }
        }
    }
    assert!(worst < 1e-10, "asymmetry {worst}");
}

fn biased_setup() -> Problem {
    let mut s = Setup::new(small_grid());
    s.surface_charge = 0.05;
    s.site = Some([0.5, 1.0, 0.5]);
    s.bias = 0.01;
    s.build()
}

#[test]
fn zero_potential_relaxation_freezes_u() {
    let p = biased_setup();
    let settings = GummelSettings {
        lambda_u: 0.0,
        ..GummelSettings::default()
    };
    let (st, _) = equilibrium_init(&p, &settings).unwrap();
    let mut times = StageTimes::default();
    let (next, rec, _, _) = gummel_step(&p, &st, &settings, &mut times).unwrap();
    assert_eq!(rec.du, 0.0);
    assert_eq!(next.u, st.u);
}

#[test]
fn fixed_point_is_stationary() {
    let p = biased_setup();
    let settings = GummelSettings::default();
    let out = run_to_convergence(&p, &settings).unwrap();
    assert!(out.report.converged);
    let mut times = StageTimes::default();
    let (next, rec, _, _) = gummel_step(&p, &out.state, &settings, &mut times).unwrap();
    assert!(rec.du <= settings.tol_u && rec.drho <= settings.tol_rho, "{rec:?}");
    assert!(max_abs_diff(&next.u, &out.state.u).unwrap() <= settings.tol_u);
}

#[test]
fn converged_state_is_consistent() {
    let p = biased_setup();
    let settings = GummelSettings::default();
    let out = run_to_convergence(&p, &settings).unwrap();
    let st = &out.state;
    for r in &st.rho {
        assert!(r.min() >= 0.0);
    }
    // Dirichlet potential faces hold exactly
    let g = p.grid;
    for i in 0..g.nx {
        for k in 0..g.nz {
            assert_eq!(st.u.get(i, 0, k), 0.0);
            assert_eq!(st.u.get(i, g.ny - 1, k), p.bias_reduced());
        }
    }
    // steady flow is the same through every plane
    for i in 0..p.species.len() {
        let f = plane_flows(&p, st, i).unwrap();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        for v in &f {
            assert!((v - mean).abs() <= 1e-8 * mean.abs().max(1e-300));
        }
    }
    // the tail of the potential updates decays
    let h = &out.report.history;
    let tail = &h[h.len().saturating_sub(10)..];
    for w in tail.windows(2) {
        assert!(w[1].du <= 1.1 * w[0].du, "{:?}", tail);
    }
}

#[test]
fn runs_are_deterministic() {
    let p = biased_setup();
    let settings = GummelSettings {
        max_iterations: 4,
        ..GummelSettings::default()
    };
    let a = run_to_convergence(&p, &settings).unwrap();
    let b = run_to_convergence(&p, &settings).unwrap();
    assert_eq!(a.state.u, b.state.u);
    assert_eq!(a.state.rho, b.state.rho);
    for (x, y) in a.report.history.iter().zip(&b.report.history) {
        assert_eq!(x, y);
    }
}

#[test]
fn iteration_cap_returns_partial_state() {
    let p = biased_setup();
    let settings = GummelSettings {
        max_iterations: 2,
        ..GummelSettings::default()
    };
    let out = run_to_convergence(&p, &settings).unwrap();
    assert!(!out.report.converged);
    assert_eq!(out.report.iterations, 2);
    assert_eq!(out.state.iteration, 2);
}

#[test]
fn doubling_the_cap_does_not_change_a_converged_run() {
    let p = biased_setup();
    let a = run_to_convergence(&p, &GummelSettings::default()).unwrap();
    let settings = GummelSettings {
        max_iterations: 1000,
        ..GummelSettings::default()
    };
    let b = run_to_convergence(&p, &settings).unwrap();
    assert_eq!(a.state.u, b.state.u);
    assert_eq!(a.report.iterations, b.report.iterations);
}

#[test]
fn uncharged_species_diffuses_flat_between_equal_reservoirs() {
    let mut s = Setup::new(small_grid());
    // a vanishing diameter switches the hard-sphere term off
    s.species = vec![SpeciesSpec {
        diameter: 1e-4,
        ..ion("neutral", 0, 0.05)
    }];
    s.bias = 0.05;
    let p = s.build();
    let out = run_to_convergence(&p, &GummelSettings::default()).unwrap();
    let r = &out.state.rho[0];
    assert!(r.values().iter().all(|v| (v / 0.05 - 1.0).abs() < 1e-10));
    let g = p.grid;
    let scale = p.diffusion_nm(0) * 0.05 * g.lx * g.lz / g.ly;
    for f in plane_flows(&p, &out.state, 0).unwrap() {
        assert!(f.abs() < 1e-10 * scale, "{f} vs {scale}");
    }
}

#[test]
fn checkpoint_round_trip() {
    let p = biased_setup();
    let settings = GummelSettings {
        max_iterations: 1,
        ..GummelSettings::default()
    };
    let out = run_to_convergence(&p, &settings).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_checkpoint(dir.path(), &out.state).unwrap();
    let back = read_checkpoint(dir.path()).unwrap();
    assert_eq!(back.u, out.state.u);
    assert_eq!(back.rho, out.state.rho);
    assert_eq!(back.mu_ex, out.state.mu_ex);
    assert_eq!(back.rho_bar, out.state.rho_bar);
    assert_eq!(back.iteration, 1);
    // a restart from the dump continues to the same answer
    let full = run_to_convergence(&p, &GummelSettings::default()).unwrap();
    let resumed = run_from_state(&p, &GummelSettings::default(), back).unwrap();
    assert!(max_abs_diff(&full.state.u, &resumed.state.u).unwrap() < 1e-5);
}

#[test]
fn periodic_checkpoints_are_written() {
    let p = biased_setup();
    let dir = tempfile::tempdir().unwrap();
    let settings = GummelSettings {
        max_iterations: 4,
        checkpoint_every: 2,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..GummelSettings::default()
    };
    run_to_convergence(&p, &settings).unwrap();
    assert!(dir.path().join("iter_00002/manifest.json").exists());
    assert!(dir.path().join("iter_00004/manifest.json").exists());
}

#[test]
fn relaxation_outside_unit_interval_is_rejected() {
    let s = GummelSettings {
        lambda_u: 1.5,
        ..GummelSettings::default()
    };
    assert!(matches!(s.validate(), Err(Error::Config(_))));
}
