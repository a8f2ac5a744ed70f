//! Worked examples checked through the public API only.

use std::f64::consts::PI;

use stokes_darcy::cases::{inflow_profile, kappa_field};
use stokes_darcy::verify::{patch_test, patch_test_with_flux};
use stokes_darcy::{
    assemble, basis, build_layout, convergence_sweep, generate_mesh, quad, read_mesh, run_demo, solve, write_mesh,
    CaseDefinition, CaseId, EntityKind, Error, ExactSolution, FacetClass, ProblemConfig, Region, Space, SweepConfig,
};

#[test]
fn two_by_two_mesh() {
    let mesh = generate_mesh(2).unwrap();
    assert_eq!(mesh.num_cells(), 8);
    let stokes = mesh.cells().iter().filter(|c| c.region == Region::Stokes).count();
    assert_eq!(stokes, 4);
    assert_eq!(mesh.count_class(FacetClass::Interface), 2);
    for c in mesh.cells() {
        assert!((c.area - 0.125).abs() < 1e-15);
    }
    let total: f64 = mesh.cells().iter().map(|c| c.area).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(matches!(generate_mesh(3), Err(Error::InvalidParameter(_))));
}

#[test]
fn mesh_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("n2.txt");
    let mesh = generate_mesh(2).unwrap();
    write_mesh(&mesh, &path).unwrap();
    assert_eq!(read_mesh(&path).unwrap(), mesh);
}

#[test]
fn mesh_file_with_straddling_cell() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    std::fs::write(&path, "vertices 3 / cells 1\n0 0\n1 0\n0 1\n0 1 2 s\n").unwrap();
    match read_mesh(&path) {
        Err(Error::Validation { message, .. }) => assert_eq!(message, "cell crosses interface"),
        other => panic!("expected validation error, got {other:?}"),
    }
    std::fs::write(&path, "vertices 3 / cells 1\n0 0\n1 0\n0 1\n0 1 2 q\n").unwrap();
    assert!(matches!(read_mesh(&path), Err(Error::Parse { line: 5, .. })));
}

#[test]
fn demo_facet_classes() {
    let mesh = generate_mesh(4).unwrap().classify(CaseId::SurfaceSubsurface).unwrap();
    let v = mesh.vertices();
    for f in mesh.facets() {
        let [a, b] = f.vertices.map(|i| v[i]);
        if a[1] == 0.5 && b[1] == 0.5 {
            assert_eq!(f.class, FacetClass::Interface);
        }
        if a[0] == 0.0 && b[0] == 0.0 && a[1].min(b[1]) >= 0.5 {
            assert_eq!(f.class, FacetClass::GammaS1);
        }
        if a[1] == 0.0 && b[1] == 0.0 {
            assert_eq!(f.class, FacetClass::GammaD2);
        }
    }
}

#[test]
fn reference_element() {
    let p1 = basis(EntityKind::Triangle, 1).unwrap();
    assert_eq!(p1.dim(), 3);
    for (i, &x) in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
        let vals = p1.eval(x);
        for (j, v) in vals.iter().enumerate() {
            assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
        }
    }
    assert_eq!(basis(EntityKind::Triangle, 3).unwrap().dim(), 10);

    let integrate = |kind, degree, f: &dyn Fn([f64; 2]) -> f64| {
        let q = quad(kind, degree).unwrap();
        q.points.iter().zip(&q.weights).map(|(p, w)| w * f(*p)).sum::<f64>()
    };
    assert!((integrate(EntityKind::Triangle, 0, &|_| 1.0) - 0.5).abs() < 1e-15);
    assert!((integrate(EntityKind::Triangle, 2, &|p| p[0]) - 1.0 / 6.0).abs() < 1e-15);
    assert!((integrate(EntityKind::Triangle, 2, &|p| p[0] * p[1]) - 1.0 / 24.0).abs() < 1e-15);
    assert!((integrate(EntityKind::Segment, 3, &|p| p[0].powi(3)) - 0.25).abs() < 1e-15);
    assert!(quad(EntityKind::Triangle, 21).is_err());
}

#[test]
fn manufactured_values() {
    let e = ExactSolution::new(1.0, 1.0);
    let u = e.u_s([0.5, 0.75]);
    assert!((u[0] + 0.375f64.exp() / (2.0 * PI * PI)).abs() < 1e-14);
    assert!((u[0] + 0.07371).abs() < 1e-5);
    assert!(u[1].abs() < 1e-14);
    assert!((e.f_d([0.0, 0.0]) - (4.0 * PI * PI - 1.0) / (2.0 * PI)).abs() < 1e-12);
    for kappa in [1.0, 1e3] {
        let e = ExactSolution::new(2.0, kappa);
        assert!((e.alpha() / kappa.sqrt() - 2.0 * (1.0 + 4.0 * PI * PI) / 2.0).abs() < 1e-12);
    }
}

#[test]
fn demo_data() {
    assert!((kappa_field([0.0, 0.0]) - 800.0).abs() < 1e-12);
    assert!((inflow_profile([0.0, 0.75])[0] - 0.1125).abs() < 1e-15);
}

#[test]
fn small_manufactured_solve() {
    let mesh = generate_mesh(2).unwrap();
    let config = ProblemConfig::new(CaseDefinition::manufactured(1.0, 1.0), 1).with_beta(10.0);
    let layout = build_layout(&mesh, 1, &config.case).unwrap();
    assert_eq!(layout.block(Space::Velocity).len(), 48);
    assert_eq!(layout.block(Space::Pressure).len(), 8);
    assert_eq!(layout.block(Space::Multiplier).len(), 1);
    let system = assemble(&mesh, &layout, &config).unwrap();
    let a = solve(&system, &layout).unwrap();
    assert!(a.residual <= 1e-10);
    assert!(a.pressure_integral(&mesh).abs() <= 1e-10);
    let b = solve(&system, &layout).unwrap();
    assert_eq!(a.values(), b.values());
}

#[test]
fn patch_tests() {
    let mesh = generate_mesh(2).unwrap();
    for k in [1, 3] {
        let r = patch_test(&mesh, k, 1.0, 1.0).unwrap();
        assert!(r.passed, "k={k}: {:?} {:.2e}", r.worst_block, r.worst_error);
    }
    assert!(!patch_test_with_flux(&mesh, 1, 1.0, 1.0, 0.0).unwrap().passed);
}

#[test]
fn single_level_has_no_rates() {
    let table = convergence_sweep(&SweepConfig::new(vec![4], 1, 1.0, 1.0)).unwrap();
    let csv = table.to_csv();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[3], "");
        assert_eq!(cols[5], "");
    }
}

#[test]
fn velocity_errors_independent_of_kappa() {
    let a = convergence_sweep(&SweepConfig::new(vec![4, 8], 3, 1.0, 1.0)).unwrap();
    let b = convergence_sweep(&SweepConfig::new(vec![4, 8], 3, 1.0, 1e3)).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!((x.stokes.velocity / y.stokes.velocity - 1.0).abs() < 0.02);
        assert!((x.darcy.velocity / y.darcy.velocity - 1.0).abs() < 0.02);
    }
}

#[test]
fn demo_flux_balance() {
    let mesh = generate_mesh(8).unwrap();
    let r = run_demo(&mesh, 2).unwrap();
    assert!(r.flux.relative_imbalance() <= 1e-8);
    assert!(r.residuals.max_divergence() <= 1e-9);
    assert!(r.interface_pressure_jump > 10.0 * r.fields.residual);
}
