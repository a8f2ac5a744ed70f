//! Manufactured solution, error norms, conservation checks, convergence
//! sweeps, the patch test and the coercivity probe.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::assembly::{assemble, velocity_block, ProblemConfig, DATA_QUAD_DEGREE};
use crate::cases::{CaseDefinition, CaseId, DarcyBc, Permeability, StokesBc};
use crate::error::{Error, Result};
use crate::geometry::{lerp, CellMap};
use crate::mesh::{generate_mesh_with, FacetClass, Mesh, MeshOptions, Point, Region, GEOM_TOL};
use crate::refelem::{quad, BasisSet, EntityKind, QuadRule, Tabulation, MAX_QUAD_DEGREE};
use crate::solve::{solve, SolutionFields};
use crate::spaces::{build_layout, facet_node_point, DofLayout, Space};

/// Closed-form fields a discrete solution is compared against.
pub trait ReferenceSolution {
    fn velocity(&self, region: Region, x: Point) -> Point;
    /// Rows are components: `g[c][d] = d u_c / d x_d`.
    fn velocity_grad(&self, region: Region, x: Point) -> [[f64; 2]; 2];
    fn pressure(&self, region: Region, x: Point) -> f64;
    /// Darcy source `f^d = -div u`.
    fn darcy_source(&self, x: Point) -> f64;
}

/// The coupled manufactured solution for constant `mu` and `kappa`.
///
/// With `s = sin(pi x)`, `c = cos(pi x)` and `e = exp(y / 2)`:
/// Stokes velocity `(-s e / (2 pi^2), c e / pi)`, Stokes pressure
/// `(kappa mu - 2) c e / (kappa pi)`, Darcy velocity `(-2 s e, c e / pi)` and
/// Darcy pressure `-2 c e / (kappa pi)`. Both pressures have zero mean over
/// the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolution {
    pub mu: f64,
    pub kappa: f64,
}

fn trig(x: Point) -> (f64, f64, f64) {
    ((PI * x[0]).sin(), (PI * x[0]).cos(), (0.5 * x[1]).exp())
}

impl ExactSolution {
    pub fn new(mu: f64, kappa: f64) -> Self {
        ExactSolution { mu, kappa }
    }

    /// Slip coefficient that makes the tangential interface condition hold.
    pub fn alpha(&self) -> f64 {
        self.mu * self.kappa.sqrt() * (1.0 + 4.0 * PI * PI) / 2.0
    }

    pub fn u_s(&self, x: Point) -> Point {
        let (s, c, e) = trig(x);
        [-s * e / (2.0 * PI * PI), c * e / PI]
    }

    pub fn grad_u_s(&self, x: Point) -> [[f64; 2]; 2] {
        let (s, c, e) = trig(x);
        [
            [-c * e / (2.0 * PI), -s * e / (4.0 * PI * PI)],
            [-s * e, c * e / (2.0 * PI)],
        ]
    }

    pub fn p_s(&self, x: Point) -> f64 {
        let (_, c, e) = trig(x);
        (self.kappa * self.mu - 2.0) / (self.kappa * PI) * c * e
    }

    pub fn grad_p_s(&self, x: Point) -> Point {
        let (s, c, e) = trig(x);
        let a = (self.kappa * self.mu - 2.0) / (self.kappa * PI);
        [-a * PI * s * e, 0.5 * a * c * e]
    }

    pub fn u_d(&self, x: Point) -> Point {
        let (s, c, e) = trig(x);
        [-2.0 * s * e, c * e / PI]
    }

    pub fn grad_u_d(&self, x: Point) -> [[f64; 2]; 2] {
        let (s, c, e) = trig(x);
        [[-2.0 * PI * c * e, -s * e], [-s * e, c * e / (2.0 * PI)]]
    }

    pub fn p_d(&self, x: Point) -> f64 {
        let (_, c, e) = trig(x);
        -2.0 / (self.kappa * PI) * c * e
    }

    pub fn grad_p_d(&self, x: Point) -> Point {
        let (s, c, e) = trig(x);
        [2.0 / self.kappa * s * e, -c * e / (self.kappa * PI)]
    }

    /// `f^s = -div(2 mu eps(u)) + grad p`; the velocity is divergence free and
    /// `Laplace(u_s) = (1/4 - pi^2) u_s`.
    pub fn f_s(&self, x: Point) -> Point {
        let u = self.u_s(x);
        let g = self.grad_p_s(x);
        let m = self.mu * (PI * PI - 0.25);
        [m * u[0] + g[0], m * u[1] + g[1]]
    }

    /// `f^d = -div u_d`.
    pub fn f_d(&self, x: Point) -> f64 {
        let (_, c, e) = trig(x);
        (4.0 * PI * PI - 1.0) / (2.0 * PI) * c * e
    }

    /// Case definition with velocity data on the Stokes boundary, normal-flux
    /// data on the Darcy boundary and the mean-pressure constraint.
    pub fn case_definition(&self) -> CaseDefinition {
        let me = *self;
        let mut stokes_bc = BTreeMap::new();
        stokes_bc.insert(FacetClass::GammaS, StokesBc::Velocity(Arc::new(move |x| me.u_s(x))));
        let mut darcy_bc = BTreeMap::new();
        darcy_bc.insert(
            FacetClass::GammaD,
            DarcyBc::NormalFlux(Arc::new(move |x| {
                let u = me.u_d(x);
                let n = unit_square_normal(x);
                u[0] * n[0] + u[1] * n[1]
            })),
        );
        CaseDefinition {
            id: CaseId::Manufactured,
            name: "manufactured".into(),
            mu: self.mu,
            kappa: Permeability::Constant(self.kappa),
            alpha: self.alpha(),
            f_s: Arc::new(move |x| me.f_s(x)),
            f_d: Arc::new(move |x| me.f_d(x)),
            stokes_bc,
            darcy_bc,
            mean_constraint: true,
        }
    }

    /// Largest relative mismatch between the closed-form derivatives and
    /// central differences of the closed-form fields (step `1e-6`).
    pub fn finite_difference_mismatch(&self, points: &[Point]) -> f64 {
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut check = |got: f64, want: f64| {
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        };
        let shift = |x: Point, d: usize, t: f64| {
            let mut y = x;
            y[d] += t;
            y
        };
        for &x in points {
            let fd = |f: &dyn Fn(Point) -> f64, d: usize| (f(shift(x, d, h)) - f(shift(x, d, -h))) / (2.0 * h);
            let gs = self.grad_u_s(x);
            let gd = self.grad_u_d(x);
            for c in 0..2 {
                for d in 0..2 {
                    check(fd(&|y| self.u_s(y)[c], d), gs[c][d]);
                    check(fd(&|y| self.u_d(y)[c], d), gd[c][d]);
                }
            }
            for d in 0..2 {
                check(fd(&|y| self.p_s(y), d), self.grad_p_s(x)[d]);
                check(fd(&|y| self.p_d(y), d), self.grad_p_d(x)[d]);
            }
            // Second derivatives as differences of the verified gradient; a
            // direct second difference at this step is round-off dominated.
            for c in 0..2 {
                let lap: f64 = (0..2).map(|d| fd(&|y| self.grad_u_s(y)[c][d], d)).sum();
                let div_t: f64 = (0..2).map(|d| fd(&|y| self.grad_u_s(y)[d][c], d)).sum();
                let want = -self.mu * (lap + div_t) + fd(&|y| self.p_s(y), c);
                check(self.f_s(x)[c], want);
            }
            let div: f64 = (0..2).map(|d| fd(&|y| self.u_d(y)[d], d)).sum();
            check(self.f_d(x), -div);
        }
        worst
    }

    /// Residuals of the interface conditions (normal velocity continuity,
    /// normal stress balance, slip law) at points on `y = 1/2`.
    pub fn interface_mismatch(&self, xs: &[f64]) -> f64 {
        let n = [0.0, -1.0];
        let t = [1.0, 0.0];
        let mut worst: f64 = 0.0;
        for &x1 in xs {
            let x = [x1, 0.5];
            let us = self.u_s(x);
            let ud = self.u_d(x);
            worst = worst.max((us[1] - ud[1]).abs());
            let g = self.grad_u_s(x);
            let eps = |a: usize, b: usize| 0.5 * (g[a][b] + g[b][a]);
            let eps_n = [eps(0, 0) * n[0] + eps(0, 1) * n[1], eps(1, 0) * n[0] + eps(1, 1) * n[1]];
            let nn = eps_n[0] * n[0] + eps_n[1] * n[1];
            worst = worst.max((self.p_s(x) - 2.0 * self.mu * nn - self.p_d(x)).abs());
            let nt = eps_n[0] * t[0] + eps_n[1] * t[1];
            let slip = self.alpha() / self.kappa.sqrt() * (us[0] * t[0] + us[1] * t[1]);
            worst = worst.max((-2.0 * self.mu * nt - slip).abs());
        }
        worst
    }
}

impl ReferenceSolution for ExactSolution {
    fn velocity(&self, region: Region, x: Point) -> Point {
        match region {
            Region::Stokes => self.u_s(x),
            Region::Darcy => self.u_d(x),
        }
    }

    fn velocity_grad(&self, region: Region, x: Point) -> [[f64; 2]; 2] {
        match region {
            Region::Stokes => self.grad_u_s(x),
            Region::Darcy => self.grad_u_d(x),
        }
    }

    fn pressure(&self, region: Region, x: Point) -> f64 {
        match region {
            Region::Stokes => self.p_s(x),
            Region::Darcy => self.p_d(x),
        }
    }

    fn darcy_source(&self, x: Point) -> f64 {
        self.f_d(x)
    }
}

/// Outward normal of the unit square at a boundary point away from corners.
fn unit_square_normal(x: Point) -> Point {
    if x[1] < GEOM_TOL {
        [0.0, -1.0]
    } else if x[1] > 1.0 - GEOM_TOL {
        [0.0, 1.0]
    } else if x[0] < GEOM_TOL {
        [-1.0, 0.0]
    } else {
        [1.0, 0.0]
    }
}

/// Velocity `(0, 1)`, constant Stokes pressure and linear Darcy pressure
/// `-(y - c) / kappa` with `c` chosen for zero mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSolution {
    pub mu: f64,
    pub kappa: f64,
}

impl PatchSolution {
    const C: f64 = 0.375;

    pub fn case_definition(&self, bottom_flux: f64) -> CaseDefinition {
        let mut stokes_bc = BTreeMap::new();
        stokes_bc.insert(FacetClass::GammaS, StokesBc::Velocity(Arc::new(|_| [0.0, 1.0])));
        let mut darcy_bc = BTreeMap::new();
        darcy_bc.insert(
            FacetClass::GammaD,
            DarcyBc::NormalFlux(Arc::new(move |x| if x[1] < GEOM_TOL { bottom_flux } else { 0.0 })),
        );
        CaseDefinition {
            id: CaseId::Manufactured,
            name: "patch".into(),
            mu: self.mu,
            kappa: Permeability::Constant(self.kappa),
            alpha: self.mu * self.kappa.sqrt(),
            f_s: Arc::new(|_| [0.0, 0.0]),
            f_d: Arc::new(|_| 0.0),
            stokes_bc,
            darcy_bc,
            mean_constraint: true,
        }
    }
}

impl ReferenceSolution for PatchSolution {
    fn velocity(&self, _: Region, _: Point) -> Point {
        [0.0, 1.0]
    }

    fn velocity_grad(&self, _: Region, _: Point) -> [[f64; 2]; 2] {
        [[0.0; 2]; 2]
    }

    fn pressure(&self, region: Region, x: Point) -> f64 {
        match region {
            Region::Stokes => -(0.5 - Self::C) / self.kappa,
            Region::Darcy => -(x[1] - Self::C) / self.kappa,
        }
    }

    fn darcy_source(&self, _: Point) -> f64 {
        0.0
    }
}

/// Errors restricted to one subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegionErrors {
    /// `||u - u_h||`.
    pub velocity: f64,
    /// `||p - p_h||`.
    pub pressure: f64,
    /// `||div u_h||` (Stokes) or `||div u_h + P f^d||` (Darcy).
    pub divergence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub k: usize,
    pub cells: usize,
    /// Nominal mesh size used for rates (`1 / n` for structured meshes).
    pub h: f64,
    pub h_max: f64,
    pub stokes: RegionErrors,
    pub darcy: RegionErrors,
    /// Discrete energy norm of the velocity error.
    pub energy_velocity: f64,
    /// Discrete energy norm of the pressure error.
    pub energy_pressure: f64,
    /// Max normal-velocity jump over interior and interface facets.
    pub jump: f64,
    pub solver_residual: f64,
}

impl ErrorReport {
    pub fn region(&self, region: Region) -> &RegionErrors {
        match region {
            Region::Stokes => &self.stokes,
            Region::Darcy => &self.darcy,
        }
    }
}

/// Exactness of the rules used for error integrals.
pub fn error_quad_degree(k: usize) -> usize {
    (2 * k + 6).min(MAX_QUAD_DEGREE)
}

struct CellRule {
    rule: QuadRule,
    vel: Tabulation,
    press: Tabulation,
}

impl CellRule {
    fn new(fields: &SolutionFields, degree: usize) -> Result<Self> {
        let rule = quad(EntityKind::Triangle, degree)?;
        let vel = fields.cell_basis().tabulate(&rule.points);
        let press = fields.pressure_basis().tabulate(&rule.points);
        Ok(CellRule { rule, vel, press })
    }
}

/// Cell-wise `L^2` projection of `f` onto the pressure space of `cell`,
/// returned as nodal coefficients.
pub fn project_pressure(mesh: &Mesh, cell: usize, basis: &BasisSet, f: &dyn Fn(Point) -> f64) -> Vec<f64> {
    let rule = quad(EntityKind::Triangle, DATA_QUAD_DEGREE).expect("data rule");
    let tab = basis.tabulate(&rule.points);
    let map = CellMap::of_cell(mesh, cell);
    let n = basis.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for (q, &w) in rule.weights.iter().enumerate() {
        let fx = f(map.to_physical(rule.points[q]));
        let chi = &tab.values[q];
        for i in 0..n {
            b[i] += w * fx * chi[i];
            for j in 0..n {
                m[(i, j)] += w * chi[i] * chi[j];
            }
        }
    }
    let x = m.cholesky().expect("pressure mass matrix is SPD").solve(&b);
    x.iter().copied().collect()
}

/// Divergence and normal-jump residuals of a discrete velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConservationResiduals {
    /// `||div u_h||` over the Stokes region.
    pub divergence_stokes: f64,
    /// `||div u_h + P f^d||` over the Darcy region.
    pub divergence_darcy: f64,
    /// Max of `|[u_h . n]|` on interior facets and `|(u_h - ubar_h) . n|` on
    /// the interface, over facet quadrature points.
    pub jump: f64,
}

impl ConservationResiduals {
    pub fn max_divergence(&self) -> f64 {
        self.divergence_stokes.max(self.divergence_darcy)
    }
}

pub fn conservation_residuals(mesh: &Mesh, fields: &SolutionFields, f_d: &dyn Fn(Point) -> f64) -> ConservationResiduals {
    let k = fields.degree();
    let cr = CellRule::new(fields, error_quad_degree(k)).expect("error rule");
    let mut div = [0.0, 0.0];
    for c in 0..mesh.num_cells() {
        let map = CellMap::of_cell(mesh, c);
        let region = mesh.cells()[c].region;
        let proj = match region {
            Region::Darcy => Some(project_pressure(mesh, c, fields.pressure_basis(), f_d)),
            Region::Stokes => None,
        };
        let mut s = 0.0;
        for (q, &w) in cr.rule.weights.iter().enumerate() {
            let grads: Vec<[f64; 2]> = cr.vel.grads[q].iter().map(|&g| map.grad(g)).collect();
            let mut d = fields.divergence_from_grads(c, &grads);
            if let Some(p) = &proj {
                d += p.iter().zip(&cr.press.values[q]).map(|(a, b)| a * b).sum::<f64>();
            }
            s += w * map.det * d * d;
        }
        div[(region == Region::Darcy) as usize] += s;
    }
    ConservationResiduals {
        divergence_stokes: div[0].sqrt(),
        divergence_darcy: div[1].sqrt(),
        jump: normal_jump(mesh, fields, error_quad_degree(k)),
    }
}

fn normal_jump(mesh: &Mesh, fields: &SolutionFields, degree: usize) -> f64 {
    let rule = quad(EntityKind::Segment, degree).expect("facet rule");
    let mut worst: f64 = 0.0;
    for (fi, f) in mesh.facets().iter().enumerate() {
        let pts = mesh.facet_points(fi);
        let dot = |u: Point| u[0] * f.normal[0] + u[1] * f.normal[1];
        for p in &rule.points {
            let x = lerp(pts, p[0]);
            let own = dot(fields.velocity_at(mesh, f.owner, x));
            match f.class {
                FacetClass::InteriorS | FacetClass::InteriorD => {
                    let nb = f.neighbor.expect("interior facet has a neighbor");
                    worst = worst.max((own - dot(fields.velocity_at(mesh, nb, x))).abs());
                }
                FacetClass::Interface => {
                    let ub = dot(fields.facet_velocity_at(mesh, fi, p[0]).expect("interface facet velocity"));
                    let nb = f.neighbor.expect("interface facet has a neighbor");
                    worst = worst.max((own - ub).abs());
                    worst = worst.max((dot(fields.velocity_at(mesh, nb, x)) - ub).abs());
                }
                _ => {}
            }
        }
    }
    worst
}

/// Errors of `fields` against `exact`. `h` is the nominal mesh size recorded
/// for rate computations.
pub fn compute_errors(fields: &SolutionFields, exact: &dyn ReferenceSolution, mesh: &Mesh, h: f64) -> ErrorReport {
    let k = fields.degree();
    let degree = error_quad_degree(k);
    let cr = CellRule::new(fields, degree).expect("error rule");
    let frule = quad(EntityKind::Segment, degree).expect("facet rule");
    // [stokes, darcy] squared sums.
    let mut vel = [0.0; 2];
    let mut pres = [0.0; 2];
    let mut energy_v = 0.0;
    let mut energy_p = 0.0;

    for c in 0..mesh.num_cells() {
        let cell = &mesh.cells()[c];
        let r = (cell.region == Region::Darcy) as usize;
        let map = CellMap::of_cell(mesh, c);
        let (mut ev, mut ep, mut eg) = (0.0, 0.0, 0.0);
        for (q, &w) in cr.rule.weights.iter().enumerate() {
            let x = map.to_physical(cr.rule.points[q]);
            let w = w * map.det;
            let uh = fields.velocity_at_ref(c, &cr.vel.values[q]);
            let u = exact.velocity(cell.region, x);
            ev += w * ((u[0] - uh[0]).powi(2) + (u[1] - uh[1]).powi(2));
            let ph = fields.pressure_at_ref(c, &cr.press.values[q]);
            ep += w * (exact.pressure(cell.region, x) - ph).powi(2);
            if cell.region == Region::Stokes {
                let grads: Vec<[f64; 2]> = cr.vel.grads[q].iter().map(|&g| map.grad(g)).collect();
                let gh = fields.velocity_grad_from_grads(c, &grads);
                let g = exact.velocity_grad(cell.region, x);
                for a in 0..2 {
                    for b in 0..2 {
                        eg += w * (g[a][b] - gh[a][b]).powi(2);
                    }
                }
            }
        }
        vel[r] += ev;
        pres[r] += ep;
        energy_p += ep;
        energy_v += if cell.region == Region::Stokes { eg } else { ev };

        for f in mesh.cell_facets(c) {
            let facet = &mesh.facets()[f];
            let pts = mesh.facet_points(f);
            for (p, &w) in frule.points.iter().zip(&frule.weights) {
                let x = lerp(pts, p[0]);
                let w = w * facet.length;
                let pb = fields
                    .facet_pressure_at(f, cell.region, p[0])
                    .expect("facet pressure on own region");
                energy_p += cell.diameter * w * (exact.pressure(cell.region, x) - pb).powi(2);
                if cell.region == Region::Stokes {
                    let ub = fields.facet_velocity_at(mesh, f, p[0]).expect("stokes facet velocity");
                    let uh = fields.velocity_at(mesh, c, x);
                    energy_v += w / cell.diameter * ((ub[0] - uh[0]).powi(2) + (ub[1] - uh[1]).powi(2));
                }
            }
        }
    }

    for (fi, f) in mesh.facets().iter().enumerate() {
        if f.class != FacetClass::Interface {
            continue;
        }
        let pts = mesh.facet_points(fi);
        let t = [-f.normal[1], f.normal[0]];
        for (p, &w) in frule.points.iter().zip(&frule.weights) {
            let x = lerp(pts, p[0]);
            let ub = fields.facet_velocity_at(mesh, fi, p[0]).expect("interface facet velocity");
            let u = exact.velocity(Region::Stokes, x);
            let et = (u[0] - ub[0]) * t[0] + (u[1] - ub[1]) * t[1];
            energy_v += w * f.length * et * et;
        }
    }

    let cons = conservation_residuals(mesh, fields, &|x| exact.darcy_source(x));
    ErrorReport {
        k,
        cells: mesh.num_cells(),
        h,
        h_max: mesh.h_max(),
        stokes: RegionErrors {
            velocity: vel[0].sqrt(),
            pressure: pres[0].sqrt(),
            divergence: cons.divergence_stokes,
        },
        darcy: RegionErrors {
            velocity: vel[1].sqrt(),
            pressure: pres[1].sqrt(),
            divergence: cons.divergence_darcy,
        },
        energy_velocity: energy_v.sqrt(),
        energy_pressure: energy_p.sqrt(),
        jump: cons.jump,
        solver_residual: fields.residual,
    }
}

/// Parameters of a manufactured-solution sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub levels: Vec<usize>,
    pub k: usize,
    pub mu: f64,
    pub kappa: f64,
    /// `beta = beta_coeff * k^2`.
    pub beta_coeff: f64,
    pub perturb_seed: Option<u64>,
}

impl SweepConfig {
    pub fn new(levels: Vec<usize>, k: usize, mu: f64, kappa: f64) -> Self {
        SweepConfig {
            levels,
            k,
            mu,
            kappa,
            beta_coeff: 10.0,
            perturb_seed: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub config: SweepConfig,
    pub rows: Vec<ErrorReport>,
}

/// `log(e_c / e_f) / log(h_c / h_f)` for consecutive levels; `None` for the
/// first level.
pub fn rates(errors: &[f64], h: &[f64]) -> Vec<Option<f64>> {
    (0..errors.len())
        .map(|i| (i > 0).then(|| (errors[i - 1] / errors[i]).ln() / (h[i - 1] / h[i]).ln()))
        .collect()
}

pub const CSV_HEADER: &str = "cells,h,err_u,rate_u,err_p,rate_p,div_residual,jump_residual,region";

/// Rows of the sweep table: one per region plus the energy norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableRegion {
    Stokes,
    Darcy,
    Energy,
}

impl TableRegion {
    pub const ALL: [TableRegion; 3] = [TableRegion::Stokes, TableRegion::Darcy, TableRegion::Energy];

    pub fn name(self) -> &'static str {
        match self {
            TableRegion::Stokes => "stokes",
            TableRegion::Darcy => "darcy",
            TableRegion::Energy => "energy",
        }
    }
}

impl ConvergenceTable {
    /// `(velocity, pressure, divergence)` for `region` on every level.
    pub fn series(&self, region: TableRegion) -> Vec<(f64, f64, f64)> {
        self.rows
            .iter()
            .map(|r| match region {
                TableRegion::Stokes => (r.stokes.velocity, r.stokes.pressure, r.stokes.divergence),
                TableRegion::Darcy => (r.darcy.velocity, r.darcy.pressure, r.darcy.divergence),
                TableRegion::Energy => (
                    r.energy_velocity,
                    r.energy_pressure,
                    r.stokes.divergence.max(r.darcy.divergence),
                ),
            })
            .collect()
    }

    pub fn h(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.h).collect()
    }

    /// `(velocity rates, pressure rates)` for `region`.
    pub fn rates(&self, region: TableRegion) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
        let s = self.series(region);
        let h = self.h();
        let u: Vec<f64> = s.iter().map(|v| v.0).collect();
        let p: Vec<f64> = s.iter().map(|v| v.1).collect();
        (rates(&u, &h), rates(&p, &h))
    }

    /// Rates over the last interval, `(velocity, pressure)`.
    pub fn final_rates(&self, region: TableRegion) -> (Option<f64>, Option<f64>) {
        let (u, p) = self.rates(region);
        (u.last().copied().flatten(), p.last().copied().flatten())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let fmt_rate = |r: Option<f64>| r.map(|v| format!("{v:.3e}")).unwrap_or_default();
        let per_region: Vec<_> = TableRegion::ALL
            .iter()
            .map(|&reg| (reg, self.series(reg), self.rates(reg)))
            .collect();
        for (i, row) in self.rows.iter().enumerate() {
            for (reg, series, (ru, rp)) in &per_region {
                let (eu, ep, div) = series[i];
                let _ = writeln!(
                    out,
                    "{},{:.3e},{:.3e},{},{:.3e},{},{:.3e},{:.3e},{}",
                    row.cells,
                    row.h,
                    eu,
                    fmt_rate(ru[i]),
                    ep,
                    fmt_rate(rp[i]),
                    div,
                    row.jump,
                    reg.name()
                );
            }
        }
        out
    }
}

/// Solves the manufactured case on one structured mesh and returns its
/// errors.
pub fn solve_manufactured(mesh: &Mesh, k: usize, mu: f64, kappa: f64, beta_coeff: f64, h: f64) -> Result<ErrorReport> {
    let exact = ExactSolution::new(mu, kappa);
    let config = ProblemConfig::new(exact.case_definition(), k).with_beta(beta_coeff * (k * k) as f64);
    let layout = build_layout(mesh, k, &config.case)?;
    let system = assemble(mesh, &layout, &config)?;
    let fields = solve(&system, &layout)?;
    Ok(compute_errors(&fields, &exact, mesh, h))
}

/// Runs the manufactured case on every level of `config`.
pub fn convergence_sweep(config: &SweepConfig) -> Result<ConvergenceTable> {
    if config.levels.is_empty() {
        return Err(Error::InvalidParameter("no refinement levels given".into()));
    }
    if config.levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!(
            "levels must be strictly increasing, got {:?}",
            config.levels
        )));
    }
    let mut rows = Vec::with_capacity(config.levels.len());
    for &n in &config.levels {
        let started = Instant::now();
        let mesh = generate_mesh_with(n, MeshOptions { perturb_seed: config.perturb_seed })?;
        let report = solve_manufactured(&mesh, config.k, config.mu, config.kappa, config.beta_coeff, 1.0 / n as f64)?;
        log::info!(
            "k={} n={n}: |u-u_h|_s={:.3e} |u-u_h|_d={:.3e} ({:.2?})",
            config.k,
            report.stokes.velocity,
            report.darcy.velocity,
            started.elapsed()
        );
        rows.push(report);
    }
    Ok(ConvergenceTable {
        config: config.clone(),
        rows,
    })
}

/// Nodal interpolant of `exact` in the discrete spaces: cell and facet
/// velocities and facet pressures are sampled at nodes, cell pressures are
/// `L^2` projections. The multiplier is zero.
pub fn interpolate(mesh: &Mesh, layout: &DofLayout, exact: &dyn ReferenceSolution) -> Result<Vec<f64>> {
    let k = layout.degree();
    let cell_basis = crate::refelem::basis(EntityKind::Triangle, k)?;
    let press_basis = crate::refelem::basis(EntityKind::Triangle, k - 1)?;
    let nb = cell_basis.dim();
    let nf = k + 1;
    let mut x = vec![0.0; layout.total()];
    for c in 0..mesh.num_cells() {
        let region = mesh.cells()[c].region;
        let map = CellMap::of_cell(mesh, c);
        let dofs: Vec<usize> = layout.cell_velocity(c).collect();
        for (i, node) in cell_basis.nodes().iter().enumerate() {
            let u = exact.velocity(region, map.to_physical(*node));
            x[dofs[i]] = u[0];
            x[dofs[nb + i]] = u[1];
        }
        let proj = project_pressure(mesh, c, &press_basis, &|y| exact.pressure(region, y));
        for (d, v) in layout.cell_pressure(c).zip(proj) {
            x[d] = v;
        }
    }
    for fi in 0..mesh.facets().len() {
        let pts = mesh.facet_points(fi);
        if let Some(dofs) = layout.facet_velocity(fi, mesh) {
            for a in 0..nf {
                let u = exact.velocity(Region::Stokes, facet_node_point(pts, a, k));
                x[dofs[a]] = u[0];
                x[dofs[nf + a]] = u[1];
            }
        }
        for region in [Region::Stokes, Region::Darcy] {
            if let Some(dofs) = layout.facet_pressure(fi, region) {
                for (a, d) in dofs.enumerate() {
                    x[d] = exact.pressure(region, facet_node_point(pts, a, k));
                }
            }
        }
    }
    Ok(x)
}

/// Outcome of the patch test.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchReport {
    pub passed: bool,
    /// Block with the largest coefficient error.
    pub worst_block: Space,
    pub worst_error: f64,
    pub per_block: Vec<(Space, f64)>,
    pub solver_residual: f64,
}

pub const PATCH_TOLERANCE: f64 = 1e-9;

/// Checks that a solution lying in the discrete spaces is reproduced.
pub fn patch_test(mesh: &Mesh, k: usize, mu: f64, kappa: f64) -> Result<PatchReport> {
    patch_test_with_flux(mesh, k, mu, kappa, -1.0)
}

/// Patch test with a custom bottom flux datum; anything but `-1` is
/// incompatible with the reference solution.
pub fn patch_test_with_flux(mesh: &Mesh, k: usize, mu: f64, kappa: f64, bottom_flux: f64) -> Result<PatchReport> {
    let exact = PatchSolution { mu, kappa };
    let config = ProblemConfig::new(exact.case_definition(bottom_flux), k);
    let layout = build_layout(mesh, k, &config.case)?;
    let system = assemble(mesh, &layout, &config)?;
    let fields = solve(&system, &layout)?;
    let want = interpolate(mesh, &layout, &exact)?;
    let per_block: Vec<(Space, f64)> = Space::ALL
        .iter()
        .filter(|&&s| layout.block_size(s) > 0)
        .map(|&s| {
            let r = layout.block(s);
            let err = fields.values()[r.clone()]
                .iter()
                .zip(&want[r])
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            (s, err)
        })
        .collect();
    let (worst_block, worst_error) = per_block
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((Space::Velocity, 0.0));
    Ok(PatchReport {
        passed: worst_error <= PATCH_TOLERANCE,
        worst_block,
        worst_error,
        per_block,
        solver_residual: fields.residual,
    })
}

/// Smallest eigenvalue of the free velocity block (cell plus facet
/// velocities) of the finalized manufactured-case matrix.
pub fn coercivity_probe(mesh: &Mesh, k: usize, beta: f64) -> Result<f64> {
    let config = ProblemConfig::new(CaseDefinition::manufactured(1.0, 1.0), k).with_beta(beta);
    let layout = build_layout(mesh, k, &config.case)?;
    let system = assemble(mesh, &layout, &config)?;
    let block = velocity_block(&system, &layout);
    let eig = block.symmetric_eigenvalues();
    Ok(eig.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `(beta, smallest eigenvalue)` for each `beta`.
pub fn coercivity_curve(mesh: &Mesh, k: usize, betas: &[f64]) -> Result<Vec<(f64, f64)>> {
    betas.iter().map(|&b| Ok((b, coercivity_probe(mesh, k, b)?))).collect()
}
