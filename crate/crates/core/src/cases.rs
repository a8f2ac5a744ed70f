//! Problem-case registry.
//!
//! A [`CaseDefinition`] bundles the physical parameters, forcing terms and the
//! boundary treatment of every exterior facet class. Two cases ship with the
//! crate: the manufactured solution used for convergence studies (see
//! [`crate::verify::ExactSolution`]) and a surface/subsurface demo with a
//! heterogeneous permeability field.
//!
//! Boundary handling for the demo, per facet class:
//!
//! | class       | condition                        | discrete treatment                                   |
//! |-------------|----------------------------------|------------------------------------------------------|
//! | `gamma_s_1` | inflow velocity profile          | facet velocity fixed to the nodal interpolant        |
//! | `gamma_s_2` | zero traction                    | facet velocity free, facet-pressure coupling term    |
//! | `gamma_s_3` | slip wall                        | normal facet-velocity component fixed to zero        |
//! | `gamma_d_1` | no flux                          | facet-pressure equation with zero flux datum         |
//! | `gamma_d_2` | pressure `-0.05`                 | Darcy facet pressure fixed                           |

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::assembly::ProblemConfig;
use crate::error::Result;
use crate::mesh::{FacetClass, Mesh, Point};
use crate::solve::{solve, SolutionFields};
use crate::verify::{self, ConservationResiduals};

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> Point + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaseId {
    /// Closed-form solution with collapsed exterior boundaries.
    Manufactured,
    /// Coupled surface/subsurface flow with split exterior boundaries.
    SurfaceSubsurface,
}

#[derive(Clone)]
pub enum Permeability {
    Constant(f64),
    Field(ScalarField),
}

impl Permeability {
    pub fn at(&self, x: Point) -> f64 {
        match self {
            Permeability::Constant(k) => *k,
            Permeability::Field(f) => f(x),
        }
    }
}

impl fmt::Debug for Permeability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Permeability::Constant(k) => write!(f, "Constant({k})"),
            Permeability::Field(_) => f.write_str("Field(..)"),
        }
    }
}

/// Boundary condition on an exterior Stokes facet class.
#[derive(Clone)]
pub enum StokesBc {
    /// Prescribed velocity.
    Velocity(VectorField),
    /// Zero normal velocity on an axis-aligned wall, zero tangential traction.
    Slip,
    /// Zero traction.
    Traction,
}

/// Boundary condition on an exterior Darcy facet class.
#[derive(Clone)]
pub enum DarcyBc {
    /// Prescribed outward normal flux `u . n`.
    NormalFlux(ScalarField),
    /// Prescribed pressure.
    Pressure(ScalarField),
}

#[derive(Clone)]
pub struct CaseDefinition {
    pub id: CaseId,
    pub name: String,
    pub mu: f64,
    pub kappa: Permeability,
    pub alpha: f64,
    pub f_s: VectorField,
    pub f_d: ScalarField,
    pub stokes_bc: BTreeMap<FacetClass, StokesBc>,
    pub darcy_bc: BTreeMap<FacetClass, DarcyBc>,
    /// Enforce zero mean pressure through a Lagrange multiplier.
    pub mean_constraint: bool,
}

impl fmt::Debug for CaseDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CaseDefinition")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("mu", &self.mu)
            .field("kappa", &self.kappa)
            .field("alpha", &self.alpha)
            .field("stokes_bc", &self.stokes_bc.keys().collect::<Vec<_>>())
            .field("darcy_bc", &self.darcy_bc.keys().collect::<Vec<_>>())
            .field("mean_constraint", &self.mean_constraint)
            .finish()
    }
}

impl CaseDefinition {
    /// Whether any Darcy facet pressure is prescribed.
    pub fn has_pressure_data(&self) -> bool {
        self.darcy_bc.values().any(|bc| matches!(bc, DarcyBc::Pressure(_)))
    }

    /// The manufactured case for constant `mu` and `kappa`.
    pub fn manufactured(mu: f64, kappa: f64) -> CaseDefinition {
        verify::ExactSolution::new(mu, kappa).case_definition()
    }

    /// The surface/subsurface demo with the heterogeneous permeability field.
    pub fn surface_subsurface() -> CaseDefinition {
        Self::surface_subsurface_with(Permeability::Field(Arc::new(kappa_field)))
    }

    pub fn surface_subsurface_with(kappa: Permeability) -> CaseDefinition {
        let mut stokes_bc = BTreeMap::new();
        stokes_bc.insert(FacetClass::GammaS1, StokesBc::Velocity(Arc::new(inflow_profile)));
        stokes_bc.insert(FacetClass::GammaS2, StokesBc::Traction);
        stokes_bc.insert(FacetClass::GammaS3, StokesBc::Slip);
        let mut darcy_bc = BTreeMap::new();
        darcy_bc.insert(FacetClass::GammaD1, DarcyBc::NormalFlux(Arc::new(|_| 0.0)));
        darcy_bc.insert(FacetClass::GammaD2, DarcyBc::Pressure(Arc::new(|_| -0.05)));
        CaseDefinition {
            id: CaseId::SurfaceSubsurface,
            name: "surface-subsurface".into(),
            mu: 0.1,
            kappa,
            alpha: 0.5,
            f_s: Arc::new(|_| [0.0, 0.0]),
            f_d: Arc::new(|_| 0.0),
            stokes_bc,
            darcy_bc,
            mean_constraint: false,
        }
    }
}

/// Heterogeneous permeability of the surface/subsurface demo.
pub fn kappa_field(x: Point) -> f64 {
    let [x1, x2] = x;
    let c = (6.4 * PI * x1).cos();
    700.0 * (1.0 + 0.5 * ((10.0 * PI * x1).sin() * (20.0 * PI * x2 * x2).cos() + c * c * (9.2 * PI * x2).sin()))
        + 100.0
}

/// Inflow velocity on the left Stokes boundary.
pub fn inflow_profile(x: Point) -> Point {
    [x[1] * (1.5 - x[1]) / 5.0, 0.0]
}

/// Boundary flux integrals of the cell velocity, per exterior facet class.
#[derive(Debug, Clone)]
pub struct FluxReport {
    pub per_class: BTreeMap<FacetClass, f64>,
    /// Sum over all exterior classes.
    pub net: f64,
    /// Magnitude of the inflow through `gamma_s_1`.
    pub inflow: f64,
}

impl FluxReport {
    pub fn relative_imbalance(&self) -> f64 {
        self.net.abs() / self.inflow.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone)]
pub struct DemoResult {
    pub fields: SolutionFields,
    pub flux: FluxReport,
    pub residuals: ConservationResiduals,
    /// Max of `|pbar_s - pbar_d|` over interface facet nodes.
    pub interface_pressure_jump: f64,
}

/// Solves the surface/subsurface demo on `mesh` with degree `k`.
pub fn run_demo(mesh: &Mesh, k: usize) -> Result<DemoResult> {
    run_case(mesh, ProblemConfig::new(CaseDefinition::surface_subsurface(), k))
}

/// Solves an arbitrary split-boundary case and collects the demo diagnostics.
pub fn run_case(mesh: &Mesh, config: ProblemConfig) -> Result<DemoResult> {
    let mesh = if mesh.case() == config.case.id {
        mesh.clone()
    } else {
        mesh.clone().classify(config.case.id)?
    };
    let layout = crate::spaces::build_layout(&mesh, config.k, &config.case)?;
    let system = crate::assembly::assemble(&mesh, &layout, &config)?;
    let fields = solve(&system, &layout)?;
    let flux = flux_report(&mesh, &fields);
    let residuals = verify::conservation_residuals(&mesh, &fields, &*config.case.f_d);
    let interface_pressure_jump = fields.interface_pressure_jump(&mesh);
    Ok(DemoResult {
        fields,
        flux,
        residuals,
        interface_pressure_jump,
    })
}

/// Integrates `u_h . n` over each exterior facet class.
pub fn flux_report(mesh: &Mesh, fields: &SolutionFields) -> FluxReport {
    let mut per_class: BTreeMap<FacetClass, f64> = BTreeMap::new();
    for (fi, f) in mesh.facets().iter().enumerate() {
        if !f.class.is_exterior() {
            continue;
        }
        *per_class.entry(f.class).or_insert(0.0) += fields.facet_normal_flux(mesh, fi);
    }
    let net = per_class.values().sum();
    let inflow = per_class
        .get(&FacetClass::GammaS1)
        .copied()
        .unwrap_or_else(|| per_class.values().filter(|v| **v < 0.0).sum())
        .abs();
    FluxReport { per_class, net, inflow }
}
