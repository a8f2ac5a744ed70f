//! Global degree-of-freedom layout for the five coupled spaces.
//!
//! Blocks are ordered `[V_h | Vbar_h | Q_h | Qbar_s | Qbar_d | multiplier]`:
//!
//! * `V_h`: discontinuous vector `P_k` per cell, component-major within a cell.
//! * `Vbar_h`: continuous vector `P_k` on the Stokes skeleton. Nodes are the
//!   skeleton vertices followed by `k - 1` interior nodes per Stokes facet;
//!   each node carries two consecutive dofs (x then y).
//! * `Q_h`: discontinuous scalar `P_{k-1}` per cell.
//! * `Qbar_s`, `Qbar_d`: discontinuous scalar `P_k` per facet of the Stokes
//!   and Darcy skeletons. Interface facets carry one set in each.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::cases::{CaseDefinition, DarcyBc, StokesBc};
use crate::error::{Error, Result};
use crate::mesh::{FacetClass, Mesh, Point, Region};
use crate::refelem::triangle_dim;

/// The unknown blocks of the global system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Space {
    Velocity,
    FacetVelocity,
    Pressure,
    FacetPressureStokes,
    FacetPressureDarcy,
    Multiplier,
}

impl Space {
    pub const ALL: [Space; 6] = [
        Space::Velocity,
        Space::FacetVelocity,
        Space::Pressure,
        Space::FacetPressureStokes,
        Space::FacetPressureDarcy,
        Space::Multiplier,
    ];
}

#[derive(Debug, Clone)]
pub struct DofLayout {
    k: usize,
    num_cells: usize,
    /// facet -> position among Stokes-skeleton facets.
    stokes_facet: Vec<Option<usize>>,
    /// facet -> position among Darcy-skeleton facets.
    darcy_facet: Vec<Option<usize>>,
    /// vertex -> Vbar node.
    vertex_node: Vec<Option<usize>>,
    num_vertex_nodes: usize,
    num_stokes_facets: usize,
    num_darcy_facets: usize,
    offsets: [usize; 7],
    constraints: BTreeMap<usize, f64>,
    multiplier: bool,
}

impl DofLayout {
    pub fn degree(&self) -> usize {
        self.k
    }

    /// Scalar basis size of `P_k` on a cell.
    pub fn cell_basis_dim(&self) -> usize {
        triangle_dim(self.k)
    }

    /// Scalar basis size of `P_{k-1}` on a cell.
    pub fn pressure_basis_dim(&self) -> usize {
        triangle_dim(self.k - 1)
    }

    /// Scalar basis size of `P_k` on a facet.
    pub fn facet_basis_dim(&self) -> usize {
        self.k + 1
    }

    pub fn block(&self, space: Space) -> Range<usize> {
        let i = Space::ALL.iter().position(|&s| s == space).unwrap();
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn block_size(&self, space: Space) -> usize {
        self.block(space).len()
    }

    /// Total system dimension, including the multiplier when present.
    pub fn total(&self) -> usize {
        self.offsets[6]
    }

    pub fn has_multiplier(&self) -> bool {
        self.multiplier
    }

    pub fn multiplier_dof(&self) -> Option<usize> {
        self.multiplier.then(|| self.offsets[5])
    }

    /// Constrained dofs and their prescribed values.
    pub fn constraints(&self) -> &BTreeMap<usize, f64> {
        &self.constraints
    }

    /// Velocity dofs of `cell`, component-major.
    pub fn cell_velocity(&self, cell: usize) -> Range<usize> {
        let n = 2 * self.cell_basis_dim();
        let start = self.offsets[0] + cell * n;
        start..start + n
    }

    pub fn cell_pressure(&self, cell: usize) -> Range<usize> {
        let n = self.pressure_basis_dim();
        let start = self.offsets[2] + cell * n;
        start..start + n
    }

    /// Facet-velocity dofs of `facet`, component-major over the segment basis
    /// (`c * (k + 1) + a`). `None` for facets outside the Stokes skeleton.
    pub fn facet_velocity(&self, facet: usize, mesh: &Mesh) -> Option<Vec<usize>> {
        let sf = self.stokes_facet[facet]?;
        let nodes = self.facet_nodes(sf, mesh.facets()[facet].vertices);
        let mut out = vec![0; 2 * nodes.len()];
        let nb = nodes.len();
        for (a, &node) in nodes.iter().enumerate() {
            for c in 0..2 {
                out[c * nb + a] = self.offsets[1] + 2 * node + c;
            }
        }
        Some(out)
    }

    fn facet_nodes(&self, sf: usize, vertices: [usize; 2]) -> Vec<usize> {
        let mut nodes = Vec::with_capacity(self.k + 1);
        nodes.push(self.vertex_node[vertices[0]].expect("skeleton vertex"));
        nodes.push(self.vertex_node[vertices[1]].expect("skeleton vertex"));
        let base = self.num_vertex_nodes + sf * (self.k - 1);
        nodes.extend(base..base + self.k - 1);
        nodes
    }

    pub fn facet_pressure_stokes(&self, facet: usize) -> Option<Range<usize>> {
        let sf = self.stokes_facet[facet]?;
        let start = self.offsets[3] + sf * (self.k + 1);
        Some(start..start + self.k + 1)
    }

    pub fn facet_pressure_darcy(&self, facet: usize) -> Option<Range<usize>> {
        let df = self.darcy_facet[facet]?;
        let start = self.offsets[4] + df * (self.k + 1);
        Some(start..start + self.k + 1)
    }

    pub fn facet_pressure(&self, facet: usize, region: Region) -> Option<Range<usize>> {
        match region {
            Region::Stokes => self.facet_pressure_stokes(facet),
            Region::Darcy => self.facet_pressure_darcy(facet),
        }
    }

    pub fn num_vbar_nodes(&self) -> usize {
        self.block_size(Space::FacetVelocity) / 2
    }

    /// Maps a global index back to its space and owning entity, for diagnostics.
    pub fn locate(&self, dof: usize) -> (Space, String) {
        let space = Space::ALL
            .iter()
            .enumerate()
            .find(|(i, _)| (self.offsets[*i]..self.offsets[*i + 1]).contains(&dof))
            .map(|(_, &s)| s)
            .unwrap_or(Space::Multiplier);
        let local = dof - self.block(space).start;
        let entity = match space {
            Space::Velocity => format!("cell {}", local / (2 * self.cell_basis_dim())),
            Space::Pressure => format!("cell {}", local / self.pressure_basis_dim()),
            Space::FacetVelocity => {
                let node = local / 2;
                if node < self.num_vertex_nodes {
                    let v = self.vertex_node.iter().position(|&n| n == Some(node)).unwrap_or(usize::MAX);
                    format!("vertex {v}")
                } else {
                    let sf = (node - self.num_vertex_nodes) / (self.k - 1).max(1);
                    let f = self.stokes_facet.iter().position(|&s| s == Some(sf)).unwrap_or(usize::MAX);
                    format!("facet {f}")
                }
            }
            Space::FacetPressureStokes => {
                let sf = local / (self.k + 1);
                format!("facet {}", self.stokes_facet.iter().position(|&s| s == Some(sf)).unwrap_or(usize::MAX))
            }
            Space::FacetPressureDarcy => {
                let df = local / (self.k + 1);
                format!("facet {}", self.darcy_facet.iter().position(|&s| s == Some(df)).unwrap_or(usize::MAX))
            }
            Space::Multiplier => "mean-pressure multiplier".to_string(),
        };
        (space, entity)
    }

    pub fn num_stokes_facets(&self) -> usize {
        self.num_stokes_facets
    }

    pub fn num_darcy_facets(&self) -> usize {
        self.num_darcy_facets
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }
}

/// Physical position of node `a` of the segment basis on facet `[p0, p1]`.
pub fn facet_node_point(p: [Point; 2], a: usize, k: usize) -> Point {
    let t = match a {
        0 => 0.0,
        1 => 1.0,
        j => (j - 1) as f64 / k as f64,
    };
    [p[0][0] + t * (p[1][0] - p[0][0]), p[0][1] + t * (p[1][1] - p[0][1])]
}

fn on_stokes_skeleton(class: FacetClass) -> bool {
    matches!(
        class,
        FacetClass::InteriorS
            | FacetClass::Interface
            | FacetClass::GammaS
            | FacetClass::GammaS1
            | FacetClass::GammaS2
            | FacetClass::GammaS3
    )
}

fn on_darcy_skeleton(class: FacetClass) -> bool {
    matches!(
        class,
        FacetClass::InteriorD | FacetClass::Interface | FacetClass::GammaD | FacetClass::GammaD1 | FacetClass::GammaD2
    )
}

/// Builds the layout for `mesh` at degree `k`, evaluating the essential
/// boundary data of `case` at the constrained nodes.
pub fn build_layout(mesh: &Mesh, k: usize, case: &CaseDefinition) -> Result<DofLayout> {
    if k == 0 {
        return Err(Error::InvalidParameter("degree k must be >= 1".into()));
    }
    if k > crate::refelem::MAX_DEGREE {
        return Err(Error::InvalidParameter(format!(
            "degree k must be <= {}",
            crate::refelem::MAX_DEGREE
        )));
    }
    if case.mean_constraint && case.has_pressure_data() {
        return Err(Error::Config(
            "mean-pressure constraint and prescribed facet pressure are mutually exclusive".into(),
        ));
    }
    for f in mesh.facets().iter().filter(|f| f.class.is_exterior()) {
        let covered = if on_stokes_skeleton(f.class) {
            case.stokes_bc.contains_key(&f.class)
        } else {
            case.darcy_bc.contains_key(&f.class)
        };
        if !covered {
            return Err(Error::Config(format!(
                "case `{}` has no boundary condition for facet class {}",
                case.name,
                f.class.name()
            )));
        }
    }

    let nf = mesh.facets().len();
    let mut stokes_facet = vec![None; nf];
    let mut darcy_facet = vec![None; nf];
    let (mut ns, mut nd) = (0, 0);
    let mut vertex_node = vec![None; mesh.vertices().len()];
    let mut num_vertex_nodes = 0;
    for (fi, f) in mesh.facets().iter().enumerate() {
        if on_stokes_skeleton(f.class) {
            stokes_facet[fi] = Some(ns);
            ns += 1;
        }
        if on_darcy_skeleton(f.class) {
            darcy_facet[fi] = Some(nd);
            nd += 1;
        }
    }
    // Vertex nodes in vertex order for a layout independent of facet order.
    for f in mesh.facets().iter().filter(|f| on_stokes_skeleton(f.class)) {
        for &v in &f.vertices {
            vertex_node[v] = Some(0);
        }
    }
    for slot in vertex_node.iter_mut().filter(|s| s.is_some()) {
        *slot = Some(num_vertex_nodes);
        num_vertex_nodes += 1;
    }

    let nc = mesh.num_cells();
    let sizes = [
        2 * nc * triangle_dim(k),
        2 * (num_vertex_nodes + (k - 1) * ns),
        nc * triangle_dim(k - 1),
        (k + 1) * ns,
        (k + 1) * nd,
        usize::from(case.mean_constraint),
    ];
    let mut offsets = [0usize; 7];
    for i in 0..6 {
        offsets[i + 1] = offsets[i] + sizes[i];
    }

    let mut layout = DofLayout {
        k,
        num_cells: nc,
        stokes_facet,
        darcy_facet,
        vertex_node,
        num_vertex_nodes,
        num_stokes_facets: ns,
        num_darcy_facets: nd,
        offsets,
        constraints: BTreeMap::new(),
        multiplier: case.mean_constraint,
    };
    layout.constraints = essential_data(mesh, &layout, case);
    Ok(layout)
}

fn essential_data(mesh: &Mesh, layout: &DofLayout, case: &CaseDefinition) -> BTreeMap<usize, f64> {
    let k = layout.k;
    let mut out = BTreeMap::new();
    // Prescribed velocity first so it wins at corners shared with slip walls.
    for (fi, f) in mesh.facets().iter().enumerate() {
        if let Some(StokesBc::Velocity(g)) = case.stokes_bc.get(&f.class) {
            let dofs = layout.facet_velocity(fi, mesh).unwrap();
            let pts = mesh.facet_points(fi);
            for a in 0..=k {
                let val = g(facet_node_point(pts, a, k));
                out.insert(dofs[a], val[0]);
                out.insert(dofs[k + 1 + a], val[1]);
            }
        }
    }
    for (fi, f) in mesh.facets().iter().enumerate() {
        if let Some(StokesBc::Slip) = case.stokes_bc.get(&f.class) {
            let dofs = layout.facet_velocity(fi, mesh).unwrap();
            let c = if f.normal[0].abs() > f.normal[1].abs() { 0 } else { 1 };
            for a in 0..=k {
                out.entry(dofs[c * (k + 1) + a]).or_insert(0.0);
            }
        }
        if let Some(DarcyBc::Pressure(p)) = case.darcy_bc.get(&f.class) {
            let dofs = layout.facet_pressure_darcy(fi).unwrap();
            let pts = mesh.facet_points(fi);
            for (a, d) in dofs.enumerate() {
                out.insert(d, p(facet_node_point(pts, a, k)));
            }
        }
    }
    out
}
