//! Two-region triangulations of the unit square.
//!
//! The Stokes region is `[0,1] x [0.5,1]` and the Darcy region `[0,1] x [0,0.5]`.
//! Facets are derived from the cell list, never stored in files. Interface
//! facets are always owned by their Stokes cell, so the stored normal of an
//! interface facet points from the Stokes region into the Darcy region.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cases::CaseId;
use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Absolute tolerance for boundary and interface membership tests.
pub const GEOM_TOL: f64 = 1e-10;
/// Height of the Stokes/Darcy interface for the built-in geometry.
pub const INTERFACE_Y: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Stokes,
    Darcy,
}

impl Region {
    pub fn tag(self) -> char {
        match self {
            Region::Stokes => 's',
            Region::Darcy => 'd',
        }
    }
}

/// Facet classes. `GammaS`/`GammaD` are the collapsed exterior classes used by
/// the manufactured case; the numbered variants split the exterior boundary for
/// the surface/subsurface case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FacetClass {
    InteriorS,
    InteriorD,
    Interface,
    GammaS,
    GammaD,
    /// Stokes boundary at `x1 = 0`.
    GammaS1,
    /// Stokes boundary at `x1 = 1`.
    GammaS2,
    /// Stokes boundary at `x2 = 1`.
    GammaS3,
    /// Darcy boundary at `x1 = 0` or `x1 = 1`.
    GammaD1,
    /// Darcy boundary at `x2 = 0`.
    GammaD2,
}

impl FacetClass {
    pub const ALL: [FacetClass; 10] = [
        FacetClass::InteriorS,
        FacetClass::InteriorD,
        FacetClass::Interface,
        FacetClass::GammaS,
        FacetClass::GammaD,
        FacetClass::GammaS1,
        FacetClass::GammaS2,
        FacetClass::GammaS3,
        FacetClass::GammaD1,
        FacetClass::GammaD2,
    ];

    pub fn is_exterior(self) -> bool {
        !matches!(
            self,
            FacetClass::InteriorS | FacetClass::InteriorD | FacetClass::Interface
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            FacetClass::InteriorS => "interior_s",
            FacetClass::InteriorD => "interior_d",
            FacetClass::Interface => "interface",
            FacetClass::GammaS => "gamma_s",
            FacetClass::GammaD => "gamma_d",
            FacetClass::GammaS1 => "gamma_s_1",
            FacetClass::GammaS2 => "gamma_s_2",
            FacetClass::GammaS3 => "gamma_s_3",
            FacetClass::GammaD1 => "gamma_d_1",
            FacetClass::GammaD2 => "gamma_d_2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Counterclockwise vertex indices.
    pub vertices: [usize; 3],
    pub region: Region,
    pub area: f64,
    /// Longest edge.
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    /// `[lo, hi]` with `lo < hi`; facets are parameterized from `lo` to `hi`.
    pub vertices: [usize; 2],
    pub owner: usize,
    pub neighbor: Option<usize>,
    /// Unit normal pointing out of the owner cell.
    pub normal: Point,
    pub length: f64,
    pub class: FacetClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<Cell>,
    facets: Vec<Facet>,
    cell_facets: Vec<[usize; 3]>,
    case: CaseId,
}

impl Mesh {
    /// Builds a mesh from raw vertices and tagged cells, deriving facets and
    /// classifying them for the manufactured case.
    ///
    /// Clockwise cells are reoriented. Duplicated vertex coordinates are
    /// tolerated with a warning.
    pub fn from_parts(vertices: Vec<Point>, cells: Vec<([usize; 3], Region)>) -> Result<Mesh> {
        let nv = vertices.len();
        warn_duplicate_vertices(&vertices);

        let mut built = Vec::with_capacity(cells.len());
        for (ci, (mut v, region)) in cells.into_iter().enumerate() {
            if v.iter().any(|&i| i >= nv) {
                return Err(Error::validation(format!("cell {ci}"), "vertex index out of range"));
            }
            if v[0] == v[1] || v[1] == v[2] || v[0] == v[2] {
                return Err(Error::validation(format!("cell {ci}"), "repeated vertex"));
            }
            let mut area = signed_area(vertices[v[0]], vertices[v[1]], vertices[v[2]]);
            if area < 0.0 {
                v.swap(1, 2);
                area = -area;
            }
            if area <= 1e-14 {
                return Err(Error::validation(format!("cell {ci}"), "degenerate cell"));
            }
            let diameter = (0..3)
                .map(|i| dist(vertices[v[i]], vertices[v[(i + 1) % 3]]))
                .fold(0.0, f64::max);
            built.push(Cell {
                vertices: v,
                region,
                area,
                diameter,
            });
        }

        let mut mesh = Mesh {
            vertices,
            cells: built,
            facets: Vec::new(),
            cell_facets: Vec::new(),
            case: CaseId::Manufactured,
        };
        mesh.check_regions()?;
        mesh.build_facets()?;
        mesh.classify(CaseId::Manufactured)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Facet indices of each cell, ordered by the edge opposite vertex 2, 0, 1
    /// (i.e. edges `(v0,v1)`, `(v1,v2)`, `(v2,v0)`).
    pub fn cell_facets(&self, cell: usize) -> [usize; 3] {
        self.cell_facets[cell]
    }

    /// Case the boundary classification was computed for.
    pub fn case(&self) -> CaseId {
        self.case
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_points(&self, cell: usize) -> [Point; 3] {
        let v = self.cells[cell].vertices;
        [self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]]]
    }

    pub fn facet_points(&self, facet: usize) -> [Point; 2] {
        let v = self.facets[facet].vertices;
        [self.vertices[v[0]], self.vertices[v[1]]]
    }

    /// Outward normal of `facet` as seen from `cell`.
    pub fn outward_normal(&self, facet: usize, cell: usize) -> Point {
        let f = &self.facets[facet];
        if f.owner == cell {
            f.normal
        } else {
            [-f.normal[0], -f.normal[1]]
        }
    }

    /// Largest cell diameter.
    pub fn h_max(&self) -> f64 {
        self.cells.iter().map(|c| c.diameter).fold(0.0, f64::max)
    }

    pub fn count_class(&self, class: FacetClass) -> usize {
        self.facets.iter().filter(|f| f.class == class).count()
    }

    /// Re-derives exterior facet classes for `case`.
    pub fn classify(mut self, case: CaseId) -> Result<Mesh> {
        for (fi, facet) in self.facets.iter_mut().enumerate() {
            let owner_region = self.cells[facet.owner].region;
            facet.class = match facet.neighbor {
                Some(nb) => match (owner_region, self.cells[nb].region) {
                    (Region::Stokes, Region::Stokes) => FacetClass::InteriorS,
                    (Region::Darcy, Region::Darcy) => FacetClass::InteriorD,
                    _ => FacetClass::Interface,
                },
                None => {
                    let [a, b] = [self.vertices[facet.vertices[0]], self.vertices[facet.vertices[1]]];
                    classify_exterior(a, b, owner_region, case).ok_or_else(|| Error::Classification {
                        facet: fi,
                        message: format!(
                            "{} boundary facet ({}, {})-({}, {}) lies on no sub-boundary",
                            if owner_region == Region::Stokes { "stokes" } else { "darcy" },
                            a[0],
                            a[1],
                            b[0],
                            b[1]
                        ),
                    })?
                }
            };
        }
        self.case = case;
        Ok(self)
    }

    /// Checks the invariants the rest of the solver relies on.
    pub fn validate(&self) -> Result<()> {
        for (ci, c) in self.cells.iter().enumerate() {
            let [a, b, cc] = self.cell_points(ci);
            let area = signed_area(a, b, cc);
            if area <= 0.0 || (area - c.area).abs() > 1e-12 * c.area.max(1.0) {
                return Err(Error::validation(format!("cell {ci}"), "non-positive or stale area"));
            }
        }
        for (fi, f) in self.facets.iter().enumerate() {
            let [a, b] = self.facet_points(fi);
            let len = dist(a, b);
            if (len - f.length).abs() > 1e-12 * len {
                return Err(Error::validation(format!("facet {fi}"), "stale length"));
            }
            let t = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
            if (f.normal[0] * t[0] + f.normal[1] * t[1]).abs() > 1e-12
                || (f.normal[0].hypot(f.normal[1]) - 1.0).abs() > 1e-12
            {
                return Err(Error::validation(format!("facet {fi}"), "normal not unit or not orthogonal"));
            }
            if f.class == FacetClass::Interface && self.cells[f.owner].region != Region::Stokes {
                return Err(Error::validation(format!("facet {fi}"), "interface facet not owned by stokes cell"));
            }
        }
        let total: f64 = self.cells.iter().map(|c| c.area).sum();
        let stokes: f64 = self
            .cells
            .iter()
            .filter(|c| c.region == Region::Stokes)
            .map(|c| c.area)
            .sum();
        if (total - 1.0).abs() > 1e-12 || (stokes - 0.5).abs() > 1e-12 {
            return Err(Error::validation(
                "mesh",
                format!("cells do not tile the unit square (total {total}, stokes {stokes})"),
            ));
        }
        Ok(())
    }

    fn check_regions(&self) -> Result<()> {
        for (ci, c) in self.cells.iter().enumerate() {
            let crosses = c.vertices.iter().any(|&v| {
                let y = self.vertices[v][1];
                match c.region {
                    Region::Stokes => y < INTERFACE_Y - GEOM_TOL,
                    Region::Darcy => y > INTERFACE_Y + GEOM_TOL,
                }
            });
            if crosses {
                return Err(Error::validation(format!("cell {ci}"), "cell crosses interface"));
            }
        }
        Ok(())
    }

    fn build_facets(&mut self) -> Result<()> {
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut facets: Vec<Facet> = Vec::new();
        let mut cell_facets = Vec::with_capacity(self.cells.len());
        for (ci, cell) in self.cells.iter().enumerate() {
            let mut local = [0usize; 3];
            for (i, slot) in local.iter_mut().enumerate() {
                let (a, b) = (cell.vertices[i], cell.vertices[(i + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let fi = match index.get(&key) {
                    Some(&fi) => {
                        let f = &mut facets[fi];
                        if f.neighbor.is_some() {
                            return Err(Error::validation(
                                format!("facet {}-{}", key.0, key.1),
                                "edge shared by more than two cells",
                            ));
                        }
                        f.neighbor = Some(ci);
                        fi
                    }
                    None => {
                        let fi = facets.len();
                        index.insert(key, fi);
                        facets.push(Facet {
                            vertices: [key.0, key.1],
                            owner: ci,
                            neighbor: None,
                            normal: [0.0, 0.0],
                            length: dist(self.vertices[key.0], self.vertices[key.1]),
                            class: FacetClass::InteriorS,
                        });
                        fi
                    }
                };
                *slot = fi;
            }
            cell_facets.push(local);
        }
        for f in facets.iter_mut() {
            if let Some(nb) = f.neighbor {
                if self.cells[f.owner].region == Region::Darcy && self.cells[nb].region == Region::Stokes {
                    f.neighbor = Some(f.owner);
                    f.owner = nb;
                }
            }
            let [a, b] = [self.vertices[f.vertices[0]], self.vertices[f.vertices[1]]];
            let mut n = [(b[1] - a[1]) / f.length, -(b[0] - a[0]) / f.length];
            let c = centroid(self.cell_points(f.owner));
            if n[0] * (a[0] - c[0]) + n[1] * (a[1] - c[1]) < 0.0 {
                n = [-n[0], -n[1]];
            }
            f.normal = n;
        }
        self.facets = facets;
        self.cell_facets = cell_facets;
        Ok(())
    }

    /// Serializes to the plain-text mesh format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "vertices {} / cells {}", self.vertices.len(), self.cells.len()).unwrap();
        for v in &self.vertices {
            writeln!(s, "{} {}", v[0], v[1]).unwrap();
        }
        for c in &self.cells {
            let [a, b, d] = c.vertices;
            writeln!(s, "{a} {b} {d} {}", c.region.tag()).unwrap();
        }
        s
    }

    /// Parses the plain-text mesh format.
    pub fn parse(text: &str) -> Result<Mesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let (nv, nc) = parse_header(header).ok_or_else(|| Error::Parse {
            line: hline,
            message: format!("expected `vertices N / cells M`, found `{header}`"),
        })?;

        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or(Error::Parse {
                line: hline,
                message: "unexpected end of file in vertex block".into(),
            })?;
            let xy: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: ln,
                    message: format!("bad coordinate: {e}"),
                })?;
            if xy.len() != 2 {
                return Err(Error::Parse {
                    line: ln,
                    message: "expected two coordinates".into(),
                });
            }
            vertices.push([xy[0], xy[1]]);
        }
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (ln, l) = lines.next().ok_or(Error::Parse {
                line: hline,
                message: "unexpected end of file in cell block".into(),
            })?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            let bad = |m: &str| Error::Parse {
                line: ln,
                message: m.to_string(),
            };
            if toks.len() != 4 {
                return Err(bad("expected `v0 v1 v2 region`"));
            }
            let mut v = [0usize; 3];
            for (slot, t) in v.iter_mut().zip(&toks[..3]) {
                *slot = t.parse().map_err(|_| bad("bad vertex index"))?;
            }
            let region = match toks[3] {
                "s" => Region::Stokes,
                "d" => Region::Darcy,
                _ => return Err(bad("region must be `s` or `d`")),
            };
            cells.push((v, region));
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Parse {
                line: ln,
                message: "trailing content after cell block".into(),
            });
        }
        let mesh = Mesh::from_parts(vertices, cells)?;
        mesh.validate()?;
        Ok(mesh)
    }
}

fn parse_header(h: &str) -> Option<(usize, usize)> {
    let toks: Vec<&str> = h.split_whitespace().filter(|t| *t != "/").collect();
    match toks.as_slice() {
        ["vertices", nv, "cells", nc] => Some((nv.parse().ok()?, nc.parse().ok()?)),
        _ => None,
    }
}

fn classify_exterior(a: Point, b: Point, region: Region, case: CaseId) -> Option<FacetClass> {
    let on = |coord: usize, value: f64| (a[coord] - value).abs() < GEOM_TOL && (b[coord] - value).abs() < GEOM_TOL;
    let lateral = on(0, 0.0) || on(0, 1.0);
    match (region, case) {
        (Region::Stokes, CaseId::Manufactured) => (lateral || on(1, 1.0)).then_some(FacetClass::GammaS),
        (Region::Darcy, CaseId::Manufactured) => (lateral || on(1, 0.0)).then_some(FacetClass::GammaD),
        (Region::Stokes, CaseId::SurfaceSubsurface) => {
            if on(0, 0.0) {
                Some(FacetClass::GammaS1)
            } else if on(0, 1.0) {
                Some(FacetClass::GammaS2)
            } else if on(1, 1.0) {
                Some(FacetClass::GammaS3)
            } else {
                None
            }
        }
        (Region::Darcy, CaseId::SurfaceSubsurface) => {
            if lateral {
                Some(FacetClass::GammaD1)
            } else if on(1, 0.0) {
                Some(FacetClass::GammaD2)
            } else {
                None
            }
        }
    }
}

fn warn_duplicate_vertices(vertices: &[Point]) {
    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    for (i, v) in vertices.iter().enumerate() {
        if let Some(j) = seen.insert((v[0].to_bits(), v[1].to_bits()), i) {
            log::warn!("vertices {j} and {i} share coordinates ({}, {}); not merged", v[0], v[1]);
        }
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

pub fn centroid(p: [Point; 3]) -> Point {
    [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
}

/// Options for [`generate_mesh_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct MeshOptions {
    /// Seed for interior-vertex perturbation; `None` keeps the structured grid.
    pub perturb_seed: Option<u64>,
}

/// Structured triangulation of the unit square with `n` cells per edge, each
/// square split along its diagonal, tagged Stokes above `y = 0.5`.
pub fn generate_mesh(n: usize) -> Result<Mesh> {
    generate_mesh_with(n, MeshOptions::default())
}

pub fn generate_mesh_with(n: usize, opts: MeshOptions) -> Result<Mesh> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "cells per edge must be even and >= 2, got {n}"
        )));
    }
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices: Vec<Point> = (0..=n)
        .flat_map(|j| (0..=n).map(move |i| [i as f64 * h, j as f64 * h]))
        .collect();

    if let Some(seed) = opts.perturb_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for j in 1..n {
            for i in 1..n {
                let r: f64 = rng.random_range(0.0..0.2 * h);
                let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                if 2 * j == n {
                    continue;
                }
                let v = &mut vertices[idx(i, j)];
                v[0] += r * theta.cos();
                v[1] += r * theta.sin();
            }
        }
    }

    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        let region = if 2 * j >= n { Region::Stokes } else { Region::Darcy };
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            cells.push(([a, b, c], region));
            cells.push(([a, c, d], region));
        }
    }
    Mesh::from_parts(vertices, cells)
}

/// Reads and validates a mesh file.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    Mesh::parse(&std::fs::read_to_string(path)?)
}

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, mesh.to_text())?;
    Ok(())
}

pub fn classify_facets(mesh: Mesh, case: CaseId) -> Result<Mesh> {
    mesh.classify(case)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n2_counts_by_hand() {
        let m = generate_mesh(2).unwrap();
        assert_eq!(m.num_cells(), 8);
        let s = m.cells().iter().filter(|c| c.region == Region::Stokes).count();
        assert_eq!(s, 4);
        assert_eq!(m.count_class(FacetClass::Interface), 2);
        for c in m.cells() {
            assert!((c.area - 0.125).abs() < 1e-15);
        }
        let total: f64 = m.cells().iter().map(|c| c.area).sum();
        assert!((total - 1.0).abs() < 1e-15);
        // 3x3 vertices: 12 grid edges + 4 diagonals.
        assert_eq!(m.facets().len(), 16);
        m.validate().unwrap();
    }

    #[test]
    fn odd_or_small_n_rejected() {
        assert!(matches!(generate_mesh(3), Err(Error::InvalidParameter(_))));
        assert!(matches!(generate_mesh(0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn interface_normals_point_into_darcy() {
        let m = generate_mesh(6).unwrap();
        for f in m.facets().iter().filter(|f| f.class == FacetClass::Interface) {
            assert_eq!(m.cells()[f.owner].region, Region::Stokes);
            assert_eq!(m.cells()[f.neighbor.unwrap()].region, Region::Darcy);
            assert!((f.normal[0]).abs() < 1e-15 && (f.normal[1] + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn facet_incidence_and_orientation() {
        let m = generate_mesh_with(8, MeshOptions { perturb_seed: Some(7) }).unwrap();
        m.validate().unwrap();
        let mut incidence = vec![0usize; m.facets().len()];
        for c in 0..m.num_cells() {
            for f in m.cell_facets(c) {
                incidence[f] += 1;
                // Outward normal points away from the cell centroid.
                let n = m.outward_normal(f, c);
                let [a, _] = m.facet_points(f);
                let ctr = centroid(m.cell_points(c));
                assert!(n[0] * (a[0] - ctr[0]) + n[1] * (a[1] - ctr[1]) > 0.0);
            }
        }
        for (fi, f) in m.facets().iter().enumerate() {
            let expect = if f.neighbor.is_some() { 2 } else { 1 };
            assert_eq!(incidence[fi], expect);
        }
        let total: usize = FacetClass::ALL.iter().map(|&c| m.count_class(c)).sum();
        assert_eq!(total, m.facets().len());
    }

    #[test]
    fn perturbation_pins_boundary_and_interface() {
        let a = generate_mesh(8).unwrap();
        let b = generate_mesh_with(8, MeshOptions { perturb_seed: Some(3) }).unwrap();
        let mut moved = 0;
        for (p, q) in a.vertices().iter().zip(b.vertices()) {
            let pinned = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0 || p[1] == 0.5;
            if pinned {
                assert_eq!(p, q);
            } else if p != q {
                moved += 1;
                assert!(dist(*p, *q) <= 0.2 / 8.0);
            }
        }
        assert!(moved > 0);
        let c = generate_mesh_with(8, MeshOptions { perturb_seed: Some(3) }).unwrap();
        assert_eq!(b, c);
    }

    #[test]
    fn round_trip_text() {
        let m = generate_mesh(2).unwrap();
        let back = Mesh::parse(&m.to_text()).unwrap();
        assert_eq!(m, back);
        let p = generate_mesh_with(6, MeshOptions { perturb_seed: Some(11) }).unwrap();
        assert_eq!(Mesh::parse(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn straddling_cell_rejected() {
        let text = "vertices 4 / cells 2\n0 0\n1 0\n1 1\n0 1\n0 1 2 s\n0 2 3 d\n";
        match Mesh::parse(text) {
            Err(Error::Validation { message, .. }) => assert_eq!(message, "cell crosses interface"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "vertices 3 / cells 1\n0 0\n1 x\n0 1\n0 1 2 d\n";
        match Mesh::parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(Mesh::parse("nodes 3\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicate_coordinates_tolerated() {
        // Extra vertex 9 duplicates the centre vertex 4; it is kept, not merged.
        let m = generate_mesh(2).unwrap();
        let mut verts = m.vertices().to_vec();
        verts.push(verts[4]);
        let cells: Vec<_> = m.cells().iter().map(|c| (c.vertices, c.region)).collect();
        let dup = Mesh::from_parts(verts, cells).unwrap();
        assert_eq!(dup.vertices().len(), 10);
    }

    #[test]
    fn classification_surface_subsurface() {
        let m = generate_mesh(4).unwrap().classify(CaseId::SurfaceSubsurface).unwrap();
        for (fi, f) in m.facets().iter().enumerate() {
            let [a, b] = m.facet_points(fi);
            match f.class {
                FacetClass::GammaS1 => assert!(a[0] == 0.0 && b[0] == 0.0 && a[1] >= 0.5),
                FacetClass::GammaS2 => assert!(a[0] == 1.0 && b[0] == 1.0),
                FacetClass::GammaS3 => assert!(a[1] == 1.0 && b[1] == 1.0),
                FacetClass::GammaD1 => assert!((a[0] == 0.0 && b[0] == 0.0) || (a[0] == 1.0 && b[0] == 1.0)),
                FacetClass::GammaD2 => assert!(a[1] == 0.0 && b[1] == 0.0),
                FacetClass::Interface => assert!(a[1] == 0.5 && b[1] == 0.5),
                FacetClass::GammaS | FacetClass::GammaD => panic!("collapsed class in split case"),
                _ => {}
            }
        }
        assert_eq!(m.count_class(FacetClass::GammaS1), 2);
        assert_eq!(m.count_class(FacetClass::GammaD1), 4);
        assert_eq!(m.count_class(FacetClass::GammaD2), 4);
    }

    #[test]
    fn interior_boundary_facet_fails_classification() {
        // A single stokes triangle whose hypotenuse is not on the unit-square boundary.
        let verts = vec![[0.0, 0.5], [1.0, 0.5], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0], [1.0, 0.0]];
        let cells = vec![([0, 1, 2], Region::Stokes), ([0, 4, 5], Region::Darcy), ([0, 5, 1], Region::Darcy)];
        assert!(matches!(Mesh::from_parts(verts, cells), Err(Error::Classification { .. })));
    }
}
