//! Assembly of the global symmetric saddle-point system.
//!
//! Each bilinear form has its own entry point emitting coordinate-format
//! contributions into a [`Triplets`] buffer; [`assemble`] runs all of them and
//! hands the result to [`finalize`]. Every form is emitted symmetrically
//! (local matrices are symmetrized, coupling blocks are written together
//! with their transposes), so the finalized matrix is bitwise symmetric.

use crate::cases::{CaseDefinition, DarcyBc, Permeability, StokesBc};
use crate::error::{Error, Result};
use crate::geometry::{lerp, CellMap};
use crate::mesh::{FacetClass, Mesh, Point, Region};
use crate::refelem::{basis, quad, BasisSet, EntityKind, QuadRule, Tabulation, MAX_QUAD_DEGREE};
use crate::spaces::{DofLayout, Space};

/// Exactness of the rules used for forcing and boundary data.
pub const DATA_QUAD_DEGREE: usize = MAX_QUAD_DEGREE;

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub case: CaseDefinition,
    pub k: usize,
    /// Interior-penalty parameter.
    pub beta: f64,
}

impl ProblemConfig {
    /// Configuration with the default penalty `beta = 10 k^2`.
    pub fn new(case: CaseDefinition, k: usize) -> Self {
        let beta = 10.0 * (k * k) as f64;
        ProblemConfig { case, k, beta }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.case;
        if !(c.mu > 0.0 && c.mu.is_finite()) {
            return Err(Error::Config(format!("mu must be positive, got {}", c.mu)));
        }
        if !(c.alpha > 0.0 && c.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", c.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if let Permeability::Constant(k) = c.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Config(format!("kappa must be positive, got {k}")));
            }
        }
        Ok(())
    }

    fn kappa_at(&self, x: Point) -> Result<f64> {
        let k = self.case.kappa.at(x);
        if k > 0.0 && k.is_finite() {
            Ok(k)
        } else {
            Err(Error::Config(format!("permeability {k} at ({}, {}) is not positive", x[0], x[1])))
        }
    }
}

/// Coordinate-format matrix contributions, in emission order.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    entries: Vec<(u32, u32, f64)>,
}

impl Triplets {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row as u32, col as u32, value));
    }

    /// Pushes `(row, col)` and `(col, row)` with the same value.
    pub fn push_pair(&mut self, row: usize, col: usize, value: f64) {
        self.push(row, col, value);
        self.push(col, row, value);
    }

    pub fn extend(&mut self, other: Triplets) {
        self.entries.extend(other.entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|&(r, c, v)| (r as usize, c as usize, v))
    }

    /// Dense `n x n` sum of the contributions; for tests and small probes.
    pub fn to_dense(&self, n: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; n]; n];
        for (r, c, v) in self.iter() {
            out[r][c] += v;
        }
        out
    }

    /// Emits a symmetric local matrix: entry `(i, j)` and `(j, i)` both get
    /// `(m_ij + m_ji) / 2`.
    fn scatter_symmetric(&mut self, dofs: &[usize], m: &[f64]) {
        let n = dofs.len();
        for i in 0..n {
            for j in 0..n {
                let v = 0.5 * (m[i * n + j] + m[j * n + i]);
                if v != 0.0 {
                    self.push(dofs[i], dofs[j], v);
                }
            }
        }
    }
}

/// Compressed sparse row matrix with `u32` column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicates in emission order, so identical input gives a
    /// bit-identical matrix.
    pub fn from_triplets(n: usize, t: &Triplets) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in &t.entries {
            counts[r as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0u32; t.entries.len()];
        let mut vals = vec![0.0; t.entries.len()];
        for &(r, c, v) in &t.entries {
            let slot = &mut next[r as usize];
            cols[*slot] = c;
            vals[*slot] = v;
            *slot += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..n {
            let (s, e) = (counts[r], counts[r + 1]);
            order.clear();
            order.extend(s..e);
            order.sort_by_key(|&i| cols[i]);
            let mut last: Option<u32> = None;
            for &i in &order {
                if last == Some(cols[i]) {
                    *values.last_mut().unwrap() += vals[i];
                } else {
                    col_idx.push(cols[i]);
                    values.push(vals[i]);
                    last = Some(cols[i]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |i| (self.col_idx[i] as usize, self.values[i]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match cols.binary_search(&(c as u32)) {
            Ok(i) => self.values[self.row_ptr[r] + i],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }
}

/// The finalized system `A x = b`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Index of the mean-pressure multiplier, when active.
    pub multiplier: Option<usize>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.matrix.n
    }
}

/// Basis tables and quadrature shared by all forms at one degree.
pub(crate) struct Tables {
    pub cell: BasisSet,
    pub press: BasisSet,
    pub facet: BasisSet,
    pub cell_quad: QuadRule,
    pub facet_quad: QuadRule,
    pub data_cell_quad: QuadRule,
    pub data_facet_quad: QuadRule,
    pub cell_tab: Tabulation,
    pub press_tab: Tabulation,
}

impl Tables {
    pub fn new(k: usize) -> Result<Self> {
        let cell = basis(EntityKind::Triangle, k)?;
        let press = basis(EntityKind::Triangle, k - 1)?;
        let facet = basis(EntityKind::Segment, k)?;
        let cell_quad = quad(EntityKind::Triangle, 2 * k + 2)?;
        let facet_quad = quad(EntityKind::Segment, 2 * k + 2)?;
        let data_cell_quad = quad(EntityKind::Triangle, DATA_QUAD_DEGREE)?;
        let data_facet_quad = quad(EntityKind::Segment, DATA_QUAD_DEGREE)?;
        let cell_tab = cell.tabulate(&cell_quad.points);
        let press_tab = press.tabulate(&cell_quad.points);
        Ok(Tables {
            cell,
            press,
            facet,
            cell_quad,
            facet_quad,
            data_cell_quad,
            data_facet_quad,
            cell_tab,
            press_tab,
        })
    }
}

/// Cell basis data at one facet quadrature point.
pub(crate) struct FacetSample {
    /// Quadrature weight times facet length.
    pub w: f64,
    pub phi: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub psi: Vec<f64>,
}

pub(crate) fn facet_samples(t: &Tables, mesh: &Mesh, map: &CellMap, facet: usize, rule: &QuadRule) -> Vec<FacetSample> {
    let pts = mesh.facet_points(facet);
    let len = mesh.facets()[facet].length;
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(p, &w)| {
            let x = lerp(pts, p[0]);
            let xi = map.to_reference(x);
            let grad = t.cell.eval_grad(xi).into_iter().map(|g| map.grad(g)).collect();
            FacetSample {
                w: w * len,
                phi: t.cell.eval(xi),
                grad,
                psi: t.facet.eval(*p),
            }
        })
        .collect()
}

fn cells_in(mesh: &Mesh, region: Region) -> impl Iterator<Item = usize> + '_ {
    (0..mesh.num_cells()).filter(move |&c| mesh.cells()[c].region == region)
}

fn local_index(dofs: &mut Vec<usize>, g: usize) -> usize {
    match dofs.iter().position(|&d| d == g) {
        Some(i) => i,
        None => {
            dofs.push(g);
            dofs.len() - 1
        }
    }
}

/// Stokes viscous form: strain-rate cell term, facet penalty and the two
/// symmetric consistency terms. Touches `V_h` and `Vbar_h` only.
pub fn assemble_ah_s(mesh: &Mesh, layout: &DofLayout, config: &ProblemConfig) -> Result<Triplets> {
    let t = Tables::new(config.k)?;
    let mut out = Triplets::new();
    let mu = config.case.mu;
    let nb = t.cell.dim();
    let nf = t.facet.dim();
    for c in cells_in(mesh, Region::Stokes) {
        let map = CellMap::of_cell(mesh, c);
        let h = mesh.cells()[c].diameter;
        let mut dofs: Vec<usize> = layout.cell_velocity(c).collect();
        let mut facet_loc = Vec::with_capacity(3);
        for f in mesh.cell_facets(c) {
            let vb = layout
                .facet_velocity(f, mesh)
                .ok_or_else(|| Error::Config(format!("stokes facet {f} has no facet velocity")))?;
            let loc: Vec<usize> = vb.iter().map(|&g| local_index(&mut dofs, g)).collect();
            facet_loc.push((f, loc));
        }
        let n = dofs.len();
        let mut m = vec![0.0; n * n];

        for (q, &wq) in t.cell_quad.weights.iter().enumerate() {
            let w = wq * map.det * 2.0 * mu;
            let g: Vec<[f64; 2]> = t.cell_tab.grads[q].iter().map(|&g| map.grad(g)).collect();
            for ci in 0..2 {
                for i in 0..nb {
                    for cj in 0..2 {
                        for j in 0..nb {
                            let dot = if ci == cj { g[i][0] * g[j][0] + g[i][1] * g[j][1] } else { 0.0 };
                            let val = 0.5 * (dot + g[i][cj] * g[j][ci]);
                            m[(ci * nb + i) * n + cj * nb + j] += w * val;
                        }
                    }
                }
            }
        }

        let penalty = 2.0 * config.beta * mu / h;
        // Per facet: functions u_I with jump value w_I = u - ubar and flux
        // sigma_I = 2 mu eps(u) n.
        let mut idx = Vec::new();
        let mut wv: Vec<[f64; 2]> = Vec::new();
        let mut sv: Vec<[f64; 2]> = Vec::new();
        for (f, loc) in &facet_loc {
            let nrm = mesh.outward_normal(*f, c);
            for s in facet_samples(&t, mesh, &map, *f, &t.facet_quad) {
                idx.clear();
                wv.clear();
                sv.clear();
                for comp in 0..2 {
                    for i in 0..nb {
                        let gn = s.grad[i][0] * nrm[0] + s.grad[i][1] * nrm[1];
                        let mut w = [0.0; 2];
                        w[comp] = s.phi[i];
                        let mut sig = [mu * s.grad[i][0] * nrm[comp], mu * s.grad[i][1] * nrm[comp]];
                        sig[comp] += mu * gn;
                        idx.push(comp * nb + i);
                        wv.push(w);
                        sv.push(sig);
                    }
                }
                for comp in 0..2 {
                    for a in 0..nf {
                        let mut w = [0.0; 2];
                        w[comp] = -s.psi[a];
                        idx.push(loc[comp * nf + a]);
                        wv.push(w);
                        sv.push([0.0, 0.0]);
                    }
                }
                for (p, &li) in idx.iter().enumerate() {
                    for (r, &lj) in idx.iter().enumerate() {
                        let ww = wv[p][0] * wv[r][0] + wv[p][1] * wv[r][1];
                        let sw = sv[r][0] * wv[p][0] + sv[r][1] * wv[p][1];
                        let ws = sv[p][0] * wv[r][0] + sv[p][1] * wv[r][1];
                        m[li * n + lj] += s.w * (penalty * ww - sw - ws);
                    }
                }
            }
        }
        out.scatter_symmetric(&dofs, &m);
    }
    Ok(out)
}

/// Darcy form `int kappa^{-1} u . v` with pointwise permeability.
pub fn assemble_ah_d(mesh: &Mesh, layout: &DofLayout, config: &ProblemConfig) -> Result<Triplets> {
    let t = Tables::new(config.k)?;
    let mut out = Triplets::new();
    let nb = t.cell.dim();
    for c in cells_in(mesh, Region::Darcy) {
        let map = CellMap::of_cell(mesh, c);
        let dofs: Vec<usize> = layout.cell_velocity(c).collect();
        let mut m = vec![0.0; nb * nb];
        for (q, &wq) in t.cell_quad.weights.iter().enumerate() {
            let x = map.to_physical(t.cell_quad.points[q]);
            let w = wq * map.det / config.kappa_at(x)?;
            let phi = &t.cell_tab.values[q];
            for i in 0..nb {
                for j in 0..nb {
                    m[i * nb + j] += w * phi[i] * phi[j];
                }
            }
        }
        for comp in 0..2 {
            for i in 0..nb {
                for j in 0..nb {
                    let v = 0.5 * (m[i * nb + j] + m[j * nb + i]);
                    if v != 0.0 {
                        out.push(dofs[comp * nb + i], dofs[comp * nb + j], v);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Beavers–Joseph–Saffman interface form on tangential facet velocities,
/// with permeability sampled at facet quadrature points.
pub fn assemble_ah_i(mesh: &Mesh, layout: &DofLayout, config: &ProblemConfig) -> Result<Triplets> {
    let t = Tables::new(config.k)?;
    let mut out = Triplets::new();
    let nf = t.facet.dim();
    for (fi, f) in mesh.facets().iter().enumerate() {
        if f.class != FacetClass::Interface {
            continue;
        }
        let dofs = layout.facet_velocity(fi, mesh).expect("interface facet carries Vbar");
        let pts = mesh.facet_points(fi);
        let n = f.normal;
        let proj = [[1.0 - n[0] * n[0], -n[0] * n[1]], [-n[1] * n[0], 1.0 - n[1] * n[1]]];
        let size = 2 * nf;
        let mut m = vec![0.0; size * size];
        for (p, &wq) in t.facet_quad.points.iter().zip(&t.facet_quad.weights) {
            let x = lerp(pts, p[0]);
            let coef = config.case.alpha / config.kappa_at(x)?.sqrt();
            let psi = t.facet.eval(*p);
            let w = wq * f.length * coef;
            for c in 0..2 {
                for d in 0..2 {
                    for a in 0..nf {
                        for b in 0..nf {
                            m[(c * nf + a) * size + d * nf + b] += w * psi[a] * psi[b] * proj[c][d];
                        }
                    }
                }
            }
        }
        out.scatter_symmetric(&dofs, &m);
    }
    Ok(out)
}

/// Pressure–velocity coupling of `region`: `-int_K p div v + int_dK pbar v . n`,
/// emitted together with its transpose.
pub fn assemble_bh(mesh: &Mesh, layout: &DofLayout, config: &ProblemConfig, region: Region) -> Result<Triplets> {
    let t = Tables::new(config.k)?;
    let mut out = Triplets::new();
    let nb = t.cell.dim();
    let np = t.press.dim();
    let nf = t.facet.dim();
    for c in cells_in(mesh, region) {
        let map = CellMap::of_cell(mesh, c);
        let vel: Vec<usize> = layout.cell_velocity(c).collect();
        let pres: Vec<usize> = layout.cell_pressure(c).collect();

        let mut b = vec![0.0; np * 2 * nb];
        for (q, &wq) in t.cell_quad.weights.iter().enumerate() {
            let w = wq * map.det;
            let chi = &t.press_tab.values[q];
            let g: Vec<[f64; 2]> = t.cell_tab.grads[q].iter().map(|&g| map.grad(g)).collect();
            for m in 0..np {
                for comp in 0..2 {
                    for i in 0..nb {
                        b[m * 2 * nb + comp * nb + i] -= w * chi[m] * g[i][comp];
                    }
                }
            }
        }
        for (m, &row) in pres.iter().enumerate() {
            for (j, &col) in vel.iter().enumerate() {
                let v = b[m * 2 * nb + j];
                if v != 0.0 {
                    out.push_pair(row, col, v);
                }
            }
        }

        for f in mesh.cell_facets(c) {
            let rows = layout
                .facet_pressure(f, region)
                .ok_or_else(|| Error::Config(format!("facet {f} missing facet pressure")))?;
            let nrm = mesh.outward_normal(f, c);
            let mut fb = vec![0.0; nf * 2 * nb];
            for s in facet_samples(&t, mesh, &map, f, &t.facet_quad) {
                for a in 0..nf {
                    for comp in 0..2 {
                        for i in 0..nb {
                            fb[a * 2 * nb + comp * nb + i] += s.w * s.psi[a] * s.phi[i] * nrm[comp];
                        }
                    }
                }
            }
            for (a, row) in rows.enumerate() {
                for (j, &col) in vel.iter().enumerate() {
                    let v = fb[a * 2 * nb + j];
                    if v != 0.0 {
                        out.push_pair(row, col, v);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Facet pressure–facet velocity coupling `-int pbar vbar . n^j` on the
/// interface. For the Stokes side the same term is applied on traction
/// (outflow) facets, with `n` the outward normal.
pub fn assemble_bh_i(mesh: &Mesh, layout: &DofLayout, config: &ProblemConfig, region: Region) -> Result<Triplets> {
    let t = Tables::new(config.k)?;
    let mut out = Triplets::new();
    let nf = t.facet.dim();
    for (fi, f) in mesh.facets().iter().enumerate() {
        let normal = match (f.class, region) {
            (FacetClass::Interface, Region::Stokes) => f.normal,
            (FacetClass::Interface, Region::Darcy) => [-f.normal[0], -f.normal[1]],
            (class, Region::Stokes) if matches!(config.case.stokes_bc.get(&class), Some(StokesBc::Traction)) => {
                f.normal
            }
            _ => continue,
        };
        let vb = layout.facet_velocity(fi, mesh).expect("facet velocity on stokes skeleton");
        let rows: Vec<usize> = layout.facet_pressure(fi, region).expect("facet pressure").collect();
        let mut m = vec![0.0; nf * 2 * nf];
        for (p, &wq) in t.facet_quad.points.iter().zip(&t.facet_quad.weights) {
            let psi = t.facet.eval(*p);
            let w = wq * f.length;
            for a in 0..nf {
                for comp in 0..2 {
                    for b in 0..nf {
                        m[a * 2 * nf + comp * nf + b] -= w * psi[a] * psi[b] * normal[comp];
                    }
                }
            }
        }
        for (a, &row) in rows.iter().enumerate() {
            for (j, &col) in vb.iter().enumerate() {
                let v = m[a * 2 * nf + j];
                if v != 0.0 {
                    out.push_pair(row, col, v);
                }
            }
        }
    }
    Ok(out)
}

/// Right-hand side before essential-boundary lifting: forcing terms plus the
/// normal-flux data tested against facet pressures.
pub fn assemble_rhs(mesh: &Mesh, layout: &DofLayout, config: &ProblemConfig) -> Result<Vec<f64>> {
    let t = Tables::new(config.k)?;
    let case = &config.case;
    let mut rhs = vec![0.0; layout.total()];
    let nb = t.cell.dim();
    let q = &t.data_cell_quad;
    let cell_tab = t.cell.tabulate(&q.points);
    let press_tab = t.press.tabulate(&q.points);
    for c in 0..mesh.num_cells() {
        let map = CellMap::of_cell(mesh, c);
        match mesh.cells()[c].region {
            Region::Stokes => {
                let dofs: Vec<usize> = layout.cell_velocity(c).collect();
                for (qi, &wq) in q.weights.iter().enumerate() {
                    let f = (case.f_s)(map.to_physical(q.points[qi]));
                    let w = wq * map.det;
                    for comp in 0..2 {
                        for i in 0..nb {
                            rhs[dofs[comp * nb + i]] += w * f[comp] * cell_tab.values[qi][i];
                        }
                    }
                }
            }
            Region::Darcy => {
                let dofs: Vec<usize> = layout.cell_pressure(c).collect();
                for (qi, &wq) in q.weights.iter().enumerate() {
                    let f = (case.f_d)(map.to_physical(q.points[qi]));
                    let w = wq * map.det;
                    for (m, &d) in dofs.iter().enumerate() {
                        rhs[d] += w * f * press_tab.values[qi][m];
                    }
                }
            }
        }
    }

    for (fi, f) in mesh.facets().iter().enumerate() {
        let flux: Box<dyn Fn(Point) -> f64> = match (case.stokes_bc.get(&f.class), case.darcy_bc.get(&f.class)) {
            (Some(StokesBc::Velocity(g)), _) => {
                let n = f.normal;
                let g = g.clone();
                Box::new(move |x| {
                    let v = g(x);
                    v[0] * n[0] + v[1] * n[1]
                })
            }
            (_, Some(DarcyBc::NormalFlux(g))) => {
                let g = g.clone();
                Box::new(move |x| g(x))
            }
            _ => continue,
        };
        let region = mesh.cells()[f.owner].region;
        let dofs: Vec<usize> = layout.facet_pressure(fi, region).expect("facet pressure").collect();
        let pts = mesh.facet_points(fi);
        for (p, &wq) in t.data_facet_quad.points.iter().zip(&t.data_facet_quad.weights) {
            let g = flux(lerp(pts, p[0]));
            let psi = t.facet.eval(*p);
            for (a, &d) in dofs.iter().enumerate() {
                rhs[d] += wq * f.length * g * psi[a];
            }
        }
    }
    Ok(rhs)
}

/// Mean-pressure multiplier column: `int_K q` for every pressure dof.
pub fn assemble_mean_constraint(mesh: &Mesh, layout: &DofLayout, k: usize) -> Result<Triplets> {
    let mut out = Triplets::new();
    let Some(lam) = layout.multiplier_dof() else {
        return Ok(out);
    };
    let t = Tables::new(k)?;
    for c in 0..mesh.num_cells() {
        let det = CellMap::of_cell(mesh, c).det;
        for (m, row) in layout.cell_pressure(c).enumerate() {
            let v: f64 = t
                .cell_quad
                .weights
                .iter()
                .enumerate()
                .map(|(q, w)| w * det * t.press_tab.values[q][m])
                .sum();
            out.push_pair(row, lam, v);
        }
    }
    Ok(out)
}

/// Sums contributions into CSR, attaches the mean constraint and eliminates
/// essential dofs symmetrically.
pub fn finalize(
    mesh: &Mesh,
    mut parts: Triplets,
    mut rhs: Vec<f64>,
    layout: &DofLayout,
    config: &ProblemConfig,
) -> Result<LinearSystem> {
    if config.case.mean_constraint && config.case.has_pressure_data() {
        return Err(Error::Config(
            "mean-pressure constraint requested together with prescribed facet pressure".into(),
        ));
    }
    if config.case.mean_constraint != layout.has_multiplier() {
        return Err(Error::Config("layout and case disagree on the mean constraint".into()));
    }
    let n = layout.total();
    if rhs.len() != n {
        return Err(Error::Config(format!("rhs length {} != system size {n}", rhs.len())));
    }
    parts.extend(assemble_mean_constraint(mesh, layout, config.k)?);
    let full = CsrMatrix::from_triplets(n, &parts);
    drop(parts);

    let constraints = layout.constraints();
    let mut fixed = vec![None; n];
    for (&d, &v) in constraints {
        fixed[d] = Some(v);
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(full.nnz());
    let mut values = Vec::with_capacity(full.nnz());
    row_ptr.push(0);
    for r in 0..n {
        if let Some(g) = fixed[r] {
            col_idx.push(r as u32);
            values.push(1.0);
            rhs[r] = g;
        } else {
            for (c, v) in full.row(r) {
                match fixed[c] {
                    Some(g) => rhs[r] -= v * g,
                    None => {
                        col_idx.push(c as u32);
                        values.push(v);
                    }
                }
            }
        }
        row_ptr.push(col_idx.len());
    }
    Ok(LinearSystem {
        matrix: CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        },
        rhs,
        multiplier: layout.multiplier_dof(),
    })
}

/// Emits every form for `config` and finalizes the system.
pub fn assemble(mesh: &Mesh, layout: &DofLayout, config: &ProblemConfig) -> Result<LinearSystem> {
    config.validate()?;
    if layout.degree() != config.k {
        return Err(Error::Config(format!(
            "layout degree {} differs from configured degree {}",
            layout.degree(),
            config.k
        )));
    }
    let mut parts = assemble_ah_s(mesh, layout, config)?;
    parts.extend(assemble_ah_d(mesh, layout, config)?);
    parts.extend(assemble_ah_i(mesh, layout, config)?);
    for region in [Region::Stokes, Region::Darcy] {
        parts.extend(assemble_bh(mesh, layout, config, region)?);
        parts.extend(assemble_bh_i(mesh, layout, config, region)?);
    }
    let rhs = assemble_rhs(mesh, layout, config)?;
    finalize(mesh, parts, rhs, layout, config)
}

/// Leading velocity block (`V_h` and `Vbar_h`) of the finalized matrix,
/// restricted to unconstrained dofs, as a dense matrix.
pub fn velocity_block(system: &LinearSystem, layout: &DofLayout) -> nalgebra::DMatrix<f64> {
    let end = layout.block(Space::FacetVelocity).end;
    let free: Vec<usize> = (0..end).filter(|d| !layout.constraints().contains_key(d)).collect();
    let mut pos = vec![usize::MAX; end];
    for (i, &d) in free.iter().enumerate() {
        pos[d] = i;
    }
    let mut m = nalgebra::DMatrix::zeros(free.len(), free.len());
    for (i, &r) in free.iter().enumerate() {
        for (c, v) in system.matrix.row(r) {
            if c < end && pos[c] != usize::MAX {
                m[(i, pos[c])] = v;
            }
        }
    }
    m
}
