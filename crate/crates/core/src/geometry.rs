//! Affine maps between the reference triangle/segment and mesh entities.

use crate::mesh::{Mesh, Point};

/// `x = p0 + J xi` for a triangle with vertices `p0, p1, p2`.
#[derive(Debug, Clone, Copy)]
pub struct CellMap {
    pub p0: Point,
    /// Columns are `p1 - p0` and `p2 - p0`.
    pub jac: [[f64; 2]; 2],
    pub inv: [[f64; 2]; 2],
    pub det: f64,
}

impl CellMap {
    pub fn new(p: [Point; 3]) -> Self {
        let jac = [[p[1][0] - p[0][0], p[2][0] - p[0][0]], [p[1][1] - p[0][1], p[2][1] - p[0][1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        CellMap { p0: p[0], jac, inv, det }
    }

    pub fn of_cell(mesh: &Mesh, cell: usize) -> Self {
        Self::new(mesh.cell_points(cell))
    }

    pub fn to_physical(&self, xi: Point) -> Point {
        [
            self.p0[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.p0[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    pub fn to_reference(&self, x: Point) -> Point {
        let d = [x[0] - self.p0[0], x[1] - self.p0[1]];
        [
            self.inv[0][0] * d[0] + self.inv[0][1] * d[1],
            self.inv[1][0] * d[0] + self.inv[1][1] * d[1],
        ]
    }

    /// Physical gradient `J^{-T} g` of a reference gradient `g`.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv[0][0] * g[0] + self.inv[1][0] * g[1],
            self.inv[0][1] * g[0] + self.inv[1][1] * g[1],
        ]
    }
}

/// Point at parameter `t` on the segment `[a, b]`.
pub fn lerp(p: [Point; 2], t: f64) -> Point {
    [p[0][0] + t * (p[1][0] - p[0][0]), p[0][1] + t * (p[1][1] - p[0][1])]
}
