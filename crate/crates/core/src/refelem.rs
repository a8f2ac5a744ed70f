//! Reference-element bases and quadrature.
//!
//! The reference triangle is `{(x, y) : x >= 0, y >= 0, x + y <= 1}` and the
//! reference segment is `[0, 1]`. Triangle bases are nodal Lagrange bases on
//! equispaced nodes, built by inverting a monomial Vandermonde matrix; segment
//! bases use the closed-form Lagrange products.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Highest polynomial degree supported by [`basis`].
pub const MAX_DEGREE: usize = 6;
/// Highest exactness degree supported by [`quad`].
pub const MAX_QUAD_DEGREE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Triangle,
    Segment,
}

impl EntityKind {
    /// Measure of the reference entity.
    pub fn measure(self) -> f64 {
        match self {
            EntityKind::Triangle => 0.5,
            EntityKind::Segment => 1.0,
        }
    }
}

/// Dimension of `P_k` on a triangle.
pub fn triangle_dim(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Nodal Lagrange basis of degree `k` on a reference entity.
///
/// Segment nodes are ordered `t = 0`, `t = 1`, then the interior nodes
/// `t = j / k` for `j = 1..k`. Triangle nodes are `(i / k, j / k)` with
/// `i + j <= k`, ordered by `j` then `i`; the degree-0 basis has a single node
/// at the centroid.
#[derive(Debug, Clone)]
pub struct BasisSet {
    kind: EntityKind,
    degree: usize,
    nodes: Vec<[f64; 2]>,
    /// Exponents `(a, b)` of the shifted monomials `X^a Y^b` (triangle only),
    /// see [`centered`].
    exponents: Vec<(usize, usize)>,
    /// `coeffs[(m, i)]` is the coefficient of monomial `m` in basis function `i`.
    coeffs: DMatrix<f64>,
}

/// Basis values and reference gradients tabulated at a list of points.
#[derive(Debug, Clone)]
pub struct Tabulation {
    /// `values[q][i]`: function `i` at point `q`.
    pub values: Vec<Vec<f64>>,
    /// `grads[q][i]`: reference gradient of function `i` at point `q`.
    /// For segments the second component is zero.
    pub grads: Vec<Vec<[f64; 2]>>,
}

/// Builds the nodal basis of degree `k` on `kind`.
pub fn basis(kind: EntityKind, k: usize) -> Result<BasisSet> {
    match kind {
        EntityKind::Triangle if k <= MAX_DEGREE => Ok(BasisSet::triangle(k)),
        EntityKind::Segment if (1..=MAX_DEGREE).contains(&k) => Ok(BasisSet::segment(k)),
        _ => Err(Error::UnsupportedDegree { kind, degree: k }),
    }
}

impl BasisSet {
    fn triangle(k: usize) -> Self {
        let exponents: Vec<(usize, usize)> = (0..=k)
            .flat_map(|total| (0..=total).map(move |b| (total - b, b)))
            .collect();
        let nodes: Vec<[f64; 2]> = if k == 0 {
            vec![[1.0 / 3.0, 1.0 / 3.0]]
        } else {
            let kf = k as f64;
            (0..=k)
                .flat_map(|j| (0..=k - j).map(move |i| [i as f64 / kf, j as f64 / kf]))
                .collect()
        };
        let dim = nodes.len();
        let vandermonde = DMatrix::from_fn(dim, dim, |row, m| {
            let (a, b) = exponents[m];
            let [x, y] = centered(nodes[row]);
            x.powi(a as i32) * y.powi(b as i32)
        });
        // V c_i = e_i, so the coefficient matrix is V^{-1}.
        let coeffs = vandermonde
            .try_inverse()
            .expect("equispaced Vandermonde is invertible for k <= 6");
        BasisSet {
            kind: EntityKind::Triangle,
            degree: k,
            nodes,
            exponents,
            coeffs,
        }
    }

    fn segment(k: usize) -> Self {
        let kf = k as f64;
        let mut nodes = vec![[0.0, 0.0], [1.0, 0.0]];
        nodes.extend((1..k).map(|j| [j as f64 / kf, 0.0]));
        BasisSet {
            kind: EntityKind::Segment,
            degree: k,
            nodes,
            exponents: Vec::new(),
            coeffs: DMatrix::zeros(0, 0),
        }
    }

    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Writes basis values at `pt` into `out` (length [`Self::dim`]).
    pub fn eval_into(&self, pt: [f64; 2], out: &mut [f64]) {
        match self.kind {
            EntityKind::Triangle => {
                let mono = self.monomials(pt);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..mono.len()).map(|m| self.coeffs[(m, i)] * mono[m]).sum();
                }
            }
            EntityKind::Segment => {
                let t = pt[0];
                for (i, o) in out.iter_mut().enumerate() {
                    let ti = self.nodes[i][0];
                    *o = self
                        .nodes
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, n)| (t - n[0]) / (ti - n[0]))
                        .product();
                }
            }
        }
    }

    pub fn eval(&self, pt: [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(pt, &mut out);
        out
    }

    /// Writes reference gradients at `pt` into `out`.
    pub fn eval_grad_into(&self, pt: [f64; 2], out: &mut [[f64; 2]]) {
        match self.kind {
            EntityKind::Triangle => {
                let (dx, dy) = self.monomial_grads(pt);
                for (i, o) in out.iter_mut().enumerate() {
                    let mut g = [0.0; 2];
                    for m in 0..dx.len() {
                        g[0] += self.coeffs[(m, i)] * dx[m];
                        g[1] += self.coeffs[(m, i)] * dy[m];
                    }
                    *o = g;
                }
            }
            EntityKind::Segment => {
                let t = pt[0];
                for (i, o) in out.iter_mut().enumerate() {
                    let ti = self.nodes[i][0];
                    let mut d = 0.0;
                    for (l, nl) in self.nodes.iter().enumerate() {
                        if l == i {
                            continue;
                        }
                        let mut term = 1.0 / (ti - nl[0]);
                        for (j, nj) in self.nodes.iter().enumerate() {
                            if j != i && j != l {
                                term *= (t - nj[0]) / (ti - nj[0]);
                            }
                        }
                        d += term;
                    }
                    *o = [d, 0.0];
                }
            }
        }
    }

    pub fn eval_grad(&self, pt: [f64; 2]) -> Vec<[f64; 2]> {
        let mut out = vec![[0.0; 2]; self.dim()];
        self.eval_grad_into(pt, &mut out);
        out
    }

    pub fn tabulate(&self, points: &[[f64; 2]]) -> Tabulation {
        Tabulation {
            values: points.iter().map(|&p| self.eval(p)).collect(),
            grads: points.iter().map(|&p| self.eval_grad(p)).collect(),
        }
    }

    fn monomials(&self, pt: [f64; 2]) -> Vec<f64> {
        let [x, y] = centered(pt);
        self.exponents
            .iter()
            .map(|&(a, b)| x.powi(a as i32) * y.powi(b as i32))
            .collect()
    }

    fn monomial_grads(&self, pt: [f64; 2]) -> (Vec<f64>, Vec<f64>) {
        let [x, y] = centered(pt);
        let pow = |v: f64, e: usize| if e == 0 { 0.0 } else { CENTER_SCALE * e as f64 * v.powi(e as i32 - 1) };
        let dx = self
            .exponents
            .iter()
            .map(|&(a, b)| pow(x, a) * y.powi(b as i32))
            .collect();
        let dy = self
            .exponents
            .iter()
            .map(|&(a, b)| x.powi(a as i32) * pow(y, b))
            .collect();
        (dx, dy)
    }
}

const CENTER_SCALE: f64 = 1.5;

/// Monomial variables centered at the centroid and scaled to roughly
/// `[-1/2, 1]`; keeps the Vandermonde matrix well conditioned at high degree.
fn centered([x, y]: [f64; 2]) -> [f64; 2] {
    [CENTER_SCALE * (x - 1.0 / 3.0), CENTER_SCALE * (y - 1.0 / 3.0)]
}

/// A quadrature rule on a reference entity.
///
/// Segment points are stored as `[t, 0.0]`.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub kind: EntityKind,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Returns a rule on `kind` integrating every polynomial of total degree
/// `<= degree` exactly.
///
/// Triangle rules are collapsed (Duffy) tensor products of Gauss–Legendre
/// rules: `x = u`, `y = v (1 - u)` with Jacobian `1 - u`.
pub fn quad(kind: EntityKind, degree: usize) -> Result<QuadRule> {
    if degree > MAX_QUAD_DEGREE {
        return Err(Error::QuadratureDegree { degree });
    }
    let rule = match kind {
        EntityKind::Segment => {
            let (t, w) = gauss_legendre(degree / 2 + 1);
            QuadRule {
                kind,
                points: t.iter().map(|&t| [t, 0.0]).collect(),
                weights: w,
                exactness: degree,
            }
        }
        EntityKind::Triangle => {
            // Integrand in u has degree <= degree + 1 after the Jacobian.
            let (t, w) = gauss_legendre(degree / 2 + 1 + usize::from(degree % 2 == 1));
            let mut points = Vec::with_capacity(t.len() * t.len());
            let mut weights = Vec::with_capacity(t.len() * t.len());
            for (&u, &wu) in t.iter().zip(&w) {
                for (&v, &wv) in t.iter().zip(&w) {
                    points.push([u, v * (1.0 - u)]);
                    weights.push(wu * wv * (1.0 - u));
                }
            }
            QuadRule {
                kind,
                points,
                weights,
                exactness: degree,
            }
        }
    };
    Ok(rule)
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    /// Exact `\int_T x^a y^b` over the reference triangle.
    fn triangle_monomial(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn p1_triangle_is_identity_at_vertices() {
        let b = basis(EntityKind::Triangle, 1).unwrap();
        assert_eq!(b.dim(), 3);
        for (i, &v) in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
            let vals = b.eval(v);
            for (j, &val) in vals.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((val - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dimensions() {
        assert_eq!(basis(EntityKind::Triangle, 3).unwrap().dim(), 10);
        assert_eq!(basis(EntityKind::Triangle, 0).unwrap().dim(), 1);
        for k in 1..=MAX_DEGREE {
            assert_eq!(basis(EntityKind::Triangle, k).unwrap().dim(), triangle_dim(k));
            assert_eq!(basis(EntityKind::Segment, k).unwrap().dim(), k + 1);
        }
    }

    proptest::proptest! {
        #[test]
        fn partition_of_unity(x in 0.0f64..1.0, y in 0.0f64..1.0, k in 0usize..=MAX_DEGREE) {
            let (x, y) = if x + y > 1.0 { (1.0 - x, 1.0 - y) } else { (x, y) };
            let b = basis(EntityKind::Triangle, k).unwrap();
            let sum: f64 = b.eval([x, y]).iter().sum();
            proptest::prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unsupported_degrees() {
        assert!(basis(EntityKind::Triangle, 7).is_err());
        assert!(basis(EntityKind::Segment, 0).is_err());
        assert!(quad(EntityKind::Triangle, 21).is_err());
    }

    #[test]
    fn kronecker_property() {
        for kind in [EntityKind::Triangle, EntityKind::Segment] {
            for k in 1..=MAX_DEGREE {
                let b = basis(kind, k).unwrap();
                for (i, &node) in b.nodes().iter().enumerate() {
                    for (j, v) in b.eval(node).into_iter().enumerate() {
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((v - e).abs() < 1e-12, "{kind:?} k={k} i={i} j={j}: {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn reproduces_monomials() {
        let pts = [[0.1, 0.2], [0.33, 0.5], [0.7, 0.05], [0.0, 0.9]];
        for k in 0..=MAX_DEGREE {
            let b = basis(EntityKind::Triangle, k).unwrap();
            for total in 0..=k {
                for bb in 0..=total {
                    let a = total - bb;
                    let f = |p: [f64; 2]| p[0].powi(a as i32) * p[1].powi(bb as i32);
                    let coeffs: Vec<f64> = b.nodes().iter().map(|&n| f(n)).collect();
                    for &p in &pts {
                        let interp: f64 = b.eval(p).iter().zip(&coeffs).map(|(v, c)| v * c).sum();
                        assert!((interp - f(p)).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn segment_trace_matches_triangle_edge() {
        // Restriction of the triangle basis to the edge y = 0 spans P_k on that edge:
        // interpolating each restricted triangle function with the segment basis is exact.
        for k in 1..=4 {
            let tri = basis(EntityKind::Triangle, k).unwrap();
            let seg = basis(EntityKind::Segment, k).unwrap();
            for i in 0..tri.dim() {
                let coeffs: Vec<f64> = seg.nodes().iter().map(|n| tri.eval([n[0], 0.0])[i]).collect();
                for t in [0.13, 0.5, 0.77] {
                    let s: f64 = seg.eval([t, 0.0]).iter().zip(&coeffs).map(|(a, b)| a * b).sum();
                    assert!((s - tri.eval([t, 0.0])[i]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-7;
        let pts = [[0.21, 0.33], [0.6, 0.1], [0.05, 0.05]];
        for kind in [EntityKind::Triangle, EntityKind::Segment] {
            for k in 1..=MAX_DEGREE {
                let b = basis(kind, k).unwrap();
                for &p in &pts {
                    let g = b.eval_grad(p);
                    let dirs: &[[f64; 2]] = match kind {
                        EntityKind::Triangle => &[[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]],
                        EntityKind::Segment => &[[1.0, 0.0]],
                    };
                    for d in dirs {
                        let fp = b.eval([p[0] + h * d[0], p[1] + h * d[1]]);
                        let fm = b.eval([p[0] - h * d[0], p[1] - h * d[1]]);
                        for i in 0..b.dim() {
                            let fd = (fp[i] - fm[i]) / (2.0 * h);
                            let an = g[i][0] * d[0] + g[i][1] * d[1];
                            assert!((fd - an).abs() < 1e-6, "{kind:?} k={k}: {fd} vs {an}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn quadrature_reference_values() {
        let q = quad(EntityKind::Triangle, 2).unwrap();
        let integrate = |f: &dyn Fn([f64; 2]) -> f64| -> f64 {
            q.points.iter().zip(&q.weights).map(|(&p, &w)| w * f(p)).sum()
        };
        assert!((integrate(&|_| 1.0) - 0.5).abs() < 1e-15);
        assert!((integrate(&|p| p[0]) - 1.0 / 6.0).abs() < 1e-15);
        assert!((integrate(&|p| p[0] * p[1]) - 1.0 / 24.0).abs() < 1e-15);

        let s = quad(EntityKind::Segment, 3).unwrap();
        let cube: f64 = s.points.iter().zip(&s.weights).map(|(p, w)| w * p[0].powi(3)).sum();
        assert!((cube - 0.25).abs() < 1e-15);
    }

    #[test]
    fn quadrature_exactness_all_degrees() {
        for d in 0..=MAX_QUAD_DEGREE {
            let t = quad(EntityKind::Triangle, d).unwrap();
            let s = quad(EntityKind::Segment, d).unwrap();
            assert!((t.weights.iter().sum::<f64>() - 0.5).abs() < 1e-14);
            assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for total in 0..=d {
                for b in 0..=total {
                    let a = total - b;
                    let num: f64 = t
                        .points
                        .iter()
                        .zip(&t.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = triangle_monomial(a, b);
                    assert!((num - exact).abs() < 1e-13, "tri d={d} a={a} b={b}");
                }
                let num: f64 = s.points.iter().zip(&s.weights).map(|(p, w)| w * p[0].powi(total as i32)).sum();
                assert!((num - 1.0 / (total as f64 + 1.0)).abs() < 1e-13, "seg d={d} m={total}");
            }
        }
    }
}
