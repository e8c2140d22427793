//! Tensor-product phase-space mesh and quadrature tables.
//!
//! A phase-space element is `K = K_ε × K_x¹ (× K_x²)`. On every element the
//! unknowns live at the tensor product of `(k+1)`-point Legendre–Gauss (LG)
//! nodes. The realizability limiter additionally inspects auxiliary sets
//! where one direction's LG points are replaced by `k̂`-point
//! Legendre–Gauss–Lobatto (LGL) points, `k̂ = ⌈(k+5)/2⌉`.
//!
//! All reference quantities are on `[0, 1]` with weights normalized to sum
//! to one. A one-energy-node "monochromatic" grid (`ε = 1`, `τ = 1`) supports
//! the grey benchmarks.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::moments::PrimitiveMoments;

/// A quadrature rule on `[0, 1]` (weights sum to one).
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Legendre polynomial `P_n(x)` and `P_{n−1}(x)` by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// `n`-point Legendre–Gauss rule mapped to `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Quadrature {
    assert!(n >= 1, "Gauss rule needs at least one point");
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess, descending on [−1, 1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, pm1) = legendre_pair(n, x);
            let dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (p, pm1) = legendre_pair(n, x);
        let dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[n - 1 - i] = 0.5 * (1.0 + x);
        weights[n - 1 - i] = 0.5 * w;
    }
    Quadrature { points, weights }
}

/// `n`-point Legendre–Gauss–Lobatto rule mapped to `[0, 1]` (`n ≥ 2`).
pub fn gauss_lobatto(n: usize) -> Quadrature {
    assert!(n >= 2, "Lobatto rule needs at least two points");
    let nn = n - 1;
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * i as f64 / nn as f64).cos();
        for _ in 0..100 {
            let (p, pm1) = legendre_pair(nn, x);
            let dx = (x * p - pm1) / (n as f64 * p);
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (p, _) = legendre_pair(nn, x);
        let w = 2.0 / ((nn * n) as f64 * p * p);
        points[n - 1 - i] = 0.5 * (1.0 + x);
        weights[n - 1 - i] = 0.5 * w;
    }
    points[0] = 0.0;
    points[n - 1] = 1.0;
    Quadrature { points, weights }
}

/// Values `ℓ_j(x)` of the Lagrange basis on `nodes`.
pub fn lagrange_values(nodes: &[f64], x: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != j)
                .map(|(_, &xm)| (x - xm) / (nodes[j] - xm))
                .product()
        })
        .collect()
}

/// Derivatives `ℓ_j′(x)` of the Lagrange basis on `nodes`.
pub fn lagrange_derivatives(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|j| {
            let mut sum = 0.0;
            for i in 0..n {
                if i == j {
                    continue;
                }
                let mut term = 1.0 / (nodes[j] - nodes[i]);
                for m in 0..n {
                    if m != j && m != i {
                        term *= (x - nodes[m]) / (nodes[j] - nodes[m]);
                    }
                }
                sum += term;
            }
            sum
        })
        .collect()
}

/// One-dimensional nodal tables for one reference direction.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalTables {
    /// Number of LG nodes (`k+1`, or 1 for an inactive direction).
    pub n: usize,
    pub lg: Quadrature,
    pub lgl: Quadrature,
    /// `ℓ_j(0)`.
    pub at_lo: Vec<f64>,
    /// `ℓ_j(1)`.
    pub at_hi: Vec<f64>,
    /// `deriv[q * n + j] = ℓ_j′(ξ_q)`.
    pub deriv: Vec<f64>,
    /// `to_lgl[p * n + j] = ℓ_j(ξ̂_p)`.
    pub to_lgl: Vec<f64>,
}

impl NodalTables {
    fn new(n: usize, n_lgl: usize) -> Self {
        let lg = gauss_legendre(n);
        let lgl = gauss_lobatto(n_lgl);
        let at_lo = lagrange_values(&lg.points, 0.0);
        let at_hi = lagrange_values(&lg.points, 1.0);
        let deriv = lg
            .points
            .iter()
            .flat_map(|&x| lagrange_derivatives(&lg.points, x))
            .collect();
        let to_lgl = lgl
            .points
            .iter()
            .flat_map(|&x| lagrange_values(&lg.points, x))
            .collect();
        NodalTables {
            n,
            lg,
            lgl,
            at_lo,
            at_hi,
            deriv,
            to_lgl,
        }
    }

    /// Single-node table for an inactive direction (constant data).
    fn single() -> Self {
        NodalTables {
            n: 1,
            lg: Quadrature {
                points: vec![0.5],
                weights: vec![1.0],
            },
            lgl: Quadrature {
                points: vec![0.5],
                weights: vec![1.0],
            },
            at_lo: vec![1.0],
            at_hi: vec![1.0],
            deriv: vec![0.0],
            to_lgl: vec![1.0],
        }
    }

    pub fn n_lgl(&self) -> usize {
        self.lgl.points.len()
    }

    /// Smallest normalized LGL weight `ŵ_k̂` (the endpoint weight).
    pub fn lgl_min_weight(&self) -> f64 {
        self.lgl.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Quadrature and interpolation tables shared by all elements.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureTables {
    pub degree: usize,
    /// Number of LGL points `k̂ = ⌈(k+5)/2⌉`.
    pub n_lgl: usize,
    pub space: NodalTables,
    pub energy: NodalTables,
}

impl QuadratureTables {
    pub fn new(degree: usize, monochromatic: bool) -> Self {
        let n_lgl = (degree + 5).div_ceil(2);
        let space = NodalTables::new(degree + 1, n_lgl);
        let energy = if monochromatic {
            NodalTables::single()
        } else {
            space.clone()
        };
        QuadratureTables {
            degree,
            n_lgl,
            space,
            energy,
        }
    }
}

/// Prescribed primitive state on an inflow boundary as a function of the
/// comoving energy and the boundary position.
pub type InflowProfile = Arc<dyn Fn(f64, [f64; 3]) -> PrimitiveMoments + Send + Sync>;

/// Spatial boundary condition.
#[derive(Clone)]
pub enum Boundary {
    Periodic,
    /// Ghost state from a prescribed primitive profile.
    Inflow(InflowProfile),
    /// Ghost state equal to the interior trace.
    Outflow,
}

impl fmt::Debug for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Periodic => write!(f, "Periodic"),
            Boundary::Inflow(_) => write!(f, "Inflow(..)"),
            Boundary::Outflow => write!(f, "Outflow"),
        }
    }
}

impl Boundary {
    pub fn is_periodic(&self) -> bool {
        matches!(self, Boundary::Periodic)
    }
}

/// Energy discretization.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyGrid {
    /// A single energy node at `ε = 1` with unit weight (grey transport).
    Monochromatic,
    /// DG elements with the given edges (`ε ≥ 0`, increasing).
    Elements(Vec<f64>),
}

/// Mesh construction parameters.
#[derive(Debug, Clone)]
pub struct MeshConfig {
    /// Polynomial degree `k` (1 or 2 for the benchmarks; any `k ≥ 0` works).
    pub degree: usize,
    pub energy: EnergyGrid,
    /// Element edges per spatial dimension (length 1 or 2).
    pub space_edges: Vec<Vec<f64>>,
    /// `bc[d] = (lower, upper)` for spatial dimension `d`.
    pub bc: Vec<(Boundary, Boundary)>,
}

/// Uniform edges `a, a + (b−a)/n, …, b`.
pub fn uniform_edges(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

/// Tensor-product phase-space mesh with precomputed tables.
///
/// Element index: `e = ie + n_energy·(i1 + n_x1·i2)`; node index within an
/// element: `a + n_e·(b + n_1·c)` where `a, b, c` index the energy, `x¹`
/// and `x²` nodes. Inactive directions have a single node.
#[derive(Debug, Clone)]
pub struct PhaseSpaceMesh {
    pub degree: usize,
    /// Number of spatial dimensions (1 or 2).
    pub dims: usize,
    pub monochromatic: bool,
    pub energy_edges: Vec<f64>,
    /// Edges of both spatial directions; an inactive second direction is `[0, 1]`.
    pub space_edges: [Vec<f64>; 2],
    pub bc: [(Boundary, Boundary); 2],
    pub tables: QuadratureTables,
    /// LG nodes per element in energy, `x¹`, `x²`.
    pub nodes_per_dim: [usize; 3],
}

impl PhaseSpaceMesh {
    pub fn new(cfg: MeshConfig) -> Result<Self> {
        let dims = cfg.space_edges.len();
        if !(1..=2).contains(&dims) {
            return Err(Error::Config(format!(
                "1 or 2 spatial dimensions supported, got {dims}"
            )));
        }
        if cfg.bc.len() != dims {
            return Err(Error::Config(
                "one boundary pair per spatial dimension required".into(),
            ));
        }
        for (d, edges) in cfg.space_edges.iter().enumerate() {
            check_edges(edges, &format!("spatial dimension {d}"))?;
        }
        let (monochromatic, energy_edges) = match cfg.energy {
            EnergyGrid::Monochromatic => (true, vec![]),
            EnergyGrid::Elements(e) => {
                check_edges(&e, "energy")?;
                if e[0] < 0.0 {
                    return Err(Error::Config("energy edges must be nonnegative".into()));
                }
                (false, e)
            }
        };
        for (d, (lo, hi)) in cfg.bc.iter().enumerate() {
            if lo.is_periodic() != hi.is_periodic() {
                return Err(Error::Config(format!(
                    "periodicity must match on both sides of dimension {d}"
                )));
            }
        }
        let tables = QuadratureTables::new(cfg.degree, monochromatic);
        let n = cfg.degree + 1;
        let mut space_edges = [cfg.space_edges[0].clone(), vec![0.0, 1.0]];
        let mut bc = [
            cfg.bc[0].clone(),
            (Boundary::Periodic, Boundary::Periodic),
        ];
        if dims == 2 {
            space_edges[1] = cfg.space_edges[1].clone();
            bc[1] = cfg.bc[1].clone();
        }
        let nodes_per_dim = [
            tables.energy.n,
            n,
            if dims == 2 { n } else { 1 },
        ];
        Ok(PhaseSpaceMesh {
            degree: cfg.degree,
            dims,
            monochromatic,
            energy_edges,
            space_edges,
            bc,
            tables,
            nodes_per_dim,
        })
    }

    pub fn n_energy(&self) -> usize {
        if self.monochromatic {
            1
        } else {
            self.energy_edges.len() - 1
        }
    }

    pub fn n_space(&self, d: usize) -> usize {
        self.space_edges[d].len() - 1
    }

    pub fn n_spatial_elements(&self) -> usize {
        self.n_space(0) * self.n_space(1)
    }

    pub fn n_elements(&self) -> usize {
        self.n_energy() * self.n_spatial_elements()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.nodes_per_dim.iter().product()
    }

    /// Spatial nodes per spatial element.
    pub fn spatial_nodes_per_element(&self) -> usize {
        self.nodes_per_dim[1] * self.nodes_per_dim[2]
    }

    pub fn element_index(&self, ie: usize, i1: usize, i2: usize) -> usize {
        ie + self.n_energy() * (i1 + self.n_space(0) * i2)
    }

    /// `(ie, i1, i2)` of an element index.
    pub fn element_coords(&self, e: usize) -> (usize, usize, usize) {
        let ne = self.n_energy();
        let n1 = self.n_space(0);
        (e % ne, (e / ne) % n1, e / (ne * n1))
    }

    pub fn spatial_index(&self, i1: usize, i2: usize) -> usize {
        i1 + self.n_space(0) * i2
    }

    pub fn node_index(&self, a: usize, b: usize, c: usize) -> usize {
        a + self.nodes_per_dim[0] * (b + self.nodes_per_dim[1] * c)
    }

    pub fn spatial_node_index(&self, b: usize, c: usize) -> usize {
        b + self.nodes_per_dim[1] * c
    }

    /// Length of spatial element `i` in dimension `d`.
    pub fn dx(&self, d: usize, i: usize) -> f64 {
        self.space_edges[d][i + 1] - self.space_edges[d][i]
    }

    /// Width of energy element `ie` (1 for the monochromatic grid).
    pub fn deps(&self, ie: usize) -> f64 {
        if self.monochromatic {
            1.0
        } else {
            self.energy_edges[ie + 1] - self.energy_edges[ie]
        }
    }

    /// Upper energy edge `ε_H` of element `ie` (1 for monochromatic).
    pub fn eps_hi(&self, ie: usize) -> f64 {
        if self.monochromatic {
            1.0
        } else {
            self.energy_edges[ie + 1]
        }
    }

    pub fn eps_lo(&self, ie: usize) -> f64 {
        if self.monochromatic {
            1.0
        } else {
            self.energy_edges[ie]
        }
    }

    /// Energy of node `a` in energy element `ie`.
    pub fn eps_node(&self, ie: usize, a: usize) -> f64 {
        if self.monochromatic {
            1.0
        } else {
            self.energy_edges[ie] + self.deps(ie) * self.tables.energy.lg.points[a]
        }
    }

    /// Coordinate of node `b` of spatial element `i` in dimension `d`.
    pub fn x_node(&self, d: usize, i: usize, b: usize) -> f64 {
        let t = if d == 1 && self.dims == 1 {
            0.5
        } else {
            self.tables.space.lg.points[b]
        };
        self.space_edges[d][i] + self.dx(d, i) * t
    }

    /// Spatial volume `|K_x|` of spatial element `(i1, i2)` (in 1D the
    /// second factor is the unit length of the inactive direction).
    pub fn spatial_volume(&self, i1: usize, i2: usize) -> f64 {
        self.dx(0, i1) * if self.dims == 2 { self.dx(1, i2) } else { 1.0 }
    }

    /// `∫_{K_ε} ε² dε` (exact), 1 for monochromatic.
    pub fn energy_volume(&self, ie: usize) -> f64 {
        if self.monochromatic {
            1.0
        } else {
            let (a, b) = (self.eps_lo(ie), self.eps_hi(ie));
            (b * b * b - a * a * a) / 3.0
        }
    }

    /// Phase-space volume `|K| = ∫_K τ dε dx` with `τ = ε²` (exact).
    pub fn element_volume(&self, e: usize) -> f64 {
        let (ie, i1, i2) = self.element_coords(e);
        self.energy_volume(ie) * self.spatial_volume(i1, i2)
    }

    /// Weight of energy node `a` of element `ie` against `τ dε`:
    /// `w_a ε_a² |K_ε|` (`1` for monochromatic).
    pub fn energy_weight_tau(&self, ie: usize, a: usize) -> f64 {
        if self.monochromatic {
            1.0
        } else {
            let eps = self.eps_node(ie, a);
            self.tables.energy.lg.weights[a] * eps * eps * self.deps(ie)
        }
    }

    /// Normalized spatial weight of spatial node `(b, c)` (sum 1).
    pub fn spatial_weight(&self, b: usize, c: usize) -> f64 {
        let w = &self.tables.space.lg.weights;
        w[b] * if self.dims == 2 { w[c] } else { 1.0 }
    }

    /// Energy-weighted node weights of element `e` for `∫·ε² dε dx` and
    /// `∫·ε³ dε dx` (absolute: include the element extents).
    pub fn energy_weights(&self, e: usize) -> (Vec<f64>, Vec<f64>) {
        let (ie, i1, i2) = self.element_coords(e);
        let vol_x = self.spatial_volume(i1, i2);
        let [ne, n1, n2] = self.nodes_per_dim;
        let mut w2 = vec![0.0; self.nodes_per_element()];
        let mut w3 = vec![0.0; self.nodes_per_element()];
        for c in 0..n2 {
            for b in 0..n1 {
                let ws = self.spatial_weight(b, c) * vol_x;
                for a in 0..ne {
                    let eps = self.eps_node(ie, a);
                    let wt = self.energy_weight_tau(ie, a) * ws;
                    let k = self.node_index(a, b, c);
                    w2[k] = wt;
                    w3[k] = wt * if self.monochromatic { 1.0 } else { eps };
                }
            }
        }
        (w2, w3)
    }

    /// Physical coordinates `(ε, x¹, x²)` of the node and auxiliary sets of
    /// element `e`.
    pub fn node_sets(&self, e: usize) -> NodeSets {
        let (ie, i1, i2) = self.element_coords(e);
        let t = &self.tables;
        let map_e = |r: f64| {
            if self.monochromatic {
                1.0
            } else {
                self.eps_lo(ie) + self.deps(ie) * r
            }
        };
        let map_x = |d: usize, i: usize, r: f64| self.space_edges[d][i] + self.dx(d, i) * r;
        let e_lg: Vec<f64> = t.energy.lg.points.iter().map(|&r| map_e(r)).collect();
        let e_lgl: Vec<f64> = t.energy.lgl.points.iter().map(|&r| map_e(r)).collect();
        let x1_lg: Vec<f64> = t.space.lg.points.iter().map(|&r| map_x(0, i1, r)).collect();
        let x1_lgl: Vec<f64> = t.space.lgl.points.iter().map(|&r| map_x(0, i1, r)).collect();
        let (x2_lg, x2_lgl): (Vec<f64>, Vec<f64>) = if self.dims == 2 {
            (
                t.space.lg.points.iter().map(|&r| map_x(1, i2, r)).collect(),
                t.space.lgl.points.iter().map(|&r| map_x(1, i2, r)).collect(),
            )
        } else {
            (vec![0.5], vec![0.5])
        };
        let tensor = |a: &[f64], b: &[f64], c: &[f64]| {
            let mut out = Vec::with_capacity(a.len() * b.len() * c.len());
            for &z in c {
                for &y in b {
                    for &x in a {
                        out.push([x, y, z]);
                    }
                }
            }
            out
        };
        NodeSets {
            nodes: tensor(&e_lg, &x1_lg, &x2_lg),
            energy_lgl: if self.monochromatic {
                vec![]
            } else {
                tensor(&e_lgl, &x1_lg, &x2_lg)
            },
            space_lgl: {
                let mut v = vec![tensor(&e_lg, &x1_lgl, &x2_lg)];
                if self.dims == 2 {
                    v.push(tensor(&e_lg, &x1_lg, &x2_lgl));
                }
                v
            },
        }
    }
}

fn check_edges(edges: &[f64], what: &str) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::Config(format!("{what}: need at least two edges")));
    }
    if edges.iter().any(|x| !x.is_finite()) || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(format!(
            "{what}: edges must be finite and strictly increasing"
        )));
    }
    Ok(())
}

/// Coordinates of the DG node set and the auxiliary LGL-augmented sets.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSets {
    /// LG tensor-product nodes `S⊗`.
    pub nodes: Vec<[f64; 3]>,
    /// `Ŝ_ε⊗`: LGL in energy × LG in space (empty for monochromatic grids).
    pub energy_lgl: Vec<[f64; 3]>,
    /// `Ŝ_i⊗` for each active spatial dimension.
    pub space_lgl: Vec<Vec<[f64; 3]>>,
}

impl NodeSets {
    /// Union `S̃⊗` (with duplicates removed only where coordinates coincide exactly).
    pub fn union(&self) -> Vec<[f64; 3]> {
        let mut all = self.nodes.clone();
        all.extend_from_slice(&self.energy_lgl);
        for s in &self.space_lgl {
            all.extend_from_slice(s);
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        all.dedup();
        all
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_integrate_monomials() {
        for n in 1..6 {
            let q = gauss_legendre(n);
            for p in 0..2 * n {
                let s: f64 = q.points.iter().zip(&q.weights).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((s - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p}");
            }
        }
        for n in 2..7 {
            let q = gauss_lobatto(n);
            for p in 0..(2 * n - 2) {
                let s: f64 = q.points.iter().zip(&q.weights).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((s - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn lagrange_derivative_of_linear_function() {
        let q = gauss_legendre(3);
        let d = lagrange_derivatives(&q.points, 0.3);
        let s: f64 = d.iter().zip(&q.points).map(|(a, x)| a * (2.0 * x + 1.0)).sum();
        assert!((s - 2.0).abs() < 1e-13);
    }
}
