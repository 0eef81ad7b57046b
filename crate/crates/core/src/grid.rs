//! Uniform tensor-product grids on a chart, and the discrete Dirichlet form
//! `Σ ∫ C^{ab} ∂_a u* ∂_b u` shared by quadrature and matrix assembly.
//!
//! Periodic axes carry `N` nodes at `lo + i·L/N`. Non-periodic axes are split
//! into `N` cells over `[lo + guard_lo, hi − guard_hi]` with nodes at cell
//! centres; no flux crosses the outer faces.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::chart::MetricChart;
use crate::error::{Error, Result};

pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisGrid {
    pub nodes: usize,
    pub periodic: bool,
    pub guard_lo: f64,
    pub guard_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<AxisGrid>,
}

impl GridSpec {
    /// Grid with `nodes[a]` nodes per axis, periodicity taken from the chart, no guards.
    pub fn for_chart(chart: &MetricChart, nodes: &[usize]) -> Result<Self> {
        if nodes.len() != chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: chart.dim(),
                got: nodes.len(),
            });
        }
        Ok(Self {
            axes: chart
                .domain()
                .iter()
                .zip(nodes)
                .map(|(ax, &n)| AxisGrid {
                    nodes: n,
                    periodic: ax.periodic,
                    guard_lo: 0.0,
                    guard_hi: 0.0,
                })
                .collect(),
        })
    }

    /// Same grid with guard margins `(lo, hi)` on `axis`.
    pub fn with_guard(mut self, axis: usize, lo: f64, hi: f64) -> Self {
        self.axes[axis].guard_lo = lo;
        self.axes[axis].guard_hi = hi;
        self
    }

    /// Grid with half the nodes on every axis.
    pub fn coarsened(&self) -> Result<Self> {
        let mut out = self.clone();
        for ax in &mut out.axes {
            ax.nodes /= 2;
            if ax.nodes < MIN_NODES {
                return Err(Error::GuardViolation(format!(
                    "coarsened grid would have {} < {MIN_NODES} nodes",
                    ax.nodes
                )));
            }
        }
        Ok(out)
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.nodes).collect()
    }
}

/// Node positions of a [`GridSpec`] laid over a chart domain; the last axis varies fastest.
#[derive(Debug, Clone)]
pub struct Grid {
    coords: Vec<Vec<f64>>,
    spacing: Vec<f64>,
    periodic: Vec<bool>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn build(chart: &MetricChart, spec: &GridSpec) -> Result<Self> {
        if spec.axes.len() != chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: chart.dim(),
                got: spec.axes.len(),
            });
        }
        let mut coords: Vec<Vec<f64>> = Vec::new();
        let mut spacing = Vec::new();
        for (a, (g, ax)) in spec.axes.iter().zip(chart.domain()).enumerate() {
            if g.nodes < MIN_NODES {
                return Err(Error::GuardViolation(format!(
                    "axis {a} has {} < {MIN_NODES} nodes",
                    g.nodes
                )));
            }
            if g.periodic != ax.periodic {
                return Err(Error::GuardViolation(format!(
                    "axis {a}: grid periodic={} but chart periodic={}",
                    g.periodic, ax.periodic
                )));
            }
            if g.guard_lo < 0.0 || g.guard_hi < 0.0 || (g.periodic && (g.guard_lo > 0.0 || g.guard_hi > 0.0)) {
                return Err(Error::GuardViolation(format!("axis {a}: invalid guard margins")));
            }
            let lo = ax.lo + g.guard_lo;
            let hi = ax.hi - g.guard_hi;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::GuardViolation(format!(
                    "axis {a}: grid needs a bounded interval, got [{lo}, {hi}]"
                )));
            }
            let h = (hi - lo) / g.nodes as f64;
            let offset = if g.periodic { 0.0 } else { 0.5 };
            coords.push((0..g.nodes).map(|i| lo + (i as f64 + offset) * h).collect());
            spacing.push(h);
        }
        let n = coords.len();
        let mut strides = vec![1; n];
        for a in (0..n.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * coords[a + 1].len();
        }
        let len = coords.iter().map(Vec::len).product();
        let grid = Self {
            periodic: spec.axes.iter().map(|g| g.periodic).collect(),
            coords,
            spacing,
            strides,
            len,
        };
        for i in 0..grid.len {
            let p = grid.point(i);
            chart.metric(&p).map_err(|e| {
                Error::GuardViolation(format!("node {p:?} is not admissible: {e}"))
            })?;
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn axis_coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|s| {
                let i = idx / s;
                idx %= s;
                i
            })
            .collect()
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coords[a][i])
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len).map(|i| self.point(i)).collect()
    }

    /// Neighbour of node `idx` one step along `axis` in direction `dir` (±1);
    /// `None` past a non-periodic edge.
    pub fn neighbor(&self, idx: usize, axis: usize, dir: isize) -> Option<usize> {
        let n = self.coords[axis].len() as isize;
        let i = (idx / self.strides[axis] % n as usize) as isize;
        let j = i + dir;
        let j = if (0..n).contains(&j) {
            j
        } else if self.periodic[axis] {
            j.rem_euclid(n)
        } else {
            return None;
        };
        Some((idx as isize + (j - i) * self.strides[axis] as isize) as usize)
    }
}

// Coefficient of the face between nodes i and j: average of node values.
fn face(coef: &[DMatrix<f64>], i: usize, j: usize, a: usize) -> f64 {
    0.5 * (coef[i][(a, a)] + coef[j][(a, a)])
}

// Central difference along `axis`, mirroring across non-periodic edges:
// returns (plus, minus) node indices; weight is 1/(2h).
fn central(grid: &Grid, i: usize, axis: usize) -> (usize, usize) {
    let p = grid.neighbor(i, axis, 1).unwrap_or(i);
    let m = grid.neighbor(i, axis, -1).unwrap_or(i);
    (p, m)
}

/// Symmetric stiffness matrix `K` of the discrete form
/// `u* K u ≈ ∫ C^{ab}(q) ∂_a u* ∂_b u dⁿq` with node coefficients `coef`.
///
/// Diagonal `C^{aa}` terms use face differences; mixed `C^{ab}` terms use
/// central differences at nodes. `K` is symmetric by construction.
pub fn stiffness_matrix(grid: &Grid, coef: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = grid.len();
    let d = grid.dim();
    let vol = grid.cell_volume();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for a in 0..d {
            let h = grid.spacing()[a];
            if let Some(j) = grid.neighbor(i, a, 1) {
                if j == i {
                    continue;
                }
                let c = face(coef, i, j, a) * vol / (h * h);
                k[(i, i)] += c;
                k[(j, j)] += c;
                k[(i, j)] -= c;
                k[(j, i)] -= c;
            }
            for b in 0..d {
                if a == b || coef[i][(a, b)] == 0.0 {
                    continue;
                }
                let w = coef[i][(a, b)] * vol / (4.0 * h * grid.spacing()[b]);
                let (ap, am) = central(grid, i, a);
                let (bp, bm) = central(grid, i, b);
                for (r, sr) in [(ap, 1.0), (am, -1.0)] {
                    for (c, sc) in [(bp, 1.0), (bm, -1.0)] {
                        k[(r, c)] += w * sr * sc;
                    }
                }
            }
        }
    }
    k
}

/// Evaluates the same discrete form as [`stiffness_matrix`] directly on node
/// values, face by face.
pub fn dirichlet_form(grid: &Grid, coef: &[DMatrix<f64>], u: &[Complex64]) -> f64 {
    let d = grid.dim();
    let vol = grid.cell_volume();
    let mut total = 0.0;
    for i in 0..grid.len() {
        for a in 0..d {
            let h = grid.spacing()[a];
            if let Some(j) = grid.neighbor(i, a, 1) {
                if j != i {
                    total += face(coef, i, j, a) * vol * ((u[j] - u[i]) / h).norm_sqr();
                }
            }
            for b in 0..d {
                if a == b || coef[i][(a, b)] == 0.0 {
                    continue;
                }
                let (ap, am) = central(grid, i, a);
                let (bp, bm) = central(grid, i, b);
                let ga = (u[ap] - u[am]) / (2.0 * h);
                let gb = (u[bp] - u[bm]) / (2.0 * grid.spacing()[b]);
                total += coef[i][(a, b)] * vol * (ga.conj() * gb).re;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::chart_from_id;

    #[test]
    fn layout_and_neighbors() {
        let c = chart_from_id("sphere2:1").unwrap();
        let spec = GridSpec::for_chart(&c, &[16, 32]).unwrap();
        let g = Grid::build(&c, &spec).unwrap();
        assert_eq!(g.len(), 512);
        let h = std::f64::consts::PI / 16.0;
        assert!((g.point(0)[0] - 0.5 * h).abs() < 1e-15);
        assert_eq!(g.point(0)[1], 0.0);
        // φ is periodic and fastest
        assert_eq!(g.neighbor(31, 1, 1), Some(0));
        assert_eq!(g.neighbor(0, 1, -1), Some(31));
        // θ is bounded
        assert_eq!(g.neighbor(0, 0, -1), None);
        assert_eq!(g.neighbor(0, 0, 1), Some(32));
    }

    #[test]
    fn rejects_bad_specs() {
        let c = chart_from_id("polar2").unwrap();
        // radial axis is unbounded
        let spec = GridSpec::for_chart(&c, &[16, 16]).unwrap();
        assert!(matches!(Grid::build(&c, &spec), Err(Error::GuardViolation(_))));
        let c = chart_from_id("circle-deformed:0.1").unwrap();
        assert!(Grid::build(&c, &GridSpec::for_chart(&c, &[8]).unwrap()).is_err());
        let mut spec = GridSpec::for_chart(&c, &[32]).unwrap();
        spec.axes[0].periodic = false;
        assert!(matches!(Grid::build(&c, &spec), Err(Error::GuardViolation(_))));
        assert!(GridSpec::for_chart(&c, &[16]).unwrap().coarsened().is_err());
    }

    #[test]
    fn form_and_matrix_agree() {
        let c = chart_from_id("sphere2:1").unwrap();
        let g = Grid::build(&c, &GridSpec::for_chart(&c, &[16, 16]).unwrap()).unwrap();
        let coef: Vec<DMatrix<f64>> = (0..g.len())
            .map(|i| {
                let p = g.point(i);
                DMatrix::from_row_slice(2, 2, &[1.0 + p[0], 0.3 * p[1].cos(), 0.3 * p[1].cos(), 2.0])
            })
            .collect();
        let k = stiffness_matrix(&g, &coef);
        assert!((&k - k.transpose()).amax() < 1e-14);
        let u: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let p = g.point(i);
                Complex64::new(p[0].sin() * p[1].cos(), (2.0 * p[1]).sin())
            })
            .collect();
        let direct = dirichlet_form(&g, &coef, &u);
        let ur = nalgebra::DVector::from_iterator(g.len(), u.iter().map(|z| z.re));
        let ui = nalgebra::DVector::from_iterator(g.len(), u.iter().map(|z| z.im));
        let via_matrix = ur.dot(&(&k * &ur)) + ui.dot(&(&k * &ui));
        assert!((direct - via_matrix).abs() < 1e-10 * direct.abs());
    }
}
