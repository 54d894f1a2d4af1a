//! Staggered Lagrangian mesh, discrete state, difference operators and norms.
//!
//! Velocity lives on the `n + 1` nodes, specific volume, temperature and mass
//! fraction on the `n` cells. Cell `j` sits between nodes `j` and `j + 1`.

use serde::{Deserialize, Serialize};

use crate::error::GridError;

pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    /// `[-L, L]`, truncation of the whole real line.
    WholeLine,
    /// `[0, L]`, truncation of the half line with a wall at `x = 0`.
    HalfLine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    half_length: f64,
    n: usize,
    kind: DomainKind,
    dx: f64,
}

impl Mesh {
    pub fn new(half_length: f64, n: usize, kind: DomainKind) -> Result<Self, GridError> {
        if n < MIN_CELLS {
            return Err(GridError::InvalidMesh(format!(
                "need at least {MIN_CELLS} cells, got {n}"
            )));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(GridError::InvalidMesh(format!(
                "half length must be positive, got {half_length}"
            )));
        }
        let width = match kind {
            DomainKind::WholeLine => 2.0 * half_length,
            DomainKind::HalfLine => half_length,
        };
        Ok(Self {
            half_length,
            n,
            kind,
            dx: width / n as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn half_length(&self) -> f64 {
        self.half_length
    }
    pub fn kind(&self) -> DomainKind {
        self.kind
    }
    pub fn left(&self) -> f64 {
        match self.kind {
            DomainKind::WholeLine => -self.half_length,
            DomainKind::HalfLine => 0.0,
        }
    }
    pub fn right(&self) -> f64 {
        self.half_length
    }
    /// Position of node `i`, `0 <= i <= n`.
    pub fn node(&self, i: usize) -> f64 {
        self.left() + i as f64 * self.dx
    }
    /// Centre of cell `j`, `0 <= j < n`.
    pub fn center(&self, j: usize) -> f64 {
        self.left() + (j as f64 + 0.5) * self.dx
    }
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }
    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.center(j)).collect()
    }

    fn check_cells(&self, g: &[f64]) -> Result<(), GridError> {
        check_len(self.n, g.len())
    }
    fn check_nodes(&self, f: &[f64]) -> Result<(), GridError> {
        check_len(self.n + 1, f.len())
    }

    /// Integer `k` such that `[k, k + 1]` lies inside the domain.
    pub fn unit_intervals(&self) -> std::ops::RangeInclusive<i64> {
        let lo = (self.left() - 1e-12).ceil() as i64;
        let hi = (self.right() + 1e-12).floor() as i64 - 1;
        lo..=hi
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), GridError> {
    if expected == got {
        Ok(())
    } else {
        Err(GridError::LengthMismatch { expected, got })
    }
}

/// Ghost-cell rule at one end of a cell field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ghost {
    /// Face value pinned: ghost = `2 * value - edge`.
    Dirichlet(f64),
    /// Zero normal derivative: ghost = edge.
    Neumann,
}

impl Ghost {
    pub fn value(&self, edge: f64) -> f64 {
        match *self {
            Ghost::Dirichlet(b) => 2.0 * b - edge,
            Ghost::Neumann => edge,
        }
    }
}

/// Ghost rules at the left and right ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ends {
    pub left: Ghost,
    pub right: Ghost,
}

impl Ends {
    pub fn dirichlet(value: f64) -> Self {
        Self {
            left: Ghost::Dirichlet(value),
            right: Ghost::Dirichlet(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    U,
    V,
    Theta,
    Z,
}

impl Field {
    pub const ALL: [Field; 4] = [Field::U, Field::V, Field::Theta, Field::Z];

    pub fn name(&self) -> &'static str {
        match self {
            Field::U => "u",
            Field::V => "v",
            Field::Theta => "theta",
            Field::Z => "z",
        }
    }

    /// Far-field value.
    pub fn equilibrium(&self) -> f64 {
        match self {
            Field::U | Field::Theta => 1.0,
            Field::V | Field::Z => 0.0,
        }
    }
}

/// The four discrete fields at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    /// Last accepted step size (0 for initial data).
    pub dt: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
}

impl State {
    pub fn equilibrium(mesh: &Mesh) -> Self {
        Self {
            t: 0.0,
            dt: 0.0,
            u: vec![1.0; mesh.n()],
            v: vec![0.0; mesh.n() + 1],
            theta: vec![1.0; mesh.n()],
            z: vec![0.0; mesh.n()],
        }
    }

    pub fn field(&self, field: Field) -> &[f64] {
        match field {
            Field::U => &self.u,
            Field::V => &self.v,
            Field::Theta => &self.theta,
            Field::Z => &self.z,
        }
    }

    pub fn check_shape(&self, mesh: &Mesh) -> Result<(), GridError> {
        mesh.check_cells(&self.u)?;
        mesh.check_nodes(&self.v)?;
        mesh.check_cells(&self.theta)?;
        mesh.check_cells(&self.z)
    }

    pub fn interval_integral(&self, field: Field, k: i64, mesh: &Mesh) -> Result<f64, GridError> {
        match field {
            Field::V => {
                let cells = node_to_cell_avg(&self.v, mesh)?;
                interval_integral(&cells, mesh, k)
            }
            _ => interval_integral(self.field(field), mesh, k),
        }
    }
}

/// `(f[j+1] - f[j]) / dx` for every cell.
pub fn dnode_to_cell(f: &[f64], mesh: &Mesh) -> Result<Vec<f64>, GridError> {
    mesh.check_nodes(f)?;
    let dx = mesh.dx();
    Ok(f.windows(2).map(|w| (w[1] - w[0]) / dx).collect())
}

/// Node derivative of a cell field, with ghost cells closing both ends.
pub fn dcell_to_node(g: &[f64], mesh: &Mesh, ends: Ends) -> Result<Vec<f64>, GridError> {
    mesh.check_cells(g)?;
    let n = mesh.n();
    let dx = mesh.dx();
    let mut out = Vec::with_capacity(n + 1);
    out.push((g[0] - ends.left.value(g[0])) / dx);
    out.extend(g.windows(2).map(|w| (w[1] - w[0]) / dx));
    out.push((ends.right.value(g[n - 1]) - g[n - 1]) / dx);
    Ok(out)
}

/// Arithmetic average of a cell field onto nodes, ghosts at the ends.
pub fn cell_to_node_avg(g: &[f64], mesh: &Mesh, ends: Ends) -> Result<Vec<f64>, GridError> {
    mesh.check_cells(g)?;
    let n = mesh.n();
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.5 * (g[0] + ends.left.value(g[0])));
    out.extend(g.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(0.5 * (g[n - 1] + ends.right.value(g[n - 1])));
    Ok(out)
}

pub fn node_to_cell_avg(f: &[f64], mesh: &Mesh) -> Result<Vec<f64>, GridError> {
    mesh.check_nodes(f)?;
    Ok(f.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
}

/// Midpoint-rule integral of a cell field over `[k, k + 1]`; cells cut by the
/// interval ends contribute in proportion to their overlap.
pub fn interval_integral(g: &[f64], mesh: &Mesh, k: i64) -> Result<f64, GridError> {
    mesh.check_cells(g)?;
    let (a, b) = (k as f64, k as f64 + 1.0);
    let tol = 1e-12;
    if a < mesh.left() - tol || b > mesh.right() + tol {
        return Err(GridError::IntervalOutOfRange {
            k,
            lo: mesh.left(),
            hi: mesh.right(),
        });
    }
    let dx = mesh.dx();
    let first = (((a - mesh.left()) / dx).floor().max(0.0) as usize).min(mesh.n() - 1);
    let mut total = 0.0;
    for (j, &gj) in g.iter().enumerate().skip(first) {
        let lo = mesh.node(j);
        if lo >= b {
            break;
        }
        let hi = lo + dx;
        let overlap = hi.min(b) - lo.max(a);
        if overlap > 0.0 {
            total += gj * overlap;
        }
    }
    Ok(total)
}

/// Discrete L2 norm of the deviation `(u - 1, v, theta - 1, z)`.
pub fn l2_dev(state: &State, mesh: &Mesh) -> f64 {
    l2_dev_sq(state, mesh).sqrt()
}

fn l2_dev_sq(state: &State, mesh: &Mesh) -> f64 {
    let dx = mesh.dx();
    let cells: f64 = state
        .u
        .iter()
        .zip(&state.theta)
        .zip(&state.z)
        .map(|((u, th), z)| (u - 1.0).powi(2) + (th - 1.0).powi(2) + z * z)
        .sum();
    let nodes: f64 = state.v.iter().map(|v| v * v).sum();
    (cells + nodes) * dx
}

/// Discrete H1 norm of the deviation: L2 part plus first differences of all
/// four fields (interior differences for cell fields, cell differences for v).
pub fn h1_dev(state: &State, mesh: &Mesh) -> f64 {
    let dx = mesh.dx();
    let diff_sq = |g: &[f64]| -> f64 {
        g.windows(2)
            .map(|w| ((w[1] - w[0]) / dx).powi(2))
            .sum::<f64>()
            * dx
    };
    let grads = diff_sq(&state.u) + diff_sq(&state.v) + diff_sq(&state.theta) + diff_sq(&state.z);
    (l2_dev_sq(state, mesh) + grads).sqrt()
}
