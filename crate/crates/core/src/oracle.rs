//! Independent reference computations.
//!
//! The explicit integrator below advances all four equations with forward
//! Euler on a refined grid. It has its own difference loops and boundary
//! handling and shares only the model and grid data types with the main
//! solver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{OracleError, SolverError};
use crate::grid::{Mesh, State};
use crate::model::{FluidParams, ReactionRate};
use crate::solver::{run, BcKind, RunError, ZEnd};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy)]
enum End {
    Pin(f64),
    Reflect,
}

impl End {
    fn outside(self, edge: f64) -> f64 {
        match self {
            End::Pin(b) => 2.0 * b - edge,
            End::Reflect => edge,
        }
    }
}

/// Left-end rules for `(u, theta, z)`; the right end always pins `(1, 1, 0)`.
fn left_ends(kind: BcKind, z_end: ZEnd) -> (End, End, End) {
    let z = match (kind, z_end) {
        (BcKind::WholeLine, _) | (_, ZEnd::Dirichlet0) => End::Pin(0.0),
        (_, ZEnd::Neumann0) => End::Reflect,
    };
    match kind {
        BcKind::WholeLine => (End::Pin(1.0), End::Pin(1.0), z),
        BcKind::HalfLineInsulated => (End::Reflect, End::Reflect, z),
        BcKind::HalfLineIsothermal => (End::Reflect, End::Pin(1.0), z),
    }
}

struct Explicit {
    n: usize,
    dx: f64,
    p: FluidParams,
    rate: ReactionRate,
    left: (End, End, End),
}

impl Explicit {
    fn stable_dt(&self, s: &State, dt_cap: f64) -> f64 {
        let umin = s.u.iter().copied().fold(f64::INFINITY, f64::min);
        let diff = self.p.kappa.max(self.p.d).max(self.p.mu);
        let parabolic = 0.2 * self.dx * self.dx * umin.min(umin * umin) / diff;
        let mut speed: f64 = 0.0;
        for j in 0..self.n {
            let c = (self.p.a * s.theta[j] / s.u[j]).sqrt() + s.v[j].abs().max(s.v[j + 1].abs());
            speed = speed.max(c);
        }
        let acoustic = 0.5 * self.dx / speed.max(1e-300);
        let km = self.p.big_k * self.rate.rate_sup();
        let reaction = if km > 0.0 { 0.5 / km } else { f64::INFINITY };
        dt_cap.min(parabolic).min(acoustic).min(reaction)
    }

    fn step(&self, s: &State, dt: f64) -> State {
        let (n, dx, p) = (self.n, self.dx, &self.p);
        let (eu, et, ez) = self.left;
        let right = (End::Pin(1.0), End::Pin(1.0), End::Pin(0.0));
        let vx: Vec<f64> = (0..n).map(|j| (s.v[j + 1] - s.v[j]) / dx).collect();
        let sigma: Vec<f64> = (0..n).map(|j| (p.mu * vx[j] - p.a * s.theta[j]) / s.u[j]).collect();

        // node values of u and node differences of theta and z
        let mut un = vec![0.0; n + 1];
        let mut dth = vec![0.0; n + 1];
        let mut dz = vec![0.0; n + 1];
        for i in 0..=n {
            let (ul, ur, tl, tr, zl, zr) = if i == 0 {
                (eu.outside(s.u[0]), s.u[0], et.outside(s.theta[0]), s.theta[0], ez.outside(s.z[0]), s.z[0])
            } else if i == n {
                (
                    s.u[n - 1],
                    right.0.outside(s.u[n - 1]),
                    s.theta[n - 1],
                    right.1.outside(s.theta[n - 1]),
                    s.z[n - 1],
                    right.2.outside(s.z[n - 1]),
                )
            } else {
                (s.u[i - 1], s.u[i], s.theta[i - 1], s.theta[i], s.z[i - 1], s.z[i])
            };
            un[i] = 0.5 * (ul + ur);
            dth[i] = (tr - tl) / dx;
            dz[i] = (zr - zl) / dx;
        }
        let heat: Vec<f64> = (0..=n).map(|i| p.kappa * dth[i] / un[i]).collect();
        let species: Vec<f64> = (0..=n).map(|i| p.d * dz[i] / (un[i] * un[i])).collect();

        let mut out = s.clone();
        out.t = s.t + dt;
        out.dt = dt;
        for i in 1..n {
            out.v[i] = s.v[i] + dt * (sigma[i] - sigma[i - 1]) / dx;
        }
        out.v[0] = 0.0;
        out.v[n] = 0.0;
        for j in 0..n {
            let (u, th, z) = (s.u[j], s.theta[j], s.z[j]);
            let burn = p.big_k * self.rate.phi(th) * z;
            out.u[j] = u + dt * vx[j];
            out.theta[j] = th
                + dt * ((heat[j + 1] - heat[j]) / dx - p.a * th * vx[j] / u + p.mu * vx[j] * vx[j] / u + p.q * burn);
            out.z[j] = z + dt * ((species[j + 1] - species[j]) / dx - burn);
        }
        out
    }
}

/// Integrate `cfg` fully explicitly on a grid `refine` times finer, with the
/// step ceiling divided by `refine^2`.
pub fn explicit_reference_run(cfg: &RunConfig, refine: usize) -> Result<Trajectory, OracleError> {
    if refine < 2 {
        return Err(OracleError::Incompatible(format!("refine must be at least 2, got {refine}")));
    }
    let mut fine = cfg.clone();
    fine.mesh.n = cfg.mesh.n * refine;
    fine.step.dt_max = cfg.step.dt_max / (refine * refine) as f64;
    let mesh = fine.mesh()?;
    let integrator = Explicit {
        n: mesh.n(),
        dx: mesh.dx(),
        p: fine.fluid,
        rate: fine.rate()?,
        left: left_ends(fine.boundary.kind, fine.boundary.z_end),
    };
    let mut state = fine.initial_state(&mesh)?;
    let mut snapshots = vec![state.clone()];
    let final_time = fine.time.final_time;
    let every = fine.time.snapshot_every;
    let eps = 1e-12 * final_time.max(1.0);
    let mut next = if every > 0.0 { every.min(final_time) } else { final_time };
    while final_time - state.t > eps {
        let target = if every > 0.0 { next } else { final_time };
        let mut dt = integrator.stable_dt(&state, fine.step.dt_max);
        let lands = dt >= target - state.t;
        if lands {
            dt = target - state.t;
        }
        let mut new = integrator.step(&state, dt);
        if lands {
            new.t = target;
        }
        let bad = new
            .u
            .iter()
            .chain(&new.theta)
            .map(|&x| if x.is_finite() { x } else { f64::NAN })
            .fold(f64::INFINITY, |m, x| if x.is_nan() || x < m { x } else { m });
        if !(bad > 0.0) || new.v.iter().chain(&new.z).any(|x| !x.is_finite()) {
            return Err(SolverError::Unstable {
                t: state.t,
                reason: format!("positivity or finiteness lost (min u/theta {bad})"),
            }
            .into());
        }
        state = new;
        if every <= 0.0 {
            snapshots.push(state.clone());
        } else if (state.t - next).abs() <= eps {
            snapshots.push(state.clone());
            next = (next + every).min(final_time);
        }
    }
    Ok(Trajectory {
        config: fine,
        mesh,
        snapshots,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub t: f64,
    /// L2 error of `u, v, theta, z`.
    pub l2: [f64; 4],
    pub max: [f64; 4],
    /// L2 norm of the combined four-field difference.
    pub l2_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn final_l2(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.l2_total)
    }
}

/// Restrict a fine state onto a coarse mesh: cell averages, node injection.
pub fn restrict(fine: &State, ratio: usize, coarse: &Mesh) -> State {
    let n = coarse.n();
    let avg = |g: &[f64], j: usize| g[j * ratio..(j + 1) * ratio].iter().sum::<f64>() / ratio as f64;
    State {
        t: fine.t,
        dt: fine.dt,
        u: (0..n).map(|j| avg(&fine.u, j)).collect(),
        v: (0..=n).map(|i| fine.v[i * ratio]).collect(),
        theta: (0..n).map(|j| avg(&fine.theta, j)).collect(),
        z: (0..n).map(|j| avg(&fine.z, j)).collect(),
    }
}

fn same_problem(a: &RunConfig, b: &RunConfig) -> bool {
    a.fluid == b.fluid
        && a.reaction == b.reaction
        && a.boundary == b.boundary
        && a.initial == b.initial
        && a.mesh.half_length == b.mesh.half_length
        && a.mesh.domain == b.mesh.domain
}

/// Field errors on the coarser of the two grids at every common snapshot time.
pub fn compare(a: &Trajectory, b: &Trajectory) -> Result<ErrorTable, OracleError> {
    if !same_problem(&a.config, &b.config) {
        return Err(OracleError::Incompatible("different physical scenarios".into()));
    }
    let (coarse, fine) = if a.mesh.n() <= b.mesh.n() { (a, b) } else { (b, a) };
    let (nc, nf) = (coarse.mesh.n(), fine.mesh.n());
    if nf % nc != 0 {
        return Err(OracleError::Incompatible(format!("{nf} cells is not a multiple of {nc}")));
    }
    let ratio = nf / nc;
    let dx = coarse.mesh.dx();
    let mut rows = Vec::new();
    for sc in &coarse.snapshots {
        let Some(sf) = fine.snapshots.iter().find(|s| (s.t - sc.t).abs() <= 1e-9 * sc.t.abs().max(1.0)) else {
            continue;
        };
        let r = restrict(sf, ratio, &coarse.mesh);
        let mut l2 = [0.0; 4];
        let mut max = [0.0f64; 4];
        for (f, (x, y)) in [(&sc.u, &r.u), (&sc.v, &r.v), (&sc.theta, &r.theta), (&sc.z, &r.z)]
            .into_iter()
            .enumerate()
        {
            let sq: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            l2[f] = (sq * dx).sqrt();
            max[f] = x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        }
        let l2_total = l2.iter().map(|e| e * e).sum::<f64>().sqrt();
        rows.push(ErrorRow {
            t: sc.t,
            l2,
            max,
            l2_total,
        });
    }
    if rows.is_empty() {
        return Err(OracleError::Incompatible("no common snapshot times".into()));
    }
    Ok(ErrorTable { rows })
}

/// Least-squares slope of `log(error)` against `log(dx)`.
pub fn observed_order(dx: &[f64], err: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = dx.iter().zip(err).map(|(h, e)| (h.ln(), e.ln())).collect();
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    num / den
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub n: usize,
    pub dx: f64,
    pub dt_max: f64,
    pub l2_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rungs: Vec<Rung>,
    pub reference_cells: usize,
    pub order: f64,
    /// Errors strictly decrease along the ladder.
    pub monotone: bool,
}

fn from_run(e: RunError) -> OracleError {
    match e {
        RunError::Config(c) => OracleError::Config(c),
        RunError::Solver(s) => OracleError::Solver(s),
    }
}

/// Main-solver runs at each `n` of the ladder, with the step ceiling scaled
/// like `dx`, against the explicit reference at `refine` times the finest `n`.
pub fn refinement_ladder(cfg: &RunConfig, ladder: &[usize], refine: usize) -> Result<ConvergenceTable, OracleError> {
    if ladder.len() < 2 || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OracleError::Incompatible("ladder needs at least two increasing cell counts".into()));
    }
    let n0 = ladder[0];
    let finest = *ladder.last().unwrap();
    let rung_cfg = |n: usize| {
        let mut c = cfg.clone();
        c.mesh.n = n;
        c.step.dt_max = cfg.step.dt_max * n0 as f64 / n as f64;
        c
    };
    let (reference, runs) = rayon::join(
        || explicit_reference_run(&rung_cfg(finest), refine),
        || {
            ladder
                .par_iter()
                .map(|&n| run(&rung_cfg(n)).map_err(from_run))
                .collect::<Result<Vec<_>, _>>()
        },
    );
    let reference = reference?;
    let runs = runs?;
    let mut rungs = Vec::new();
    for (t, &n) in runs.iter().zip(ladder) {
        let table = compare(t, &reference)?;
        rungs.push(Rung {
            n,
            dx: t.mesh.dx(),
            dt_max: t.config.step.dt_max,
            l2_error: table.final_l2(),
        });
    }
    let dx: Vec<f64> = rungs.iter().map(|r| r.dx).collect();
    let err: Vec<f64> = rungs.iter().map(|r| r.l2_error).collect();
    Ok(ConvergenceTable {
        order: observed_order(&dx, &err),
        monotone: err.windows(2).all(|w| w[1] < w[0]),
        reference_cells: reference.mesh.n(),
        rungs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollificationTable {
    pub etas: Vec<f64>,
    /// `|sol(eta_i) - sol(eta_{i+1})|`, with the raw rate as the last member.
    pub successive: Vec<f64>,
    /// `|sol(eta_i) - sol(raw)|`.
    pub to_raw: Vec<f64>,
    /// `sup theta` over space-time of each run, raw last.
    pub theta_sup: Vec<f64>,
    /// Successive differences strictly decrease.
    pub cauchy: bool,
}

fn l2_distance(a: &State, b: &State, mesh: &Mesh) -> f64 {
    let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    ((sq(&a.u, &b.u) + sq(&a.v, &b.v) + sq(&a.theta, &b.theta) + sq(&a.z, &b.z)) * mesh.dx()).sqrt()
}

/// Run the main solver with each mollified rate and the raw rate.
pub fn mollification_study(cfg: &RunConfig, etas: &[f64]) -> Result<MollificationTable, OracleError> {
    if etas.is_empty() || etas.iter().any(|e| !(*e > 0.0)) || etas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(OracleError::Incompatible("etas must be positive and strictly decreasing".into()));
    }
    let mut widths = etas.to_vec();
    widths.push(0.0);
    let runs: Vec<Trajectory> = widths
        .par_iter()
        .map(|&eta| {
            let mut c = cfg.clone();
            c.reaction.eta = eta;
            run(&c).map_err(from_run)
        })
        .collect::<Result<_, _>>()?;
    let mesh = runs[0].mesh;
    let finals: Vec<&State> = runs.iter().map(|t| t.final_state()).collect();
    let successive: Vec<f64> = finals.windows(2).map(|w| l2_distance(w[0], w[1], &mesh)).collect();
    let raw = finals[finals.len() - 1];
    let to_raw = finals[..etas.len()].iter().map(|s| l2_distance(s, raw, &mesh)).collect();
    let theta_sup = runs
        .iter()
        .map(|t| {
            t.snapshots
                .iter()
                .flat_map(|s| s.theta.iter().copied())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(MollificationTable {
        etas: etas.to_vec(),
        cauchy: successive.windows(2).all(|w| w[1] < w[0]),
        successive,
        to_raw,
        theta_sup,
    })
}
