//! Functionals of discrete trajectories and the verdicts built from them.
//!
//! Every verdict carries the measured value, the bound it is held to, the
//! slack `bound - value` and the tolerance that was allowed. Time integrals
//! are right-endpoint sums over the recorded snapshots.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::DiagnosticsError;
use crate::grid::{
    cell_to_node_avg, dcell_to_node, dnode_to_cell, h1_dev, interval_integral, l2_dev,
    node_to_cell_avg, Field, Mesh, State,
};
use crate::model::{FluidParams, ReactionRate};
use crate::solver::{BcKind, BoundaryCondition};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub verdict: Outcome,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    /// Pass iff `value <= bound + tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64, tolerance: f64) -> Self {
        let verdict = if value <= bound + tolerance {
            Outcome::Pass
        } else {
            Outcome::Fail
        };
        Self {
            name: name.into(),
            value,
            bound,
            slack: bound - value,
            tolerance,
            verdict,
            details: BTreeMap::new(),
            note: None,
        }
    }

    pub fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn fail(mut self, note: impl Into<String>) -> Self {
        self.verdict = Outcome::Fail;
        self.with_note_appended(note)
    }

    /// Mark the check as not decidable on this trajectory, whatever the value.
    pub fn inconclusive(mut self, note: impl Into<String>) -> Self {
        self.verdict = Outcome::Inconclusive;
        self.with_note_appended(note)
    }

    fn with_note_appended(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        self.note = Some(match self.note.take() {
            Some(prev) => format!("{prev}; {note}"),
            None => note,
        });
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict != Outcome::Fail
    }
}

/// Per-snapshot functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub t: f64,
    pub entropy: f64,
    pub dissipation: f64,
    pub reactant_mass: f64,
    /// `int K phi(theta) Z dx`.
    pub reaction_rate: f64,
    pub cumulative_reaction: f64,
    /// Species mass leaving through both ends per unit time.
    pub species_outflux: f64,
    /// Entropy entering through both ends per unit time.
    pub entropy_influx: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub h1_dev: f64,
    pub l2_dev: f64,
    pub zeta_max: f64,
    /// Crucial functional `F(t)`.
    pub crucial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub records: Vec<SnapshotRecord>,
    pub verdicts: Vec<Verdict>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl DiagnosticsReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(Verdict::passed)
    }

    pub fn failures(&self) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| !v.passed()).collect()
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// Time series as CSV, one row per snapshot.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "t,entropy,dissipation,reactant_mass,reaction_rate,cumulative_reaction,species_outflux,entropy_influx,u_min,u_max,theta_min,theta_max,z_min,z_max,h1_dev,l2_dev,zeta_max,crucial\n",
        );
        for r in &self.records {
            let row = [
                r.t,
                r.entropy,
                r.dissipation,
                r.reactant_mass,
                r.reaction_rate,
                r.cumulative_reaction,
                r.species_outflux,
                r.entropy_influx,
                r.u_min,
                r.u_max,
                r.theta_min,
                r.theta_max,
                r.z_min,
                r.z_max,
                r.h1_dev,
                r.l2_dev,
                r.zeta_max,
                r.crucial,
            ];
            let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// `s - 1 - ln s`, convex with minimum 0 at `s = 1`.
pub fn psi(s: f64) -> f64 {
    s - 1.0 - s.ln()
}

fn check_positive(state: &State) -> Result<(), DiagnosticsError> {
    if let Some(u) = state.u.iter().find(|u| !(**u > 0.0)) {
        return Err(DiagnosticsError::InvalidState(format!("non-positive u = {u}")));
    }
    if let Some(th) = state.theta.iter().find(|t| !(**t > 0.0)) {
        return Err(DiagnosticsError::InvalidState(format!("non-positive theta = {th}")));
    }
    Ok(())
}

/// Trapezoid weights for a node field: `dx` inside, `dx / 2` at the ends.
fn node_sum(f: &[f64], dx: f64) -> f64 {
    let n = f.len();
    let inner: f64 = f.iter().sum();
    (inner - 0.5 * (f[0] + f[n - 1])) * dx
}

/// `sum [a psi(u) + psi(theta) + vbar^2 / 2] dx`.
pub fn entropy(state: &State, mesh: &Mesh, params: &FluidParams) -> Result<f64, DiagnosticsError> {
    state.check_shape(mesh)?;
    check_positive(state)?;
    let vbar = node_to_cell_avg(&state.v, mesh)?;
    let sum: f64 = (0..mesh.n())
        .map(|j| params.a * psi(state.u[j]) + psi(state.theta[j]) + 0.5 * vbar[j] * vbar[j])
        .sum();
    Ok(sum * mesh.dx())
}

/// `int mu v_x^2 / (u theta) + kappa theta_x^2 / (u theta^2) dx`; the first
/// term lives on cells, the second on nodes.
pub fn dissipation(
    state: &State,
    mesh: &Mesh,
    params: &FluidParams,
    bc: &BoundaryCondition,
) -> Result<f64, DiagnosticsError> {
    state.check_shape(mesh)?;
    check_positive(state)?;
    let vx = dnode_to_cell(&state.v, mesh)?;
    let viscous: f64 = (0..mesh.n())
        .map(|j| params.mu * vx[j] * vx[j] / (state.u[j] * state.theta[j]))
        .sum::<f64>()
        * mesh.dx();
    let th_ends = bc.ends(Field::Theta);
    let thx = dcell_to_node(&state.theta, mesh, th_ends)?;
    let th_n = cell_to_node_avg(&state.theta, mesh, th_ends)?;
    let u_n = cell_to_node_avg(&state.u, mesh, bc.ends(Field::U))?;
    let cond: Vec<f64> = (0..=mesh.n())
        .map(|i| params.kappa * thx[i] * thx[i] / (u_n[i] * th_n[i] * th_n[i]))
        .collect();
    Ok(viscous + node_sum(&cond, mesh.dx()))
}

/// `sigma = (mu v_x - a theta) / u` on cells.
pub fn viscous_flux_cells(state: &State, mesh: &Mesh, params: &FluidParams) -> Result<Vec<f64>, DiagnosticsError> {
    let vx = dnode_to_cell(&state.v, mesh)?;
    Ok((0..mesh.n())
        .map(|j| (params.mu * vx[j] - params.a * state.theta[j]) / state.u[j])
        .collect())
}

/// Effective viscous flux on nodes, with `v_x`, `theta` and `u` averaged to
/// the nodes (edge-cell `v_x` and ghost averages at the two ends).
pub fn effective_viscous_flux(
    state: &State,
    mesh: &Mesh,
    params: &FluidParams,
    bc: &BoundaryCondition,
) -> Result<Vec<f64>, DiagnosticsError> {
    state.check_shape(mesh)?;
    let vx = dnode_to_cell(&state.v, mesh)?;
    let n = mesh.n();
    let vx_n: Vec<f64> = (0..=n)
        .map(|i| match i {
            0 => vx[0],
            i if i == n => vx[n - 1],
            i => 0.5 * (vx[i - 1] + vx[i]),
        })
        .collect();
    let th = cell_to_node_avg(&state.theta, mesh, bc.ends(Field::Theta))?;
    let u = cell_to_node_avg(&state.u, mesh, bc.ends(Field::U))?;
    Ok((0..=n)
        .map(|i| (params.mu * vx_n[i] - params.a * th[i]) / u[i])
        .collect())
}

pub fn reactant_mass(state: &State, mesh: &Mesh) -> f64 {
    state.z.iter().sum::<f64>() * mesh.dx()
}

/// `int |z|^beta dx`.
pub fn lbeta(state: &State, mesh: &Mesh, beta: f64) -> f64 {
    state.z.iter().map(|z| z.abs().powf(beta)).sum::<f64>() * mesh.dx()
}

pub fn reaction_rate(state: &State, mesh: &Mesh, params: &FluidParams, rate: &ReactionRate) -> f64 {
    state
        .theta
        .iter()
        .zip(&state.z)
        .map(|(&th, &z)| params.big_k * rate.phi(th) * z)
        .sum::<f64>()
        * mesh.dx()
}

/// Species flux `-(d / u^2) z_x` leaving through the two ends.
pub fn species_outflux(
    state: &State,
    mesh: &Mesh,
    params: &FluidParams,
    bc: &BoundaryCondition,
) -> Result<f64, DiagnosticsError> {
    let ends = bc.ends(Field::Z);
    let zx = dcell_to_node(&state.z, mesh, ends)?;
    let u = cell_to_node_avg(&state.u, mesh, bc.ends(Field::U))?;
    let n = mesh.n();
    let diff = |i: usize| params.d / (u[i] * u[i]);
    Ok(diff(0) * zx[0] - diff(n) * zx[n])
}

/// Boundary term `(1 - 1/theta) kappa theta_x / u` evaluated right minus left:
/// the entropy gained through the ends per unit time.
pub fn entropy_influx(
    state: &State,
    mesh: &Mesh,
    params: &FluidParams,
    bc: &BoundaryCondition,
) -> Result<f64, DiagnosticsError> {
    let ends = bc.ends(Field::Theta);
    let thx = dcell_to_node(&state.theta, mesh, ends)?;
    let th = cell_to_node_avg(&state.theta, mesh, ends)?;
    let u = cell_to_node_avg(&state.u, mesh, bc.ends(Field::U))?;
    let n = mesh.n();
    let flux = |i: usize| (1.0 - 1.0 / th[i]) * params.kappa * thx[i] / u[i];
    Ok(flux(n) - flux(0))
}

/// Instantaneous part `int (theta - 2)_+^2 + v^4 dx` of the crucial functional.
fn crucial_sup_term(state: &State, mesh: &Mesh) -> f64 {
    let th: f64 = state
        .theta
        .iter()
        .map(|t| (t - 2.0).max(0.0).powi(2))
        .sum::<f64>()
        * mesh.dx();
    let v4: Vec<f64> = state.v.iter().map(|v| v.powi(4)).collect();
    th + node_sum(&v4, mesh.dx())
}

/// Integrand `int (1 + theta + v^2) v_x^2 + theta_x^2 dx` of the crucial functional.
fn crucial_rate_term(state: &State, mesh: &Mesh, bc: &BoundaryCondition) -> Result<f64, DiagnosticsError> {
    let vx = dnode_to_cell(&state.v, mesh)?;
    let vbar = node_to_cell_avg(&state.v, mesh)?;
    let cells: f64 = (0..mesh.n())
        .map(|j| (1.0 + state.theta[j] + vbar[j] * vbar[j]) * vx[j] * vx[j])
        .sum::<f64>()
        * mesh.dx();
    let thx = dcell_to_node(&state.theta, mesh, bc.ends(Field::Theta))?;
    let sq: Vec<f64> = thx.iter().map(|x| x * x).collect();
    Ok(cells + node_sum(&sq, mesh.dx()))
}

/// `F(t_k) = max_{m <= k} A(t_m) + sum_{m <= k} G(t_m) dt_m` along the trajectory.
pub fn crucial_estimate(traj: &Trajectory) -> Result<Vec<f64>, DiagnosticsError> {
    let bc = traj.config.boundary;
    let mesh = traj.mesh;
    let terms: Vec<(f64, f64)> = traj
        .snapshots
        .par_iter()
        .map(|s| Ok((crucial_sup_term(s, &mesh), crucial_rate_term(s, &mesh, &bc)?)))
        .collect::<Result<_, DiagnosticsError>>()?;
    let mut out = Vec::with_capacity(terms.len());
    let (mut sup, mut acc) = (0.0f64, 0.0);
    for (k, (a, g)) in terms.iter().enumerate() {
        sup = sup.max(*a);
        if k > 0 {
            acc += g * (traj.snapshots[k].t - traj.snapshots[k - 1].t);
        }
        out.push(sup + acc);
    }
    Ok(out)
}

/// Right-endpoint running sum of `f(t_k)` over snapshot gaps.
fn running_sum(times: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    for k in 0..f.len() {
        if k > 0 {
            acc += f[k] * (times[k] - times[k - 1]);
        }
        out.push(acc);
    }
    out
}

pub fn records(traj: &Trajectory) -> Result<Vec<SnapshotRecord>, DiagnosticsError> {
    let cfg = &traj.config;
    let rate = cfg
        .rate()
        .map_err(|e| DiagnosticsError::InvalidState(e.to_string()))?;
    let (mesh, params, bc) = (traj.mesh, cfg.fluid, cfg.boundary);
    let crucial = crucial_estimate(traj)?;
    let mut recs: Vec<SnapshotRecord> = traj
        .snapshots
        .par_iter()
        .zip(crucial.par_iter())
        .map(|(s, &f)| {
            let min = |g: &[f64]| g.iter().copied().fold(f64::INFINITY, f64::min);
            let max = |g: &[f64]| g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(SnapshotRecord {
                t: s.t,
                entropy: entropy(s, &mesh, &params)?,
                dissipation: dissipation(s, &mesh, &params, &bc)?,
                reactant_mass: reactant_mass(s, &mesh),
                reaction_rate: reaction_rate(s, &mesh, &params, &rate),
                cumulative_reaction: 0.0,
                species_outflux: species_outflux(s, &mesh, &params, &bc)?,
                entropy_influx: entropy_influx(s, &mesh, &params, &bc)?,
                u_min: min(&s.u),
                u_max: max(&s.u),
                theta_min: min(&s.theta),
                theta_max: max(&s.theta),
                z_min: min(&s.z),
                z_max: max(&s.z),
                h1_dev: h1_dev(s, &mesh),
                l2_dev: l2_dev(s, &mesh),
                zeta_max: 1.0 / min(&s.theta),
                crucial: f,
            })
        })
        .collect::<Result<_, DiagnosticsError>>()?;
    let times: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let rates: Vec<f64> = recs.iter().map(|r| r.reaction_rate).collect();
    for (r, c) in recs.iter_mut().zip(running_sum(&times, &rates)) {
        r.cumulative_reaction = c;
    }
    Ok(recs)
}

fn need_two(traj: &Trajectory) -> Result<(), DiagnosticsError> {
    if traj.snapshots.len() < 2 {
        return Err(DiagnosticsError::TooShort {
            need: 2,
            got: traj.snapshots.len(),
        });
    }
    Ok(())
}

/// `c_tol (dx + dt) T` with `dt` the largest snapshot gap.
pub fn budget_tolerance(traj: &Trajectory) -> f64 {
    let t = traj.snapshots.last().map_or(0.0, |s| s.t) - traj.snapshots[0].t;
    traj.config.tolerance.c_tol * (traj.mesh.dx() + traj.max_gap()) * t
}

/// `max_k [E(t_k) + sum_{m <= k} D(t_m) dt_m] <= E(0) + q E_0 + boundary influx`.
pub fn entropy_budget(traj: &Trajectory, recs: &[SnapshotRecord]) -> Result<Verdict, DiagnosticsError> {
    need_two(traj)?;
    let times: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let d: Vec<f64> = recs.iter().map(|r| r.dissipation).collect();
    let flux: Vec<f64> = recs.iter().map(|r| r.entropy_influx).collect();
    let cum_d = running_sum(&times, &d);
    let cum_flux = running_sum(&times, &flux);
    let e0 = recs[0].reactant_mass;
    let q = traj.config.fluid.q;
    let (mut worst, mut worst_slack) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..recs.len() {
        let lhs = recs[k].entropy + cum_d[k];
        let rhs = recs[0].entropy + q * e0 + cum_flux[k].max(0.0);
        if rhs - lhs < worst_slack {
            worst_slack = rhs - lhs;
            worst = lhs;
        }
    }
    let sup_e = recs.iter().map(|r| r.entropy).fold(0.0, f64::max);
    let boundary = cum_flux.last().copied().unwrap_or(0.0);
    let bound = worst + worst_slack;
    Ok(Verdict::at_most("entropy_budget", worst, bound, budget_tolerance(traj))
        .detail("entropy_initial", recs[0].entropy)
        .detail("reactant_initial", e0)
        .detail("sup_entropy", sup_e)
        .detail("total_dissipation", cum_d.last().copied().unwrap_or(0.0))
        .detail("boundary_influx", boundary))
}

/// `int Z(T) + sum int K phi Z dt <= E_0`, with the defect matched against the
/// separately integrated species out-flux.
pub fn reactant_budget(traj: &Trajectory, recs: &[SnapshotRecord]) -> Result<Verdict, DiagnosticsError> {
    need_two(traj)?;
    let times: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let out: Vec<f64> = recs.iter().map(|r| r.species_outflux).collect();
    let cum_out = *running_sum(&times, &out).last().unwrap();
    let last = recs.last().unwrap();
    let e0 = recs[0].reactant_mass;
    let lhs = last.reactant_mass + last.cumulative_reaction;
    let defect = e0 - lhs;
    let tol = budget_tolerance(traj);
    let mismatch = (defect - cum_out).abs();
    let v = Verdict::at_most("reactant_budget", lhs, e0, tol)
        .detail("defect", defect)
        .detail("boundary_outflux", cum_out)
        .detail("flux_mismatch", mismatch);
    Ok(if mismatch > tol {
        v.fail(format!("defect {defect:e} differs from boundary out-flux {cum_out:e}"))
    } else {
        v
    })
}

/// `z` within `[0, 1]` up to the configured excursion, and `u`, `theta` positive.
pub fn z_bounds(recs: &[SnapshotRecord], tol: f64) -> Verdict {
    let below = recs.iter().map(|r| -r.z_min).fold(0.0, f64::max);
    let above = recs.iter().map(|r| r.z_max - 1.0).fold(0.0, f64::max);
    let v = Verdict::at_most("z_bounds", below.max(above), 0.0, tol)
        .detail("z_min", recs.iter().map(|r| r.z_min).fold(f64::INFINITY, f64::min))
        .detail("z_max", recs.iter().map(|r| r.z_max).fold(f64::NEG_INFINITY, f64::max));
    if recs.iter().any(|r| !(r.u_min > 0.0 && r.theta_min > 0.0)) {
        v.fail("non-positive specific volume or temperature")
    } else {
        v
    }
}

/// `t -> int Z^beta` non-increasing across snapshots, per-step slack `tol`.
pub fn z_lbeta(traj: &Trajectory, beta: f64, tol: f64) -> Verdict {
    let norms: Vec<f64> = traj.snapshots.iter().map(|s| lbeta(s, &traj.mesh, beta)).collect();
    let rise = norms
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let strict = norms.windows(2).all(|w| w[1] < w[0]);
    Verdict::at_most(format!("z_lbeta[beta={beta}]"), rise, 0.0, tol)
        .detail("beta", beta)
        .detail("initial", norms[0])
        .detail("final", *norms.last().unwrap())
        .detail("strictly_decreasing", if strict { 1.0 } else { 0.0 })
}

/// Interval averages of `u` and `theta`, the discrete Jensen inequality for
/// `psi`, and the cell `b_k(t)` where both fields lie in `[gamma1, gamma2]`.
pub fn localisation(traj: &Trajectory, tol: f64) -> Result<Verdict, DiagnosticsError> {
    let mesh = traj.mesh;
    let ks: Vec<i64> = mesh.unit_intervals().collect();
    if ks.is_empty() {
        return Ok(Verdict::at_most("localisation", 0.0, 0.0, tol).inconclusive("no unit interval fits the domain"));
    }
    struct Cell {
        jensen: f64,
        iu: f64,
        ith: f64,
    }
    let per_snapshot: Vec<Vec<Cell>> = traj
        .snapshots
        .par_iter()
        .map(|s| {
            let pu: Vec<f64> = s.u.iter().map(|&x| psi(x)).collect();
            let pt: Vec<f64> = s.theta.iter().map(|&x| psi(x)).collect();
            ks.iter()
                .map(|&k| {
                    let iu = interval_integral(&s.u, &mesh, k)?;
                    let ith = interval_integral(&s.theta, &mesh, k)?;
                    let ju = psi(iu) - interval_integral(&pu, &mesh, k)?;
                    let jt = psi(ith) - interval_integral(&pt, &mesh, k)?;
                    Ok(Cell {
                        jensen: ju.max(jt),
                        iu,
                        ith,
                    })
                })
                .collect::<Result<Vec<_>, DiagnosticsError>>()
        })
        .collect::<Result<_, _>>()?;
    let all = per_snapshot.iter().flatten();
    let jensen = all.clone().map(|c| c.jensen).fold(f64::NEG_INFINITY, f64::max);
    let gamma1 = all.clone().map(|c| c.iu.min(c.ith)).fold(f64::INFINITY, f64::min);
    let gamma2 = all.map(|c| c.iu.max(c.ith)).fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-12 * gamma2.abs().max(1.0);
    let mut missing = 0usize;
    for s in &traj.snapshots {
        for &k in &ks {
            let found = (0..mesh.n()).any(|j| {
                let x = mesh.center(j);
                x >= k as f64
                    && x <= k as f64 + 1.0
                    && (gamma1 - slack..=gamma2 + slack).contains(&s.u[j])
                    && (gamma1 - slack..=gamma2 + slack).contains(&s.theta[j])
            });
            if !found {
                missing += 1;
            }
        }
    }
    let v = Verdict::at_most("localisation", jensen, 0.0, tol)
        .detail("gamma1", gamma1)
        .detail("gamma2", gamma2)
        .detail("intervals", ks.len() as f64)
        .detail("missing_cells", missing as f64)
        .with_note(format!(
            "intervals [k, k+1] for k in {}..={} inside the truncated domain",
            ks[0],
            ks[ks.len() - 1]
        ));
    if !(gamma1 > 0.0 && gamma1 <= gamma2 && gamma2.is_finite()) {
        Ok(v.fail("interval averages not within a positive finite band"))
    } else if missing > 0 {
        Ok(v.fail(format!("{missing} (t, k) pairs without a cell inside [gamma1, gamma2]")))
    } else {
        Ok(v)
    }
}

/// Cutoff equal to one left of `k`, a cubic smoothstep down to zero across
/// `[k, k + 1]`.
pub fn cutoff(x: f64, k: i64) -> f64 {
    let s = (x - k as f64).clamp(0.0, 1.0);
    1.0 - s * s * (3.0 - 2.0 * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationResult {
    pub k: i64,
    pub times: Vec<f64>,
    /// Max relative residual over the cells of `[k - 1, k]` per snapshot.
    pub residual: Vec<f64>,
    pub max_residual: f64,
}

/// Rebuild `u` on `[k - 1, k]` from
/// `u = Y B + (a/mu) int_0^t Y(t) B(t, x) theta(tau, x) / (Y(tau) B(tau, x)) dtau`
/// with `B = u_0 exp((1/mu) int_x^L chi (v_0 - v))` and
/// `Y = exp(-(1/mu) int_0^t int chi_x sigma)`.
pub fn representation_check(traj: &Trajectory, k: i64) -> Result<RepresentationResult, DiagnosticsError> {
    let mesh = traj.mesh;
    let params = traj.config.fluid;
    let (lo, hi) = (mesh.left(), mesh.right());
    if ((k - 1) as f64) < lo - 1e-12 || ((k + 1) as f64) > hi + 1e-12 {
        return Err(crate::error::GridError::IntervalOutOfRange { k, lo, hi }.into());
    }
    let n = mesh.n();
    let dx = mesh.dx();
    let chi: Vec<f64> = mesh.nodes().iter().map(|&x| cutoff(x, k)).collect();
    let cells: Vec<usize> = (0..n)
        .filter(|&j| {
            let x = mesh.center(j);
            x >= (k - 1) as f64 && x <= k as f64
        })
        .collect();
    // W_j(t) = sum_{i > j} chi_i v_i dx over the nodes right of cell j
    let w_of = |s: &State| -> Vec<f64> {
        let mut w = vec![0.0; n];
        let mut acc = 0.0;
        for j in (0..n).rev() {
            acc += chi[j + 1] * s.v[j + 1] * dx;
            w[j] = acc;
        }
        w
    };
    let s_of = |s: &State| -> Result<f64, DiagnosticsError> {
        let sigma = viscous_flux_cells(s, &mesh, &params)?;
        Ok((0..n).map(|j| (chi[j + 1] - chi[j]) * sigma[j]).sum())
    };
    let snaps = &traj.snapshots;
    let s0 = &snaps[0];
    let w0 = w_of(s0);
    let mut log_y = 0.0;
    let mut prev_s = s_of(s0)?;
    // log(Y B) per cell at the previous snapshot, and the running time integral
    let mut prev_log: Vec<f64> = cells.iter().map(|&j| s0.u[j].ln()).collect();
    let mut prev_theta: Vec<f64> = cells.iter().map(|&j| s0.theta[j]).collect();
    let mut integral = vec![0.0; cells.len()];
    let mut residual = vec![0.0];
    for pair in snaps.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let h = b.t - a.t;
        let cur_s = s_of(b)?;
        log_y -= 0.5 * h * (prev_s + cur_s) / params.mu;
        prev_s = cur_s;
        let w = w_of(b);
        let mut worst: f64 = 0.0;
        for (c, &j) in cells.iter().enumerate() {
            let log_b = s0.u[j].ln() + (w0[j] - w[j]) / params.mu;
            let cur_log = log_y + log_b;
            // int e^{-l} over the gap with l linear between the snapshots
            let d = cur_log - prev_log[c];
            let e = if d.abs() < 1e-8 {
                h * (-prev_log[c]).exp() * (1.0 - 0.5 * d)
            } else {
                h * (-prev_log[c]).exp() * (1.0 - (-d).exp()) / d
            };
            integral[c] += 0.5 * (prev_theta[c] + b.theta[j]) * e;
            let rebuilt = cur_log.exp() * (1.0 + params.a / params.mu * integral[c]);
            worst = worst.max((rebuilt - b.u[j]).abs() / b.u[j]);
            prev_log[c] = cur_log;
            prev_theta[c] = b.theta[j];
        }
        residual.push(worst);
    }
    let max_residual = residual.iter().copied().fold(0.0, f64::max);
    Ok(RepresentationResult {
        k,
        times: traj.times(),
        residual,
        max_residual,
    })
}

/// Default cutoff interval: the one just right of the initial-data centre.
pub fn default_representation_k(cfg: &RunConfig) -> i64 {
    cfg.tolerance
        .representation_k
        .unwrap_or_else(|| cfg.initial.shape(&cfg.mesh).center.floor() as i64 + 1)
}

fn representation_verdict(traj: &Trajectory) -> Verdict {
    let cfg = &traj.config;
    let k = default_representation_k(cfg);
    let tol = cfg.tolerance.representation;
    match representation_check(traj, k) {
        Err(e) => Verdict::at_most("representation", 0.0, tol, 0.0).inconclusive(e.to_string()),
        Ok(r) => {
            let v = Verdict::at_most("representation", r.max_residual, tol, 0.0).detail("k", k as f64);
            // the time quadrature needs every step recorded
            let steps = traj.max_dt();
            if traj.max_gap() > 1.5 * steps && steps > 0.0 {
                v.inconclusive("snapshots sparser than the time steps; record every step to check")
            } else {
                v
            }
        }
    }
}

/// Index of the first snapshot at or after `t`.
fn index_at(recs: &[SnapshotRecord], t: f64) -> usize {
    recs.iter()
        .position(|r| r.t >= t - 1e-9)
        .unwrap_or(recs.len() - 1)
}

/// Growth of `F` from `T/2` to `T`.
pub fn crucial_verdict(recs: &[SnapshotRecord], saturation: f64) -> Verdict {
    let last = recs.last().unwrap();
    let half = &recs[index_at(recs, 0.5 * last.t)];
    let growth = last.crucial - half.crucial;
    let v = Verdict::at_most("crucial_estimate", growth, saturation * half.crucial, 1e-12)
        .detail("f_half", half.crucial)
        .detail("f_final", last.crucial)
        .detail("t_half", half.t);
    if recs.len() < 3 {
        v.inconclusive("trajectory too short")
    } else if recs[0].h1_dev > 0.0 && half.h1_dev > 0.5 * recs[0].h1_dev {
        v.inconclusive("decay has not begun by T/2")
    } else {
        v
    }
}

/// Fit the smallest `C >= 1` with `zeta(t) <= C e^{C t}` for all recorded `t`.
pub fn fit_growth_constant(times: &[f64], zeta: &[f64]) -> f64 {
    let ok = |c: f64| times.iter().zip(zeta).all(|(t, z)| *z <= c * (c * t).exp());
    let mut hi = 1.0;
    while !ok(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::MAX;
        }
    }
    let mut lo = 1.0;
    if ok(lo) {
        return lo;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Space-time bands, `H^1` decay and the temperature lower bound.
pub fn bands_and_decay(traj: &Trajectory, recs: &[SnapshotRecord]) -> Vec<Verdict> {
    let tol = &traj.config.tolerance;
    let last = recs.last().unwrap();
    let hi = index_at(recs, 0.5 * last.t);
    let band = |rs: &[SnapshotRecord]| {
        (
            rs.iter().map(|r| r.u_min).fold(f64::INFINITY, f64::min),
            rs.iter().map(|r| r.u_max).fold(f64::NEG_INFINITY, f64::max),
            rs.iter().map(|r| r.theta_min).fold(f64::INFINITY, f64::min),
            rs.iter().map(|r| r.theta_max).fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let (u0, u1, t0, t1) = band(&recs[..=hi]);
    let (u0f, u1f, t0f, t1f) = band(recs);
    let growth = [
        (u1f - u1) / u1,
        (u0 - u0f) / u0,
        (t1f - t1) / t1,
        (t0 - t0f) / t0,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let mut bands = Verdict::at_most("band_stability", growth, tol.band_growth, 0.0)
        .detail("u_inf", u0f)
        .detail("u_sup", u1f)
        .detail("theta_inf", t0f)
        .detail("theta_sup", t1f)
        .detail("u_inf_half", u0)
        .detail("u_sup_half", u1)
        .detail("theta_inf_half", t0)
        .detail("theta_sup_half", t1);
    if recs.len() < 3 {
        bands = bands.inconclusive("trajectory too short");
    }
    if !(t0f > 0.0) {
        bands = bands.fail("temperature lost its positive lower bound");
    }

    let h0 = recs[0].h1_dev;
    let e0 = recs[0].reactant_mass;
    let mut decay = Verdict::at_most("decay", last.h1_dev, tol.decay_fraction * h0, 1e-12)
        .detail("h1_initial", h0)
        .detail("h1_final", last.h1_dev)
        .detail(
            "reactant_remaining",
            if e0 > 0.0 { last.reactant_mass / e0 } else { 0.0 },
        );
    let h_min = recs.iter().map(|r| r.h1_dev).fold(f64::INFINITY, f64::min);
    if h0 > 0.0 && h_min > 0.5 * h0 {
        decay = decay.inconclusive("h1 deviation has not yet halved");
    }

    let times: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let zeta: Vec<f64> = recs.iter().map(|r| r.zeta_max).collect();
    let zmax = zeta.iter().copied().fold(0.0, f64::max);
    let c = fit_growth_constant(&times, &zeta);
    let mut z = Verdict::at_most("zeta_growth", zmax, 1.0 / traj.config.step.theta_floor, 0.0)
        .detail("fitted_c", c)
        .detail("theta_min", 1.0 / zmax);
    if !(zmax.is_finite() && c < f64::MAX) {
        z = z.fail("temperature lower bound lost");
    }
    vec![bands, decay, z]
}

/// Every functional and verdict for a trajectory.
/// Half-line wall behaviour at every snapshot: `|v(0)|` and either the wall
/// face value `theta = 1` (isothermal) or the wall gradient `theta_x = 0`
/// (insulated), both read through the ghost rule the solver applies.
pub fn wall_conditions(traj: &Trajectory) -> Option<Verdict> {
    let bc = traj.config.boundary;
    if !bc.is_half_line() {
        return None;
    }
    let tol = &traj.config.tolerance;
    let ghost = bc.ends(Field::Theta).left;
    let dx = traj.mesh.dx();
    let (mut vmax, mut tmax) = (0.0f64, 0.0f64);
    for s in &traj.snapshots {
        vmax = vmax.max(s.v[0].abs());
        let (edge, g) = (s.theta[0], ghost.value(s.theta[0]));
        let err = match bc.kind {
            BcKind::HalfLineIsothermal => (0.5 * (edge + g) - 1.0).abs(),
            _ => ((edge - g) / dx).abs(),
        };
        tmax = tmax.max(err);
    }
    let v = Verdict::at_most("wall_conditions", tmax, 0.0, tol.wall_theta)
        .detail("wall_velocity", vmax)
        .detail("wall_theta_error", tmax);
    Some(if vmax > tol.wall_velocity {
        v.fail(format!("wall velocity {vmax:e} exceeds {:e}", tol.wall_velocity))
    } else {
        v
    })
}

pub fn diagnose(traj: &Trajectory) -> Result<DiagnosticsReport, DiagnosticsError> {
    let tol = &traj.config.tolerance;
    let recs = records(traj)?;
    let mut verdicts = vec![z_bounds(&recs, tol.z_bound)];
    let mut notes = vec![];
    if traj.snapshots.len() >= 2 {
        verdicts.push(entropy_budget(traj, &recs)?);
        verdicts.push(reactant_budget(traj, &recs)?);
    } else {
        notes.push("single snapshot: budgets not evaluated".to_string());
    }
    for &beta in &tol.betas {
        verdicts.push(z_lbeta(traj, beta, tol.lbeta_step));
    }
    verdicts.push(localisation(traj, tol.jensen)?);
    verdicts.push(representation_verdict(traj));
    verdicts.push(crucial_verdict(&recs, tol.saturation));
    verdicts.extend(bands_and_decay(traj, &recs));
    if let Some(v) = wall_conditions(traj) {
        verdicts.push(v);
    }
    notes.push("representation check uses the u0 prefactor in B and the 1/mu factor in Y".to_string());
    Ok(DiagnosticsReport {
        records: recs,
        verdicts,
        notes,
    })
}
