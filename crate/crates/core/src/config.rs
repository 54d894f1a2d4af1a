//! Run configuration: strict TOML parsing, validation and the built-in
//! initial-data scenarios.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use crate::error::ConfigError;
use crate::error::Violation;
use crate::grid::{DomainKind, Mesh, State, MIN_CELLS};
use crate::model::{FluidParams, ReactionRate};
use crate::solver::{BcKind, BoundaryCondition, StepControl};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConfig {
    pub alpha: f64,
    pub act: f64,
    pub theta_ign: f64,
    /// Mollification width; 0 selects the raw discontinuous rate.
    pub eta: f64,
    pub theta_cap: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            act: 1.0,
            theta_ign: 1.2,
            eta: 0.0,
            theta_cap: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub half_length: f64,
    pub n: usize,
    pub domain: DomainKind,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            half_length: 40.0,
            n: 512,
            domain: DomainKind::WholeLine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Equilibrium,
    ColdBump,
    HotSpot,
    ShearFreeCompression,
    /// Tabulated `x,u,v,theta,z` rows read from `initial.profile`.
    Profile,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Equilibrium,
        Scenario::ColdBump,
        Scenario::HotSpot,
        Scenario::ShearFreeCompression,
        Scenario::Profile,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Equilibrium => "equilibrium",
            Scenario::ColdBump => "cold-bump",
            Scenario::HotSpot => "hot-spot",
            Scenario::ShearFreeCompression => "shear-free-compression",
            Scenario::Profile => "profile",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Scenario::Equilibrium => "u = 1, v = 0, theta = 1, z = 0 everywhere",
            Scenario::ColdBump => "smooth temperature bump kept below ignition, no reactant",
            Scenario::HotSpot => "temperature bump crossing ignition over a reactant plateau",
            Scenario::ShearFreeCompression => "antisymmetric velocity pulse, rest at equilibrium",
            Scenario::Profile => "tabulated x,u,v,theta,z profile from a CSV file",
        }
    }

    fn defaults(&self) -> Shape {
        match self {
            Scenario::ColdBump => Shape {
                theta_amplitude: 0.15,
                theta_radius: 4.0,
                ..Shape::default()
            },
            Scenario::HotSpot => Shape {
                theta_amplitude: 1.5,
                theta_radius: 6.0,
                z_amplitude: 1.0,
                z_radius: 2.0,
                z_edge: 1.0,
                ..Shape::default()
            },
            Scenario::ShearFreeCompression => Shape {
                v_amplitude: 0.3,
                v_radius: 4.0,
                ..Shape::default()
            },
            Scenario::Equilibrium | Scenario::Profile => Shape::default(),
        }
    }
}

/// Resolved shape parameters of a generated profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub center: f64,
    pub theta_amplitude: f64,
    pub theta_radius: f64,
    pub z_amplitude: f64,
    pub z_radius: f64,
    pub z_edge: f64,
    pub v_amplitude: f64,
    pub v_radius: f64,
    pub u_amplitude: f64,
}

impl Default for Shape {
    fn default() -> Self {
        Self {
            center: 0.0,
            theta_amplitude: 0.0,
            theta_radius: 1.0,
            z_amplitude: 0.0,
            z_radius: 1.0,
            z_edge: 1.0,
            v_amplitude: 0.0,
            v_radius: 1.0,
            u_amplitude: 0.0,
        }
    }
}

impl Shape {
    /// Largest distance from the centre at which the data deviates.
    pub fn support_radius(&self) -> f64 {
        let mut r: f64 = 0.0;
        if self.theta_amplitude != 0.0 || self.u_amplitude != 0.0 {
            r = r.max(self.theta_radius);
        }
        if self.z_amplitude != 0.0 {
            r = r.max(self.z_radius + self.z_edge);
        }
        if self.v_amplitude != 0.0 {
            r = r.max(self.v_radius);
        }
        r
    }
}

/// Initial data: a named scenario with optional overrides of its shape
/// parameters. Unset values take the scenario's defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_edge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_radius: Option<f64>,
    /// Specific-volume bump sharing the temperature radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
}

impl InitialConfig {
    pub fn scenario(&self) -> Scenario {
        self.scenario.unwrap_or(Scenario::HotSpot)
    }

    pub fn shape(&self, mesh: &MeshConfig) -> Shape {
        let d = self.scenario().defaults();
        let center = match mesh.domain {
            DomainKind::WholeLine => 0.0,
            DomainKind::HalfLine => mesh.half_length / 4.0,
        };
        Shape {
            center: self.center.unwrap_or(center),
            theta_amplitude: self.theta_amplitude.unwrap_or(d.theta_amplitude),
            theta_radius: self.theta_radius.unwrap_or(d.theta_radius),
            z_amplitude: self.z_amplitude.unwrap_or(d.z_amplitude),
            z_radius: self.z_radius.unwrap_or(d.z_radius),
            z_edge: self.z_edge.unwrap_or(d.z_edge),
            v_amplitude: self.v_amplitude.unwrap_or(d.v_amplitude),
            v_radius: self.v_radius.unwrap_or(d.v_radius),
            u_amplitude: self.u_amplitude.unwrap_or(d.u_amplitude),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub final_time: f64,
    /// Snapshot spacing; 0 records every accepted step.
    pub snapshot_every: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            final_time: 50.0,
            snapshot_every: 0.5,
        }
    }
}

/// Constants used by the diagnostics verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Budget tolerances are `c_tol * (dx + dt) * T`.
    pub c_tol: f64,
    pub decay_fraction: f64,
    pub betas: Vec<f64>,
    /// Allowed per-snapshot increase of the `L^beta` norms.
    pub lbeta_step: f64,
    /// Allowed excursion of `z` outside `[0, 1]`.
    pub z_bound: f64,
    /// Allowed relative growth of the space-time bands from `[0, T/2]` to `[0, T]`.
    pub band_growth: f64,
    /// Allowed relative growth of the crucial functional from `T/2` to `T`.
    pub saturation: f64,
    pub jensen: f64,
    /// Interval index of the cutoff in the representation check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub representation_k: Option<i64>,
    pub representation: f64,
    pub min_order: f64,
    /// Allowed wall velocity on the half line.
    pub wall_velocity: f64,
    /// Allowed violation of the wall temperature condition on the half line.
    pub wall_theta: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            c_tol: 10.0,
            decay_fraction: 0.2,
            betas: vec![1.0, 2.0, 4.0],
            lbeta_step: 1e-9,
            z_bound: 1e-10,
            band_growth: 0.05,
            saturation: 0.1,
            jensen: 1e-12,
            representation_k: None,
            representation: 0.05,
            min_order: 0.9,
            wall_velocity: 1e-12,
            wall_theta: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub fluid: FluidParams,
    pub reaction: RateConfig,
    pub mesh: MeshConfig,
    pub boundary: BoundaryCondition,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    pub step: StepControl,
    pub tolerance: ToleranceConfig,
    pub output: OutputConfig,
}

/// Parse and validate a TOML document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Syntax(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config serializes to TOML")
}

fn positive(out: &mut Vec<Violation>, key: &str, value: f64) {
    if !(value.is_finite() && value > 0.0) {
        out.push(Violation::new(key, format!("must be positive and finite, got {value}")));
    }
}

fn non_negative(out: &mut Vec<Violation>, key: &str, value: f64) {
    if !(value.is_finite() && value >= 0.0) {
        out.push(Violation::new(key, format!("must be non-negative and finite, got {value}")));
    }
}

impl RunConfig {
    /// A config for a named scenario with every other setting at its default.
    pub fn scenario(scenario: Scenario) -> Self {
        let mut cfg = Self::default();
        cfg.initial.scenario = Some(scenario);
        cfg
    }

    pub fn mesh(&self) -> Result<Mesh, ConfigError> {
        Mesh::new(self.mesh.half_length, self.mesh.n, self.mesh.domain)
            .map_err(|e| ConfigError::Invalid(vec![Violation::new("mesh", e.to_string())]))
    }

    pub fn rate(&self) -> Result<ReactionRate, ConfigError> {
        let r = &self.reaction;
        ReactionRate::with_eta(r.alpha, r.act, r.theta_ign, r.theta_cap, r.eta).map_err(|e| {
            let crate::error::ModelError::InvalidParameter { name, reason } = e;
            ConfigError::Invalid(vec![Violation::new(format!("reaction.{name}"), reason)])
        })
    }

    /// Every violated constraint, with its key path.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let f = &self.fluid;
        for (key, value) in [
            ("fluid.a", f.a),
            ("fluid.mu", f.mu),
            ("fluid.kappa", f.kappa),
            ("fluid.q", f.q),
            ("fluid.big_k", f.big_k),
            ("fluid.d", f.d),
        ] {
            positive(&mut out, key, value);
        }

        let r = &self.reaction;
        non_negative(&mut out, "reaction.alpha", r.alpha);
        positive(&mut out, "reaction.act", r.act);
        positive(&mut out, "reaction.theta_ign", r.theta_ign);
        non_negative(&mut out, "reaction.eta", r.eta);
        if !(r.theta_cap.is_finite() && r.theta_cap > r.theta_ign) {
            out.push(Violation::new(
                "reaction.theta_cap",
                format!("must exceed theta_ign = {}, got {}", r.theta_ign, r.theta_cap),
            ));
        }

        positive(&mut out, "mesh.half_length", self.mesh.half_length);
        if self.mesh.n < MIN_CELLS {
            out.push(Violation::new(
                "mesh.n",
                format!("need at least {MIN_CELLS} cells, got {}", self.mesh.n),
            ));
        }
        let half = self.mesh.domain == DomainKind::HalfLine;
        if half != self.boundary.is_half_line() {
            out.push(Violation::new(
                "boundary.kind",
                format!(
                    "{:?} does not match mesh.domain = {:?}",
                    self.boundary.kind, self.mesh.domain
                ),
            ));
        }

        non_negative(&mut out, "time.final_time", self.time.final_time);
        non_negative(&mut out, "time.snapshot_every", self.time.snapshot_every);

        let s = &self.step;
        positive(&mut out, "step.dt_max", s.dt_max);
        if !(s.safety > 0.0 && s.safety <= 1.0) {
            out.push(Violation::new("step.safety", format!("must lie in (0, 1], got {}", s.safety)));
        }
        positive(&mut out, "step.theta_floor", s.theta_floor);

        let t = &self.tolerance;
        positive(&mut out, "tolerance.c_tol", t.c_tol);
        if !(t.decay_fraction > 0.0 && t.decay_fraction <= 1.0) {
            out.push(Violation::new(
                "tolerance.decay_fraction",
                format!("must lie in (0, 1], got {}", t.decay_fraction),
            ));
        }
        for (i, b) in t.betas.iter().enumerate() {
            if !(b.is_finite() && *b >= 1.0) {
                out.push(Violation::new(format!("tolerance.betas[{i}]"), format!("must be >= 1, got {b}")));
            }
        }
        for (key, value) in [
            ("tolerance.lbeta_step", t.lbeta_step),
            ("tolerance.z_bound", t.z_bound),
            ("tolerance.band_growth", t.band_growth),
            ("tolerance.saturation", t.saturation),
            ("tolerance.jensen", t.jensen),
            ("tolerance.representation", t.representation),
            ("tolerance.min_order", t.min_order),
            ("tolerance.wall_velocity", t.wall_velocity),
            ("tolerance.wall_theta", t.wall_theta),
        ] {
            non_negative(&mut out, key, value);
        }

        self.initial_violations(&mut out);
        out
    }

    fn initial_violations(&self, out: &mut Vec<Violation>) {
        let init = &self.initial;
        let scenario = init.scenario();
        if scenario == Scenario::Profile {
            if init.profile.is_none() {
                out.push(Violation::new("initial.profile", "the profile scenario needs a CSV path"));
            }
        } else if init.profile.is_some() {
            out.push(Violation::new(
                "initial.profile",
                format!("only used by the profile scenario, not {}", scenario.name()),
            ));
        }
        let shape = init.shape(&self.mesh);
        for (key, value) in [
            ("initial.theta_radius", shape.theta_radius),
            ("initial.z_radius", shape.z_radius),
            ("initial.z_edge", shape.z_edge),
            ("initial.v_radius", shape.v_radius),
        ] {
            positive(out, key, value);
        }
        if !(0.0..=1.0).contains(&shape.z_amplitude) {
            out.push(Violation::new(
                "initial.z_amplitude",
                format!("reactant mass fraction must lie in [0, 1], got {}", shape.z_amplitude),
            ));
        }
        if !(1.0 + shape.theta_amplitude > 0.0) {
            out.push(Violation::new(
                "initial.theta_amplitude",
                format!("initial temperature must stay positive, got minimum {}", 1.0 + shape.theta_amplitude),
            ));
        }
        if !(1.0 + shape.u_amplitude > 0.0) {
            out.push(Violation::new(
                "initial.u_amplitude",
                format!("initial specific volume must stay positive, got minimum {}", 1.0 + shape.u_amplitude),
            ));
        }
        if scenario == Scenario::ColdBump && 1.0 + shape.theta_amplitude.max(0.0) >= self.reaction.theta_ign {
            out.push(Violation::new(
                "initial.theta_amplitude",
                format!(
                    "cold-bump peak {} must stay below theta_ign = {}",
                    1.0 + shape.theta_amplitude,
                    self.reaction.theta_ign
                ),
            ));
        }
        if scenario != Scenario::Profile && self.mesh.half_length > 0.0 {
            let l = self.mesh.half_length;
            let lo = if self.mesh.domain == DomainKind::HalfLine { 0.0 } else { -l / 2.0 };
            let r = shape.support_radius();
            if r > 0.0 && (shape.center - r < lo - 1e-12 || shape.center + r > l / 2.0 + 1e-12) {
                out.push(Violation::new(
                    "initial.center",
                    format!(
                        "support [{}, {}] must lie within [{lo}, {}]",
                        shape.center - r,
                        shape.center + r,
                        l / 2.0
                    ),
                ));
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = self.violations();
        if v.is_empty() {
            // data-level checks need the mesh and, for profiles, the file
            if let Err(e) = self.mesh().and_then(|m| self.initial_state(&m)) {
                match e {
                    ConfigError::Invalid(more) => v.extend(more),
                    other => return Err(other),
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    /// Sample the initial data on `mesh` and check positivity and bounds.
    pub fn initial_state(&self, mesh: &Mesh) -> Result<State, ConfigError> {
        let state = match self.initial.scenario() {
            Scenario::Profile => {
                let path = self.initial.profile.as_deref().unwrap_or_default();
                let table = read_profile(Path::new(path))?;
                table.sample(mesh)
            }
            _ => generate(&self.initial.shape(&self.mesh), mesh),
        };
        let mut bad = Vec::new();
        let min = |g: &[f64]| g.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |g: &[f64]| g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(min(&state.u) > 0.0) {
            bad.push(Violation::new("initial", format!("u0 must be positive, min {}", min(&state.u))));
        }
        if !(min(&state.theta) > 0.0) {
            bad.push(Violation::new("initial", format!("theta0 must be positive, min {}", min(&state.theta))));
        }
        if !(min(&state.z) >= 0.0 && max(&state.z) <= 1.0) {
            bad.push(Violation::new(
                "initial",
                format!("z0 must lie in [0, 1], range [{}, {}]", min(&state.z), max(&state.z)),
            ));
        }
        if state.v.first() != Some(&0.0) || state.v.last() != Some(&0.0) {
            bad.push(Violation::new("initial", "v0 must vanish at both end nodes"));
        }
        if bad.is_empty() {
            Ok(state)
        } else {
            Err(ConfigError::Invalid(bad))
        }
    }
}

/// `cos^2(pi s / 2)` on `|s| < 1`, zero outside.
fn cos2(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (FRAC_PI_2 * s).cos().powi(2)
    } else {
        0.0
    }
}

/// One on `|r| <= radius`, a `cos^2` shoulder of width `edge`, zero beyond.
fn plateau(r: f64, radius: f64, edge: f64) -> f64 {
    let r = r.abs();
    if r <= radius {
        1.0
    } else {
        cos2((r - radius) / edge)
    }
}

pub fn generate(shape: &Shape, mesh: &Mesh) -> State {
    let mut s = State::equilibrium(mesh);
    let c = shape.center;
    for (j, x) in mesh.centers().into_iter().enumerate() {
        let b = cos2((x - c) / shape.theta_radius);
        s.theta[j] = 1.0 + shape.theta_amplitude * b;
        s.u[j] = 1.0 + shape.u_amplitude * b;
        s.z[j] = shape.z_amplitude * plateau(x - c, shape.z_radius, shape.z_edge);
    }
    for (i, x) in mesh.nodes().into_iter().enumerate() {
        let r = (x - c) / shape.v_radius;
        s.v[i] = shape.v_amplitude * (PI * r).sin() * cos2(r);
    }
    let n = mesh.n();
    s.v[0] = 0.0;
    s.v[n] = 0.0;
    s
}

/// Tabulated initial profile, linearly interpolated; equilibrium outside the
/// tabulated range.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
}

impl ProfileTable {
    fn interp(&self, col: &[f64], x: f64, far: f64) -> f64 {
        let n = self.x.len();
        if n == 0 || x < self.x[0] || x > self.x[n - 1] {
            return far;
        }
        let i = self.x.partition_point(|&xi| xi <= x).clamp(1, n.max(2) - 1);
        if n == 1 {
            return col[0];
        }
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
        col[i - 1] * (1.0 - w) + col[i] * w
    }

    pub fn sample(&self, mesh: &Mesh) -> State {
        let mut s = State::equilibrium(mesh);
        for (j, x) in mesh.centers().into_iter().enumerate() {
            s.u[j] = self.interp(&self.u, x, 1.0);
            s.theta[j] = self.interp(&self.theta, x, 1.0);
            s.z[j] = self.interp(&self.z, x, 0.0);
        }
        for (i, x) in mesh.nodes().into_iter().enumerate() {
            s.v[i] = self.interp(&self.v, x, 0.0);
        }
        s
    }
}

/// Read a CSV profile with an `x,u,v,theta,z` header and increasing `x`.
pub fn read_profile(path: &Path) -> Result<ProfileTable, ConfigError> {
    let err = |reason: String| ConfigError::Profile {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    parse_profile(&text).map_err(err)
}

pub fn parse_profile(text: &str) -> Result<ProfileTable, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines
        .next()
        .ok_or("empty profile")?
        .split(',')
        .map(str::trim)
        .collect();
    if header != ["x", "u", "v", "theta", "z"] {
        return Err(format!("expected header x,u,v,theta,z, got {}", header.join(",")));
    }
    let mut t = ProfileTable {
        x: vec![],
        u: vec![],
        v: vec![],
        theta: vec![],
        z: vec![],
    };
    for (row, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("row {}: {e}", row + 1))?;
        if vals.len() != 5 {
            return Err(format!("row {}: expected 5 columns, got {}", row + 1, vals.len()));
        }
        if let Some(&last) = t.x.last() {
            if vals[0] <= last {
                return Err(format!("row {}: x must increase", row + 1));
            }
        }
        t.x.push(vals[0]);
        t.u.push(vals[1]);
        t.v.push(vals[2]);
        t.theta.push(vals[3]);
        t.z.push(vals[4]);
    }
    if t.x.is_empty() {
        return Err("profile has no rows".into());
    }
    Ok(t)
}

/// Boundary condition matching a domain kind, with the half-line default
/// being the insulated wall.
pub fn default_boundary(domain: DomainKind) -> BoundaryCondition {
    match domain {
        DomainKind::WholeLine => BoundaryCondition::whole_line(),
        DomainKind::HalfLine => BoundaryCondition {
            kind: BcKind::HalfLineInsulated,
            z_end: crate::solver::ZEnd::Neumann0,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults_and_round_trips() {
        let cfg = parse_config("[initial]\nscenario = \"cold-bump\"\n").unwrap();
        assert_eq!(cfg.fluid, FluidParams::default());
        assert_eq!(cfg.mesh.n, 512);
        let text = to_toml(&cfg);
        let back = parse_config(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(to_toml(&back), text);
    }

    #[test]
    fn empty_config_is_valid() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.initial.scenario(), Scenario::HotSpot);
    }

    #[test]
    fn negative_q_names_the_key() {
        let err = parse_config("[fluid]\nq = -1.0\n").unwrap_err();
        match err {
            ConfigError::Invalid(v) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].key, "fluid.q");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn reactant_amplitude_outside_unit_interval() {
        let err = parse_config("[initial]\nscenario = \"hot-spot\"\nz_amplitude = 1.5\n").unwrap_err();
        let ConfigError::Invalid(v) = err else { panic!() };
        assert!(v.iter().any(|v| v.key == "initial.z_amplitude" && v.message.contains("[0, 1]")));
    }

    #[test]
    fn all_violations_are_reported() {
        let err = parse_config("[fluid]\nmu = 0.0\nkappa = -2.0\n[mesh]\nn = 4\n[step]\nsafety = 1.5\n").unwrap_err();
        let ConfigError::Invalid(v) = err else { panic!() };
        let keys: Vec<&str> = v.iter().map(|v| v.key.as_str()).collect();
        for k in ["fluid.mu", "fluid.kappa", "mesh.n", "step.safety"] {
            assert!(keys.contains(&k), "{k} missing from {keys:?}");
        }
    }

    #[test]
    fn unknown_keys_are_syntax_errors() {
        assert!(matches!(parse_config("[fluid]\nviscosity = 1.0\n"), Err(ConfigError::Syntax(_))));
        assert!(matches!(parse_config("colour = 1\n"), Err(ConfigError::Syntax(_))));
        assert!(matches!(parse_config("[fluid\n"), Err(ConfigError::Syntax(_))));
    }

    #[test]
    fn boundary_must_match_domain() {
        let err = parse_config("[mesh]\ndomain = \"half-line\"\n").unwrap_err();
        let ConfigError::Invalid(v) = err else { panic!() };
        assert!(v.iter().any(|v| v.key == "boundary.kind"));
        let ok = "[mesh]\ndomain = \"half-line\"\n[boundary]\nkind = \"half-line-isothermal\"\nz_end = \"neumann0\"\n";
        let cfg = parse_config(ok).unwrap();
        assert_eq!(cfg.initial.shape(&cfg.mesh).center, 10.0);
    }

    #[test]
    fn cold_bump_must_stay_cold() {
        assert!(parse_config("[initial]\nscenario = \"cold-bump\"\ntheta_amplitude = 0.5\n").is_err());
    }

    #[test]
    fn support_must_fit_in_half_domain() {
        let err = parse_config("[mesh]\nhalf_length = 10.0\n").unwrap_err();
        let ConfigError::Invalid(v) = err else { panic!() };
        assert!(v.iter().any(|v| v.key == "initial.center"));
    }

    #[test]
    fn every_builtin_scenario_validates() {
        for s in Scenario::ALL {
            if s == Scenario::Profile {
                continue;
            }
            RunConfig::scenario(s).validate().unwrap();
            let mut half = RunConfig::scenario(s);
            half.mesh.domain = DomainKind::HalfLine;
            half.boundary = default_boundary(DomainKind::HalfLine);
            half.validate().unwrap();
        }
    }

    #[test]
    fn hot_spot_crosses_ignition() {
        let cfg = RunConfig::scenario(Scenario::HotSpot);
        let s = cfg.initial_state(&cfg.mesh().unwrap()).unwrap();
        let max = s.theta.iter().cloned().fold(0.0, f64::max);
        assert!(max > cfg.reaction.theta_ign);
        assert!(s.z.iter().all(|z| (0.0..=1.0).contains(z)));
        assert!(s.z.iter().cloned().fold(0.0, f64::max) == 1.0);
    }

    #[test]
    fn profile_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "x,u,v,theta,z\n-2,1,0,1,0\n0,1.5,0.1,2,0.5\n2,1,0,1,0\n").unwrap();
        let mut cfg = RunConfig::scenario(Scenario::Profile);
        cfg.initial.profile = Some(path.display().to_string());
        cfg.validate().unwrap();
        let mesh = Mesh::new(4.0, 16, DomainKind::WholeLine).unwrap();
        let s = cfg.initial_state(&mesh).unwrap();
        // cell 7 is centred at -0.25, a quarter of the way down from the peak
        assert!((s.theta[7] - 1.875).abs() < 1e-12);
        assert_eq!(s.v[8], 0.1);
        assert_eq!(s.u[0], 1.0);
    }

    #[test]
    fn bad_profiles_are_rejected() {
        assert!(parse_profile("a,b\n1,2\n").is_err());
        assert!(parse_profile("x,u,v,theta,z\n0,1,0,1,0\n0,1,0,1,0\n").is_err());
        assert!(parse_profile("x,u,v,theta,z\n0,1,0,1\n").is_err());
        let t = parse_profile("x,u,v,theta,z\n0,1,0,-1,0\n1,1,0,1,0\n").unwrap();
        let mesh = Mesh::new(4.0, 16, DomainKind::WholeLine).unwrap();
        let s = t.sample(&mesh);
        assert!(s.theta.iter().any(|&x| x <= 0.0));
    }
}
