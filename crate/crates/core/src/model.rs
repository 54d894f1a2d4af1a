//! Physical constants of the mixture and the Arrhenius reaction-rate family.
//!
//! The raw rate is `theta^alpha * exp(-act / theta)` above the ignition
//! threshold and zero at or below it, so it jumps at `theta_ign`. A mollified
//! rate is the convolution of the raw rate with a compactly supported smooth
//! bump of half-width `eta`, tabulated once at construction.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Transport and reaction constants. All strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidParams {
    /// Gas constant times molecular weight.
    pub a: f64,
    /// Bulk viscosity.
    pub mu: f64,
    /// Heat conduction.
    pub kappa: f64,
    /// Energy released per unit of burnt reactant.
    pub q: f64,
    /// Reaction rate coefficient.
    pub big_k: f64,
    /// Species diffusion.
    pub d: f64,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            mu: 1.0,
            kappa: 1.0,
            q: 1.0,
            big_k: 1.0,
            d: 1.0,
        }
    }
}

impl FluidParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("a", self.a),
            ("mu", self.mu),
            ("kappa", self.kappa),
            ("q", self.q),
            ("big_k", self.big_k),
            ("d", self.d),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("must be a positive finite number, got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// Number of Simpson intervals across the kernel support `[-eta, eta]`.
const KERNEL_INTERVALS: usize = 256;
/// Table spacing is at most `eta / TABLE_REFINEMENT`.
const TABLE_REFINEMENT: f64 = 20.0;

#[derive(Debug, PartialEq)]
struct RateTable {
    spacing: f64,
    values: Vec<f64>,
}

/// Arrhenius rate with an ignition threshold, optionally mollified.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionRate {
    alpha: f64,
    act: f64,
    theta_ign: f64,
    eta: f64,
    theta_cap: f64,
    table: Option<Arc<RateTable>>,
}

impl ReactionRate {
    /// The raw (discontinuous) rate.
    pub fn new(alpha: f64, act: f64, theta_ign: f64, theta_cap: f64) -> Result<Self, ModelError> {
        let bad = |name, reason: &str| {
            Err(ModelError::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(alpha.is_finite() && alpha >= 0.0) {
            return bad("alpha", "must be finite and >= 0");
        }
        if !(act.is_finite() && act > 0.0) {
            return bad("act", "must be finite and > 0");
        }
        if !(theta_ign.is_finite() && theta_ign > 0.0) {
            return bad("theta_ign", "must be finite and > 0");
        }
        // equality is allowed: an empty active region gives the zero rate
        if !(theta_cap.is_finite() && theta_cap >= theta_ign) {
            return bad("theta_cap", "must be finite and >= theta_ign");
        }
        Ok(Self {
            alpha,
            act,
            theta_ign,
            eta: 0.0,
            theta_cap,
            table: None,
        })
    }

    /// Raw rate when `eta == 0`, mollified otherwise.
    pub fn with_eta(
        alpha: f64,
        act: f64,
        theta_ign: f64,
        theta_cap: f64,
        eta: f64,
    ) -> Result<Self, ModelError> {
        let raw = Self::new(alpha, act, theta_ign, theta_cap)?;
        if eta == 0.0 {
            Ok(raw)
        } else {
            raw.mollify(eta)
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn act(&self) -> f64 {
        self.act
    }
    pub fn theta_ign(&self) -> f64 {
        self.theta_ign
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn theta_cap(&self) -> f64 {
        self.theta_cap
    }

    /// The unmollified rate with the cap applied.
    fn raw(&self, theta: f64) -> f64 {
        let theta = theta.min(self.theta_cap);
        if theta > self.theta_ign {
            theta.powf(self.alpha) * (-self.act / theta).exp()
        } else {
            0.0
        }
    }

    /// Evaluate the rate at `theta >= 0`.
    pub fn phi(&self, theta: f64) -> f64 {
        match &self.table {
            None => self.raw(theta),
            Some(table) => {
                let theta = theta.clamp(0.0, self.theta_cap);
                let last = table.values.len() - 1;
                let pos = theta / table.spacing;
                let i = (pos.floor() as usize).min(last - 1);
                let w = (pos - i as f64).clamp(0.0, 1.0);
                table.values[i] * (1.0 - w) + table.values[i + 1] * w
            }
        }
    }

    /// Convolve the raw rate with the standard bump scaled to half-width `eta`.
    pub fn mollify(&self, eta: f64) -> Result<Self, ModelError> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "eta",
                reason: format!("mollification width must be > 0, got {eta}"),
            });
        }
        let weights = kernel_weights();
        let count = (self.theta_cap / (eta / TABLE_REFINEMENT)).ceil() as usize + 1;
        let count = count.max(2);
        let spacing = self.theta_cap / (count - 1) as f64;
        let h = 2.0 / KERNEL_INTERVALS as f64;
        let values = (0..count)
            .map(|i| {
                let theta = i as f64 * spacing;
                weights
                    .iter()
                    .enumerate()
                    .map(|(m, w)| {
                        let s = -1.0 + m as f64 * h;
                        w * self.raw(theta - eta * s)
                    })
                    .sum::<f64>()
            })
            .collect();
        Ok(Self {
            eta,
            table: Some(Arc::new(RateTable { spacing, values })),
            ..self.clone()
        })
    }

    /// `M = max` of the rate over `[0, theta_cap]`.
    pub fn rate_sup(&self) -> f64 {
        match &self.table {
            // theta -> theta^alpha e^{-A/theta} is increasing for alpha >= 0
            None => self.raw(self.theta_cap),
            Some(table) => table.values.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Unnormalised bump `exp(-1 / (1 - s^2))` on `(-1, 1)`.
pub fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Composite Simpson weights times kernel values, normalised to sum to one so
/// that every tabulated value is a convex combination of raw rate values.
fn kernel_weights() -> Vec<f64> {
    let h = 2.0 / KERNEL_INTERVALS as f64;
    let mut w: Vec<f64> = (0..=KERNEL_INTERVALS)
        .map(|m| {
            let simpson = if m == 0 || m == KERNEL_INTERVALS {
                1.0
            } else if m % 2 == 1 {
                4.0
            } else {
                2.0
            };
            simpson * bump(-1.0 + m as f64 * h)
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}
