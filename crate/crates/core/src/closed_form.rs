//! Closed-form fees and controls for the linear contracts when `μ = r = 0`.
//!
//! With zero drift and rate the fee separates as `P(t, q, S) = N·S + h(t, q)`
//! where `h` is quadratic in `q`. The quadratic coefficient solves a Riccati
//! equation, the linear coefficient a first-order linear ODE driven by it and
//! the constant term a plain integral:
//!
//! ```text
//! −h₂' − σ²γ/2     + (b − 2h₂)²/(4l)            = 0,  h₂(T) = α
//! −h₁' + σ²γN      − (b − 2h₂)(h₁ + bN)/(2l)    = 0,  h₁(T) = 0
//! −h₀' − σ²γN²/2   + (h₁ + bN)²/(4l)            = 0,  h₀(T) = 0
//! ```
//!
//! For physical delivery `h = h₂(t)(q − N)²`; for cash settlement
//! `h = h₀ + h₁q + h₂q²` with the terminal cost centred at zero.
//!
//! All exponentials are written in terms of `w = e^{−k(T−t)}` with `k = a/l`
//! so nothing overflows for long horizons or small `l`.

use crate::error::{Error, Result};
use crate::market::{ContractFamily, MarketParams};

/// Intervals of the trapezoid rule used for the constant term.
pub const CONSTANT_TERM_INTERVALS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiConstants {
    /// `a = sqrt(l σ² γ / 2)`.
    pub scale: f64,
    /// `ξ = (α − b/2 − a) / (α − b/2 + a)`.
    pub ratio: f64,
    /// Decay rate `k = a / l`.
    pub rate: f64,
    horizon: f64,
}

impl RiccatiConstants {
    pub fn new(params: &MarketParams) -> Result<Self> {
        params.validate()?;
        if params.drift != 0.0 || params.rate != 0.0 {
            return Err(Error::InvalidRegime(format!(
                "closed forms need mu = r = 0 (got mu = {}, r = {})",
                params.drift, params.rate
            )));
        }
        if params.volatility == 0.0 {
            return Err(Error::InvalidRegime("closed forms need sigma > 0".into()));
        }
        let l = params.temporary_impact;
        let sigma = params.volatility;
        let scale = (0.5 * l * sigma * sigma * params.risk_aversion).sqrt();
        let shifted = params.terminal_penalty - 0.5 * params.permanent_impact;
        let denom = shifted + scale;
        if denom == 0.0 {
            return Err(Error::InvalidRegime(
                "alpha - b/2 + a = 0 leaves the Riccati ratio undefined".into(),
            ));
        }
        Ok(Self {
            scale,
            ratio: (shifted - scale) / denom,
            rate: scale / l,
            horizon: params.horizon,
        })
    }

    pub fn ratio_in_unit_interval(&self) -> bool {
        self.ratio > 0.0 && self.ratio < 1.0
    }

    fn decay(&self, t: f64) -> f64 {
        (-self.rate * (self.horizon - t)).exp()
    }

    /// Riccati solution `θ(t)`; `θ + b/2` is the quadratic coefficient.
    pub fn theta(&self, t: f64) -> Result<f64> {
        let w2 = self.decay(t).powi(2);
        let denom = 1.0 - self.ratio * w2;
        // ξ > 1 means the solution blows up somewhere on [t, T] as soon as the
        // denominator has changed sign between t and T.
        if self.ratio > 1.0 && denom >= 0.0 || denom == 0.0 {
            return Err(Error::DegenerateRiccati { t });
        }
        Ok(self.scale * (1.0 + self.ratio * w2) / denom)
    }
}

/// `θ(t)` for the given parameters.
pub fn riccati_theta(t: f64, params: &MarketParams) -> Result<f64> {
    RiccatiConstants::new(params)?.theta(t)
}

/// Time-dependent coefficients of the cash-settled fee.
#[derive(Debug, Clone, Copy)]
pub struct TrsCoefficients {
    pub constants: RiccatiConstants,
    params: MarketParams,
}

impl TrsCoefficients {
    pub fn new(params: &MarketParams) -> Result<Self> {
        Ok(Self {
            constants: RiccatiConstants::new(params)?,
            params: *params,
        })
    }

    pub fn quadratic(&self, t: f64) -> Result<f64> {
        Ok(self.constants.theta(t)? + 0.5 * self.params.permanent_impact)
    }

    /// Linear coefficient, from the integrating factor
    /// `G(τ) = (e^{kτ} − ξe^{−kτ}) / (1 − ξ)` of the linear ODE.
    pub fn linear(&self, t: f64) -> Result<f64> {
        self.constants.theta(t)?;
        Ok(self.shifted_linear(t) - self.impact_shift())
    }

    /// Constant coefficient, integrated with the trapezoid rule.
    pub fn constant(&self, t: f64) -> Result<f64> {
        self.constants.theta(t)?;
        let p = &self.params;
        let risk = 0.5 * p.volatility * p.volatility * p.risk_aversion * p.shares * p.shares;
        let span = p.horizon - t;
        if span <= 0.0 {
            return Ok(0.0);
        }
        let step = span / CONSTANT_TERM_INTERVALS as f64;
        let integrand = |s: f64| {
            let g = self.shifted_linear(s);
            risk - g * g / (4.0 * p.temporary_impact)
        };
        let inner: f64 = (1..CONSTANT_TERM_INTERVALS)
            .map(|m| integrand(t + m as f64 * step))
            .sum();
        Ok(step * (inner + 0.5 * (integrand(t) + integrand(p.horizon))))
    }

    fn impact_shift(&self) -> f64 {
        self.params.permanent_impact * self.params.shares
    }

    /// `h₁ + bN`, which solves the homogeneous-coefficient form of the ODE.
    fn shifted_linear(&self, t: f64) -> f64 {
        let p = &self.params;
        let xi = self.constants.ratio;
        let k = self.constants.rate;
        let w = self.constants.decay(t);
        let forcing = p.volatility * p.volatility * p.risk_aversion * p.shares;
        let numer =
            self.impact_shift() * (1.0 - xi) * w - forcing * (1.0 + xi * w * w - w - xi * w) / k;
        numer / (1.0 - xi * w * w)
    }
}

/// Physical-delivery fee `N·S + (θ(t) + b/2)(q − N)²`.
pub fn fee_physical_closed(t: f64, q: f64, s: f64, params: &MarketParams) -> Result<f64> {
    let quad = riccati_theta(t, params)? + 0.5 * params.permanent_impact;
    let gap = q - params.shares;
    Ok(params.shares * s + quad * gap * gap)
}

/// Cash-settled fee `N·S + h₀(t) + h₁(t)q + h₂(t)q²`.
pub fn fee_trs_closed(t: f64, q: f64, s: f64, params: &MarketParams) -> Result<f64> {
    let c = TrsCoefficients::new(params)?;
    Ok(params.shares * s + c.constant(t)? + c.linear(t)? * q + c.quadratic(t)? * q * q)
}

/// Optimal trading speed for the linear contracts, clamped to `[−C, C]`.
pub fn control_closed(
    t: f64,
    q: f64,
    family: ContractFamily,
    params: &MarketParams,
) -> Result<f64> {
    let dh_dq = match family {
        ContractFamily::LinearPhysical => {
            2.0 * (riccati_theta(t, params)? + 0.5 * params.permanent_impact) * (q - params.shares)
        }
        ContractFamily::LinearCash => {
            let c = TrsCoefficients::new(params)?;
            c.linear(t)? + 2.0 * c.quadratic(t)? * q
        }
        other => {
            return Err(Error::InvalidRegime(format!(
                "no closed-form control for {other}"
            )))
        }
    };
    let b = params.permanent_impact;
    let raw = (b * q - b * params.shares - dh_dq) / (2.0 * params.temporary_impact);
    Ok(raw.clamp(-params.max_speed, params.max_speed))
}
