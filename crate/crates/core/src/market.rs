//! Model constants, contract definitions and terminal conditions.
//!
//! Price dynamics are arithmetic with permanent impact, `dS = (μ + b·v)dt + σ dW`,
//! and wealth pays a temporary impact `l·v²` per unit time on top of the
//! mid-price. Every contract settles at the horizon through a payoff `Π(S)`
//! and a quadratic liquidation cost towards its inventory target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All model constants. Field names are descriptive; the short symbols used in
/// config files (`r`, `mu`, `b`, ...) are accepted as aliases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Risk-free rate per unit time.
    #[serde(alias = "r", default)]
    pub rate: f64,
    /// Price drift per unit time.
    #[serde(alias = "mu", default)]
    pub drift: f64,
    /// Permanent impact per unit trading speed.
    #[serde(alias = "b", default = "defaults::permanent_impact")]
    pub permanent_impact: f64,
    /// Temporary impact per unit trading speed.
    #[serde(alias = "l", default = "defaults::temporary_impact")]
    pub temporary_impact: f64,
    /// Absolute (CARA) risk aversion.
    #[serde(alias = "gamma", default = "defaults::risk_aversion")]
    pub risk_aversion: f64,
    /// Arithmetic price volatility per sqrt-time.
    #[serde(alias = "sigma", default = "defaults::volatility")]
    pub volatility: f64,
    /// Contracted share quantity.
    #[serde(alias = "N", default = "defaults::shares")]
    pub shares: f64,
    /// Bound on the absolute trading speed.
    #[serde(alias = "C", default = "defaults::max_speed")]
    pub max_speed: f64,
    /// Terminal liquidation penalty coefficient.
    #[serde(alias = "alpha", default = "defaults::terminal_penalty")]
    pub terminal_penalty: f64,
    /// Contract horizon.
    #[serde(alias = "T", default = "defaults::horizon")]
    pub horizon: f64,
}

mod defaults {
    pub fn permanent_impact() -> f64 {
        1e-3
    }
    pub fn temporary_impact() -> f64 {
        1e-3
    }
    pub fn risk_aversion() -> f64 {
        1e-2
    }
    pub fn volatility() -> f64 {
        5.0
    }
    pub fn shares() -> f64 {
        1.0
    }
    pub fn max_speed() -> f64 {
        10.0
    }
    pub fn terminal_penalty() -> f64 {
        0.2
    }
    pub fn horizon() -> f64 {
        1.0
    }
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            rate: 0.0,
            drift: 0.0,
            permanent_impact: defaults::permanent_impact(),
            temporary_impact: defaults::temporary_impact(),
            risk_aversion: defaults::risk_aversion(),
            volatility: defaults::volatility(),
            shares: defaults::shares(),
            max_speed: defaults::max_speed(),
            terminal_penalty: defaults::terminal_penalty(),
            horizon: defaults::horizon(),
        }
    }
}

impl MarketParams {
    /// Canonical field names, in declaration order. Sweeps address parameters
    /// by either these names or their short aliases.
    pub const FIELDS: [(&'static str, &'static str); 10] = [
        ("rate", "r"),
        ("drift", "mu"),
        ("permanent_impact", "b"),
        ("temporary_impact", "l"),
        ("risk_aversion", "gamma"),
        ("volatility", "sigma"),
        ("shares", "N"),
        ("max_speed", "C"),
        ("terminal_penalty", "alpha"),
        ("horizon", "T"),
    ];

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rate,
            self.drift,
            self.permanent_impact,
            self.temporary_impact,
            self.risk_aversion,
            self.volatility,
            self.shares,
            self.max_speed,
            self.terminal_penalty,
            self.horizon,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        let strict = [
            ("temporary_impact", self.temporary_impact),
            ("risk_aversion", self.risk_aversion),
            ("max_speed", self.max_speed),
            ("horizon", self.horizon),
        ];
        for (name, v) in strict {
            if v <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be > 0 (got {v})"
                )));
            }
        }
        if self.volatility < 0.0 {
            return Err(Error::InvalidParams(format!(
                "volatility must be >= 0 (got {})",
                self.volatility
            )));
        }
        if self.terminal_penalty < 0.0 {
            return Err(Error::InvalidParams(format!(
                "terminal_penalty must be >= 0 (got {})",
                self.terminal_penalty
            )));
        }
        if self.shares < 0.0 {
            return Err(Error::InvalidParams(format!(
                "shares must be >= 0 (got {})",
                self.shares
            )));
        }
        Ok(())
    }

    /// Mutable access by canonical name or alias.
    pub fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
        let canonical = Self::FIELDS
            .iter()
            .find(|(long, short)| *long == name || *short == name)?
            .0;
        Some(match canonical {
            "rate" => &mut self.rate,
            "drift" => &mut self.drift,
            "permanent_impact" => &mut self.permanent_impact,
            "temporary_impact" => &mut self.temporary_impact,
            "risk_aversion" => &mut self.risk_aversion,
            "volatility" => &mut self.volatility,
            "shares" => &mut self.shares,
            "max_speed" => &mut self.max_speed,
            "terminal_penalty" => &mut self.terminal_penalty,
            "horizon" => &mut self.horizon,
            _ => unreachable!(),
        })
    }

    /// Growth factor `e^{r(T−t)}` of money held from `t` to the horizon.
    pub fn compounding(&self, t: f64) -> f64 {
        (self.rate * (self.horizon - t)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractFamily {
    LinearPhysical,
    LinearCash,
    CollarCash,
    CollarPhysical,
    TwapPhysical,
    TwapCash,
}

impl ContractFamily {
    pub const ALL: [ContractFamily; 6] = [
        ContractFamily::LinearPhysical,
        ContractFamily::LinearCash,
        ContractFamily::CollarPhysical,
        ContractFamily::CollarCash,
        ContractFamily::TwapPhysical,
        ContractFamily::TwapCash,
    ];

    pub fn is_physical(self) -> bool {
        matches!(
            self,
            Self::LinearPhysical | Self::CollarPhysical | Self::TwapPhysical
        )
    }

    pub fn is_collar(self) -> bool {
        matches!(self, Self::CollarCash | Self::CollarPhysical)
    }

    pub fn is_twap(self) -> bool {
        matches!(self, Self::TwapCash | Self::TwapPhysical)
    }

    /// snake_case name, as used in config files and output tables.
    pub fn name(self) -> &'static str {
        match self {
            Self::LinearPhysical => "linear_physical",
            Self::LinearCash => "linear_cash",
            Self::CollarCash => "collar_cash",
            Self::CollarPhysical => "collar_physical",
            Self::TwapPhysical => "twap_physical",
            Self::TwapCash => "twap_cash",
        }
    }

    pub fn target_inventory(self, shares: f64) -> f64 {
        if self.is_physical() {
            shares
        } else {
            0.0
        }
    }
}

impl std::fmt::Display for ContractFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ContractFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidContract(format!("unknown contract family `{s}`")))
    }
}

/// Strikes used by the baseline collar.
pub const BASELINE_STRIKES: (f64, f64) = (40.0, 50.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    pub family: ContractFamily,
    /// Put strike of the collar (floor).
    pub lower_strike: f64,
    /// Call strike of the collar (cap).
    pub upper_strike: f64,
    /// Inventory the broker must hold at the horizon: N for physical
    /// delivery, 0 for cash settlement.
    pub liquidation_target: f64,
}

impl ContractSpec {
    pub fn new(family: ContractFamily, shares: f64, strikes: (f64, f64)) -> Result<Self> {
        let spec = Self {
            family,
            lower_strike: strikes.0,
            upper_strike: strikes.1,
            liquidation_target: family.target_inventory(shares),
        };
        spec.validate(shares)?;
        Ok(spec)
    }

    /// Contract with the baseline collar strikes (ignored by non-collar families).
    pub fn baseline(family: ContractFamily, shares: f64) -> Self {
        Self {
            family,
            lower_strike: BASELINE_STRIKES.0,
            upper_strike: BASELINE_STRIKES.1,
            liquidation_target: family.target_inventory(shares),
        }
    }

    pub fn validate(&self, shares: f64) -> Result<()> {
        if self.family.is_collar()
            && !(self.lower_strike.is_finite()
                && self.upper_strike.is_finite()
                && self.lower_strike < self.upper_strike)
        {
            return Err(Error::InvalidContract(format!(
                "collar strikes must satisfy K1 < K2 (got {} and {})",
                self.lower_strike, self.upper_strike
            )));
        }
        let expected = self.family.target_inventory(shares);
        if self.liquidation_target != expected {
            return Err(Error::InvalidContract(format!(
                "{} settles to inventory {expected}, not {}",
                self.family, self.liquidation_target
            )));
        }
        Ok(())
    }

    /// Per-share collar payoff `Z(S) = S + (K1 − S)⁺ − (S − K2)⁺`.
    pub fn collar_price(&self, s: f64) -> f64 {
        s + (self.lower_strike - s).max(0.0) - (s - self.upper_strike).max(0.0)
    }

    /// Terminal cash-equivalent `Π(S)` owed on `shares` shares. TWAP contracts
    /// return the linear part; their average-price leg is handled by the
    /// state-reduction transform in the solver.
    pub fn payoff(&self, s: f64, shares: f64) -> f64 {
        if self.family.is_collar() {
            shares * self.collar_price(s)
        } else {
            shares * s
        }
    }
}

/// Quadratic cost of moving inventory `q` to `target` at the horizon.
pub fn liquidation_cost(q: f64, target: f64, alpha: f64) -> f64 {
    let gap = q - target;
    alpha * gap * gap
}

/// Fee surface terminal condition `Π(S) + L(q)`.
pub fn terminal_fee(spec: &ContractSpec, q: f64, s: f64, params: &MarketParams) -> f64 {
    spec.payoff(s, params.shares)
        + liquidation_cost(q, spec.liquidation_target, params.terminal_penalty)
}

/// Uniform (t, S, q) mesh on a localized domain. Interval counts, not node counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "grid_defaults::s_min")]
    pub s_min: f64,
    #[serde(default = "grid_defaults::s_max")]
    pub s_max: f64,
    #[serde(default = "grid_defaults::intervals")]
    pub price_intervals: usize,
    #[serde(default = "grid_defaults::q_min")]
    pub q_min: f64,
    #[serde(default = "grid_defaults::q_max")]
    pub q_max: f64,
    #[serde(default = "grid_defaults::intervals")]
    pub inventory_intervals: usize,
    #[serde(default = "grid_defaults::time_steps")]
    pub time_steps: usize,
}

mod grid_defaults {
    pub fn s_min() -> f64 {
        15.0
    }
    pub fn s_max() -> f64 {
        75.0
    }
    pub fn q_min() -> f64 {
        -1.0
    }
    pub fn q_max() -> f64 {
        1.0
    }
    pub fn intervals() -> usize {
        100
    }
    pub fn time_steps() -> usize {
        1000
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            s_min: grid_defaults::s_min(),
            s_max: grid_defaults::s_max(),
            price_intervals: grid_defaults::intervals(),
            q_min: grid_defaults::q_min(),
            q_max: grid_defaults::q_max(),
            inventory_intervals: grid_defaults::intervals(),
            time_steps: grid_defaults::time_steps(),
        }
    }
}

impl GridSpec {
    /// Upper bound on the interval count of any axis.
    pub const MAX_INTERVALS: usize = 1 << 20;

    pub fn validate(&self) -> Result<()> {
        if !(self.s_min.is_finite() && self.s_max.is_finite() && self.s_min < self.s_max) {
            return Err(Error::InvalidGrid(format!(
                "need s_min < s_max (got {} and {})",
                self.s_min, self.s_max
            )));
        }
        if !(self.q_min.is_finite() && self.q_max.is_finite() && self.q_min < self.q_max) {
            return Err(Error::InvalidGrid(format!(
                "need q_min < q_max (got {} and {})",
                self.q_min, self.q_max
            )));
        }
        if self.price_intervals < 2 || self.inventory_intervals < 2 {
            return Err(Error::InvalidGrid(
                "price_intervals and inventory_intervals must be >= 2".into(),
            ));
        }
        if self.time_steps < 1 {
            return Err(Error::InvalidGrid("time_steps must be >= 1".into()));
        }
        if self.price_intervals > Self::MAX_INTERVALS
            || self.inventory_intervals > Self::MAX_INTERVALS
            || self.time_steps > Self::MAX_INTERVALS
        {
            return Err(Error::InvalidGrid(format!(
                "at most {} intervals per axis",
                Self::MAX_INTERVALS
            )));
        }
        Ok(())
    }

    pub fn price_nodes(&self) -> usize {
        self.price_intervals + 1
    }

    pub fn inventory_nodes(&self) -> usize {
        self.inventory_intervals + 1
    }

    pub fn ds(&self) -> f64 {
        (self.s_max - self.s_min) / self.price_intervals as f64
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / self.inventory_intervals as f64
    }

    pub fn dt(&self, horizon: f64) -> f64 {
        horizon / self.time_steps as f64
    }

    pub fn price(&self, i: usize) -> f64 {
        self.s_min + i as f64 * self.ds()
    }

    pub fn inventory(&self, j: usize) -> f64 {
        self.q_min + j as f64 * self.dq()
    }

    pub fn time(&self, n: usize, horizon: f64) -> f64 {
        n as f64 * self.dt(horizon)
    }

    /// Same domain with every spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            price_intervals: 2 * self.price_intervals,
            inventory_intervals: 2 * self.inventory_intervals,
            time_steps: 2 * self.time_steps,
            ..*self
        }
    }
}
