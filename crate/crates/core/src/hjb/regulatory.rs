//! Contracts whose settlement type is decided by a regulator at time `τ`.
//!
//! With probability `p` the contract is approved and settles physically,
//! otherwise it settles in cash. After `τ` the broker knows the outcome, so the
//! two branches are ordinary fee surfaces on `[τ, T]`. Before `τ` the broker
//! holds the mixture. The broker's value is `−e^{−γ(e^{r(T−t)}(x − P) + ...)}`,
//! so averaging the two branch values at `τ` and translating back to fees gives
//!
//! ```text
//! P_pre(τ) = (1/g) · ln( p·e^{g·P₁(τ)} + (1 − p)·e^{g·P₀(τ)} ),   g = γe^{r(T−τ)}
//! ```
//!
//! which then serves as the terminal layer of an ordinary backward solve on `[0, τ]`.

use serde::{Deserialize, Serialize};

use super::{march, terminal_layer, FeeSurface, SolveOptions};
use crate::error::{Error, Result};
use crate::market::{ContractFamily, ContractSpec, GridSpec, MarketParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulatorySpec {
    /// Probability that physical delivery is approved.
    #[serde(alias = "p")]
    pub approval_probability: f64,
    /// Decision time.
    #[serde(alias = "tau")]
    pub decision_time: f64,
}

impl RegulatorySpec {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        let p = self.approval_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidRegulatory(format!(
                "approval probability must lie in [0, 1] (got {p})"
            )));
        }
        let tau = self.decision_time;
        if !(tau > 0.0 && tau < horizon) {
            return Err(Error::InvalidRegulatory(format!(
                "decision time must lie in (0, {horizon}) (got {tau})"
            )));
        }
        Ok(())
    }

    /// Time step closest to the decision time. Fails if that step is
    /// more than half a step away or sits on either end of the grid.
    pub fn decision_step(&self, grid: &GridSpec, horizon: f64) -> Result<usize> {
        self.validate(horizon)?;
        let dt = grid.dt(horizon);
        let n = (self.decision_time / dt).round();
        if (n * dt - self.decision_time).abs() > 0.5 * dt + 1e-12 * horizon {
            return Err(Error::InvalidRegulatory(format!(
                "decision time {} is not within half a step of the grid",
                self.decision_time
            )));
        }
        let n = n as usize;
        if n == 0 || n >= grid.time_steps {
            return Err(Error::InvalidRegulatory(format!(
                "decision time {} snaps to the end of the grid",
                self.decision_time
            )));
        }
        if (n as f64 * dt - self.decision_time).abs() > 1e-12 * horizon {
            log::info!(
                "decision time {} snapped to {}",
                self.decision_time,
                n as f64 * dt
            );
        }
        Ok(n)
    }
}

#[derive(Debug, Clone)]
pub struct RegulatorySurfaces {
    pub decision_step: usize,
    /// Fee before the decision, on `[0, τ]`.
    pub pre: FeeSurface,
    /// Physical-delivery branch on `[τ, T]`.
    pub approved: FeeSurface,
    /// Cash-settled branch on `[τ, T]`.
    pub rejected: FeeSurface,
}

/// Exponential-utility mixture of two fee layers at the decision time.
pub fn blend_at_decision(
    approved: &[f64],
    rejected: &[f64],
    p: f64,
    growth: f64,
    risk_aversion: f64,
    step: usize,
) -> Result<Vec<f64>> {
    if p == 1.0 {
        return Ok(approved.to_vec());
    }
    if p == 0.0 {
        return Ok(rejected.to_vec());
    }
    let g = risk_aversion * growth;
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    approved
        .iter()
        .zip(rejected)
        .map(|(&a, &c)| {
            let (x1, x0) = (g * a + lp, g * c + lq);
            if !(x1.is_finite() && x0.is_finite()) {
                return Err(Error::Overflow { step });
            }
            let m = x1.max(x0);
            Ok((m + ((x1 - m).exp() + (x0 - m).exp()).ln()) / g)
        })
        .collect()
}

pub fn solve_regulatory(
    reg: &RegulatorySpec,
    params: &MarketParams,
    grid: &GridSpec,
) -> Result<RegulatorySurfaces> {
    solve_regulatory_with(reg, params, grid, &SolveOptions::default())
}

pub fn solve_regulatory_with(
    reg: &RegulatorySpec,
    params: &MarketParams,
    grid: &GridSpec,
    options: &SolveOptions,
) -> Result<RegulatorySurfaces> {
    params.validate()?;
    grid.validate()?;
    let n_tau = reg.decision_step(grid, params.horizon)?;
    let branch = |family| {
        let spec = ContractSpec::baseline(family, params.shares);
        let terminal = terminal_layer(&spec, params, grid);
        march(
            terminal,
            n_tau,
            grid.time_steps,
            params,
            grid,
            Default::default(),
            options,
        )
    };
    let (approved, rejected) = rayon::join(
        || branch(ContractFamily::LinearPhysical),
        || branch(ContractFamily::LinearCash),
    );
    let (approved, rejected) = (approved?, rejected?);
    let tau = grid.time(n_tau, params.horizon);
    let blended = blend_at_decision(
        approved.data.layer(n_tau).expect("decision layer"),
        rejected.data.layer(n_tau).expect("decision layer"),
        reg.approval_probability,
        params.compounding(tau),
        params.risk_aversion,
        n_tau,
    )?;
    let pre = march(blended, 0, n_tau, params, grid, Default::default(), options)?;
    Ok(RegulatorySurfaces {
        decision_step: n_tau,
        pre,
        approved,
        rejected,
    })
}
