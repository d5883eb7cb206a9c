//! Monte-Carlo evaluation of solved strategies.
//!
//! Paths are Euler discretizations of
//!
//! ```text
//! dS = (μ + bv)dt + σdW,   dX = (rX − v(S + lv))dt,   dQ = v dt
//! ```
//!
//! with `v` read off a [`ControlSurface`]. Path `k` draws its Brownian
//! increments from its own ChaCha stream `(seed, k)`, so every contract sees
//! the same noise and any single path can be regenerated on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{
    bilinear, extract_control, solve_fee_surface, solve_twap, ControlSurface, FeeSurface,
};
use crate::market::{liquidation_cost, ContractSpec, GridSpec, MarketParams};

/// Fraction of steps allowed to query the control outside the grid.
pub const MAX_CLAMPED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "defaults::n_paths")]
    pub n_paths: usize,
    #[serde(default = "defaults::n_steps")]
    pub n_steps: usize,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    /// Initial total wealth; `q0·S0` when absent.
    #[serde(default, alias = "X0")]
    pub initial_wealth: Option<f64>,
    #[serde(default = "defaults::q0")]
    pub q0: f64,
    #[serde(default = "defaults::s0", alias = "S0")]
    pub s0: f64,
}

mod defaults {
    pub fn n_paths() -> usize {
        100_000
    }
    pub fn n_steps() -> usize {
        1000
    }
    pub fn seed() -> u64 {
        20_240_601
    }
    pub fn q0() -> f64 {
        0.5
    }
    pub fn s0() -> f64 {
        45.0
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: defaults::n_paths(),
            n_steps: defaults::n_steps(),
            seed: defaults::seed(),
            initial_wealth: None,
            q0: defaults::q0(),
            s0: defaults::s0(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 1 || self.n_steps < 1 {
            return Err(Error::InvalidSimulation(
                "n_paths and n_steps must be >= 1".into(),
            ));
        }
        if !(self.q0.is_finite() && self.s0.is_finite()) {
            return Err(Error::InvalidSimulation("q0 and s0 must be finite".into()));
        }
        if let Some(x) = self.initial_wealth {
            if !x.is_finite() {
                return Err(Error::InvalidSimulation(
                    "initial wealth must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn wealth(&self) -> f64 {
        self.initial_wealth.unwrap_or(self.q0 * self.s0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub q: Vec<f64>,
    pub x: Vec<f64>,
    /// Speed applied over `[t_k, t_{k+1})`; one entry fewer than the states.
    pub v: Vec<f64>,
    /// Left-rectangle running average of `S`.
    pub a: Vec<f64>,
    pub increments: Vec<f64>,
    /// Steps whose control lookup fell outside the grid.
    pub clamped_steps: usize,
}

impl SimPath {
    pub fn terminal(&self) -> (f64, f64, f64, f64) {
        let k = self.times.len() - 1;
        (self.x[k], self.q[k], self.s[k], self.a[k])
    }
}

/// Brownian increments of path `path`, each with variance `dt`.
pub fn path_increments(seed: u64, path: u64, n_steps: usize, dt: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    let scale = dt.sqrt();
    (0..n_steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect()
}

/// Increments for every path of `cfg`, shared by all contracts.
pub fn common_noise_batch(cfg: &SimConfig, horizon: f64) -> Vec<Vec<f64>> {
    let dt = horizon / cfg.n_steps as f64;
    (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|k| path_increments(cfg.seed, k, cfg.n_steps, dt))
        .collect()
}

fn interpolate_flagged(control: &ControlSurface, t: f64, q: f64, s: f64) -> (f64, bool) {
    let data = &control.data;
    let g = &data.grid;
    let u = (t / g.dt(data.horizon)).clamp(data.first_step() as f64, data.last_step() as f64);
    let n0 = (u.floor() as usize).min(data.last_step());
    let w = u - n0 as f64;
    let lower = data.layer(n0).expect("contiguous control layers");
    let (v0, c0) = bilinear(lower, g, s, q);
    let (v, clamped) = if w > 0.0 {
        let upper = data.layer(n0 + 1).expect("contiguous control layers");
        let (v1, c1) = bilinear(upper, g, s, q);
        (v0 + w * (v1 - v0), c0 || c1)
    } else {
        (v0, c0)
    };
    (v.clamp(-control.max_speed, control.max_speed), clamped)
}

/// Speed at `(t, q, S)`: bilinear in `(S, q)`, linear in `t`, clamped to the grid and to `[−C, C]`.
pub fn interpolate_control(control: &ControlSurface, t: f64, q: f64, s: f64) -> f64 {
    interpolate_flagged(control, t, q, s).0
}

fn check_contiguous(control: &ControlSurface) -> Result<()> {
    let steps = control.data.steps();
    if steps.len() != steps[steps.len() - 1] - steps[0] + 1 {
        return Err(Error::InvalidSimulation(
            "control surface must keep every time layer".into(),
        ));
    }
    Ok(())
}

/// Euler path under `control` starting from wealth `x0`.
pub fn simulate_path(
    control: &ControlSurface,
    params: &MarketParams,
    cfg: &SimConfig,
    increments: &[f64],
    x0: f64,
) -> Result<SimPath> {
    if increments.len() != cfg.n_steps {
        return Err(Error::InvalidSimulation(format!(
            "{} increments for {} steps",
            increments.len(),
            cfg.n_steps
        )));
    }
    check_contiguous(control)?;
    let n = cfg.n_steps;
    let dt = params.horizon / n as f64;
    let mut path = SimPath {
        times: (0..=n).map(|k| k as f64 * dt).collect(),
        s: Vec::with_capacity(n + 1),
        q: Vec::with_capacity(n + 1),
        x: Vec::with_capacity(n + 1),
        v: Vec::with_capacity(n),
        a: Vec::with_capacity(n + 1),
        increments: increments.to_vec(),
        clamped_steps: 0,
    };
    let (mut s, mut q, mut x) = (cfg.s0, cfg.q0, x0);
    let mut running = 0.0;
    path.s.push(s);
    path.q.push(q);
    path.x.push(x);
    path.a.push(s);
    for (k, dw) in increments.iter().enumerate() {
        let (v, clamped) = interpolate_flagged(control, path.times[k], q, s);
        path.clamped_steps += clamped as usize;
        running += s;
        let s_next = s + (params.drift + params.permanent_impact * v) * dt + params.volatility * dw;
        x += (params.rate * x - v * (s + params.temporary_impact * v)) * dt;
        q += v * dt;
        s = s_next;
        path.v.push(v);
        path.s.push(s);
        path.q.push(q);
        path.x.push(x);
        path.a.push(running / (k + 1) as f64);
    }
    if path.clamped_steps as f64 > MAX_CLAMPED_FRACTION * n as f64 {
        return Err(Error::OutOfGrid {
            clamped: path.clamped_steps,
            steps: n,
        });
    }
    Ok(path)
}

/// Broker's terminal wealth `Y(T)` under the contract.
pub fn realized_payoff(path: &SimPath, spec: &ContractSpec, params: &MarketParams) -> f64 {
    let (x, q, s, a) = path.terminal();
    let n = params.shares;
    let cost = liquidation_cost(q, spec.liquidation_target, params.terminal_penalty);
    if spec.family.is_twap() {
        x + q * s + n * (a - s) - cost
    } else {
        // X − ΠS + QS − L; for physical delivery this is X − (N − Q)S − L
        x - spec.payoff(s, n) + q * s - cost
    }
}

/// Number of sign changes along a speed path, ignoring exact zeros.
pub fn sign_changes(v: &[f64]) -> usize {
    let signs: Vec<bool> = v.iter().filter(|x| **x != 0.0).map(|x| *x > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffEstimate {
    pub fee: f64,
    pub estimate: f64,
    /// `None` for a single path.
    pub stderr: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    /// Estimate above two standard errors.
    pub arbitrage: bool,
}

/// `E[Y(T)] − X₀` starting from `X(0) = X₀ − q₀S₀ + fee`, with a fixed
/// summation order so the result does not depend on the thread count.
pub fn expected_payoff_with(
    control: &ControlSurface,
    fee: f64,
    spec: &ContractSpec,
    params: &MarketParams,
    cfg: &SimConfig,
) -> Result<PayoffEstimate> {
    cfg.validate()?;
    check_contiguous(control)?;
    let x_start = cfg.wealth() - cfg.q0 * cfg.s0 + fee;
    let dt = params.horizon / cfg.n_steps as f64;
    let payoffs: Vec<f64> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let dw = path_increments(cfg.seed, k, cfg.n_steps, dt);
            let path = simulate_path(control, params, cfg, &dw, x_start)?;
            Ok(realized_payoff(&path, spec, params) - cfg.wealth())
        })
        .collect::<Result<_>>()?;
    let n = payoffs.len() as f64;
    let mean = payoffs.iter().sum::<f64>() / n;
    let stderr = (payoffs.len() > 1).then(|| {
        let var = payoffs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    Ok(PayoffEstimate {
        fee,
        estimate: mean,
        stderr,
        n_paths: payoffs.len(),
        seed: cfg.seed,
        arbitrage: stderr.is_some_and(|se| mean > 2.0 * se),
    })
}

/// Fee surface and optimal control of a contract, TWAP or not.
pub fn solve_contract(
    spec: &ContractSpec,
    params: &MarketParams,
    grid: &GridSpec,
) -> Result<(FeeSurface, ControlSurface)> {
    let surface = if spec.family.is_twap() {
        solve_twap(spec.family, params, grid)?
    } else {
        solve_fee_surface(spec, params, grid)?
    };
    let control = extract_control(&surface, params);
    Ok((surface, control))
}

/// Solves the contract, prices it at `(0, q₀, S₀)` and estimates the expected payoff.
pub fn expected_payoff_metric(
    spec: &ContractSpec,
    params: &MarketParams,
    grid: &GridSpec,
    cfg: &SimConfig,
) -> Result<PayoffEstimate> {
    let (surface, control) = solve_contract(spec, params, grid)?;
    let fee = surface
        .fee_at(0, cfg.s0, cfg.q0)
        .ok_or_else(|| Error::InvalidSimulation("fee surface has no initial layer".into()))?;
    drop(surface);
    expected_payoff_with(&control, fee, spec, params, cfg)
}
