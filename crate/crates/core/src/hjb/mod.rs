//! Backward finite-difference solver for the indifference-fee HJB equation
//!
//! ```text
//! ∂ₜP + ½σ²∂ₛₛP + μ∂ₛP − rP − ½σ²γe^{r(T−t)}(q − ∂ₛP)²
//!     + sup_{|v|≤C} {−lv² + (bq − b∂ₛP − ∂_qP)v} + (μ − rS)q = 0
//! ```
//!
//! with `P(T, q, S) = Π(S) + L(q)`.
//!
//! Each time step splits the operator: the linear part in `S` is implicit
//! (one tridiagonal solve per inventory slice), the nonlinear part is explicit
//! and evaluated on the previous layer. The price boundaries carry
//! `∂ₛₛP = 0`, which is eliminated from the tridiagonal system, so only the
//! interior rows are solved.
//!
//! The nonlinear part is upwinded in `q` by default. The trading term is split
//! into a buying branch (`v ≥ 0`, forward difference) and a selling branch
//! (`v ≤ 0`, backward difference), and the larger of the two is kept. At
//! `q_max` the buying branch is dropped and at `q_min` the selling branch, so
//! the inventory never leaves the grid. [`HamiltonianStencil::Central`]
//! evaluates the same term with central differences instead. It is unstable
//! for realistic speed bounds and is only kept for comparison.

pub mod regulatory;
pub mod twap;

pub use regulatory::{solve_regulatory, solve_regulatory_with, RegulatorySpec, RegulatorySurfaces};
pub use twap::{solve_twap, solve_twap_with, twap_fee};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{terminal_fee, ContractSpec, GridSpec, MarketParams};
use crate::tridiag::TridiagonalLu;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianStencil {
    #[default]
    Upwind,
    Central,
}

/// Which time layers a solve keeps in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Retain {
    #[default]
    All,
    /// Only the first and last layer; enough to read off a fee.
    Endpoints,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    pub stencil: HamiltonianStencil,
    pub retain: Retain,
}

/// Inventory against which the hedge is measured.
///
/// TWAP contracts owe `N·A(T)`. Writing the fee as `N(t/T)(S − A) + U` removes
/// the average from the state, and `U` then sees an inventory shifted by the
/// amount `N·t/T` that the average has already locked in.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ReferenceInventory {
    #[default]
    Zero,
    Twap {
        shares: f64,
    },
}

impl ReferenceInventory {
    pub fn at(&self, t: f64, horizon: f64) -> f64 {
        match *self {
            ReferenceInventory::Zero => 0.0,
            ReferenceInventory::Twap { shares } => shares * t / horizon,
        }
    }
}

/// Values on a subset of time layers of a (t, S, q) grid, stored time-major,
/// then price, then inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayers {
    pub grid: GridSpec,
    pub horizon: f64,
    steps: Vec<usize>,
    values: Vec<f64>,
}

impl GridLayers {
    pub fn new(grid: GridSpec, horizon: f64, steps: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be > 0 (got {horizon})"
            )));
        }
        if steps.is_empty() {
            return Err(Error::InvalidGrid("surface has no time layers".into()));
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) || steps[steps.len() - 1] > grid.time_steps {
            return Err(Error::InvalidGrid(
                "time layers must be increasing and within the grid".into(),
            ));
        }
        let expected = grid
            .price_nodes()
            .checked_mul(grid.inventory_nodes())
            .and_then(|n| n.checked_mul(steps.len()));
        if expected != Some(values.len()) {
            return Err(Error::InvalidGrid(format!(
                "surface dimensions do not match {} values",
                values.len()
            )));
        }
        Ok(Self {
            grid,
            horizon,
            steps,
            values,
        })
    }

    pub fn layer_len(&self) -> usize {
        self.grid.price_nodes() * self.grid.inventory_nodes()
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn first_step(&self) -> usize {
        self.steps[0]
    }

    pub fn last_step(&self) -> usize {
        self.steps[self.steps.len() - 1]
    }

    pub fn layer(&self, n: usize) -> Option<&[f64]> {
        let k = self.steps.binary_search(&n).ok()?;
        let len = self.layer_len();
        Some(&self.values[k * len..(k + 1) * len])
    }

    pub fn value(&self, n: usize, i: usize, j: usize) -> Option<f64> {
        if i >= self.grid.price_nodes() || j >= self.grid.inventory_nodes() {
            return None;
        }
        self.layer(n)
            .map(|l| l[i * self.grid.inventory_nodes() + j])
    }

    /// Bilinear interpolation in (S, q) on a stored layer, clamped to the grid.
    pub fn interpolate(&self, n: usize, s: f64, q: f64) -> Option<f64> {
        self.layer(n).map(|l| bilinear(l, &self.grid, s, q).0)
    }
}

/// Position of `x` on a uniform axis: lower index, weight of the upper node,
/// and whether `x` had to be clamped into `[lo, lo + h·cells]`.
pub(crate) fn locate(x: f64, lo: f64, h: f64, cells: usize) -> (usize, f64, bool) {
    let u = (x - lo) / h;
    let clamped = !(0.0..=cells as f64).contains(&u);
    let u = u.clamp(0.0, cells as f64);
    let k = (u.floor() as usize).min(cells - 1);
    (k, u - k as f64, clamped)
}

/// Bilinear interpolation of one layer; the flag reports a clamped query.
pub fn bilinear(layer: &[f64], grid: &GridSpec, s: f64, q: f64) -> (f64, bool) {
    let m = grid.inventory_nodes();
    let (i, ws, cs) = locate(s, grid.s_min, grid.ds(), grid.price_intervals);
    let (j, wq, cq) = locate(q, grid.q_min, grid.dq(), grid.inventory_intervals);
    let at = |i: usize, j: usize| layer[i * m + j];
    let lo = at(i, j) + wq * (at(i, j + 1) - at(i, j));
    let hi = at(i + 1, j) + wq * (at(i + 1, j + 1) - at(i + 1, j));
    (lo + ws * (hi - lo), cs || cq)
}

/// Solved fee `Pⁿᵢⱼ`, or `U` for TWAP contracts (see [`ReferenceInventory`]).
#[derive(Debug, Clone, PartialEq)]
pub struct FeeSurface {
    pub data: GridLayers,
    pub reference: ReferenceInventory,
}

impl FeeSurface {
    pub fn grid(&self) -> &GridSpec {
        &self.data.grid
    }

    /// Fee at time step `n` and (S, q), interpolated between nodes.
    pub fn fee_at(&self, n: usize, s: f64, q: f64) -> Option<f64> {
        self.data.interpolate(n, s, q)
    }
}

/// Optimal trading speeds `v*ⁿᵢⱼ`, all within `[−C, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSurface {
    pub data: GridLayers,
    pub max_speed: f64,
}

/// Coefficients of an interior row of the implicit operator
/// `−P + Δt(½σ²∂ₛₛ + μ∂ₛ − r)P`; they do not depend on the row or the slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitRow {
    /// Multiplies `Pᵢ₋₁`.
    pub sub: f64,
    pub diag: f64,
    /// Multiplies `Pᵢ₊₁`.
    pub sup: f64,
}

pub fn implicit_matrix_row(params: &MarketParams, grid: &GridSpec) -> ImplicitRow {
    let dt = grid.dt(params.horizon);
    let ds = grid.ds();
    let diffusion = params.volatility * params.volatility * dt / (2.0 * ds * ds);
    let advection = params.drift * dt / (2.0 * ds);
    ImplicitRow {
        sub: diffusion - advection,
        diag: -(2.0 * diffusion + 1.0 + params.rate * dt),
        sup: diffusion + advection,
    }
}

/// The implicit system on rows `1..I`, with `P₀ = 2P₁ − P₂` and
/// `P_I = 2P_{I−1} − P_{I−2}` substituted into the first and last rows.
fn reduced_system(row: ImplicitRow, price_intervals: usize) -> Result<TridiagonalLu> {
    let n = price_intervals - 1;
    let mut sub = vec![row.sub; n];
    let mut diag = vec![row.diag; n];
    let mut sup = vec![row.sup; n];
    sub[0] = 0.0;
    sup[n - 1] = 0.0;
    diag[0] += 2.0 * row.sub;
    sup[0] -= row.sub;
    diag[n - 1] += 2.0 * row.sup;
    sub[n - 1] -= row.sup;
    TridiagonalLu::factor(&sub, &diag, &sup)
}

/// `∂ₛP` at every node: central inside, copied from the neighbour at the ends.
fn price_slopes(layer: &[f64], grid: &GridSpec) -> Vec<f64> {
    let m = grid.inventory_nodes();
    let last = grid.price_intervals;
    let inv = 1.0 / (2.0 * grid.ds());
    let mut out = vec![0.0; layer.len()];
    for i in 0..=last {
        let c = i.clamp(1, last - 1);
        for j in 0..m {
            out[i * m + j] = (layer[(c + 1) * m + j] - layer[(c - 1) * m + j]) * inv;
        }
    }
    out
}

/// `sup_{v ∈ [lo, hi]} {−lv² + pv}`.
fn clamped_hamiltonian(p: f64, l: f64, lo: f64, hi: f64) -> f64 {
    let v = (p / (2.0 * l)).clamp(lo, hi);
    -l * v * v + p * v
}

/// Explicit nonlinear term at every node of layer `n`, evaluated on layer `n + 1`:
/// `−½σ²γe^{r(T−tₙ₊₁)}(q − c − ∂ₛP)² + sup_{|v|≤C}{−lv² + (bq − b(c + ∂ₛP) − ∂_qP)v}`,
/// where `c` is the reference inventory.
pub fn explicit_nonlinear(
    next: &[f64],
    n: usize,
    params: &MarketParams,
    grid: &GridSpec,
    stencil: HamiltonianStencil,
    reference: ReferenceInventory,
) -> Vec<f64> {
    let m = grid.inventory_nodes();
    let last_j = grid.inventory_intervals;
    let dq = grid.dq();
    let t_next = grid.time(n + 1, params.horizon);
    let shift = reference.at(t_next, params.horizon);
    let risk = 0.5 * params.volatility.powi(2) * params.risk_aversion * params.compounding(t_next);
    let (b, l, cap) = (
        params.permanent_impact,
        params.temporary_impact,
        params.max_speed,
    );
    let slopes = price_slopes(next, grid);

    let mut out = vec![0.0; next.len()];
    for i in 0..grid.price_nodes() {
        let row = &next[i * m..(i + 1) * m];
        for j in 0..m {
            let q = grid.inventory(j);
            let ps = slopes[i * m + j];
            let exposure = q - shift - ps;
            let base = b * q - b * (shift + ps);
            let hamiltonian = match stencil {
                HamiltonianStencil::Central => {
                    let pq = if j == 0 {
                        (row[1] - row[0]) / dq
                    } else if j == last_j {
                        (row[j] - row[j - 1]) / dq
                    } else {
                        (row[j + 1] - row[j - 1]) / (2.0 * dq)
                    };
                    clamped_hamiltonian(base - pq, l, -cap, cap)
                }
                HamiltonianStencil::Upwind => {
                    let buy = if j < last_j {
                        clamped_hamiltonian(base - (row[j + 1] - row[j]) / dq, l, 0.0, cap)
                    } else {
                        0.0
                    };
                    let sell = if j > 0 {
                        clamped_hamiltonian(base - (row[j] - row[j - 1]) / dq, l, -cap, 0.0)
                    } else {
                        0.0
                    };
                    buy.max(sell)
                }
            };
            out[i * m + j] = -risk * exposure * exposure + hamiltonian;
        }
    }
    out
}

/// Steps a fee layer backward in time with a factorization reused across steps.
#[derive(Debug, Clone)]
pub struct BackwardStepper {
    params: MarketParams,
    grid: GridSpec,
    stencil: HamiltonianStencil,
    reference: ReferenceInventory,
    lu: TridiagonalLu,
    warned: bool,
}

impl BackwardStepper {
    pub fn new(
        params: &MarketParams,
        grid: &GridSpec,
        stencil: HamiltonianStencil,
        reference: ReferenceInventory,
    ) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        if grid.price_intervals < 3 {
            return Err(Error::InvalidGrid(
                "the solver needs at least 3 price intervals".into(),
            ));
        }
        let courant = params.max_speed * grid.dt(params.horizon) / grid.dq();
        if courant > 1.0 {
            log::warn!(
                "C·Δt/Δq = {courant:.2} exceeds 1; the explicit inventory step is unstable \
                 at the speed bound"
            );
        }
        let lu = reduced_system(implicit_matrix_row(params, grid), grid.price_intervals)?;
        Ok(Self {
            params: *params,
            grid: *grid,
            stencil,
            reference,
            lu,
            warned: false,
        })
    }

    /// Layer `n` from layer `n + 1`.
    pub fn step(&mut self, next: &[f64], n: usize) -> Result<Vec<f64>> {
        let grid = &self.grid;
        let p = &self.params;
        let m = grid.inventory_nodes();
        let last = grid.price_intervals;
        let dt = grid.dt(p.horizon);
        let t_next = grid.time(n + 1, p.horizon);
        let shift = self.reference.at(t_next, p.horizon);
        let nonlinear = explicit_nonlinear(next, n, p, grid, self.stencil, self.reference);

        if !self.warned {
            let worst = next
                .iter()
                .zip(&nonlinear)
                .map(|(v, h)| dt * h.abs() / v.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            if worst > 0.1 {
                log::warn!(
                    "explicit step at n = {n} moves the fee by {:.1}% of its value; \
                     consider a smaller time step",
                    100.0 * worst
                );
                self.warned = true;
            }
        }

        // one interior price column per inventory slice
        let rows = last - 1;
        let mut columns = vec![0.0; m * rows];
        columns
            .par_chunks_mut(rows)
            .enumerate()
            .for_each(|(j, col)| {
                let exposure = grid.inventory(j) - shift;
                for (k, rhs) in col.iter_mut().enumerate() {
                    let i = k + 1;
                    let idx = i * m + j;
                    let source = (p.drift - p.rate * grid.price(i)) * exposure;
                    *rhs = -next[idx] + dt * nonlinear[idx] + source * dt;
                }
                self.lu.solve_in_place(col);
            });

        let mut out = vec![0.0; next.len()];
        for j in 0..m {
            let col = &columns[j * rows..(j + 1) * rows];
            for (k, v) in col.iter().enumerate() {
                out[(k + 1) * m + j] = *v;
            }
            out[j] = 2.0 * out[m + j] - out[2 * m + j];
            out[last * m + j] = 2.0 * out[(last - 1) * m + j] - out[(last - 2) * m + j];
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: n });
        }
        Ok(out)
    }
}

/// One backward step with the default stencil, from layer `n + 1` to layer `n`.
pub fn step_backward(
    next: &[f64],
    n: usize,
    params: &MarketParams,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    BackwardStepper::new(
        params,
        grid,
        HamiltonianStencil::default(),
        ReferenceInventory::Zero,
    )?
    .step(next, n)
}

/// Terminal layer `Π(S) + L(q)` of a contract.
pub fn terminal_layer(spec: &ContractSpec, params: &MarketParams, grid: &GridSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.price_nodes() * grid.inventory_nodes());
    for i in 0..grid.price_nodes() {
        let s = grid.price(i);
        for j in 0..grid.inventory_nodes() {
            out.push(terminal_fee(spec, grid.inventory(j), s, params));
        }
    }
    out
}

/// Marches `terminal` (held at step `to`) back to step `from`.
pub(crate) fn march(
    terminal: Vec<f64>,
    from: usize,
    to: usize,
    params: &MarketParams,
    grid: &GridSpec,
    reference: ReferenceInventory,
    options: &SolveOptions,
) -> Result<FeeSurface> {
    let mut stepper = BackwardStepper::new(params, grid, options.stencil, reference)?;
    let len = terminal.len();
    let (steps, values) = match options.retain {
        Retain::All => {
            let count = to - from + 1;
            let mut values = vec![0.0; len * count];
            values[(count - 1) * len..].copy_from_slice(&terminal);
            for n in (from..to).rev() {
                let k = n - from;
                let (head, tail) = values.split_at_mut((k + 1) * len);
                let prev = stepper.step(&tail[..len], n)?;
                head[k * len..].copy_from_slice(&prev);
            }
            ((from..=to).collect(), values)
        }
        Retain::Endpoints => {
            let mut current = terminal.clone();
            for n in (from..to).rev() {
                current = stepper.step(&current, n)?;
            }
            if from == to {
                (vec![to], terminal)
            } else {
                current.extend_from_slice(&terminal);
                (vec![from, to], current)
            }
        }
    };
    Ok(FeeSurface {
        data: GridLayers::new(*grid, params.horizon, steps, values)?,
        reference,
    })
}

/// Full backward solve for a non-TWAP contract.
pub fn solve_fee_surface(
    spec: &ContractSpec,
    params: &MarketParams,
    grid: &GridSpec,
) -> Result<FeeSurface> {
    solve_fee_surface_with(spec, params, grid, &SolveOptions::default())
}

pub fn solve_fee_surface_with(
    spec: &ContractSpec,
    params: &MarketParams,
    grid: &GridSpec,
    options: &SolveOptions,
) -> Result<FeeSurface> {
    params.validate()?;
    grid.validate()?;
    spec.validate(params.shares)?;
    if spec.family.is_twap() {
        return Err(Error::InvalidContract(format!(
            "{} is solved through the TWAP transform",
            spec.family
        )));
    }
    if spec.family.is_collar() {
        warn_off_node_strikes(spec, grid);
    }
    let terminal = terminal_layer(spec, params, grid);
    march(
        terminal,
        0,
        grid.time_steps,
        params,
        grid,
        ReferenceInventory::Zero,
        options,
    )
}

fn warn_off_node_strikes(spec: &ContractSpec, grid: &GridSpec) {
    for k in [spec.lower_strike, spec.upper_strike] {
        let u = (k - grid.s_min) / grid.ds();
        if (u - u.round()).abs() > 1e-9 {
            log::warn!(
                "collar strike {k} lies between price nodes (ΔS = {}); the terminal kink is smeared over one cell",
                grid.ds()
            );
        }
    }
}

/// Clamped optimal speed at every stored node of a solved surface, using
/// central differences inside and one-sided differences at the edges.
pub fn extract_control(surface: &FeeSurface, params: &MarketParams) -> ControlSurface {
    let data = &surface.data;
    let grid = &data.grid;
    let m = grid.inventory_nodes();
    let last_j = grid.inventory_intervals;
    let dq = grid.dq();
    let (b, l, cap) = (
        params.permanent_impact,
        params.temporary_impact,
        params.max_speed,
    );
    let mut values = Vec::with_capacity(data.values.len());
    for &n in data.steps() {
        let layer = data.layer(n).expect("stored layer");
        let shift = surface
            .reference
            .at(grid.time(n, data.horizon), data.horizon);
        let slopes = price_slopes(layer, grid);
        for i in 0..grid.price_nodes() {
            let row = &layer[i * m..(i + 1) * m];
            for j in 0..m {
                let pq = if j == 0 {
                    (row[1] - row[0]) / dq
                } else if j == last_j {
                    (row[j] - row[j - 1]) / dq
                } else {
                    (row[j + 1] - row[j - 1]) / (2.0 * dq)
                };
                let q = grid.inventory(j);
                let raw = (b * q - b * (shift + slopes[i * m + j]) - pq) / (2.0 * l);
                // same state constraint as the solver: no buying at q_max,
                // no selling at q_min
                let (lo, hi) = match j {
                    0 => (0.0, cap),
                    j if j == last_j => (-cap, 0.0),
                    _ => (-cap, cap),
                };
                values.push(raw.clamp(lo, hi));
            }
        }
    }
    ControlSurface {
        data: GridLayers {
            grid: *grid,
            horizon: data.horizon,
            steps: data.steps.clone(),
            values,
        },
        max_speed: cap,
    }
}
