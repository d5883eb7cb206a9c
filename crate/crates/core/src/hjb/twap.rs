//! TWAP contracts, solved for the reduced value `U(t, q, S)`.
//!
//! The broker owes `N·A(T)` with `A` the running average price. With `r = 0`
//! the fee splits as `P = N(t/T)(S − A) + U`, and `U` solves the ordinary fee
//! equation with the inventory measured against `N·t/T` (the part of the
//! average already locked in) and terminal condition `U(T) = L(q)`. At `t = 0`
//! the first term vanishes, so the fee is `U(0, q, S)`.

use super::{march, FeeSurface, ReferenceInventory, SolveOptions};
use crate::error::{Error, Result};
use crate::market::{liquidation_cost, ContractFamily, GridSpec, MarketParams};

pub fn solve_twap(
    family: ContractFamily,
    params: &MarketParams,
    grid: &GridSpec,
) -> Result<FeeSurface> {
    solve_twap_with(family, params, grid, &SolveOptions::default())
}

pub fn solve_twap_with(
    family: ContractFamily,
    params: &MarketParams,
    grid: &GridSpec,
    options: &SolveOptions,
) -> Result<FeeSurface> {
    params.validate()?;
    grid.validate()?;
    if !family.is_twap() {
        return Err(Error::InvalidContract(format!(
            "{family} is not a TWAP contract"
        )));
    }
    if params.rate != 0.0 {
        return Err(Error::RequiresZeroRate { rate: params.rate });
    }
    let target = family.target_inventory(params.shares);
    let mut terminal = Vec::with_capacity(grid.price_nodes() * grid.inventory_nodes());
    for _ in 0..grid.price_nodes() {
        for j in 0..grid.inventory_nodes() {
            terminal.push(liquidation_cost(
                grid.inventory(j),
                target,
                params.terminal_penalty,
            ));
        }
    }
    march(
        terminal,
        0,
        grid.time_steps,
        params,
        grid,
        ReferenceInventory::Twap {
            shares: params.shares,
        },
        options,
    )
}

/// Fee `N(t/T)(S − A) + U(t, q, S)` of a TWAP contract from its reduced surface.
pub fn twap_fee(surface: &FeeSurface, n: usize, q: f64, s: f64, average: f64) -> Option<f64> {
    let horizon = surface.data.horizon;
    let locked = surface
        .reference
        .at(surface.grid().time(n, horizon), horizon);
    surface.fee_at(n, s, q).map(|u| locked * (s - average) + u)
}
