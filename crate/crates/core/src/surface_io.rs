//! Flat dumps of solved surfaces: little-endian `f64` values in time-major,
//! then price, then inventory order, described by a JSON sidecar.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{ControlSurface, FeeSurface, GridLayers, ReferenceInventory};
use crate::market::{GridSpec, MarketParams};

pub const FORMAT: &str = "hedgefee-surface-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Fee,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format: String,
    pub kind: SurfaceKind,
    pub grid: GridSpec,
    pub params: MarketParams,
    /// Time steps present in the dump, increasing.
    pub steps: Vec<usize>,
    #[serde(default)]
    pub reference: ReferenceInventory,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    Fee(FeeSurface),
    Control(ControlSurface),
}

fn sidecar(
    kind: SurfaceKind,
    data: &GridLayers,
    params: &MarketParams,
    reference: ReferenceInventory,
) -> Sidecar {
    Sidecar {
        format: FORMAT.to_string(),
        kind,
        grid: data.grid,
        params: *params,
        steps: data.steps().to_vec(),
        reference,
    }
}

fn payload(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn encode_fee(surface: &FeeSurface, params: &MarketParams) -> (Sidecar, Vec<u8>) {
    (
        sidecar(SurfaceKind::Fee, &surface.data, params, surface.reference),
        payload(surface.data.values()),
    )
}

pub fn encode_control(surface: &ControlSurface, params: &MarketParams) -> (Sidecar, Vec<u8>) {
    (
        sidecar(
            SurfaceKind::Control,
            &surface.data,
            params,
            ReferenceInventory::Zero,
        ),
        payload(surface.data.values()),
    )
}

pub fn decode_sidecar(text: &str) -> Result<Sidecar> {
    let sc: Sidecar = serde_json::from_str(text).map_err(|e| Error::Decode(e.to_string()))?;
    if sc.format != FORMAT {
        return Err(Error::Decode(format!("unknown format {:?}", sc.format)));
    }
    Ok(sc)
}

/// Rebuilds a surface, checking the payload against the sidecar.
pub fn decode(sc: &Sidecar, bytes: &[u8]) -> Result<Surface> {
    if sc.format != FORMAT {
        return Err(Error::Decode(format!("unknown format {:?}", sc.format)));
    }
    sc.grid.validate()?;
    sc.params.validate()?;
    let expected = sc
        .grid
        .price_nodes()
        .checked_mul(sc.grid.inventory_nodes())
        .and_then(|n| n.checked_mul(sc.steps.len()))
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Decode("surface dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Decode(format!(
            "payload has {} bytes, sidecar describes {expected}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Decode(format!("non-finite value at offset {k}")));
    }
    let data = GridLayers::new(sc.grid, sc.params.horizon, sc.steps.clone(), values)?;
    match sc.kind {
        SurfaceKind::Fee => Ok(Surface::Fee(FeeSurface {
            data,
            reference: sc.reference,
        })),
        SurfaceKind::Control => {
            let cap = sc.params.max_speed;
            if data.values().iter().any(|v| v.abs() > cap) {
                return Err(Error::Decode(format!(
                    "control exceeds the speed bound {cap}"
                )));
            }
            Ok(Surface::Control(ControlSurface {
                data,
                max_speed: cap,
            }))
        }
    }
}

/// Long-format CSV: `step,t,i,S,j,q,value`.
pub fn write_csv<W: Write>(data: &GridLayers, mut w: W) -> std::io::Result<()> {
    let g = &data.grid;
    writeln!(w, "step,t,i,S,j,q,value")?;
    for &n in data.steps() {
        let layer = data.layer(n).expect("stored layer");
        let t = g.time(n, data.horizon);
        for i in 0..g.price_nodes() {
            for j in 0..g.inventory_nodes() {
                let v = layer[i * g.inventory_nodes() + j];
                writeln!(w, "{n},{t},{i},{},{j},{},{v}", g.price(i), g.inventory(j))?;
            }
        }
    }
    Ok(())
}
