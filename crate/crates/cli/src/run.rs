//! Pipelines behind each subcommand. Every function returns the files it
//! would write together with the typed rows, so callers can inspect results
//! without parsing CSV.

use anyhow::{anyhow, bail, Context, Result};
use hedgefee::hjb::{
    solve_fee_surface_with, solve_regulatory_with, solve_twap_with, twap_fee, RegulatorySpec,
    Retain, SolveOptions,
};
use hedgefee::sim::{
    expected_payoff_metric, path_increments, simulate_path, solve_contract, PayoffEstimate,
    SimConfig, SimPath,
};
use hedgefee::{ContractFamily, ContractSpec, GridSpec, MarketParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    is_regulatory_field, set_regulatory, short_digest, ExperimentConfig, SweepConfig,
};
use crate::output::{csv_bytes, csv_records, json_bytes, sha256_hex, Artifacts};

pub const MANIFEST_FORMAT: &str = "hedgefee-manifest-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Fees,
    Paths,
    Statarb,
    Regulatory,
    Twap,
    Sweep,
    ReproduceAll,
}

pub fn run_task(task: Task, cfg: &ExperimentConfig) -> Result<Artifacts> {
    cfg.validate()?;
    Ok(match task {
        Task::Fees => run_fees(cfg)?.0,
        Task::Paths => run_paths(cfg)?,
        Task::Statarb => run_statarb(cfg, &contract_specs(cfg)?)?.0,
        Task::Regulatory => run_regulatory(cfg)?.0,
        Task::Twap => run_twap(cfg)?.0,
        Task::Sweep => run_sweep(cfg)?.0,
        Task::ReproduceAll => reproduce_all(cfg)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeeRow {
    pub family: ContractFamily,
    pub fee: f64,
    pub grid_hash: String,
    pub params_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    /// Contract family, or `regulatory` for decision-time and probability sweeps.
    pub family: String,
    pub fee: f64,
    pub grid_hash: String,
    pub params_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegulatoryRow {
    pub sigma: f64,
    pub tau: f64,
    pub p: f64,
    pub fee: f64,
    pub grid_hash: String,
    pub params_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatarbRow {
    pub family: ContractFamily,
    pub fee: f64,
    pub estimate: f64,
    /// `NA` for a single path.
    pub stderr: String,
    pub arbitrage: bool,
    pub n_paths: usize,
    pub seed: u64,
}

impl StatarbRow {
    fn new(family: ContractFamily, e: &PayoffEstimate) -> Self {
        Self {
            family,
            fee: e.fee,
            estimate: e.estimate,
            stderr: e.stderr.map_or_else(|| "NA".to_string(), |s| s.to_string()),
            arbitrage: e.arbitrage,
            n_paths: e.n_paths,
            seed: e.seed,
        }
    }
}

#[derive(Serialize)]
struct StatarbJson<'a> {
    config_hash: &'a str,
    rows: Vec<StatarbJsonRow>,
}

#[derive(Serialize)]
struct StatarbJsonRow {
    family: ContractFamily,
    #[serde(flatten)]
    estimate: PayoffEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct PathRow {
    pub path: usize,
    pub t: f64,
    pub S: f64,
    pub Q: f64,
    pub X: f64,
    /// Empty on the final row.
    pub v: Option<f64>,
    pub A: f64,
    /// Empty on the final row.
    pub dW: Option<f64>,
}

pub fn contract_specs(cfg: &ExperimentConfig) -> Result<Vec<ContractSpec>> {
    cfg.contracts
        .iter()
        .enumerate()
        .map(|(k, c)| {
            c.spec(cfg.params.shares)
                .with_context(|| format!("contracts[{k}]"))
        })
        .collect()
}

fn endpoints() -> SolveOptions {
    SolveOptions {
        retain: Retain::Endpoints,
        ..Default::default()
    }
}

/// Indifference fee at `(0, q₀, S₀)`. TWAP fees use `A(0) = S₀`.
pub fn contract_fee(
    spec: &ContractSpec,
    params: &MarketParams,
    grid: &GridSpec,
    sim: &SimConfig,
) -> Result<f64> {
    log::info!("solving {} fee", spec.family);
    let fee = if spec.family.is_twap() {
        let surface = solve_twap_with(spec.family, params, grid, &endpoints())?;
        twap_fee(&surface, 0, sim.q0, sim.s0, sim.s0)
    } else {
        solve_fee_surface_with(spec, params, grid, &endpoints())?.fee_at(0, sim.s0, sim.q0)
    };
    fee.ok_or_else(|| anyhow!("{} surface has no initial layer", spec.family))
}

pub fn regulatory_fee(
    reg: &RegulatorySpec,
    params: &MarketParams,
    grid: &GridSpec,
    sim: &SimConfig,
) -> Result<f64> {
    log::info!(
        "solving regulatory fee p = {} tau = {} sigma = {}",
        reg.approval_probability,
        reg.decision_time,
        params.volatility
    );
    let surfaces = solve_regulatory_with(reg, params, grid, &endpoints())?;
    surfaces
        .pre
        .fee_at(0, sim.s0, sim.q0)
        .ok_or_else(|| anyhow!("regulatory surface has no initial layer"))
}

fn fee_rows(specs: &[ContractSpec], cfg: &ExperimentConfig) -> Result<Vec<FeeRow>> {
    let grid_hash = short_digest(&cfg.grid);
    let params_hash = short_digest(&cfg.params);
    specs
        .par_iter()
        .map(|spec| {
            Ok(FeeRow {
                family: spec.family,
                fee: contract_fee(spec, &cfg.params, &cfg.grid, &cfg.sim)?,
                grid_hash: grid_hash.clone(),
                params_hash: params_hash.clone(),
            })
        })
        .collect()
}

pub fn run_fees(cfg: &ExperimentConfig) -> Result<(Artifacts, Vec<FeeRow>)> {
    let rows = fee_rows(&contract_specs(cfg)?, cfg)?;
    let mut out = Artifacts::default();
    out.push("fees.csv", csv_bytes(&cfg.hash(), &rows)?);
    Ok((out, rows))
}

/// Fees of the two TWAP-benchmarked contracts.
pub fn run_twap(cfg: &ExperimentConfig) -> Result<(Artifacts, Vec<FeeRow>)> {
    let specs = [ContractFamily::TwapPhysical, ContractFamily::TwapCash]
        .map(|f| ContractSpec::baseline(f, cfg.params.shares));
    let rows = fee_rows(&specs, cfg)?;
    let mut out = Artifacts::default();
    out.push("twap_fees.csv", csv_bytes(&cfg.hash(), &rows)?);
    Ok((out, rows))
}

pub fn run_regulatory(cfg: &ExperimentConfig) -> Result<(Artifacts, Vec<RegulatoryRow>)> {
    let grid_hash = short_digest(&cfg.grid);
    let jobs: Vec<(MarketParams, RegulatorySpec)> = cfg
        .regulatory
        .sigma_values
        .iter()
        .flat_map(|&sigma| {
            let params = MarketParams {
                volatility: sigma,
                ..cfg.params
            };
            cfg.regulatory.specs().into_iter().map(move |r| (params, r))
        })
        .collect();
    let rows = jobs
        .par_iter()
        .map(|(params, reg)| {
            Ok(RegulatoryRow {
                sigma: params.volatility,
                tau: reg.decision_time,
                p: reg.approval_probability,
                fee: regulatory_fee(reg, params, &cfg.grid, &cfg.sim)?,
                grid_hash: grid_hash.clone(),
                params_hash: short_digest(params),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Artifacts::default();
    out.push("regulatory.csv", csv_bytes(&cfg.hash(), &rows)?);
    Ok((out, rows))
}

/// Expected payoffs `E[Y(T)] − X₀` at the indifference fee. Contracts are run
/// one after another since each holds full fee and control surfaces.
pub fn run_statarb(
    cfg: &ExperimentConfig,
    specs: &[ContractSpec],
) -> Result<(Artifacts, Vec<StatarbRow>)> {
    let mut estimates = Vec::with_capacity(specs.len());
    for spec in specs {
        log::info!("simulating {} over {} paths", spec.family, cfg.sim.n_paths);
        let e = expected_payoff_metric(spec, &cfg.params, &cfg.grid, &cfg.sim)
            .with_context(|| format!("{}", spec.family))?;
        estimates.push((spec.family, e));
    }
    let hash = cfg.hash();
    let rows: Vec<StatarbRow> = estimates
        .iter()
        .map(|(f, e)| StatarbRow::new(*f, e))
        .collect();
    let json = StatarbJson {
        config_hash: &hash,
        rows: estimates
            .iter()
            .map(|&(family, estimate)| StatarbJsonRow { family, estimate })
            .collect(),
    };
    let mut out = Artifacts::default();
    out.push("statarb.csv", csv_bytes(&hash, &rows)?);
    out.push("statarb.json", json_bytes(&json)?);
    Ok((out, rows))
}

fn sweep_params(params: &MarketParams, name: &str, value: f64) -> Result<MarketParams> {
    let mut p = *params;
    *p.field_mut(name)
        .ok_or_else(|| anyhow!("unknown parameter {name:?}"))? = value;
    Ok(p)
}

/// Fees over one sweep: every contract at every value, or the regulatory fee
/// when the swept name belongs to the regulatory spec.
pub fn sweep_rows(sweep: &SweepConfig, cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let name = sweep.parameter.as_str();
    let grid_hash = short_digest(&cfg.grid);
    if is_regulatory_field(name) {
        return sweep
            .values
            .par_iter()
            .map(|&value| {
                let mut reg = cfg.regulatory.base();
                set_regulatory(&mut reg, name, value);
                Ok(SweepRow {
                    parameter: name.to_string(),
                    value,
                    family: "regulatory".to_string(),
                    fee: regulatory_fee(&reg, &cfg.params, &cfg.grid, &cfg.sim)?,
                    grid_hash: grid_hash.clone(),
                    params_hash: short_digest(&cfg.params),
                })
            })
            .collect();
    }
    let specs = contract_specs(cfg)?;
    let jobs: Vec<(f64, MarketParams, &ContractSpec)> = sweep
        .values
        .iter()
        .map(|&v| Ok((v, sweep_params(&cfg.params, name, v)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(|(v, p)| specs.iter().map(move |s| (v, p, s)))
        .collect();
    jobs.par_iter()
        .map(|(value, params, spec)| {
            Ok(SweepRow {
                parameter: name.to_string(),
                value: *value,
                family: spec.family.to_string(),
                fee: contract_fee(spec, params, &cfg.grid, &cfg.sim)
                    .with_context(|| format!("{name} = {value}"))?,
                grid_hash: grid_hash.clone(),
                params_hash: short_digest(params),
            })
        })
        .collect()
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<(Artifacts, Vec<SweepRow>)> {
    let Some(sweep) = &cfg.sweep else {
        bail!("sweep: no [sweep] section in the config");
    };
    let rows = sweep_rows(sweep, cfg)?;
    let mut out = Artifacts::default();
    out.push("sweep.csv", csv_bytes(&cfg.hash(), &rows)?);
    Ok((out, rows))
}

fn path_rows(k: usize, path: &SimPath) -> Vec<PathRow> {
    (0..path.times.len())
        .map(|i| PathRow {
            path: k,
            t: path.times[i],
            S: path.s[i],
            Q: path.q[i],
            X: path.x[i],
            v: path.v.get(i).copied(),
            A: path.a[i],
            dW: path.increments.get(i).copied(),
        })
        .collect()
}

/// Simulated trajectories of every contract on common noise.
pub fn simulate_family_paths(
    spec: &ContractSpec,
    params: &MarketParams,
    cfg: &ExperimentConfig,
) -> Result<Vec<SimPath>> {
    let sim = &cfg.sim;
    let (surface, control) = solve_contract(spec, params, &cfg.grid)?;
    let fee = surface
        .fee_at(0, sim.s0, sim.q0)
        .ok_or_else(|| anyhow!("{} surface has no initial layer", spec.family))?;
    drop(surface);
    let x0 = sim.wealth() - sim.q0 * sim.s0 + fee;
    let dt = params.horizon / sim.n_steps as f64;
    (0..cfg.paths.n_paths)
        .into_par_iter()
        .map(|k| {
            let dw = if cfg.paths.zero_noise {
                vec![0.0; sim.n_steps]
            } else {
                path_increments(sim.seed, k as u64, sim.n_steps, dt)
            };
            Ok(simulate_path(&control, params, sim, &dw, x0)?)
        })
        .collect()
}

fn comparison(hash: &str, families: &[ContractFamily], paths: &[Vec<SimPath>]) -> Result<Vec<u8>> {
    let mut header: Vec<String> = ["path", "t", "dW"].map(String::from).to_vec();
    for f in families {
        for col in ["S", "Q", "v"] {
            header.push(format!("{col}_{f}"));
        }
    }
    let fmt = |x: Option<f64>| x.map_or_else(String::new, |x| x.to_string());
    let mut records = Vec::new();
    for k in 0..paths.first().map_or(0, Vec::len) {
        let first = &paths[0][k];
        for i in 0..first.times.len() {
            let mut r = vec![
                k.to_string(),
                first.times[i].to_string(),
                fmt(first.increments.get(i).copied()),
            ];
            for family in paths {
                let p = &family[k];
                r.extend([
                    p.s[i].to_string(),
                    p.q[i].to_string(),
                    fmt(p.v.get(i).copied()),
                ]);
            }
            records.push(r);
        }
    }
    csv_records(hash, &header, &records)
}

fn paths_for(
    params: &MarketParams,
    suffix: &str,
    cfg: &ExperimentConfig,
    hash: &str,
    out: &mut Artifacts,
) -> Result<()> {
    let specs = contract_specs(cfg)?;
    let mut all = Vec::with_capacity(specs.len());
    for spec in &specs {
        log::info!("simulating {} paths{suffix}", spec.family);
        let paths = simulate_family_paths(spec, params, cfg)
            .with_context(|| format!("{}{suffix}", spec.family))?;
        let rows: Vec<PathRow> = paths
            .iter()
            .enumerate()
            .flat_map(|(k, p)| path_rows(k, p))
            .collect();
        out.push(
            format!("paths_{}{suffix}.csv", spec.family),
            csv_bytes(hash, &rows)?,
        );
        all.push(paths);
    }
    let families: Vec<_> = specs.iter().map(|s| s.family).collect();
    out.push(
        format!("comparison{suffix}.csv"),
        comparison(hash, &families, &all)?,
    );
    Ok(())
}

/// Per-contract trajectory files plus a side-by-side comparison. With a sweep,
/// one set of files per swept value.
pub fn run_paths(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let hash = cfg.hash();
    let mut out = Artifacts::default();
    match &cfg.sweep {
        None => paths_for(&cfg.params, "", cfg, &hash, &mut out)?,
        Some(sweep) => {
            if is_regulatory_field(&sweep.parameter) {
                bail!(
                    "paths: cannot sweep {:?}, only model parameters",
                    sweep.parameter
                );
            }
            for &v in &sweep.values {
                let params = sweep_params(&cfg.params, &sweep.parameter, v)?;
                paths_for(
                    &params,
                    &format!("_{}={v}", sweep.parameter),
                    cfg,
                    &hash,
                    &mut out,
                )?;
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ManifestEntry {
    name: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    format: &'static str,
    config_hash: String,
    seed: u64,
    files: Vec<ManifestEntry>,
}

/// Fees, TWAP fees, the regulatory table, expected payoffs (configured
/// contracts plus the TWAP pair) and every configured sensitivity sweep,
/// indexed by `manifest.json`.
pub fn reproduce_all(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let hash = cfg.hash();
    let mut out = Artifacts::default();
    let mut resolved = cfg.clone();
    resolved.output_dir = Default::default();
    out.push(
        "config.json",
        json_bytes(&serde_json::json!({ "config_hash": hash, "config": resolved }))?,
    );
    out.extend(run_fees(cfg)?.0);
    out.extend(run_twap(cfg)?.0);
    out.extend(run_regulatory(cfg)?.0);
    let mut specs = contract_specs(cfg)?;
    for f in [ContractFamily::TwapPhysical, ContractFamily::TwapCash] {
        if !specs.iter().any(|s| s.family == f) {
            specs.push(ContractSpec::baseline(f, cfg.params.shares));
        }
    }
    out.extend(run_statarb(cfg, &specs)?.0);
    let mut rows = Vec::new();
    for sweep in &cfg.sensitivities {
        rows.extend(sweep_rows(sweep, cfg)?);
    }
    out.push("sensitivities.csv", csv_bytes(&hash, &rows)?);
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        config_hash: hash,
        seed: cfg.sim.seed,
        files: out
            .iter()
            .map(|a| ManifestEntry {
                name: a.name.clone(),
                bytes: a.bytes.len(),
                sha256: sha256_hex(&a.bytes),
            })
            .collect(),
    };
    out.push("manifest.json", json_bytes(&manifest)?);
    Ok(out)
}
