//! Experiment configuration files (TOML). Every section is optional and an
//! empty file reproduces the baseline model and grid.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use hedgefee::hjb::RegulatorySpec;
use hedgefee::market::BASELINE_STRIKES;
use hedgefee::sim::SimConfig;
use hedgefee::{ContractFamily, ContractSpec, GridSpec, MarketParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Sweep names that address the regulatory spec instead of the model.
pub const REGULATORY_FIELDS: [(&str, &str); 2] =
    [("approval_probability", "p"), ("decision_time", "tau")];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContractEntry {
    Family(ContractFamily),
    Detailed {
        family: ContractFamily,
        #[serde(default = "default_lower")]
        lower_strike: f64,
        #[serde(default = "default_upper")]
        upper_strike: f64,
    },
}

fn default_lower() -> f64 {
    BASELINE_STRIKES.0
}

fn default_upper() -> f64 {
    BASELINE_STRIKES.1
}

impl ContractEntry {
    pub fn family(&self) -> ContractFamily {
        match self {
            ContractEntry::Family(f) => *f,
            ContractEntry::Detailed { family, .. } => *family,
        }
    }

    pub fn spec(&self, shares: f64) -> hedgefee::Result<ContractSpec> {
        match *self {
            ContractEntry::Family(f) => ContractSpec::new(f, shares, BASELINE_STRIKES),
            ContractEntry::Detailed {
                family,
                lower_strike,
                upper_strike,
            } => ContractSpec::new(family, shares, (lower_strike, upper_strike)),
        }
    }
}

fn default_contracts() -> Vec<ContractEntry> {
    [
        ContractFamily::LinearPhysical,
        ContractFamily::LinearCash,
        ContractFamily::CollarPhysical,
        ContractFamily::CollarCash,
    ]
    .into_iter()
    .map(ContractEntry::Family)
    .collect()
}

/// Regulatory p-sweep: one fee per `(σ, p)` pair at a fixed decision time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulatoryConfig {
    #[serde(default = "default_tau", alias = "decision_time")]
    pub tau: f64,
    #[serde(default = "default_p_values")]
    pub p_values: Vec<f64>,
    #[serde(default = "default_sigma_values")]
    pub sigma_values: Vec<f64>,
    /// Approval probability used when sweeping the decision time.
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_p() -> f64 {
    0.5
}

fn default_tau() -> f64 {
    0.5
}

fn default_p_values() -> Vec<f64> {
    vec![0.0, 0.2, 0.5, 0.8, 1.0]
}

fn default_sigma_values() -> Vec<f64> {
    vec![1.0, 5.0]
}

impl Default for RegulatoryConfig {
    fn default() -> Self {
        Self {
            tau: default_tau(),
            p_values: default_p_values(),
            sigma_values: default_sigma_values(),
            p: default_p(),
        }
    }
}

impl RegulatoryConfig {
    pub fn base(&self) -> RegulatorySpec {
        RegulatorySpec {
            approval_probability: self.p,
            decision_time: self.tau,
        }
    }

    pub fn specs(&self) -> Vec<RegulatorySpec> {
        self.p_values
            .iter()
            .map(|&p| RegulatorySpec {
                approval_probability: p,
                decision_time: self.tau,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Trajectory dumps for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default = "default_path_count")]
    pub n_paths: usize,
    /// Replace the Brownian increments by zeros.
    #[serde(default)]
    pub zero_noise: bool,
}

fn default_path_count() -> usize {
    5
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            n_paths: default_path_count(),
            zero_noise: false,
        }
    }
}

/// Parameter sweeps bundled into `reproduce-all`.
fn default_sensitivities() -> Vec<SweepConfig> {
    [
        ("rate", vec![0.0, 0.01]),
        ("drift", vec![-0.5, 0.0, 0.5]),
        ("volatility", vec![5.0, 6.0, 7.0]),
        ("risk_aversion", vec![0.001, 0.005, 0.01]),
        ("temporary_impact", vec![0.001, 0.002, 0.003]),
        ("terminal_penalty", vec![0.002, 0.02, 0.2]),
    ]
    .into_iter()
    .map(|(p, v)| SweepConfig {
        parameter: p.to_string(),
        values: v,
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub params: MarketParams,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_contracts")]
    pub contracts: Vec<ContractEntry>,
    #[serde(default)]
    pub regulatory: RegulatoryConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default = "default_sensitivities")]
    pub sensitivities: Vec<SweepConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("cannot parse config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate().context("params")?;
        self.grid.validate().context("grid")?;
        if self.contracts.is_empty() {
            bail!("contracts: list is empty");
        }
        for (k, c) in self.contracts.iter().enumerate() {
            c.spec(self.params.shares)
                .with_context(|| format!("contracts[{k}]"))?;
        }
        for spec in self
            .regulatory
            .specs()
            .into_iter()
            .chain([self.regulatory.base()])
        {
            spec.validate(self.params.horizon).context("regulatory")?;
        }
        if self.regulatory.p_values.is_empty() || self.regulatory.sigma_values.is_empty() {
            bail!("regulatory: p_values and sigma_values must not be empty");
        }
        if self
            .regulatory
            .sigma_values
            .iter()
            .any(|s| s.is_nan() || *s < 0.0)
        {
            bail!("regulatory.sigma_values: volatilities must be >= 0");
        }
        self.sim.validate().context("sim")?;
        if self.paths.n_paths < 1 {
            bail!("paths.n_paths: must be >= 1");
        }
        for sweep in self.sweep.iter().chain(&self.sensitivities) {
            validate_sweep(sweep, self)?;
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration, output location excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        digest(&canonical)
    }
}

fn validate_sweep(sweep: &SweepConfig, cfg: &ExperimentConfig) -> Result<()> {
    let name = sweep.parameter.as_str();
    if sweep.values.is_empty() {
        bail!("sweep {name}: no values");
    }
    if is_regulatory_field(name) {
        for &v in &sweep.values {
            let mut spec = cfg.regulatory.base();
            set_regulatory(&mut spec, name, v);
            spec.validate(cfg.params.horizon)
                .with_context(|| format!("sweep {name} = {v}"))?;
        }
        return Ok(());
    }
    for &v in &sweep.values {
        let mut p = cfg.params;
        match p.field_mut(name) {
            Some(slot) => *slot = v,
            None => bail!(
                "sweep parameter {name:?} is not a model or regulatory field (expected one of {})",
                sweepable_names().join(", ")
            ),
        }
        p.validate()
            .with_context(|| format!("sweep {name} = {v}"))?;
    }
    Ok(())
}

pub fn sweepable_names() -> Vec<&'static str> {
    MarketParams::FIELDS
        .iter()
        .chain(REGULATORY_FIELDS.iter())
        .flat_map(|(long, short)| [*long, *short])
        .collect()
}

pub fn is_regulatory_field(name: &str) -> bool {
    REGULATORY_FIELDS
        .iter()
        .any(|(long, short)| *long == name || *short == name)
}

pub fn set_regulatory(spec: &mut RegulatorySpec, name: &str, value: f64) {
    match name {
        "approval_probability" | "p" => spec.approval_probability = value,
        _ => spec.decision_time = value,
    }
}

/// Full SHA-256 hex digest of a value's JSON form.
pub fn digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(&json))
}

/// Short digest used in table rows.
pub fn short_digest<T: Serialize>(value: &T) -> String {
    digest(value)[..16].to_string()
}
