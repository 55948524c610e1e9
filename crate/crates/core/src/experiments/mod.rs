//! Configuration documents, sweeps over the figure axes, and CSV reports.

mod report;
mod sweep;

pub use report::{parse_records, read_records, report, write_photon_scan_csv, write_records, write_trace_csv, Manifest, ManifestEntry, ReportFiles};
pub use sweep::{
    estimate_cost, evaluate_point, photon_scan, replay, run_sweep, run_sweep_with, scan_photons, BaselinePhoton, PhotonPoint, PhotonScan, PointOutputs,
    Reference, RunMode, RunRecord, SweepKind, SweepMode, SweepSpec,
};

use serde::{Deserialize, Serialize};

use crate::dsp::{rrc_taps, FilterRole};
use crate::error::{Error, Result};
use crate::key_rate::DEFAULT_BETA;
use crate::link::LinkConfig;
use crate::optimizer::{OptimizerConfig, PolicyState, RewardMode, Transceiver};

pub const DEFAULT_ROLLOFF: f64 = 0.2;
pub const DEFAULT_MEAN_PHOTON: f64 = 6.0;

pub(crate) fn default_rolloff() -> f64 {
    DEFAULT_ROLLOFF
}
pub(crate) fn default_mean_photon() -> f64 {
    DEFAULT_MEAN_PHOTON
}
pub(crate) fn default_beta() -> f64 {
    DEFAULT_BETA
}
pub(crate) fn default_photon_grid() -> Vec<f64> {
    (1..=60).map(|i| i as f64 * 0.5).collect()
}

/// Document for the single-link commands (`simulate`, `optimize`,
/// `photon-scan`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default = "default_mean_photon")]
    pub mean_photon: f64,
    /// Roll-off of the truncated RRC used as the unoptimized filter pair.
    #[serde(default = "default_rolloff")]
    pub rolloff: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// How reported SKRs obtain (τ, n_ex).
    #[serde(default)]
    pub score: RewardMode,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_photon_grid")]
    pub photon_grid: Vec<f64>,
    /// Symbol rate in baud; bits/s are only reported when set.
    #[serde(default)]
    pub symbol_rate: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let check = || -> Result<()> {
            self.link.validate()?;
            self.optimizer.validate()?;
            if !(self.mean_photon > 0.0) || !self.mean_photon.is_finite() {
                return Err(Error::Config("mean_photon must be positive".into()));
            }
            validate_rolloff(self.rolloff)?;
            validate_beta(self.beta)?;
            validate_photon_grid(&self.photon_grid)?;
            validate_symbol_rate(self.symbol_rate)
        };
        check().map_err(as_config_error)
    }

    /// Truncated RRC pair at the configured lengths with `mean_photon`.
    pub fn unoptimized(&self) -> Result<Transceiver> {
        rrc_pair(self.rolloff, self.link.tx_len, self.link.rx_len, self.link.sps, self.mean_photon)
    }

    pub fn initial_policy(&self) -> Result<PolicyState> {
        let trx = self.unoptimized()?;
        PolicyState::new(&trx.h_tx, &trx.h_rx, trx.mean_photon, self.optimizer.sigma_init)
    }
}

pub(crate) fn rrc_pair(rolloff: f64, tx_len: usize, rx_len: usize, sps: usize, mean_photon: f64) -> Result<Transceiver> {
    let mut h_tx = rrc_taps(rolloff, tx_len, sps)?;
    h_tx.role = FilterRole::TxShaper;
    let mut h_rx = rrc_taps(rolloff, rx_len, sps)?;
    h_rx.role = FilterRole::RxMatched;
    Ok(Transceiver { h_tx, h_rx, mean_photon })
}

pub(crate) fn as_config_error(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) | Error::NumericalDomain(m) => Error::Config(m),
        other => other,
    }
}

pub(crate) fn validate_rolloff(r: f64) -> Result<()> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Config(format!("rolloff must lie in (0, 1], got {r}")));
    }
    Ok(())
}

pub(crate) fn validate_beta(b: f64) -> Result<()> {
    if !(b > 0.0 && b <= 1.0) {
        return Err(Error::Config(format!("beta must lie in (0, 1], got {b}")));
    }
    Ok(())
}

pub(crate) fn validate_photon_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("photon grid is empty".into()));
    }
    if grid.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Config("photon grid values must be positive".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("photon grid must be strictly ascending".into()));
    }
    Ok(())
}

pub(crate) fn validate_symbol_rate(rate: Option<f64>) -> Result<()> {
    match rate {
        Some(r) if !(r > 0.0) || !r.is_finite() => Err(Error::Config("symbol_rate must be positive".into())),
        _ => Ok(()),
    }
}

/// Every default, as the JSON documents the CLI accepts.
pub fn defaults_document() -> serde_json::Value {
    serde_json::json!({
        "run": RunConfig::default(),
        "sweep": SweepSpec::default(),
    })
}
