use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    as_config_error, default_beta, default_photon_grid, default_rolloff, rrc_pair, validate_beta, validate_photon_grid,
    validate_rolloff, validate_symbol_rate,
};
use crate::error::{invalid, Error, Result};
use crate::key_rate::{key_rate_margin, SkrInputs};
use crate::link::{assemble_budget, estimate_parameters, Link, LinkConfig, NoiseBudget};
use crate::optimizer::{self, IterationRecord, OptimizerConfig, PolicyState, RewardMode, Transceiver};
use crate::quantization::MAX_BITS;
use crate::{seed, ARTIFACT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    #[default]
    BitsSweep,
    TapsBitsGrid,
    DistanceSweep,
    PhotonScan,
}

impl SweepKind {
    pub fn file_stem(self) -> &'static str {
        match self {
            SweepKind::BitsSweep => "bits_sweep",
            SweepKind::TapsBitsGrid => "grid",
            SweepKind::DistanceSweep => "distance",
            SweepKind::PhotonScan => "photon_scan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    Unoptimized,
    Optimized,
    #[default]
    Both,
}

impl SweepMode {
    fn unoptimized(self) -> bool {
        matches!(self, SweepMode::Unoptimized | SweepMode::Both)
    }
    fn optimized(self) -> bool {
        matches!(self, SweepMode::Optimized | SweepMode::Both)
    }
}

/// Which system produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Unoptimized,
    Optimized,
    /// The `(ref_taps, ref_bits)` normaliser of a taps/bits grid.
    Reference,
}

/// Mean photon number of the unoptimized system (and the optimizer start).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselinePhoton {
    Fixed(f64),
    /// Argmax of the key rate over `photon_grid`.
    Scan,
}

impl Default for BaselinePhoton {
    fn default() -> Self {
        BaselinePhoton::Fixed(super::DEFAULT_MEAN_PHOTON)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Reference {
    pub ref_taps: usize,
    pub ref_bits: u32,
}

impl Default for Reference {
    fn default() -> Self {
        Self {
            ref_taps: 1001,
            ref_bits: 16,
        }
    }
}

fn default_bits() -> Vec<u32> {
    vec![6, 7, 8, 9, 10, 11, 12]
}
fn default_taps() -> Vec<usize> {
    vec![11, 21, 41, 101]
}
fn default_distances() -> Vec<f64> {
    (1..=10).map(|i| 10.0 * i as f64).collect()
}
fn default_eval_symbols() -> usize {
    65536
}
fn default_eval_seed() -> u64 {
    7
}
fn default_true() -> bool {
    true
}
fn default_max_chain_runs() -> u64 {
    2_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub kind: SweepKind,
    /// DAC and ADC resolution axis (both converters share it).
    #[serde(default = "default_bits")]
    pub bits: Vec<u32>,
    /// Filter-length axis, `tx_len = rx_len`.
    #[serde(default = "default_taps")]
    pub taps: Vec<usize>,
    #[serde(default = "default_distances")]
    pub distances_km: Vec<f64>,
    #[serde(default = "default_photon_grid")]
    pub photon_grid: Vec<f64>,
    /// Template for every grid point; `num_symbols` and `seed` drive training.
    #[serde(default)]
    pub env: LinkConfig,
    #[serde(default)]
    pub mode: SweepMode,
    #[serde(default)]
    pub reference: Reference,
    #[serde(default)]
    pub baseline_photon: BaselinePhoton,
    #[serde(default = "default_rolloff")]
    pub rolloff: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub score: RewardMode,
    /// Symbols per reported evaluation; every point shares `eval_seed`.
    #[serde(default = "default_eval_symbols")]
    pub eval_symbols: usize,
    #[serde(default = "default_eval_seed")]
    pub eval_seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Start each optimized point from the last solved point with the
    /// same filter lengths.
    #[serde(default = "default_true")]
    pub warm_start: bool,
    /// Refuse sweeps whose estimated number of chain runs exceeds this.
    #[serde(default = "default_max_chain_runs")]
    pub max_chain_runs: u64,
    #[serde(default)]
    pub symbol_rate: Option<f64>,
    /// Worker threads; 0 picks the rayon default.
    #[serde(default)]
    pub workers: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let check = || -> Result<()> {
            self.env.validate()?;
            self.optimizer.validate()?;
            validate_rolloff(self.rolloff)?;
            validate_beta(self.beta)?;
            validate_photon_grid(&self.photon_grid)?;
            validate_symbol_rate(self.symbol_rate)?;
            if let BaselinePhoton::Fixed(n) = self.baseline_photon {
                if !(n > 0.0) || !n.is_finite() {
                    return Err(invalid("baseline photon number must be positive"));
                }
            }
            match self.kind {
                SweepKind::BitsSweep => self.check_bits()?,
                SweepKind::TapsBitsGrid => {
                    self.check_bits()?;
                    if self.taps.is_empty() || self.taps.contains(&0) {
                        return Err(invalid("taps axis must be non-empty and positive"));
                    }
                    if self.reference.ref_taps == 0 || self.reference.ref_bits == 0 || self.reference.ref_bits > MAX_BITS {
                        return Err(invalid("invalid reference point"));
                    }
                }
                SweepKind::DistanceSweep => {
                    if self.distances_km.is_empty() || self.distances_km.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
                        return Err(invalid("distance axis must be non-empty and non-negative"));
                    }
                }
                SweepKind::PhotonScan => {}
            }
            for cfg in self.points() {
                cfg.validate()?;
            }
            Ok(())
        };
        check().map_err(as_config_error)
    }

    fn check_bits(&self) -> Result<()> {
        if self.bits.is_empty() || self.bits.iter().any(|b| *b == 0 || *b > MAX_BITS) {
            return Err(invalid(format!("bits axis must be non-empty with values in 1..={MAX_BITS}")));
        }
        Ok(())
    }

    fn with_bits(&self, mut cfg: LinkConfig, bits: u32) -> LinkConfig {
        cfg.dac.bits = bits;
        cfg.adc.bits = bits;
        cfg
    }

    /// Training configuration of every grid point, in output order.
    fn points(&self) -> Vec<LinkConfig> {
        match self.kind {
            SweepKind::BitsSweep => self.bits.iter().map(|&b| self.with_bits(self.env.clone(), b)).collect(),
            SweepKind::TapsBitsGrid => self
                .taps
                .iter()
                .flat_map(|&t| {
                    self.bits.iter().map(move |&b| {
                        let mut cfg = self.with_bits(self.env.clone(), b);
                        cfg.tx_len = t;
                        cfg.rx_len = t;
                        cfg
                    })
                })
                .collect(),
            SweepKind::DistanceSweep => self
                .distances_km
                .iter()
                .map(|&d| LinkConfig {
                    distance_km: d,
                    ..self.env.clone()
                })
                .collect(),
            SweepKind::PhotonScan => vec![self.env.clone()],
        }
    }

    fn reference_point(&self) -> LinkConfig {
        let mut cfg = self.with_bits(self.env.clone(), self.reference.ref_bits);
        cfg.tx_len = self.reference.ref_taps;
        cfg.rx_len = self.reference.ref_taps;
        cfg
    }

    fn eval_config(&self, train: &LinkConfig) -> LinkConfig {
        LinkConfig {
            num_symbols: self.eval_symbols,
            seed: self.eval_seed,
            ..train.clone()
        }
    }
}

/// Estimated number of chain runs a sweep performs.
pub fn estimate_cost(spec: &SweepSpec) -> u64 {
    let points = spec.points().len() as u64;
    let photon = match spec.baseline_photon {
        BaselinePhoton::Fixed(_) => 0,
        BaselinePhoton::Scan => spec.photon_grid.len() as u64,
    };
    if spec.kind == SweepKind::PhotonScan {
        return spec.photon_grid.len() as u64;
    }
    let mut cost = 0;
    if spec.mode.unoptimized() {
        cost += points * (photon + 1);
    }
    if spec.mode.optimized() {
        let rl = (spec.optimizer.iterations * spec.optimizer.batch_size) as u64;
        cost += points * (photon + rl + 5);
    }
    if spec.kind == SweepKind::TapsBitsGrid {
        cost += photon + 1;
    }
    cost
}

/// Reported outputs of one evaluated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointOutputs {
    pub skr_bits_per_symbol: f64,
    pub margin: f64,
    pub tau: f64,
    pub n_ex: f64,
    pub tau_hat: f64,
    pub n_ex_hat: f64,
    pub n_ex_std_error: f64,
    pub budget: NoiseBudget,
    pub skr_bits_per_second: Option<f64>,
    /// Relative gap to the grid reference, when one exists and is positive.
    pub gap: Option<f64>,
}

/// Runs the chain once at `cfg.seed` and reports the key rate with both the
/// estimated parameters and the analytic budget.
pub fn evaluate_point(
    cfg: &LinkConfig,
    trx: &Transceiver,
    beta: f64,
    score: RewardMode,
    symbol_rate: Option<f64>,
) -> Result<PointOutputs> {
    let link = Link::new(cfg.clone())?;
    let out = link.run(&trx.h_tx, &trx.h_rx, trx.mean_photon, cfg.seed)?;
    let est = estimate_parameters(&out.tx_symbols, &out.rx_symbols)?;
    let budget = assemble_budget(cfg, &out.isi, trx.mean_photon, &out.reports.dac, &out.reports.adc);
    let (tau, n_ex) = match score {
        RewardMode::Estimated => (est.tau_hat, est.n_ex_for_reward() + cfg.channel_excess_photons),
        RewardMode::Analytic => (budget.transmittance, budget.total),
    };
    let margin = key_rate_margin(&SkrInputs::new(trx.mean_photon, tau, n_ex, beta))?;
    let skr = margin.max(0.0);
    Ok(PointOutputs {
        skr_bits_per_symbol: skr,
        margin,
        tau,
        n_ex,
        tau_hat: est.tau_hat,
        n_ex_hat: est.n_ex_hat,
        n_ex_std_error: est.n_ex_std_error,
        budget,
        skr_bits_per_second: symbol_rate.map(|r| r * skr),
        gap: None,
    })
}

/// One evaluated system, self-describing: `replay` reproduces its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub kind: SweepKind,
    pub mode: RunMode,
    /// Evaluation link; its `seed` is the evaluation seed.
    pub link: LinkConfig,
    pub transceiver: Transceiver,
    pub beta: f64,
    pub score: RewardMode,
    pub symbol_rate: Option<f64>,
    pub outputs: PointOutputs,
    /// Optimizer settings (with the per-point seed) for optimized records.
    pub optimizer: Option<OptimizerConfig>,
    pub trace: Vec<IterationRecord>,
    pub seed: u64,
    pub wall_time_s: f64,
    pub artifact_version: String,
}

/// Re-evaluates a record from its own snapshot.
pub fn replay(record: &RunRecord) -> Result<PointOutputs> {
    let mut out = evaluate_point(
        &record.link,
        &record.transceiver,
        record.beta,
        record.score,
        record.symbol_rate,
    )?;
    out.gap = record.outputs.gap;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonPoint {
    pub n_photon: f64,
    pub skr_bits_per_symbol: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonScan {
    pub curve: Vec<PhotonPoint>,
    /// Grid value with the largest key-rate margin (lowest on ties).
    pub argmax: f64,
    pub max_skr: f64,
}

/// Evaluates `score(n̄)` over an ascending grid.
pub fn scan_photons<F>(grid: &[f64], score: F) -> Result<PhotonScan>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    validate_photon_grid(grid)?;
    let margins: Vec<f64> = grid.par_iter().map(|&n| score(n)).collect::<Result<_>>()?;
    let curve: Vec<PhotonPoint> = grid
        .iter()
        .zip(&margins)
        .map(|(&n, &m)| PhotonPoint {
            n_photon: n,
            skr_bits_per_symbol: m.max(0.0),
            margin: m,
        })
        .collect();
    let best = curve
        .iter()
        .fold(&curve[0], |best, p| if p.margin > best.margin { p } else { best });
    Ok(PhotonScan {
        argmax: best.n_photon,
        max_skr: best.skr_bits_per_symbol,
        curve,
    })
}

/// Key rate versus mean photon number with the filters held fixed.
pub fn photon_scan(
    cfg: &LinkConfig,
    trx: &Transceiver,
    grid: &[f64],
    beta: f64,
    score: RewardMode,
) -> Result<PhotonScan> {
    let link = Link::new(cfg.clone())?;
    scan_photons(grid, |n| {
        let candidate = Transceiver {
            mean_photon: n,
            ..trx.clone()
        };
        Ok(optimizer::evaluate(&link, &candidate, cfg.seed, score, beta)?.margin)
    })
}

struct Sweeper<'a> {
    spec: &'a SweepSpec,
    pool: rayon::ThreadPool,
}

impl Sweeper<'_> {
    fn baseline(&self, train: &LinkConfig) -> Result<Transceiver> {
        let mut trx = rrc_pair(self.spec.rolloff, train.tx_len, train.rx_len, train.sps, 1.0)?;
        trx.mean_photon = match self.spec.baseline_photon {
            BaselinePhoton::Fixed(n) => n,
            BaselinePhoton::Scan => {
                let eval = self.spec.eval_config(train);
                photon_scan(&eval, &trx, &self.spec.photon_grid, self.spec.beta, self.spec.score)?.argmax
            }
        };
        Ok(trx)
    }

    fn record(&self, mode: RunMode, eval: LinkConfig, trx: Transceiver, started: Instant) -> Result<RunRecord> {
        let outputs = evaluate_point(&eval, &trx, self.spec.beta, self.spec.score, self.spec.symbol_rate)?;
        Ok(RunRecord {
            kind: self.spec.kind,
            mode,
            seed: eval.seed,
            link: eval,
            transceiver: trx,
            beta: self.spec.beta,
            score: self.spec.score,
            symbol_rate: self.spec.symbol_rate,
            outputs,
            optimizer: None,
            trace: Vec::new(),
            wall_time_s: started.elapsed().as_secs_f64(),
            artifact_version: ARTIFACT_VERSION.to_string(),
        })
    }

    fn unoptimized(&self, train: &LinkConfig, mode: RunMode) -> Result<RunRecord> {
        let started = Instant::now();
        let trx = self.baseline(train)?;
        self.record(mode, self.spec.eval_config(train), trx, started)
    }

    fn optimized(&self, index: usize, train: &LinkConfig, warm: Option<&Transceiver>) -> Result<RunRecord> {
        let started = Instant::now();
        let spec = self.spec;
        let init = match warm {
            Some(t) => t.clone(),
            None => self.baseline(train)?,
        };
        let config = OptimizerConfig {
            seed: seed::derive(spec.optimizer.seed, &[index as u64]),
            workers: spec.workers,
            beta: spec.beta,
            ..spec.optimizer.clone()
        };
        let link = Link::new(train.clone())?;
        let state = PolicyState::new(&init.h_tx, &init.h_rx, init.mean_photon, config.sigma_init)?;
        let outcome = optimizer::optimize(&link, &state, &config, &mut |_| {})?;

        let eval = spec.eval_config(train);
        let validation = Link::new(LinkConfig {
            seed: seed::derive(spec.eval_seed, &[1]),
            ..eval.clone()
        })?;
        let candidates = [init, outcome.best_transceiver()?, outcome.state.mean_transceiver()?];
        let mut chosen = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, trx) in candidates.iter().enumerate() {
            let score = optimizer::evaluate(&validation, trx, validation.config().seed, spec.score, spec.beta)
                .map(|e| e.margin)
                .unwrap_or(f64::NEG_INFINITY);
            if score > best {
                best = score;
                chosen = i;
            }
        }
        let mut record = self.record(RunMode::Optimized, eval, candidates[chosen].clone(), started)?;
        record.optimizer = Some(config);
        record.trace = outcome.trace;
        record.wall_time_s = started.elapsed().as_secs_f64();
        Ok(record)
    }
}

/// Evaluates every grid point of `spec`; see [`run_sweep_with`].
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    run_sweep_with(spec, &mut |_| {})
}

/// Evaluates every grid point, calling `on_record` as records complete.
///
/// Records are ordered by grid point, unoptimized before optimized; a
/// taps/bits grid starts with its reference record.
pub fn run_sweep_with(spec: &SweepSpec, on_record: &mut dyn FnMut(&RunRecord)) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let estimated = estimate_cost(spec);
    if estimated > spec.max_chain_runs {
        return Err(Error::Budget {
            estimated,
            limit: spec.max_chain_runs,
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| invalid(format!("cannot build worker pool: {e}")))?;
    let sweeper = Sweeper { spec, pool };
    let points = spec.points();

    if spec.kind == SweepKind::PhotonScan {
        let train = &points[0];
        let eval = spec.eval_config(train);
        let base = rrc_pair(spec.rolloff, train.tx_len, train.rx_len, train.sps, 1.0)?;
        let records: Vec<RunRecord> = sweeper.pool.install(|| {
            spec.photon_grid
                .par_iter()
                .map(|&n| {
                    let trx = Transceiver {
                        mean_photon: n,
                        ..base.clone()
                    };
                    sweeper.record(RunMode::Unoptimized, eval.clone(), trx, Instant::now())
                })
                .collect::<Result<_>>()
        })?;
        records.iter().for_each(|r| on_record(r));
        return Ok(records);
    }

    let mut records = Vec::new();
    let reference = if spec.kind == SweepKind::TapsBitsGrid {
        let mut r = sweeper.pool.install(|| sweeper.unoptimized(&spec.reference_point(), RunMode::Reference))?;
        r.outputs.gap = Some(0.0);
        on_record(&r);
        let skr = r.outputs.skr_bits_per_symbol;
        records.push(r);
        Some(skr)
    } else {
        None
    };

    let unoptimized: Vec<Option<RunRecord>> = if spec.mode.unoptimized() {
        sweeper.pool.install(|| {
            points
                .par_iter()
                .map(|p| sweeper.unoptimized(p, RunMode::Unoptimized).map(Some))
                .collect::<Result<_>>()
        })?
    } else {
        vec![None; points.len()]
    };

    let mut warm: BTreeMap<(usize, usize), Transceiver> = BTreeMap::new();
    for (i, (point, unopt)) in points.iter().zip(unoptimized).enumerate() {
        if let Some(mut r) = unopt {
            r.outputs.gap = gap(reference, r.outputs.skr_bits_per_symbol);
            on_record(&r);
            records.push(r);
        }
        if spec.mode.optimized() {
            let key = (point.tx_len, point.rx_len);
            let start = if spec.warm_start { warm.get(&key) } else { None };
            let mut r = sweeper.optimized(i, point, start)?;
            r.outputs.gap = gap(reference, r.outputs.skr_bits_per_symbol);
            warm.insert(key, r.transceiver.clone());
            on_record(&r);
            records.push(r);
        }
    }
    Ok(records)
}

fn gap(reference: Option<f64>, skr: f64) -> Option<f64> {
    match reference {
        Some(r) if r > 0.0 => Some((r - skr) / r),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key_rate::secure_key_rate;

    fn tiny_spec(kind: SweepKind, mode: SweepMode) -> SweepSpec {
        let mut spec = SweepSpec {
            kind,
            mode,
            bits: vec![8, 10],
            taps: vec![11, 21],
            distances_km: vec![10.0, 30.0],
            photon_grid: vec![2.0, 4.0, 6.0, 8.0],
            eval_symbols: 2048,
            reference: Reference { ref_taps: 101, ref_bits: 12 },
            ..SweepSpec::default()
        };
        spec.env.num_symbols = 2048;
        spec.env.distance_km = 20.0;
        spec.optimizer.iterations = 2;
        spec.optimizer.batch_size = 4;
        spec
    }

    #[test]
    fn noiseless_scan_peaks_at_grid_max() {
        let grid: Vec<f64> = (1..=20).map(f64::from).collect();
        let scan = scan_photons(&grid, |n| secure_key_rate(&SkrInputs::new(n, 1.0, 0.0, 1.0))).unwrap();
        assert!(scan.curve.windows(2).all(|w| w[1].skr_bits_per_symbol > w[0].skr_bits_per_symbol));
        assert_eq!(scan.argmax, 20.0);
    }

    #[test]
    fn scan_rejects_unsorted_grid() {
        assert!(scan_photons(&[3.0, 1.0], |_| Ok(0.0)).is_err());
        assert!(scan_photons(&[], |_| Ok(0.0)).is_err());
    }

    #[test]
    fn spec_rejects_unknown_keys_and_empty_axes() {
        assert!(matches!(SweepSpec::from_json(r#"{"kind": "bits-sweep", "bitz": [1]}"#), Err(Error::Config(_))));
        assert!(matches!(SweepSpec::from_json(r#"{"kind": "bits-sweep", "bits": []}"#), Err(Error::Config(_))));
        assert!(matches!(SweepSpec::from_json(r#"{"kind": "taps-bits-grid", "taps": [0]}"#), Err(Error::Config(_))));
        assert!(matches!(SweepSpec::from_json(r#"{"kind": "distance-sweep", "distances_km": [-1]}"#), Err(Error::Config(_))));
        let s = SweepSpec::from_json(r#"{"kind": "photon-scan", "baseline_photon": "scan"}"#).unwrap();
        assert_eq!(s.baseline_photon, BaselinePhoton::Scan);
        let s = SweepSpec::from_json(r#"{"baseline_photon": {"fixed": 3.5}}"#).unwrap();
        assert_eq!(s.baseline_photon, BaselinePhoton::Fixed(3.5));
    }

    #[test]
    fn budget_refusal_reports_estimate() {
        let mut spec = tiny_spec(SweepKind::BitsSweep, SweepMode::Both);
        spec.max_chain_runs = 10;
        match run_sweep(&spec) {
            Err(Error::Budget { estimated, limit }) => {
                assert_eq!(limit, 10);
                assert_eq!(estimated, estimate_cost(&spec));
                assert!(estimated > 10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_has_zero_gap_reference_first() {
        let spec = tiny_spec(SweepKind::TapsBitsGrid, SweepMode::Unoptimized);
        let records = run_sweep(&spec).unwrap();
        assert_eq!(records.len(), 5);
        assert_eq!(records[0].mode, RunMode::Reference);
        assert_eq!(records[0].outputs.gap, Some(0.0));
        for r in &records[1..] {
            let g = r.outputs.gap.unwrap();
            assert!(g <= 1.0);
        }
    }

    #[test]
    fn records_replay_exactly_after_serialization() {
        let spec = tiny_spec(SweepKind::DistanceSweep, SweepMode::Both);
        let records = run_sweep(&spec).unwrap();
        assert_eq!(records.len(), 4);
        let text = serde_json::to_string(&records).unwrap();
        let back: Vec<RunRecord> = serde_json::from_str(&text).unwrap();
        for r in &back {
            let out = replay(r).unwrap();
            assert!((out.skr_bits_per_symbol - r.outputs.skr_bits_per_symbol).abs() <= 1e-12);
            assert!((out.n_ex - r.outputs.n_ex).abs() <= 1e-12);
        }
        assert!(back.iter().filter(|r| r.mode == RunMode::Optimized).all(|r| r.trace.len() == 2));
    }

    #[test]
    fn point_evaluation_matches_optimizer_reward() {
        let spec = tiny_spec(SweepKind::BitsSweep, SweepMode::Unoptimized);
        let eval = spec.eval_config(&spec.env);
        let trx = rrc_pair(0.2, 11, 101, 4, 6.0).unwrap();
        let point = evaluate_point(&eval, &trx, 0.95, RewardMode::Estimated, Some(1e8)).unwrap();
        let link = Link::new(eval.clone()).unwrap();
        let reward = optimizer::evaluate(&link, &trx, eval.seed, RewardMode::Estimated, 0.95).unwrap();
        assert_eq!(point.margin, reward.margin);
        assert_eq!(point.skr_bits_per_second, Some(1e8 * point.skr_bits_per_symbol));
    }

    #[test]
    fn sweep_is_worker_independent() {
        let mut spec = tiny_spec(SweepKind::BitsSweep, SweepMode::Both);
        spec.baseline_photon = BaselinePhoton::Scan;
        let strip = |mut v: Vec<RunRecord>| {
            v.iter_mut().for_each(|r| r.wall_time_s = 0.0);
            v.iter_mut().for_each(|r| r.optimizer.iter_mut().for_each(|o| o.workers = 0));
            v
        };
        spec.workers = 1;
        let a = strip(run_sweep(&spec).unwrap());
        spec.workers = 3;
        let b = strip(run_sweep(&spec).unwrap());
        assert_eq!(a, b);
    }
}
