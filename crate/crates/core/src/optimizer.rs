//! Score-function (REINFORCE) optimization of the Tx/Rx taps and the mean
//! photon number.
//!
//! The policy is a factorized Gaussian over parameters. Rewards come from
//! running the chain as a black box; no derivative of the chain is ever
//! formed. Each episode's randomness is derived from
//! `(seed, iteration, episode)`, so a run is reproducible for any number of
//! worker threads.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{FilterRole, FirFilter};
use crate::error::{invalid, Result};
use crate::key_rate::{self, SkrInputs, DEFAULT_BETA};
use crate::link::{self, IsiProfile, Link};
use crate::seed;

/// A contiguous slice of the parameter vector sharing one exploration scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub params: Vec<f64>,
    pub reward: f64,
}

/// Factorized Gaussian search distribution with a running reward baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Vec<f64>,
    pub groups: Vec<ParamGroup>,
    pub baseline: Option<f64>,
    pub best: Option<Snapshot>,
}

impl GaussianPolicy {
    /// A single group covering the whole vector.
    pub fn isotropic(mean: Vec<f64>, sigma: f64) -> Self {
        let len = mean.len();
        Self {
            mean,
            groups: vec![ParamGroup {
                name: "all".into(),
                start: 0,
                len,
                sigma,
            }],
            baseline: None,
            best: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut next = 0;
        for g in &self.groups {
            if g.start != next {
                return Err(invalid(format!("group {} does not tile the parameter vector", g.name)));
            }
            if !(g.sigma >= 0.0) || !g.sigma.is_finite() {
                return Err(invalid(format!("group {} has invalid sigma {}", g.name, g.sigma)));
            }
            next += g.len;
        }
        if next != self.mean.len() {
            return Err(invalid("groups do not cover the parameter vector"));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(invalid("policy mean is not finite"));
        }
        Ok(())
    }

    /// Draws `θ' = θ + σ_g·ε` component-wise.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = self.mean.clone();
        for g in &self.groups {
            for v in &mut out[g.start..g.start + g.len] {
                let eps: f64 = rng.sample(StandardNormal);
                *v += g.sigma * eps;
            }
        }
        out
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.groups.iter().find(|g| g.name == name).map(|g| g.sigma)
    }
}

/// One sampled action and its reward.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub action: &'a [f64],
    pub reward: f64,
}

fn default_batch() -> usize {
    16
}
fn default_lr() -> f64 {
    1e-5
}
fn default_iterations() -> usize {
    150
}
fn default_sigma_decay() -> f64 {
    0.999
}
fn default_sigma_floor() -> f64 {
    1e-4
}
fn default_baseline_decay() -> f64 {
    0.9
}

/// Initial exploration scale per parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SigmaInit {
    pub tx: f64,
    pub rx: f64,
    /// Scale of the log mean photon number.
    pub log_n: f64,
}

impl Default for SigmaInit {
    fn default() -> Self {
        Self {
            tx: 0.005,
            rx: 0.005,
            log_n: 0.01,
        }
    }
}

/// How an episode's reward is obtained from the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// `(τ̂, n̂_ex)` estimated from transmitted/received symbols.
    #[default]
    Estimated,
    /// `(τ, n_ex)` from the analytic noise budget.
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub sigma_init: SigmaInit,
    #[serde(default = "default_sigma_decay")]
    pub sigma_decay: f64,
    #[serde(default = "default_sigma_floor")]
    pub sigma_floor: f64,
    #[serde(default = "default_baseline_decay")]
    pub baseline_decay: f64,
    #[serde(default)]
    pub seed: u64,
    /// Divide advantages by the batch reward standard deviation.
    #[serde(default = "default_true")]
    pub normalize_advantage: bool,
    /// Share one symbol sequence across all episodes of an iteration.
    #[serde(default)]
    pub common_random_numbers: bool,
    #[serde(default)]
    pub reward: RewardMode,
    /// Use the zero-clipped key rate as reward instead of `β·I − χ`.
    #[serde(default)]
    pub clip_reward: bool,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Worker threads for episode evaluation; 0 picks the rayon default.
    #[serde(default)]
    pub workers: usize,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

fn default_true() -> bool {
    true
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(invalid("batch size must be at least 2"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid("learning rate must be positive"));
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return Err(invalid("sigma decay must lie in (0, 1]"));
        }
        if !(self.sigma_floor >= 0.0) {
            return Err(invalid("sigma floor must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(invalid("baseline decay must lie in [0, 1)"));
        }
        let s = self.sigma_init;
        if [s.tx, s.rx, s.log_n].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("initial sigmas must be non-negative"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(invalid("reconciliation efficiency must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// One score-function ascent step on a generic Gaussian policy.
///
/// `ĝ = (1/N) Σ (r_i − b)(θ'_i − θ)/σ²` per group, `θ ← θ + lr·ĝ`. The
/// baseline is the exponential moving average of batch-mean rewards,
/// updated before use.
pub fn reinforce_step(policy: &GaussianPolicy, batch: &[Sample<'_>], config: &OptimizerConfig) -> Result<GaussianPolicy> {
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    if batch.iter().any(|s| s.action.len() != policy.mean.len()) {
        return Err(invalid("action length does not match the policy"));
    }
    if batch.iter().any(|s| !s.reward.is_finite()) {
        return Err(invalid("non-finite reward"));
    }
    let n = batch.len() as f64;
    let mean_reward = batch.iter().map(|s| s.reward).sum::<f64>() / n;
    let baseline = match policy.baseline {
        None => mean_reward,
        Some(b) => config.baseline_decay * b + (1.0 - config.baseline_decay) * mean_reward,
    };
    let mut advantages: Vec<f64> = batch.iter().map(|s| s.reward - baseline).collect();
    if config.normalize_advantage {
        let var = batch.iter().map(|s| (s.reward - mean_reward).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            let sd = var.sqrt();
            advantages.iter_mut().for_each(|a| *a /= sd);
        }
    }

    let mut next = policy.clone();
    for g in &policy.groups {
        if g.sigma <= 0.0 {
            continue;
        }
        let inv_var = 1.0 / (g.sigma * g.sigma);
        for i in g.start..g.start + g.len {
            let grad = batch
                .iter()
                .zip(&advantages)
                .map(|(s, a)| a * (s.action[i] - policy.mean[i]))
                .sum::<f64>()
                * inv_var
                / n;
            next.mean[i] += config.learning_rate * grad;
        }
    }
    for g in &mut next.groups {
        if g.sigma > 0.0 {
            g.sigma = (g.sigma * config.sigma_decay).max(config.sigma_floor);
        }
    }
    next.baseline = Some(baseline);
    for s in batch {
        if next.best.as_ref().map_or(true, |b| s.reward > b.reward) {
            next.best = Some(Snapshot {
                params: s.action.to_vec(),
                reward: s.reward,
            });
        }
    }
    Ok(next)
}

/// Decoded physical parameters of a policy point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transceiver {
    pub h_tx: FirFilter,
    pub h_rx: FirFilter,
    pub mean_photon: f64,
}

/// REINFORCE state over `θ = (h_tx, h_rx, log n̄)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub tx_len: usize,
    pub rx_len: usize,
    pub policy: GaussianPolicy,
}

impl PolicyState {
    pub fn new(h_tx: &FirFilter, h_rx: &FirFilter, mean_photon: f64, sigma: SigmaInit) -> Result<Self> {
        if !(mean_photon > 0.0) || !mean_photon.is_finite() {
            return Err(invalid("mean photon number must be positive"));
        }
        let h_tx = h_tx.normalized()?;
        let h_rx = h_rx.normalized()?;
        let (tx_len, rx_len) = (h_tx.len(), h_rx.len());
        let mut mean = h_tx.taps;
        mean.extend_from_slice(&h_rx.taps);
        mean.push(mean_photon.ln());
        let groups = vec![
            ParamGroup { name: "tx".into(), start: 0, len: tx_len, sigma: sigma.tx },
            ParamGroup { name: "rx".into(), start: tx_len, len: rx_len, sigma: sigma.rx },
            ParamGroup { name: "log_n".into(), start: tx_len + rx_len, len: 1, sigma: sigma.log_n },
        ];
        let state = Self {
            tx_len,
            rx_len,
            policy: GaussianPolicy { mean, groups, baseline: None, best: None },
        };
        state.policy.validate()?;
        Ok(state)
    }

    pub fn decode(&self, params: &[f64]) -> Result<Transceiver> {
        if params.len() != self.tx_len + self.rx_len + 1 {
            return Err(invalid("parameter vector has the wrong length"));
        }
        let h_tx = FirFilter::new(params[..self.tx_len].to_vec(), FilterRole::TxShaper)?.normalized()?;
        let h_rx = FirFilter::new(params[self.tx_len..self.tx_len + self.rx_len].to_vec(), FilterRole::RxMatched)?
            .normalized()?;
        let mean_photon = params[self.tx_len + self.rx_len].exp();
        if !(mean_photon > 0.0) || !mean_photon.is_finite() {
            return Err(invalid("mean photon number left the representable range"));
        }
        Ok(Transceiver { h_tx, h_rx, mean_photon })
    }

    pub fn mean_transceiver(&self) -> Result<Transceiver> {
        self.decode(&self.policy.mean)
    }

    /// The best snapshot seen so far, decoded; falls back to the mean.
    pub fn best_transceiver(&self) -> Result<Transceiver> {
        match &self.policy.best {
            Some(b) => self.decode(&b.params),
            None => self.mean_transceiver(),
        }
    }

    pub fn best_reward(&self) -> Option<f64> {
        self.policy.best.as_ref().map(|b| b.reward)
    }

    /// Rescales both filter blocks of `params` to unit energy.
    fn renormalize(&self, params: &mut [f64]) {
        for (start, len) in [(0, self.tx_len), (self.tx_len, self.rx_len)] {
            let block = &mut params[start..start + len];
            let e: f64 = block.iter().map(|v| v * v).sum();
            if e > 0.0 && e.is_finite() {
                let g = e.sqrt().recip();
                block.iter_mut().for_each(|v| *v *= g);
            }
        }
    }

    fn sigmas(&self) -> [f64; 3] {
        let s = |n| self.policy.sigma(n).unwrap_or(0.0);
        [s("tx"), s("rx"), s("log_n")]
    }
}

/// Physical summary of one reward evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub skr: f64,
    /// Unclipped `β·I_AB − χ_BE`.
    pub margin: f64,
    pub tau: f64,
    pub n_ex: f64,
}

/// Evaluates the key rate of a transceiver on the link.
pub fn evaluate(
    link: &Link,
    trx: &Transceiver,
    chain_seed: u64,
    mode: RewardMode,
    beta: f64,
) -> Result<Evaluation> {
    let cfg = link.config();
    let (tau, n_ex) = match mode {
        RewardMode::Estimated => {
            let (tx, rx) = link.symbols(&trx.h_tx, &trx.h_rx, trx.mean_photon, chain_seed)?;
            let est = link::estimate_parameters(&tx, &rx)?;
            (est.tau_hat, est.n_ex_for_reward() + cfg.channel_excess_photons)
        }
        RewardMode::Analytic => {
            let out = link.run(&trx.h_tx, &trx.h_rx, trx.mean_photon, chain_seed)?;
            let b = link::assemble_budget(cfg, &out.isi, trx.mean_photon, &out.reports.dac, &out.reports.adc);
            (b.transmittance, b.total)
        }
    };
    let margin = key_rate::key_rate_margin(&SkrInputs::new(trx.mean_photon, tau, n_ex, beta))?;
    Ok(Evaluation {
        skr: margin.max(0.0),
        margin,
        tau,
        n_ex,
    })
}

/// An action, the ISI state it induces and its reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub action: Vec<f64>,
    pub state: Option<IsiProfile>,
    pub reward: f64,
    pub seed: u64,
    /// Set when the chain or key-rate evaluation failed; `reward` is then 0.
    pub failed: bool,
}

fn chain_seed(episode_seed: u64) -> u64 {
    seed::derive(episode_seed, &[1])
}

/// Samples `θ'` around the policy mean and scores it on the link.
pub fn sample_episode(
    state: &PolicyState,
    link: &Link,
    config: &OptimizerConfig,
    episode_seed: u64,
    shared_chain_seed: Option<u64>,
) -> Episode {
    let mut rng = seed::rng(seed::derive(episode_seed, &[0]));
    let action = state.policy.sample(&mut rng);
    let chain = shared_chain_seed.unwrap_or_else(|| chain_seed(episode_seed));
    let scored = state.decode(&action).and_then(|trx| {
        let eval = evaluate(link, &trx, chain, config.reward, config.beta)?;
        let isi = link.isi_profile(&trx.h_tx, &trx.h_rx)?;
        Ok((eval, isi))
    });
    match scored {
        Ok((eval, isi)) => Episode {
            action,
            state: Some(isi),
            reward: if config.clip_reward { eval.skr } else { eval.margin },
            seed: episode_seed,
            failed: false,
        },
        Err(_) => Episode {
            action,
            state: None,
            reward: 0.0,
            seed: episode_seed,
            failed: true,
        },
    }
}

/// Policy update from a full batch; filter means are renormalized after
/// the step. Failed episodes count as the worst successful reward.
pub fn reinforce_update(state: &PolicyState, batch: &[Episode], config: &OptimizerConfig) -> Result<PolicyState> {
    if batch.len() != config.batch_size {
        return Err(invalid(format!(
            "batch has {} episodes, expected {}",
            batch.len(),
            config.batch_size
        )));
    }
    let floor = batch
        .iter()
        .filter(|e| !e.failed)
        .map(|e| e.reward)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 0.0 };
    let samples: Vec<Sample<'_>> = batch
        .iter()
        .map(|e| Sample {
            action: &e.action,
            reward: if e.failed { floor } else { e.reward },
        })
        .collect();
    let mut policy = reinforce_step(&state.policy, &samples, config)?;
    // a failed episode must never become the best snapshot
    if let (Some(best), Some(prev)) = (&policy.best, &state.policy.best) {
        if batch.iter().any(|e| e.failed && e.action == best.params) {
            policy.best = Some(prev.clone());
        }
    }
    let mut next = PolicyState {
        tx_len: state.tx_len,
        rx_len: state.rx_len,
        policy,
    };
    let mut mean = std::mem::take(&mut next.policy.mean);
    next.renormalize(&mut mean);
    next.policy.mean = mean;
    if let Some(best) = next.policy.best.as_mut() {
        let mut params = std::mem::take(&mut best.params);
        state.renormalize(&mut params);
        best.params = params;
    }
    Ok(next)
}

/// Per-iteration progress record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean_reward: f64,
    pub best_reward: f64,
    pub sigma_tx: f64,
    pub sigma_rx: f64,
    pub sigma_n: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    /// Final state; `policy.best` holds the best-so-far snapshot.
    pub state: PolicyState,
    pub initial_reward: f64,
    pub best_reward: f64,
    pub trace: Vec<IterationRecord>,
}

impl OptimizeOutcome {
    pub fn best_transceiver(&self) -> Result<Transceiver> {
        self.state.best_transceiver()
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot build worker pool: {e}")))
}

/// Runs `config.iterations` REINFORCE iterations of `config.batch_size`
/// episodes from `init`, reporting each iteration to `progress`.
pub fn optimize(
    link: &Link,
    init: &PolicyState,
    config: &OptimizerConfig,
    progress: &mut dyn FnMut(&IterationRecord),
) -> Result<OptimizeOutcome> {
    config.validate()?;
    init.policy.validate()?;
    let pool = thread_pool(config.workers)?;

    let mut state = init.clone();
    let mut mean = std::mem::take(&mut state.policy.mean);
    state.renormalize(&mut mean);
    state.policy.mean = mean;

    let initial = evaluate(
        link,
        &state.mean_transceiver()?,
        seed::derive(config.seed, &[u64::MAX]),
        config.reward,
        config.beta,
    )?;
    let initial_reward = if config.clip_reward { initial.skr } else { initial.margin };
    if state.policy.best.as_ref().map_or(true, |b| initial_reward > b.reward) {
        state.policy.best = Some(Snapshot {
            params: state.policy.mean.clone(),
            reward: initial_reward,
        });
    }

    let mut trace = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let shared = config
            .common_random_numbers
            .then(|| seed::derive(config.seed, &[it as u64, u64::MAX - 1]));
        let batch: Vec<Episode> = pool.install(|| {
            (0..config.batch_size)
                .into_par_iter()
                .map(|i| {
                    let episode_seed = seed::derive(config.seed, &[it as u64, i as u64]);
                    sample_episode(&state, link, config, episode_seed, shared)
                })
                .collect()
        });
        state = reinforce_update(&state, &batch, config)?;
        let [sigma_tx, sigma_rx, sigma_n] = state.sigmas();
        let ok: Vec<f64> = batch.iter().filter(|e| !e.failed).map(|e| e.reward).collect();
        let record = IterationRecord {
            iteration: it + 1,
            mean_reward: if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 },
            best_reward: state.best_reward().unwrap_or(f64::NEG_INFINITY),
            sigma_tx,
            sigma_rx,
            sigma_n,
        };
        progress(&record);
        trace.push(record);
    }
    let best_reward = state.best_reward().unwrap_or(initial_reward);
    Ok(OptimizeOutcome {
        state,
        initial_reward,
        best_reward,
        trace,
    })
}
