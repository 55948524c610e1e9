//! End-to-end transceiver chain, ISI extraction, noise budget and
//! parameter estimation.
//!
//! The chain is semiclassical: amplitudes propagate deterministically and
//! no shot noise is sampled. Channel excess noise is added analytically.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, FilterRole, FirFilter, SampledSignal};
use crate::error::{invalid, Result};
use crate::quantization::{self, QuantizationReport, Quantizer, QuantizerSpec};

/// Minimum number of aligned symbol pairs for parameter estimation.
pub const MIN_ESTIMATION_SYMBOLS: usize = 1000;

fn default_order() -> u32 {
    4
}
fn default_bandwidth() -> f64 {
    0.75
}
fn default_lpf_taps() -> usize {
    257
}
fn default_true() -> bool {
    true
}

/// Analog low-pass between DAC and channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpfConfig {
    #[serde(default = "default_order")]
    pub order: u32,
    /// 3 dB bandwidth relative to the symbol rate.
    #[serde(default = "default_bandwidth")]
    pub bandwidth_norm: f64,
    #[serde(default = "default_lpf_taps")]
    pub num_taps: usize,
    /// When false the LPF is replaced by the identity tap.
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl Default for LpfConfig {
    fn default() -> Self {
        Self {
            order: default_order(),
            bandwidth_norm: default_bandwidth(),
            num_taps: default_lpf_taps(),
            enabled: true,
        }
    }
}

/// Which filters make up the response reported as the ISI state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsiMode {
    /// `z = h_tx * h_lpf * h_rx`
    #[default]
    IncludeLpf,
    /// `z = h_tx * h_rx`; sampling still follows the physical response.
    ExcludeLpf,
}

/// Full description of one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub distance_km: f64,
    pub attenuation_db_per_km: f64,
    /// Channel excess noise `n_ch`, photons at Bob's input.
    pub channel_excess_photons: f64,
    pub sps: usize,
    pub lpf: LpfConfig,
    pub dac: QuantizerSpec,
    pub adc: QuantizerSpec,
    pub tx_len: usize,
    pub rx_len: usize,
    pub num_symbols: usize,
    pub seed: u64,
    pub isi_mode: IsiMode,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            distance_km: 50.0,
            attenuation_db_per_km: 0.2,
            channel_excess_photons: 1e-3,
            sps: dsp::DEFAULT_SPS,
            lpf: LpfConfig::default(),
            dac: QuantizerSpec { bits: 10, clipping_factor: 4.0 },
            adc: QuantizerSpec { bits: 10, clipping_factor: 4.0 },
            tx_len: 11,
            rx_len: 101,
            num_symbols: 16_384,
            seed: 1,
            isi_mode: IsiMode::IncludeLpf,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_km >= 0.0) || !self.distance_km.is_finite() {
            return Err(invalid("distance must be a finite non-negative number"));
        }
        if !(self.attenuation_db_per_km >= 0.0) || !self.attenuation_db_per_km.is_finite() {
            return Err(invalid("attenuation must be a finite non-negative number"));
        }
        if !(self.channel_excess_photons >= 0.0) || !self.channel_excess_photons.is_finite() {
            return Err(invalid("channel excess noise must be non-negative"));
        }
        if self.sps == 0 {
            return Err(invalid("samples per symbol must be at least 1"));
        }
        if self.tx_len == 0 || self.rx_len == 0 {
            return Err(invalid("filter lengths must be at least 1"));
        }
        if self.num_symbols == 0 {
            return Err(invalid("symbol count must be at least 1"));
        }
        self.dac.validate()?;
        self.adc.validate()?;
        let tau = self.channel_transmittance();
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(invalid(format!("channel transmittance {tau} outside (0, 1]")));
        }
        Ok(())
    }

    /// `τ_ch = 10^(-α L / 10)`.
    pub fn channel_transmittance(&self) -> f64 {
        10f64.powf(-self.attenuation_db_per_km * self.distance_km / 10.0)
    }

    pub fn build_lpf(&self) -> Result<FirFilter> {
        if !self.lpf.enabled {
            return Ok(FirFilter::identity(FilterRole::Lpf));
        }
        dsp::super_gaussian_lpf(self.lpf.order, self.lpf.bandwidth_norm, self.lpf.num_taps, self.sps)
    }
}

/// Symbol-spaced samples of the effective response around its peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsiProfile {
    pub response: Vec<f64>,
    pub sps: usize,
    /// Index of the peak `|z|`, ties broken toward the smaller index.
    pub delay_index: usize,
    /// Offset `j` of `coefficients[0]` (non-positive).
    pub first_offset: i64,
    /// `c_j = z[d* + j·sps]` for every `j` inside the response support.
    pub coefficients: Vec<f64>,
    pub c0_sq: f64,
    pub isi_sum: f64,
}

impl IsiProfile {
    pub fn from_response(response: Vec<f64>, sps: usize) -> Result<Self> {
        if response.is_empty() || sps == 0 {
            return Err(invalid("empty response or zero sps"));
        }
        let mut delay = 0;
        for (i, v) in response.iter().enumerate() {
            if v.abs() > response[delay].abs() {
                delay = i;
            }
        }
        let before = delay / sps;
        let coefficients: Vec<f64> = response[delay - before * sps..].iter().step_by(sps).copied().collect();
        let c0 = response[delay];
        let total: f64 = coefficients.iter().map(|c| c * c).sum();
        Ok(Self {
            response,
            sps,
            delay_index: delay,
            first_offset: -(before as i64),
            c0_sq: c0 * c0,
            isi_sum: (total - c0 * c0).max(0.0),
            coefficients,
        })
    }

    /// `c_j`, zero outside the support.
    pub fn c(&self, j: i64) -> f64 {
        let idx = j - self.first_offset;
        if idx < 0 {
            return 0.0;
        }
        self.coefficients.get(idx as usize).copied().unwrap_or(0.0)
    }

    /// Largest positive offset with a stored coefficient.
    pub fn last_offset(&self) -> i64 {
        self.first_offset + self.coefficients.len() as i64 - 1
    }
}

/// `z = h_tx * lpf * h_rx` and its ISI coefficients.
pub fn effective_response(h_tx: &FirFilter, lpf: &FirFilter, h_rx: &FirFilter, sps: usize) -> Result<IsiProfile> {
    let z = dsp::convolve_taps(&dsp::convolve_taps(&h_tx.taps, &lpf.taps), &h_rx.taps);
    IsiProfile::from_response(z, sps)
}

/// Converter noise referred to the decision point, photons per symbol.
/// The DAC term has the channel loss removed so that it enters the budget
/// as `τ_ch·n_d`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConverterReports {
    pub dac: QuantizationReport,
    pub adc: QuantizationReport,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub tx_symbols: Vec<Complex64>,
    pub rx_symbols: Vec<Complex64>,
    pub reports: ConverterReports,
    pub isi: IsiProfile,
    pub channel_transmittance: f64,
}

/// A validated link with its LPF realized once.
#[derive(Debug, Clone)]
pub struct Link {
    config: LinkConfig,
    lpf: FirFilter,
    tau_ch: f64,
}

struct Propagated {
    tx: Vec<Complex64>,
    rx: Vec<Complex64>,
    physical: IsiProfile,
    measured: Option<ConverterReports>,
}

impl Link {
    pub fn new(config: LinkConfig) -> Result<Self> {
        config.validate()?;
        let lpf = config.build_lpf()?;
        let tau_ch = config.channel_transmittance();
        Ok(Self { config, lpf, tau_ch })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    pub fn lpf(&self) -> &FirFilter {
        &self.lpf
    }

    pub fn channel_transmittance(&self) -> f64 {
        self.tau_ch
    }

    /// ISI profile according to the configured [`IsiMode`].
    pub fn isi_profile(&self, h_tx: &FirFilter, h_rx: &FirFilter) -> Result<IsiProfile> {
        match self.config.isi_mode {
            IsiMode::IncludeLpf => effective_response(h_tx, &self.lpf, h_rx, self.config.sps),
            IsiMode::ExcludeLpf => {
                IsiProfile::from_response(dsp::convolve_taps(&h_tx.taps, &h_rx.taps), self.config.sps)
            }
        }
    }

    /// Runs the full chain including decision-point converter noise.
    pub fn run(&self, h_tx: &FirFilter, h_rx: &FirFilter, mean_photon: f64, seed: u64) -> Result<ChainOutput> {
        let p = self.propagate(h_tx, h_rx, mean_photon, seed, true)?;
        let isi = match self.config.isi_mode {
            IsiMode::IncludeLpf => p.physical,
            IsiMode::ExcludeLpf => self.isi_profile(h_tx, h_rx)?,
        };
        Ok(ChainOutput {
            tx_symbols: p.tx,
            rx_symbols: p.rx,
            reports: p.measured.unwrap_or_default(),
            isi,
            channel_transmittance: self.tau_ch,
        })
    }

    /// Aligned `(tx, rx)` symbols only; skips the converter measurements.
    pub fn symbols(
        &self,
        h_tx: &FirFilter,
        h_rx: &FirFilter,
        mean_photon: f64,
        seed: u64,
    ) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let p = self.propagate(h_tx, h_rx, mean_photon, seed, false)?;
        Ok((p.tx, p.rx))
    }

    fn propagate(
        &self,
        h_tx: &FirFilter,
        h_rx: &FirFilter,
        mean_photon: f64,
        seed: u64,
        measure: bool,
    ) -> Result<Propagated> {
        let sps = self.config.sps;
        let n = self.config.num_symbols;
        let physical = effective_response(h_tx, &self.lpf, h_rx, sps)?;
        let delay = physical.delay_index;
        let pre = physical.last_offset() as usize;
        let post = delay / sps;
        if n <= pre + post {
            return Err(invalid(format!(
                "{n} symbols cannot cover a response spanning {} symbols",
                pre + post + 1
            )));
        }
        // Symbols whose full ISI window lies inside the block.
        let count = n - pre - post;
        let first_sample = delay + pre * sps;

        let block = dsp::generate_symbols(n, mean_photon, seed)?;
        let shaped = dsp::convolve(&dsp::upsample(&block, sps)?, h_tx);
        let dac = Quantizer::calibrate(self.config.dac, &shaped)?;
        let (dac_out, _) = dac.apply(&shaped);

        let analog = dsp::convolve(&dac_out, &self.lpf).scaled(self.tau_ch.sqrt());
        let adc = Quantizer::calibrate(self.config.adc, &analog)?;
        let (adc_out, _) = adc.apply(&analog);

        let rx = dsp::convolve_decimated(&adc_out.samples, &h_rx.taps, first_sample, sps, count);
        let tx = block.symbols[pre..pre + count].to_vec();

        let measured = if measure {
            let tail = dsp::convolve_taps(&self.lpf.taps, &h_rx.taps);
            let y_dac = dsp::convolve_decimated(&dac_out.samples, &tail, first_sample, sps, count);
            let y_dac_ref = dsp::convolve_decimated(&shaped.samples, &tail, first_sample, sps, count);
            let mut dac_report = quantization::measure_noise_samples(&y_dac, &y_dac_ref)?;
            dac_report.clip_fraction = dac.measure(&dac_out, &shaped)?.clip_fraction;

            let y_adc_ref = dsp::convolve_decimated(&analog.samples, &h_rx.taps, first_sample, sps, count);
            let mut adc_report = quantization::measure_noise_samples(&rx, &y_adc_ref)?;
            adc_report.clip_fraction = adc.measure(&adc_out, &analog)?.clip_fraction;
            Some(ConverterReports {
                dac: dac_report,
                adc: adc_report,
            })
        } else {
            None
        };

        Ok(Propagated {
            tx,
            rx,
            physical,
            measured,
        })
    }
}

/// One-shot convenience over [`Link::run`] using `config.seed`.
pub fn run_chain(config: &LinkConfig, h_tx: &FirFilter, h_rx: &FirFilter, mean_photon: f64) -> Result<ChainOutput> {
    Link::new(config.clone())?.run(h_tx, h_rx, mean_photon, config.seed)
}

/// Signal-independent view of a quantized signal pair, for callers that
/// hold raw sample vectors.
pub fn converter_noise(quantized: &[Complex64], reference: &[Complex64], sps: usize) -> Result<QuantizationReport> {
    quantization::measure_noise(
        &SampledSignal::new(quantized.to_vec(), sps)?,
        &SampledSignal::new(reference.to_vec(), sps)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub tau_hat: f64,
    /// Residual power per symbol; may be slightly negative only through
    /// rounding, never clipped here.
    pub n_ex_hat: f64,
    /// Standard error of `n_ex_hat` from the sample spread of `|residual|^2`.
    pub n_ex_std_error: f64,
    pub num_symbols_used: usize,
}

impl ParameterEstimate {
    /// Residual excess noise clipped at zero, for key-rate use.
    pub fn n_ex_for_reward(&self) -> f64 {
        self.n_ex_hat.max(0.0)
    }
}

/// Least-squares gain and residual power from aligned symbol pairs.
pub fn estimate_parameters(tx: &[Complex64], rx: &[Complex64]) -> Result<ParameterEstimate> {
    if tx.len() != rx.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", tx.len(), rx.len())));
    }
    if tx.len() < MIN_ESTIMATION_SYMBOLS {
        return Err(invalid(format!(
            "need at least {MIN_ESTIMATION_SYMBOLS} symbol pairs, got {}",
            tx.len()
        )));
    }
    let xx: f64 = tx.iter().map(|x| x.norm_sqr()).sum();
    if !(xx > 0.0) {
        return Err(invalid("transmitted symbols carry no power"));
    }
    let yx: f64 = tx.iter().zip(rx).map(|(x, y)| (y * x.conj()).re).sum();
    let gain = yx / xx;
    let n = tx.len() as f64;
    let residuals: Vec<f64> = tx.iter().zip(rx).map(|(x, y)| (y - x * gain).norm_sqr()).collect();
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ParameterEstimate {
        tau_hat: (gain * gain).min(1.0),
        n_ex_hat: mean,
        n_ex_std_error: (var / n).sqrt(),
        num_symbols_used: tx.len(),
    })
}

/// The four-term excess-noise budget, output-referred, in photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub channel: f64,
    pub isi: f64,
    pub dac: f64,
    pub adc: f64,
    pub total: f64,
    /// Effective transmittance `|c_0|^2·τ_ch`.
    pub transmittance: f64,
}

pub fn assemble_budget(
    config: &LinkConfig,
    isi: &IsiProfile,
    mean_photon: f64,
    dac: &QuantizationReport,
    adc: &QuantizationReport,
) -> NoiseBudget {
    let tau_ch = config.channel_transmittance();
    let channel = config.channel_excess_photons;
    let isi_term = tau_ch * mean_photon * isi.isi_sum;
    let dac_term = tau_ch * dac.noise_power;
    let adc_term = adc.noise_power;
    NoiseBudget {
        channel,
        isi: isi_term,
        dac: dac_term,
        adc: adc_term,
        total: channel + isi_term + dac_term + adc_term,
        transmittance: isi.c0_sq * tau_ch,
    }
}
