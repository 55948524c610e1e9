//! Uniform mid-rise DAC/ADC model and noise measurement.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::SampledSignal;
use crate::error::{invalid, Result};

/// Largest supported resolution; beyond this the step drops below f64
/// resolution of typical signal levels.
pub const MAX_BITS: u32 = 48;

fn default_clipping_factor() -> f64 {
    4.0
}

/// Converter resolution and loading. The full-scale amplitude is
/// `clipping_factor` times the per-rail RMS of the converter's input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSpec {
    pub bits: u32,
    #[serde(default = "default_clipping_factor")]
    pub clipping_factor: f64,
}

impl QuantizerSpec {
    pub fn new(bits: u32, clipping_factor: f64) -> Result<Self> {
        let spec = Self { bits, clipping_factor };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > MAX_BITS {
            return Err(invalid(format!("quantizer bits must be in 1..={MAX_BITS}, got {}", self.bits)));
        }
        if !(self.clipping_factor > 0.0) || !self.clipping_factor.is_finite() {
            return Err(invalid("clipping factor must be positive"));
        }
        Ok(())
    }

    pub fn levels(&self) -> f64 {
        2f64.powi(self.bits as i32)
    }
}

/// A quantizer with its full-scale amplitude frozen, one per rail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub spec: QuantizerSpec,
    /// Full-scale amplitude `A` of the in-phase and quadrature rails.
    pub full_scale: [f64; 2],
}

/// Measured converter noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuantizationReport {
    /// Mean `|y_q - y_ref|^2` per complex sample, both rails summed.
    pub noise_power: f64,
    /// Fraction of rail samples that reached the clipping range.
    pub clip_fraction: f64,
}

fn rail_rms(samples: &[Complex64], rail: usize) -> f64 {
    let n = samples.len() as f64;
    let sum: f64 = samples
        .iter()
        .map(|s| if rail == 0 { s.re * s.re } else { s.im * s.im })
        .sum();
    (sum / n).sqrt()
}

impl Quantizer {
    /// Freezes `A = κ·σ` per rail from `reference`.
    pub fn calibrate(spec: QuantizerSpec, reference: &SampledSignal) -> Result<Self> {
        spec.validate()?;
        if reference.is_empty() {
            return Err(invalid("cannot calibrate a quantizer on an empty signal"));
        }
        let mut full_scale = [0.0; 2];
        for (rail, a) in full_scale.iter_mut().enumerate() {
            let rms = rail_rms(&reference.samples, rail);
            if !(rms > 0.0) || !rms.is_finite() {
                return Err(invalid("zero-RMS rail: quantizer full scale undefined"));
            }
            *a = spec.clipping_factor * rms;
        }
        Ok(Self { spec, full_scale })
    }

    pub fn step(&self, rail: usize) -> f64 {
        2.0 * self.full_scale[rail] / self.spec.levels()
    }

    fn quantize_value(&self, v: f64, rail: usize) -> (f64, bool) {
        let step = self.step(rail);
        let half_levels = self.spec.levels() / 2.0;
        let index = (v / step).floor();
        let clipped = v.abs() >= self.full_scale[rail];
        let index = index.clamp(-half_levels, half_levels - 1.0);
        ((index + 0.5) * step, clipped)
    }

    /// Clips and maps each rail onto the nearest mid-rise level.
    /// Returns the quantized signal and the number of clipped rail samples.
    pub fn apply(&self, signal: &SampledSignal) -> (SampledSignal, usize) {
        let mut clipped = 0;
        let samples = signal
            .samples
            .iter()
            .map(|s| {
                let (re, c_re) = self.quantize_value(s.re, 0);
                let (im, c_im) = self.quantize_value(s.im, 1);
                clipped += c_re as usize + c_im as usize;
                Complex64::new(re, im)
            })
            .collect();
        (
            SampledSignal {
                samples,
                sps: signal.sps,
            },
            clipped,
        )
    }

    /// Noise report that also counts clipping of `reference` against this
    /// quantizer's range.
    pub fn measure(&self, quantized: &SampledSignal, reference: &SampledSignal) -> Result<QuantizationReport> {
        let mut report = measure_noise(quantized, reference)?;
        if !reference.is_empty() {
            let hits: usize = reference
                .samples
                .iter()
                .map(|s| {
                    (s.re.abs() >= self.full_scale[0]) as usize + (s.im.abs() >= self.full_scale[1]) as usize
                })
                .sum();
            report.clip_fraction = hits as f64 / (2 * reference.len()) as f64;
        }
        Ok(report)
    }
}

/// Calibrates on `signal` itself and quantizes it.
pub fn quantize(signal: &SampledSignal, spec: QuantizerSpec) -> Result<SampledSignal> {
    if signal.is_empty() {
        return Err(invalid("cannot quantize an empty signal"));
    }
    let q = Quantizer::calibrate(spec, signal)?;
    Ok(q.apply(signal).0)
}

/// Mean squared error between two equal-length signals. The clip fraction
/// is left at zero; use [`Quantizer::measure`] when the range is known.
pub fn measure_noise(quantized: &SampledSignal, reference: &SampledSignal) -> Result<QuantizationReport> {
    measure_noise_samples(&quantized.samples, &reference.samples)
}

pub(crate) fn measure_noise_samples(quantized: &[Complex64], reference: &[Complex64]) -> Result<QuantizationReport> {
    if quantized.len() != reference.len() {
        return Err(invalid(format!(
            "length mismatch: {} vs {}",
            quantized.len(),
            reference.len()
        )));
    }
    let noise_power = if quantized.is_empty() {
        0.0
    } else {
        quantized
            .iter()
            .zip(reference)
            .map(|(q, r)| (q - r).norm_sqr())
            .sum::<f64>()
            / quantized.len() as f64
    };
    Ok(QuantizationReport {
        noise_power,
        clip_fraction: 0.0,
    })
}
