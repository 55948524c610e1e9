//! Deterministic signal-processing primitives.
//!
//! Complex baseband signals are stored as [`Complex64`] samples and are
//! filtered by real taps, so the in-phase and quadrature rails never mix.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed;

/// Default oversampling of the chain.
pub const DEFAULT_SPS: usize = 4;

/// Filters longer than this are applied through an FFT.
const DIRECT_CONV_MAX_TAPS: usize = 64;

/// A discrete-time complex signal at `sps` samples per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub samples: Vec<Complex64>,
    pub sps: usize,
}

impl SampledSignal {
    pub fn new(samples: Vec<Complex64>, sps: usize) -> Result<Self> {
        if sps == 0 {
            return Err(invalid("samples per symbol must be at least 1"));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(invalid("signal contains non-finite samples"));
        }
        Ok(Self { samples, sps })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of `|s|^2` over samples; zero for an empty signal.
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sps: self.sps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterRole {
    TxShaper,
    RxMatched,
    Lpf,
    Other,
}

/// Real FIR taps with a role tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub role: FilterRole,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>, role: FilterRole) -> Result<Self> {
        if taps.is_empty() {
            return Err(invalid("a filter needs at least one tap"));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(invalid("filter taps must be finite"));
        }
        Ok(Self { taps, role })
    }

    /// The single-tap identity filter `[1]`.
    pub fn identity(role: FilterRole) -> Self {
        Self {
            taps: vec![1.0],
            role,
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    /// Rescales to unit energy. Fails on an all-zero filter.
    pub fn normalized(&self) -> Result<Self> {
        let energy = self.energy();
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(invalid("cannot normalize a zero-energy filter"));
        }
        let g = energy.sqrt().recip();
        Ok(Self {
            taps: self.taps.iter().map(|t| t * g).collect(),
            role: self.role,
        })
    }

    /// Magnitude of the DTFT at `freq` cycles/sample.
    pub fn magnitude_at(&self, freq: f64) -> f64 {
        let w = -2.0 * PI * freq;
        self.taps
            .iter()
            .enumerate()
            .map(|(n, &t)| Complex64::from_polar(t, w * n as f64))
            .sum::<Complex64>()
            .norm()
    }
}

/// A block of complex symbols with the intended mean `|x|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSymbolBlock {
    pub symbols: Vec<Complex64>,
    pub variance_target: f64,
}

impl ComplexSymbolBlock {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

pub(crate) fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Circularly-symmetric complex Gaussian symbols with `E|x|^2 = mean_photon`.
pub fn generate_symbols(count: usize, mean_photon: f64, seed: u64) -> Result<ComplexSymbolBlock> {
    if count == 0 {
        return Err(invalid("symbol count must be at least 1"));
    }
    if !(mean_photon > 0.0) || !mean_photon.is_finite() {
        return Err(invalid(format!("mean photon number must be positive, got {mean_photon}")));
    }
    let scale = (mean_photon / 2.0).sqrt();
    let mut rng = seed::rng(seed);
    let symbols = (0..count)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    Ok(ComplexSymbolBlock {
        symbols,
        variance_target: mean_photon,
    })
}

/// Zero-stuffing interpolation: symbol `k` lands on sample `k * sps`.
pub fn upsample(block: &ComplexSymbolBlock, sps: usize) -> Result<SampledSignal> {
    if sps == 0 {
        return Err(invalid("samples per symbol must be at least 1"));
    }
    let mut samples = vec![Complex64::new(0.0, 0.0); block.len() * sps];
    for (k, &s) in block.symbols.iter().enumerate() {
        samples[k * sps] = s;
    }
    Ok(SampledSignal { samples, sps })
}

/// Keeps sample `k * sps + phase` for every whole symbol period.
pub fn downsample(signal: &SampledSignal, sps: usize, phase: usize) -> Result<ComplexSymbolBlock> {
    if sps == 0 {
        return Err(invalid("samples per symbol must be at least 1"));
    }
    if phase >= sps {
        return Err(invalid(format!("phase {phase} out of range for sps {sps}")));
    }
    let symbols: Vec<Complex64> = signal.samples.iter().skip(phase).step_by(sps).copied().collect();
    let variance_target = mean_power(&symbols);
    Ok(ComplexSymbolBlock {
        symbols,
        variance_target,
    })
}

/// Full linear convolution; output length `len + taps - 1`.
pub fn convolve(signal: &SampledSignal, filter: &FirFilter) -> SampledSignal {
    SampledSignal {
        samples: convolve_samples(&signal.samples, &filter.taps),
        sps: signal.sps,
    }
}

pub(crate) fn convolve_samples(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    if h.len().min(x.len()) <= DIRECT_CONV_MAX_TAPS {
        convolve_direct(x, h)
    } else {
        convolve_fft(x, h)
    }
}

fn convolve_direct(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); x.len() + h.len() - 1];
    if h.len() <= x.len() {
        for (m, &t) in h.iter().enumerate() {
            for (o, &s) in out[m..m + x.len()].iter_mut().zip(x) {
                *o += s * t;
            }
        }
    } else {
        for (n, &s) in x.iter().enumerate() {
            for (o, &t) in out[n..n + h.len()].iter_mut().zip(h) {
                *o += s * t;
            }
        }
    }
    out
}

fn convolve_fft(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut xs = vec![Complex64::new(0.0, 0.0); n];
    xs[..x.len()].copy_from_slice(x);
    let mut hs = vec![Complex64::new(0.0, 0.0); n];
    for (d, &t) in hs.iter_mut().zip(h) {
        d.re = t;
    }
    fwd.process(&mut xs);
    fwd.process(&mut hs);
    for (a, b) in xs.iter_mut().zip(&hs) {
        *a *= b;
    }
    inv.process(&mut xs);
    let scale = 1.0 / n as f64;
    xs.truncate(out_len);
    for v in &mut xs {
        *v *= scale;
    }
    xs
}

/// Outputs `(x * h)[first + k * step]` for `k in 0..count`, computing only
/// those samples.
pub(crate) fn convolve_decimated(
    x: &[Complex64],
    h: &[f64],
    first: usize,
    step: usize,
    count: usize,
) -> Vec<Complex64> {
    (0..count)
        .map(|k| {
            let n = first + k * step;
            let lo = (n + 1).saturating_sub(x.len());
            let hi = n.min(h.len() - 1);
            let mut acc = Complex64::new(0.0, 0.0);
            for m in lo..=hi {
                acc += x[n - m] * h[m];
            }
            acc
        })
        .collect()
}

/// Convolution of two tap vectors.
pub fn convolve_taps(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Root-raised-cosine impulse response at `t` symbol periods.
fn rrc_impulse(t: f64, rolloff: f64) -> f64 {
    const EPS: f64 = 1e-10;
    if t.abs() < EPS {
        return 1.0 - rolloff + 4.0 * rolloff / PI;
    }
    let quarter = 1.0 / (4.0 * rolloff);
    if (t.abs() - quarter).abs() < EPS {
        let arg = PI / (4.0 * rolloff);
        return rolloff / 2f64.sqrt()
            * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    let num = (PI * t * (1.0 - rolloff)).sin() + 4.0 * rolloff * t * (PI * t * (1.0 + rolloff)).cos();
    let den = PI * t * (1.0 - (4.0 * rolloff * t).powi(2));
    num / den
}

/// Unit-energy root-raised-cosine taps spanning `span_symbols` symbols
/// (`span_symbols * sps + 1` taps).
pub fn rrc_filter(rolloff: f64, span_symbols: usize, sps: usize) -> Result<FirFilter> {
    if span_symbols == 0 {
        return Err(invalid("RRC span must be at least one symbol"));
    }
    rrc_taps(rolloff, span_symbols * sps + 1, sps)
}

/// Unit-energy RRC truncated to exactly `num_taps` taps, centred on
/// `(num_taps - 1) / 2`. Even lengths sample the pulse at half-sample
/// offsets.
pub fn rrc_taps(rolloff: f64, num_taps: usize, sps: usize) -> Result<FirFilter> {
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(invalid(format!("rolloff must lie in (0, 1], got {rolloff}")));
    }
    if sps == 0 || num_taps == 0 {
        return Err(invalid("RRC needs sps >= 1 and at least one tap"));
    }
    let centre = (num_taps as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..num_taps)
        .map(|i| {
            // Evaluate from the centre outward so the taps are exactly symmetric.
            let offset = (i as f64 - centre).abs();
            rrc_impulse(offset / sps as f64, rolloff)
        })
        .collect();
    FirFilter::new(taps, FilterRole::Other)?.normalized()
}

/// Linear-phase super-Gaussian low-pass, `|H(f)| = exp(-(ln2/2) (f/f3dB)^(2 order))`,
/// with `f3dB = bandwidth_norm` in units of the symbol rate. Realized by
/// frequency sampling on a dense grid and symmetric truncation; DC gain is 1.
pub fn super_gaussian_lpf(order: u32, bandwidth_norm: f64, num_taps: usize, sps: usize) -> Result<FirFilter> {
    if order == 0 {
        return Err(invalid("super-Gaussian order must be at least 1"));
    }
    if !(bandwidth_norm > 0.0) || !bandwidth_norm.is_finite() {
        return Err(invalid("LPF bandwidth must be positive"));
    }
    if num_taps % 2 == 0 {
        return Err(invalid(format!("LPF tap count must be odd, got {num_taps}")));
    }
    if sps == 0 {
        return Err(invalid("samples per symbol must be at least 1"));
    }
    let n = (16 * num_taps).next_power_of_two().max(1024);
    let half = (num_taps - 1) / 2;
    let exponent = 2.0 * order as f64;
    let response = |k: usize| {
        let bin = if k <= n / 2 { k } else { n - k };
        let f = bin as f64 / n as f64 * sps as f64 / bandwidth_norm;
        (-(LN_2 / 2.0) * f.powf(exponent)).exp()
    };
    // Zero-phase inverse DFT of a real, even spectrum.
    let mut spectrum: Vec<Complex64> = (0..n).map(|k| Complex64::new(response(k), 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_inverse(n).process(&mut spectrum);
    let taps: Vec<f64> = (0..num_taps)
        .map(|i| {
            let m = (i + n - half) % n;
            // The two halves of an even spectrum give bitwise-different
            // rounding; average them to keep the taps exactly symmetric.
            let mirror = (n - m) % n;
            0.5 * (spectrum[m].re + spectrum[mirror].re) / n as f64
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    FirFilter::new(taps.iter().map(|t| t / dc).collect(), FilterRole::Lpf)
}
