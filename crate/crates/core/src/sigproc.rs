//! Time-domain signal operations.
//!
//! Everything here is a pure function of its inputs. Multichannel signals are
//! processed channel by channel.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Sampling rate used by the analysis front end.
pub const ANALYSIS_RATE_HZ: f64 = 128.0;

/// Resampler kernel half-width, counted in samples of the slower of the two rates.
pub const RESAMPLE_HALF_WIDTH: usize = 32;

/// Anti-alias cutoff as a fraction of the slower rate.
pub const RESAMPLE_CUTOFF_FRACTION: f64 = 0.45;

/// Bandpass length at [`ANALYSIS_RATE_HZ`]; other rates scale it to keep the same duration.
pub const BANDPASS_TAPS: usize = 255;

/// A uniformly sampled, possibly multichannel, real waveform.
///
/// Samples are stored row-major as `[channel][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    channel_count: usize,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, channel_count: usize) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if channel_count == 0 {
            return Err(Error::InvalidArgument("channel count must be positive".into()));
        }
        if !samples.len().is_multiple_of(channel_count) {
            return Err(Error::InvalidArgument(format!(
                "{} samples do not divide into {channel_count} channels",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            channel_count,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        Self::new(samples, sample_rate_hz, 1)
    }

    /// Builds a signal from equal-length channel rows.
    pub fn from_channels(channels: &[Vec<f64>], sample_rate_hz: f64) -> Result<Self> {
        let n = channels.first().map_or(0, Vec::len);
        if let Some(bad) = channels.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: bad.len(),
            });
        }
        Self::new(channels.concat(), sample_rate_hz, channels.len())
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    /// Samples per channel.
    pub fn n_samples(&self) -> usize {
        self.samples.len() / self.channel_count
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        let n = self.n_samples();
        &self.samples[index * n..(index + 1) * n]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.channel_count).map(move |c| self.channel(c))
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    fn map_channels(&self, sample_rate_hz: f64, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = self.channels().map(f).collect();
        Self::from_channels(&rows, sample_rate_hz)
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hamming taper on `u` in [-1, 1], zero outside.
fn hamming(u: f64) -> f64 {
    if u.abs() > 1.0 {
        0.0
    } else {
        0.54 + 0.46 * (PI * u).cos()
    }
}

/// Band-limited resampling by windowed-sinc interpolation at the exact output instants.
///
/// The output has `floor(n_in * target / source)` samples. The kernel is a
/// Hamming-tapered sinc with cutoff `0.45 * min(source, target)` spanning
/// ±32 samples of the slower rate, and its weights are normalized to unit
/// sum at every output instant so DC passes exactly. Samples within one
/// kernel half-width of either end see a truncated kernel.
pub fn resample(signal: &Signal, target_rate_hz: f64) -> Result<Signal> {
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    if !(target_rate_hz > 0.0 && target_rate_hz.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target rate must be positive, got {target_rate_hz}"
        )));
    }
    let source = signal.sample_rate_hz();
    if source == target_rate_hz {
        return Ok(signal.clone());
    }
    let slow = source.min(target_rate_hz);
    let cutoff = RESAMPLE_CUTOFF_FRACTION * slow;
    // Kernel half-width in input samples.
    let half = RESAMPLE_HALF_WIDTH as f64 * source / slow;
    let n_in = signal.n_samples();
    let n_out = (n_in as f64 * target_rate_hz / source).floor() as usize;
    let gain = 2.0 * cutoff / source;
    let step = source / target_rate_hz;

    signal.map_channels(target_rate_hz, |x| {
        (0..n_out)
            .map(|m| {
                let center = m as f64 * step;
                let first = (center - half).ceil() as isize;
                let last = (center + half).floor() as isize;
                let (mut acc, mut norm) = (0.0, 0.0);
                for n in first..=last {
                    let offset = n as f64 - center;
                    let w = gain * sinc(2.0 * cutoff * offset / source) * hamming(offset / half);
                    norm += w;
                    if (0..n_in as isize).contains(&n) {
                        acc += x[n as usize] * w;
                    }
                }
                acc / norm
            })
            .collect()
    })
}

/// Number of FIR taps used by [`bandpass`] at `sample_rate_hz` (always odd).
pub fn bandpass_taps(sample_rate_hz: f64) -> usize {
    let half = (BANDPASS_TAPS / 2) as f64 * sample_rate_hz / ANALYSIS_RATE_HZ;
    2 * (half.round() as usize).max(1) + 1
}

/// Hamming-windowed sinc bandpass coefficients.
pub fn design_bandpass(low_hz: f64, high_hz: f64, sample_rate_hz: f64, taps: usize) -> Vec<f64> {
    let mid = (taps / 2) as f64;
    let lo = low_hz / sample_rate_hz;
    let hi = high_hz / sample_rate_hz;
    (0..taps)
        .map(|k| {
            let m = k as f64 - mid;
            let ideal = 2.0 * hi * sinc(2.0 * hi * m) - 2.0 * lo * sinc(2.0 * lo * m);
            ideal * hamming(m / mid)
        })
        .collect()
}

/// Linear-phase FIR bandpass with the group delay removed, so output sample
/// `n` lines up with input sample `n`.
///
/// The input is treated as zero outside its support; the first and last
/// `taps / 2` samples therefore carry the filter's start-up transient.
pub fn bandpass(signal: &Signal, low_hz: f64, high_hz: f64) -> Result<Signal> {
    let fs = signal.sample_rate_hz();
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "bandpass edges must satisfy 0 < {low_hz} < {high_hz} < {}",
            fs / 2.0
        )));
    }
    let taps = design_bandpass(low_hz, high_hz, fs, bandpass_taps(fs));
    signal.map_channels(fs, |x| fir_zero_phase(x, &taps))
}

fn fir_zero_phase(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let delay = taps.len() / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            // y[i] = sum_k taps[k] * x[i + delay - k]
            let k_lo = (i + delay + 1).saturating_sub(n);
            let k_hi = (i + delay).min(taps.len() - 1);
            (k_lo..=k_hi).map(|k| taps[k] * x[i + delay - k]).sum()
        })
        .collect()
}

/// Normalized, truncated Gaussian kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    weights: Vec<f64>,
}

impl GaussianKernel {
    /// Kernel with radius `ceil(4 * sigma)`, renormalized to unit sum.
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        let radius = (4.0 * sigma).ceil() as usize;
        let raw: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let d = i as f64 - radius as f64;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            sigma,
            radius,
            weights: raw.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Convolves `series` with the kernel using mirror padding that excludes
    /// the edge sample (`c b | a b c`).
    pub fn apply(&self, series: &[f64]) -> Result<Vec<f64>> {
        if series.is_empty() {
            return Err(Error::EmptySignal);
        }
        let n = series.len();
        let r = self.radius as isize;
        Ok((0..n as isize)
            .map(|i| {
                self.weights
                    .iter()
                    .zip(-r..=r)
                    .map(|(w, d)| w * series[reflect_index(i + d, n)])
                    .sum()
            })
            .collect())
    }
}

/// Maps any integer index into `0..n` by mirror reflection without repeating
/// the edge sample.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

pub fn gaussian_smooth(series: &[f64], sigma: f64) -> Result<Vec<f64>> {
    GaussianKernel::new(sigma)?.apply(series)
}

/// Forward difference `d[i] = s[i + 1] - s[i]`; one sample shorter than the input.
pub fn first_derivative(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            n_samples: series.len(),
            required: 2,
        });
    }
    Ok(series.windows(2).map(|w| w[1] - w[0]).collect())
}
