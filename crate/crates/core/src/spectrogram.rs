//! Short-time power estimation and aggregation into frequency bands.
//!
//! Power is normalized as `P[k] = |X[k]|^2 / N^2` over the one-sided bins
//! `k = 0..=N/2`, with `X` the unnormalized DFT. Under this convention the
//! mean square of a window equals `P[0] + P[N/2] + 2 * sum(P[1..N/2])`, and
//! an on-bin cosine of amplitude `A` puts `(A/2)^2` into its bin.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowGeometry {
    pub window_len: usize,
    pub hop: usize,
}

impl WindowGeometry {
    pub fn new(window_len: usize, overlap: usize) -> Result<Self> {
        if window_len == 0 || overlap >= window_len {
            return Err(Error::InvalidArgument(format!(
                "window of {window_len} samples cannot overlap by {overlap}"
            )));
        }
        Ok(Self {
            window_len,
            hop: window_len - overlap,
        })
    }

    pub fn overlap(&self) -> usize {
        self.window_len - self.hop
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::InvalidArgument(format!(
                "hop {} must lie in 1..={}",
                self.hop, self.window_len
            )));
        }
        Ok(())
    }
}

impl Default for WindowGeometry {
    /// 64-sample windows (500 ms at 128 Hz) overlapping by 8 samples.
    fn default() -> Self {
        Self {
            window_len: 64,
            hop: 56,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandSpec {
    pub fn new(name: impl Into<String>, low_hz: f64, high_hz: f64) -> Result<Self> {
        let name = name.into();
        if !(low_hz <= high_hz) || low_hz < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "band {name} has invalid edges [{low_hz}, {high_hz}]"
            )));
        }
        Ok(Self { name, low_hz, high_hz })
    }
}

/// Theta, alpha, beta and gamma with inclusive edges.
pub fn canonical_bands() -> Vec<BandSpec> {
    [
        ("theta", 3.0, 7.0),
        ("alpha", 8.0, 15.0),
        ("beta", 16.0, 31.0),
        ("gamma", 32.0, 45.0),
    ]
    .into_iter()
    .map(|(name, low_hz, high_hz)| BandSpec {
        name: name.into(),
        low_hz,
        high_hz,
    })
    .collect()
}

/// Taper applied to each analysis window before the DFT.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taper {
    #[default]
    Rectangular,
    Hann,
}

impl Taper {
    fn coefficients(self, n: usize) -> Option<Vec<f64>> {
        match self {
            Taper::Rectangular => None,
            Taper::Hann => Some(
                (0..n)
                    .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                    .collect(),
            ),
        }
    }
}

pub fn window_count(n_samples: usize, geometry: &WindowGeometry) -> usize {
    if n_samples < geometry.window_len {
        0
    } else {
        (n_samples - geometry.window_len) / geometry.hop + 1
    }
}

/// Bins whose center frequency lies inside the band, edges inclusive.
pub fn band_bins(band: &BandSpec, window_len: usize, sample_rate_hz: f64) -> Result<Vec<usize>> {
    if window_len == 0 || !window_len.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "window length must be even, got {window_len}"
        )));
    }
    let resolution = sample_rate_hz / window_len as f64;
    let bins: Vec<usize> = (0..=window_len / 2)
        .filter(|&k| {
            let f = k as f64 * resolution;
            band.low_hz <= f && f <= band.high_hz
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::EmptyBand {
            name: band.name.clone(),
            low_hz: band.low_hz,
            high_hz: band.high_hz,
        });
    }
    Ok(bins)
}

/// Reusable one-sided periodogram for a fixed window length.
pub struct Periodogram {
    fft: Arc<dyn Fft<f64>>,
    taper: Option<Vec<f64>>,
    len: usize,
}

impl Periodogram {
    pub fn new(len: usize, taper: Taper) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(len);
        Self {
            fft,
            taper: taper.coefficients(len),
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Returns `len / 2 + 1` power values.
    pub fn compute(&self, window: &[f64]) -> Result<Vec<f64>> {
        if window.len() != self.len {
            return Err(Error::DimensionMismatch {
                expected: self.len,
                actual: window.len(),
            });
        }
        let mut buf: Vec<Complex<f64>> = match &self.taper {
            None => window.iter().map(|&v| Complex::new(v, 0.0)).collect(),
            Some(w) => window.iter().zip(w).map(|(&v, &t)| Complex::new(v * t, 0.0)).collect(),
        };
        self.fft.process(&mut buf);
        let norm = (self.len * self.len) as f64;
        Ok(buf[..=self.len / 2].iter().map(|c| c.norm_sqr() / norm).collect())
    }
}

/// One-sided periodogram of a rectangular window.
pub fn periodogram(window: &[f64]) -> Result<Vec<f64>> {
    Periodogram::new(window.len(), Taper::Rectangular).compute(window)
}

/// Band powers over time: `values[b * n_windows + w]` is the mean power of
/// band `b` in window `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpectrogram {
    pub values: Vec<f64>,
    pub n_windows: usize,
    pub bands: Vec<BandSpec>,
    pub geometry: WindowGeometry,
    pub sample_rate_hz: f64,
}

impl BandSpectrogram {
    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn row(&self, band: usize) -> &[f64] {
        &self.values[band * self.n_windows..(band + 1) * self.n_windows]
    }

    pub fn get(&self, band: usize, window: usize) -> f64 {
        self.values[band * self.n_windows + window]
    }

    /// Elementwise mean of spectrograms sharing one layout.
    pub fn mean_of(items: &[BandSpectrogram]) -> Result<BandSpectrogram> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("no spectrograms to average".into()))?;
        let mut values = vec![0.0; first.values.len()];
        for s in items {
            if s.values.len() != values.len() || s.n_windows != first.n_windows {
                return Err(Error::DimensionMismatch {
                    expected: values.len(),
                    actual: s.values.len(),
                });
            }
            for (acc, v) in values.iter_mut().zip(&s.values) {
                *acc += v;
            }
        }
        let k = items.len() as f64;
        values.iter_mut().for_each(|v| *v /= k);
        Ok(BandSpectrogram {
            values,
            ..first.clone()
        })
    }
}

pub fn band_spectrogram(
    samples: &[f64],
    sample_rate_hz: f64,
    geometry: &WindowGeometry,
    bands: &[BandSpec],
) -> Result<BandSpectrogram> {
    band_spectrogram_tapered(samples, sample_rate_hz, geometry, bands, Taper::Rectangular)
}

pub fn band_spectrogram_tapered(
    samples: &[f64],
    sample_rate_hz: f64,
    geometry: &WindowGeometry,
    bands: &[BandSpec],
    taper: Taper,
) -> Result<BandSpectrogram> {
    geometry.validate()?;
    let n_windows = window_count(samples.len(), geometry);
    if n_windows == 0 {
        return Err(Error::TooShort {
            n_samples: samples.len(),
            required: geometry.window_len,
        });
    }
    let bins = bands
        .iter()
        .map(|b| band_bins(b, geometry.window_len, sample_rate_hz))
        .collect::<Result<Vec<_>>>()?;
    let pg = Periodogram::new(geometry.window_len, taper);
    let mut values = vec![0.0; bands.len() * n_windows];
    for w in 0..n_windows {
        let start = w * geometry.hop;
        let power = pg.compute(&samples[start..start + geometry.window_len])?;
        for (b, idx) in bins.iter().enumerate() {
            values[b * n_windows + w] = idx.iter().map(|&k| power[k]).sum::<f64>() / idx.len() as f64;
        }
    }
    Ok(BandSpectrogram {
        values,
        n_windows,
        bands: bands.to_vec(),
        geometry: *geometry,
        sample_rate_hz,
    })
}

/// Sidecar descriptor written next to a raw feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDescriptor {
    pub data_file: String,
    pub n_bands: usize,
    pub n_windows: usize,
    pub bands: Vec<BandSpec>,
    pub window_len: usize,
    pub overlap: usize,
    pub hop: usize,
    pub sample_rate_hz: f64,
}

/// Writes `<stem>.f32` (little-endian float32, row-major `[band][window]`)
/// and `<stem>.json`. Returns the two paths.
pub fn write_features(spec: &BandSpectrogram, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let data_path = stem.with_extension("f32");
    let desc_path = stem.with_extension("json");
    let bytes: Vec<u8> = spec.values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    let desc = FeatureDescriptor {
        data_file: data_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        n_bands: spec.n_bands(),
        n_windows: spec.n_windows,
        bands: spec.bands.clone(),
        window_len: spec.geometry.window_len,
        overlap: spec.geometry.overlap(),
        hop: spec.geometry.hop,
        sample_rate_hz: spec.sample_rate_hz,
    };
    let mut text = serde_json::to_string_pretty(&desc).map_err(|e| Error::json(&desc_path, e))?;
    text.push('\n');
    fs::write(&desc_path, text).map_err(|e| Error::io(&desc_path, e))?;
    Ok((data_path, desc_path))
}

/// Reads a feature file through its sidecar descriptor.
pub fn read_features(descriptor_path: &Path) -> Result<BandSpectrogram> {
    let text = fs::read_to_string(descriptor_path).map_err(|e| Error::io(descriptor_path, e))?;
    let desc: FeatureDescriptor = serde_json::from_str(&text).map_err(|e| Error::json(descriptor_path, e))?;
    if desc.bands.len() != desc.n_bands || desc.hop + desc.overlap != desc.window_len {
        return Err(Error::Manifest(format!(
            "{}: inconsistent descriptor",
            descriptor_path.display()
        )));
    }
    let data_path = descriptor_path.with_file_name(&desc.data_file);
    let values = crate::dataset::read_f32_file(&data_path, desc.n_bands * desc.n_windows, "features")?;
    Ok(BandSpectrogram {
        values,
        n_windows: desc.n_windows,
        bands: desc.bands,
        geometry: WindowGeometry {
            window_len: desc.window_len,
            hop: desc.hop,
        },
        sample_rate_hz: desc.sample_rate_hz,
    })
}
