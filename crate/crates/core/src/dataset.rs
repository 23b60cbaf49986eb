//! Trial containers, channel selection and the synthetic paired EEG/audio generator.
//!
//! A container is a directory holding `manifest.json` plus one raw file per
//! trial and modality. Raw files are little-endian float32, row-major
//! `[channel][sample]`; audio files carry a single channel.
//!
//! ```text
//! {
//!   "version": 1,
//!   "subject_id": "s01",
//!   "sample_rate_hz": 128.0,
//!   "audio_sample_rate_hz": 44100.0,      // optional, defaults to sample_rate_hz
//!   "channel_names": ["Fp1", ..., "O2"],
//!   "trials": [
//!     { "id": "t01", "eeg_file": "t01_eeg.f32", "audio_file": "t01_audio.f32",
//!       "n_samples": 7680,
//!       "audio_n_samples": 2646000,       // optional, defaults to n_samples
//!       "sample_rate_hz": 128.0 }         // optional, must equal the top-level rate
//!   ]
//! }
//! ```
//!
//! Converting DEAP: export each trial's 32 EEG channels (already at 128 Hz in
//! the preprocessed release) and the matching clip's mono audio to float32
//! files and list them in a manifest with DEAP's channel labels.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigproc::{Signal, ANALYSIS_RATE_HZ};
use crate::spectrogram::{band_bins, band_spectrogram, canonical_bands, window_count, WindowGeometry};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// DEAP electrode order.
pub const DEAP_CHANNELS: [&str; 32] = [
    "Fp1", "AF3", "F3", "F7", "FC5", "FC1", "C3", "T7", "CP5", "CP1", "P3", "P7", "PO3", "O1", "Oz", "Pz", "Fp2",
    "AF4", "Fz", "F4", "F8", "FC6", "FC2", "Cz", "C4", "T8", "CP6", "CP2", "P4", "P8", "PO4", "O2",
];

pub const TEMPORAL_CHANNELS: [&str; 2] = ["T7", "T8"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub subject_id: String,
    pub sample_rate_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_sample_rate_hz: Option<f64>,
    pub channel_names: Vec<String>,
    pub trials: Vec<TrialEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEntry {
    pub id: String,
    pub eeg_file: String,
    pub audio_file: String,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate_hz: Option<f64>,
}

/// One subject's paired EEG and audio trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub subject_id: String,
    pub channel_names: Vec<String>,
    pub trial_ids: Vec<String>,
    pub eeg_trials: Vec<Signal>,
    pub audio_trials: Vec<Signal>,
}

impl TrialSet {
    pub fn new(
        subject_id: impl Into<String>,
        channel_names: Vec<String>,
        trial_ids: Vec<String>,
        eeg_trials: Vec<Signal>,
        audio_trials: Vec<Signal>,
    ) -> Result<Self> {
        let ts = Self {
            subject_id: subject_id.into(),
            channel_names,
            trial_ids,
            eeg_trials,
            audio_trials,
        };
        ts.validate()?;
        Ok(ts)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.trial_ids.len();
        for len in [self.eeg_trials.len(), self.audio_trials.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        check_unique(&self.channel_names, Error::DuplicateChannel)?;
        check_unique(&self.trial_ids, |id| {
            Error::Manifest(format!("duplicate trial id {id}"))
        })?;
        if let Some(first) = self.eeg_trials.first() {
            for s in &self.eeg_trials {
                if s.channel_count() != self.channel_names.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.channel_names.len(),
                        actual: s.channel_count(),
                    });
                }
                if s.n_samples() != first.n_samples() {
                    return Err(Error::DimensionMismatch {
                        expected: first.n_samples(),
                        actual: s.n_samples(),
                    });
                }
                if s.sample_rate_hz() != first.sample_rate_hz() {
                    return Err(Error::InvalidArgument("EEG trials have different sample rates".into()));
                }
            }
        }
        if let Some(a) = self.audio_trials.iter().find(|a| a.channel_count() != 1) {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: a.channel_count(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trial_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trial_ids.is_empty()
    }
}

fn check_unique(names: &[String], err: impl Fn(String) -> Error) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(err(name.clone()));
        }
    }
    Ok(())
}

/// Reads a float32 LE file holding exactly `expected_len` values.
pub(crate) fn read_f32_file(path: &Path, expected_len: usize, trial: &str) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = (expected_len * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            trial: trial.to_string(),
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn write_f32_file(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Manifest(format!(
            "{}: unsupported version {}",
            path.display(),
            manifest.version
        )));
    }
    Ok(manifest)
}

/// Loads a container directory (or the `manifest.json` inside it).
pub fn load_trialset(path: &Path) -> Result<TrialSet> {
    let dir = if path.file_name().is_some_and(|n| n == MANIFEST_FILE) {
        path.parent().unwrap_or(Path::new("."))
    } else {
        path
    };
    let m = read_manifest(dir)?;
    let audio_rate = m.audio_sample_rate_hz.unwrap_or(m.sample_rate_hz);
    check_unique(&m.channel_names, Error::DuplicateChannel)?;
    let n_channels = m.channel_names.len();

    let mut eeg_trials = Vec::with_capacity(m.trials.len());
    let mut audio_trials = Vec::with_capacity(m.trials.len());
    for t in &m.trials {
        if let Some(rate) = t.sample_rate_hz {
            if rate != m.sample_rate_hz {
                return Err(Error::RateMismatch {
                    trial: t.id.clone(),
                    declared: m.sample_rate_hz,
                    actual: rate,
                });
            }
        }
        let eeg = read_f32_file(&dir.join(&t.eeg_file), n_channels * t.n_samples, &t.id)?;
        let audio_len = t.audio_n_samples.unwrap_or(t.n_samples);
        let audio = read_f32_file(&dir.join(&t.audio_file), audio_len, &t.id)?;
        eeg_trials.push(Signal::new(eeg, m.sample_rate_hz, n_channels)?);
        audio_trials.push(Signal::mono(audio, audio_rate)?);
    }
    TrialSet::new(
        m.subject_id,
        m.channel_names,
        m.trials.into_iter().map(|t| t.id).collect(),
        eeg_trials,
        audio_trials,
    )
}

/// Writes `trialset` into `dir` (created if missing).
pub fn save_trialset(trialset: &TrialSet, dir: &Path) -> Result<()> {
    trialset.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let eeg_rate = trialset
        .eeg_trials
        .first()
        .map_or(ANALYSIS_RATE_HZ, Signal::sample_rate_hz);
    let audio_rate = trialset.audio_trials.first().map_or(eeg_rate, Signal::sample_rate_hz);
    if trialset.audio_trials.iter().any(|a| a.sample_rate_hz() != audio_rate) {
        return Err(Error::InvalidArgument(
            "audio trials have different sample rates".into(),
        ));
    }

    let mut trials = Vec::with_capacity(trialset.len());
    for ((id, eeg), audio) in trialset
        .trial_ids
        .iter()
        .zip(&trialset.eeg_trials)
        .zip(&trialset.audio_trials)
    {
        let entry = TrialEntry {
            id: id.clone(),
            eeg_file: format!("{id}_eeg.f32"),
            audio_file: format!("{id}_audio.f32"),
            n_samples: eeg.n_samples(),
            audio_n_samples: (audio.n_samples() != eeg.n_samples()).then_some(audio.n_samples()),
            sample_rate_hz: None,
        };
        write_f32_file(&dir.join(&entry.eeg_file), eeg.samples())?;
        write_f32_file(&dir.join(&entry.audio_file), audio.samples())?;
        trials.push(entry);
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        subject_id: trialset.subject_id.clone(),
        sample_rate_hz: eeg_rate,
        audio_sample_rate_hz: (audio_rate != eeg_rate).then_some(audio_rate),
        channel_names: trialset.channel_names.clone(),
        trials,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Loads every container directly under `root`, ordered by subject id.
/// A `root` that is itself a container yields one subject.
pub fn load_dataset(root: &Path) -> Result<Vec<TrialSet>> {
    if root.join(MANIFEST_FILE).is_file() {
        return Ok(vec![load_trialset(root)?]);
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.join(MANIFEST_FILE).is_file() {
            dirs.push(path);
        }
    }
    if dirs.is_empty() {
        return Err(Error::Manifest(format!("{}: no {MANIFEST_FILE} found", root.display())));
    }
    let mut sets = dirs.iter().map(|d| load_trialset(d)).collect::<Result<Vec<_>>>()?;
    sets.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    Ok(sets)
}

/// Picks the named channels, in the order given, by label rather than index.
pub fn select_channels(trial: &Signal, channel_names: &[String], wanted: &[&str]) -> Result<Signal> {
    let rows = wanted
        .iter()
        .map(|name| {
            channel_names
                .iter()
                .position(|c| c == name)
                .map(|i| trial.channel(i).to_vec())
                .ok_or_else(|| Error::MissingChannel((*name).to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Signal::from_channels(&rows, trial.sample_rate_hz())
}

/// Returns the T7 and T8 rows, in that order.
pub fn select_temporal_channels(trial: &Signal, channel_names: &[String]) -> Result<Signal> {
    select_channels(trial, channel_names, &TEMPORAL_CHANNELS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub n_trials: usize,
    pub trial_seconds: f64,
    /// Maps audio band power (columns) to EEG band power (rows).
    pub coupling: [[f64; 4]; 4],
    pub noise_snr_db: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 1,
            n_trials: 40,
            trial_seconds: 60.0,
            coupling: identity_coupling(),
            noise_snr_db: 20.0,
            seed: 0,
        }
    }
}

pub fn identity_coupling() -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// Nonnegative coupling with entries uniform in [0, 1), drawn from `seed`.
pub fn random_coupling(seed: u64) -> [[f64; 4]; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut m = [[0.0; 4]; 4];
    for v in m.iter_mut().flatten() {
        *v = rng.random::<f64>();
    }
    m
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::InvalidArgument("n_subjects must be positive".into()));
        }
        if self.n_trials < 6 {
            return Err(Error::InvalidArgument(format!(
                "n_trials must be at least 6, got {}",
                self.n_trials
            )));
        }
        let window = WindowGeometry::default().window_len as f64;
        if !(self.trial_seconds * ANALYSIS_RATE_HZ >= window) {
            return Err(Error::InvalidArgument(format!(
                "trials of {} s are shorter than one analysis window",
                self.trial_seconds
            )));
        }
        if !self.noise_snr_db.is_finite() || self.coupling.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite synthesis parameter".into()));
        }
        Ok(())
    }
}

const AUDIO_COMPONENTS: usize = 6;

fn label(prefix: char, i: usize, count: usize) -> String {
    let width = count.to_string().len().max(2);
    format!("{prefix}{:0width$}", i + 1)
}

/// Generates paired EEG/audio trial sets.
///
/// Each audio trial sums six sinusoids at random frequencies in 4-45 Hz with
/// random phases and slow random amplitude envelopes. Its measured band-power
/// trajectory, mapped through `coupling`, is imposed on T7 and T8 as on-bin
/// carriers (one per band, at the bin nearest the band center) whose
/// amplitude tracks the square root of the target power. White noise is
/// added at `noise_snr_db` relative to the carrier power, or relative to the
/// audio power when the coupling silences the carriers. All other channels
/// carry noise only. Samples are rounded to float32 so a generated set
/// survives a save/load round trip unchanged.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Vec<TrialSet>> {
    config.validate()?;
    (0..config.n_subjects)
        .into_par_iter()
        .map(|s| generate_subject(config, s))
        .collect()
}

fn generate_subject(config: &SynthConfig, subject: usize) -> Result<TrialSet> {
    let n = (config.trial_seconds * ANALYSIS_RATE_HZ).round() as usize;
    let mut eeg_trials = Vec::with_capacity(config.n_trials);
    let mut audio_trials = Vec::with_capacity(config.n_trials);
    for t in 0..config.n_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(((subject as u64) << 32) | t as u64);
        let (eeg, audio) = synth_trial(config, n, &mut rng)?;
        eeg_trials.push(eeg);
        audio_trials.push(audio);
    }
    TrialSet::new(
        label('s', subject, config.n_subjects),
        DEAP_CHANNELS.iter().map(|c| c.to_string()).collect(),
        (0..config.n_trials).map(|t| label('t', t, config.n_trials)).collect(),
        eeg_trials,
        audio_trials,
    )
}

fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

fn synth_trial(config: &SynthConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<(Signal, Signal)> {
    let fs = ANALYSIS_RATE_HZ;
    let geometry = WindowGeometry::default();
    let bands = canonical_bands();

    let components: Vec<[f64; 5]> = (0..AUDIO_COMPONENTS)
        .map(|_| {
            [
                rng.random_range(4.0..45.0),     // frequency
                rng.random_range(0.0..2.0 * PI), // phase
                rng.random_range(0.5..1.5),      // weight
                rng.random_range(0.02..0.2),     // envelope rate (Hz)
                rng.random_range(0.0..2.0 * PI), // envelope phase
            ]
        })
        .collect();
    let audio: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let v: f64 = components
                .iter()
                .map(|[f, ph, w, fe, pe]| {
                    let env = 1.0 + 0.9 * (2.0 * PI * fe * t + pe).sin();
                    w * env * (2.0 * PI * f * t + ph).sin()
                })
                .sum();
            round_f32(v)
        })
        .collect();

    let audio_power = band_spectrogram(&audio, fs, &geometry, &bands)?;
    let n_windows = window_count(n, &geometry);
    let centers: Vec<f64> = (0..n_windows)
        .map(|w| (w * geometry.hop) as f64 + (geometry.window_len - 1) as f64 / 2.0)
        .collect();

    let mut clean = vec![0.0; n];
    for (b, band) in bands.iter().enumerate() {
        let bins = band_bins(band, geometry.window_len, fs)?;
        let carrier_bin = bins[bins.len() / 2];
        let freq = carrier_bin as f64 * fs / geometry.window_len as f64;
        let phase = rng.random_range(0.0..2.0 * PI);
        // amplitude giving band-mean power p for an on-bin carrier
        let amps: Vec<f64> = (0..n_windows)
            .map(|w| {
                let p: f64 = (0..4).map(|a| config.coupling[b][a] * audio_power.get(a, w)).sum();
                (4.0 * bins.len() as f64 * p.max(0.0)).sqrt()
            })
            .collect();
        for (i, v) in clean.iter_mut().enumerate() {
            let amp = interpolate(&centers, &amps, i as f64);
            *v += amp * (2.0 * PI * freq * i as f64 / fs + phase).cos();
        }
    }

    let mean_square = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let reference = match mean_square(&clean) {
        p if p > 0.0 => p,
        _ => mean_square(&audio),
    };
    let noise_sd = (reference * 10f64.powf(-config.noise_snr_db / 10.0)).sqrt();
    let normal =
        Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE)).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut eeg = Vec::with_capacity(DEAP_CHANNELS.len() * n);
    for name in DEAP_CHANNELS {
        let temporal = TEMPORAL_CHANNELS.contains(&name);
        eeg.extend((0..n).map(|i| {
            let base = if temporal { clean[i] } else { 0.0 };
            round_f32(base + normal.sample(rng))
        }));
    }
    Ok((Signal::new(eeg, fs, DEAP_CHANNELS.len())?, Signal::mono(audio, fs)?))
}

/// Piecewise-linear interpolation through `(xs, ys)`, held constant past the ends.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let j = xs.partition_point(|&c| c <= x);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let f = (x - x0) / (x1 - x0);
    ys[j - 1] * (1.0 - f) + ys[j] * f
}
