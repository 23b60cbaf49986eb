//! Spectrogram and slope reconstruction experiments, and their reports.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{select_channels, TrialSet, TEMPORAL_CHANNELS};
use crate::error::{Error, Result};
use crate::regression::{default_lambda_grid, embed_temporal, loso_run, TrialBlock, DEFAULT_FOLDS};
use crate::sigproc::{bandpass, first_derivative, gaussian_smooth, resample, Signal, ANALYSIS_RATE_HZ};
use crate::spectrogram::{band_spectrogram, canonical_bands, BandSpec, BandSpectrogram, WindowGeometry};
use crate::stats::{correlation, fisher_fuse, pearson_r};

/// What the regression reconstructs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Smoothed 4-band audio power.
    Spectrogram,
    /// Smoothed derivative of the band-averaged audio power.
    Slope,
}

impl Target {
    pub fn label(self) -> &'static str {
        match self {
            Target::Spectrogram => "spectrogram",
            Target::Slope => "slope",
        }
    }

    pub fn column_title(self) -> &'static str {
        match self {
            Target::Spectrogram => "Audio-Spectrogram",
            Target::Slope => "Audio-Slope",
        }
    }
}

/// How EEG channels become regression features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Elementwise mean of the T7 and T8 band spectrograms.
    #[default]
    TemporalMean,
    /// Every channel's band spectrogram, stacked channel-major.
    AllChannels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub target: Target,
    /// Gaussian smoothing width, in analysis windows.
    pub smoothing_sigma: f64,
    pub lambda_grid: Vec<f64>,
    pub lags: usize,
    pub seed: u64,
    pub bands: Vec<BandSpec>,
    pub geometry: WindowGeometry,
    pub folds: usize,
    pub bandpass_hz: [f64; 2],
    pub features: FeatureMode,
    /// Subtract each output row's mean before the flattened correlation, so
    /// per-band offsets learned as intercepts do not count as reconstruction.
    pub center_outputs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            target: Target::Spectrogram,
            smoothing_sigma: 2.0,
            lambda_grid: default_lambda_grid(),
            lags: 0,
            seed: 0,
            bands: canonical_bands(),
            geometry: WindowGeometry::default(),
            folds: DEFAULT_FOLDS,
            bandpass_hz: [4.0, 45.0],
            features: FeatureMode::default(),
            center_outputs: true,
        }
    }
}

impl ExperimentConfig {
    pub fn with_target(&self, target: Target) -> Self {
        Self { target, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidArgument("lambda grid is empty".into()));
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(
                "lambda grid has a negative or non-finite value".into(),
            ));
        }
        if !(self.smoothing_sigma > 0.0 && self.smoothing_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "smoothing sigma must be positive, got {}",
                self.smoothing_sigma
            )));
        }
        if self.bands.is_empty() {
            return Err(Error::InvalidArgument("no frequency bands".into()));
        }
        self.geometry.validate()
    }
}

fn to_analysis_rate(signal: &Signal) -> Result<Signal> {
    if signal.sample_rate_hz() == ANALYSIS_RATE_HZ {
        Ok(signal.clone())
    } else {
        resample(signal, ANALYSIS_RATE_HZ)
    }
}

fn channel_spectrograms(signal: &Signal, config: &ExperimentConfig) -> Result<Vec<BandSpectrogram>> {
    let [low, high] = config.bandpass_hz;
    let filtered = bandpass(signal, low, high)?;
    filtered
        .channels()
        .map(|ch| band_spectrogram(ch, ANALYSIS_RATE_HZ, &config.geometry, &config.bands))
        .collect()
}

/// EEG band-power features for one trial.
pub fn trial_eeg_features(
    trial: &Signal,
    channel_names: &[String],
    config: &ExperimentConfig,
) -> Result<BandSpectrogram> {
    match config.features {
        FeatureMode::TemporalMean => {
            let temporal = select_channels(trial, channel_names, &TEMPORAL_CHANNELS)?;
            let specs = channel_spectrograms(&to_analysis_rate(&temporal)?, config)?;
            BandSpectrogram::mean_of(&specs)
        }
        FeatureMode::AllChannels => {
            let specs = channel_spectrograms(&to_analysis_rate(trial)?, config)?;
            let first = &specs[0];
            let bands = channel_names
                .iter()
                .flat_map(|c| {
                    config.bands.iter().map(move |b| BandSpec {
                        name: format!("{c}:{}", b.name),
                        ..b.clone()
                    })
                })
                .collect();
            Ok(BandSpectrogram {
                values: specs.iter().flat_map(|s| s.values.iter().copied()).collect(),
                n_windows: first.n_windows,
                bands,
                geometry: first.geometry,
                sample_rate_hz: first.sample_rate_hz,
            })
        }
    }
}

/// Per-trial EEG features: bandpass T7 and T8, take each channel's band
/// spectrogram and average the two.
pub fn make_eeg_features(trialset: &TrialSet, config: &ExperimentConfig) -> Result<Vec<BandSpectrogram>> {
    trialset
        .eeg_trials
        .par_iter()
        .map(|t| trial_eeg_features(t, &trialset.channel_names, config))
        .collect()
}

/// Regression target for one audio trial as an `[outputs × windows]` matrix.
pub fn make_audio_target(audio: &Signal, config: &ExperimentConfig) -> Result<DMatrix<f64>> {
    if audio.channel_count() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: audio.channel_count(),
        });
    }
    let audio = to_analysis_rate(audio)?;
    let spec = band_spectrogram(audio.channel(0), ANALYSIS_RATE_HZ, &config.geometry, &config.bands)?;
    let sigma = config.smoothing_sigma;
    match config.target {
        Target::Spectrogram => {
            let rows = (0..spec.n_bands())
                .map(|b| gaussian_smooth(spec.row(b), sigma))
                .collect::<Result<Vec<_>>>()?;
            Ok(DMatrix::from_fn(rows.len(), spec.n_windows, |b, w| rows[b][w]))
        }
        Target::Slope => {
            let k = spec.n_bands() as f64;
            let mean: Vec<f64> = (0..spec.n_windows)
                .map(|w| (0..spec.n_bands()).map(|b| spec.get(b, w)).sum::<f64>() / k)
                .collect();
            let slope = gaussian_smooth(&first_derivative(&mean)?, sigma)?;
            Ok(DMatrix::from_row_slice(1, slope.len(), &slope))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: String,
    pub r: f64,
    pub p: f64,
    pub lambda: f64,
    /// Correlation per output row; `None` where a row is constant.
    pub output_r: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject_id: String,
    pub per_trial: Vec<TrialResult>,
    pub mean_r: f64,
    pub fused_p: f64,
}

impl SubjectReport {
    pub fn from_trials(subject_id: impl Into<String>, per_trial: Vec<TrialResult>) -> Result<Self> {
        if per_trial.is_empty() {
            return Err(Error::InvalidArgument("no trial results".into()));
        }
        let mean_r = per_trial.iter().map(|t| t.r).sum::<f64>() / per_trial.len() as f64;
        let pvals: Vec<f64> = per_trial.iter().map(|t| t.p).collect();
        Ok(Self {
            subject_id: subject_id.into(),
            mean_r,
            fused_p: fisher_fuse(&pvals)?,
            per_trial,
        })
    }
}

/// Feature/target blocks for every trial of a subject, rows aligned.
pub fn build_blocks(trialset: &TrialSet, config: &ExperimentConfig) -> Result<Vec<TrialBlock>> {
    config.validate()?;
    let features = make_eeg_features(trialset, config)?;
    let targets = trialset
        .audio_trials
        .par_iter()
        .map(|a| make_audio_target(a, config))
        .collect::<Result<Vec<_>>>()?;
    trialset
        .trial_ids
        .iter()
        .zip(features)
        .zip(targets)
        .map(|((id, feat), target)| {
            let mut x = embed_temporal(&feat, config.lags)?;
            let y = target.transpose();
            let expected = match config.target {
                Target::Spectrogram => x.nrows(),
                // forward difference drops the last window
                Target::Slope => x.nrows() - 1,
            };
            if y.nrows() != expected {
                return Err(Error::InvalidArgument(format!(
                    "trial {id}: audio yields {} target windows, EEG {}",
                    y.nrows(),
                    x.nrows()
                )));
            }
            if x.nrows() != expected {
                x = x.rows(0, expected).into_owned();
            }
            Ok(TrialBlock { id: id.clone(), x, y })
        })
        .collect()
}

/// Row-major flattening of a `[windows × outputs]` block over `[outputs × windows]`.
pub fn flatten_outputs(m: &DMatrix<f64>, center: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for col in m.column_iter() {
        let mu = if center { col.mean() } else { 0.0 };
        out.extend(col.iter().map(|v| v - mu));
    }
    out
}

/// Runs leave-one-stimulus-out reconstruction for one subject.
pub fn run_subject(trialset: &TrialSet, config: &ExperimentConfig) -> Result<SubjectReport> {
    let blocks = build_blocks(trialset, config)?;
    let folds = loso_run(&blocks, &config.lambda_grid, config.folds, config.seed)?;
    let per_trial = folds
        .iter()
        .map(|f| {
            let truth = &blocks[f.trial_index].y;
            let center = config.center_outputs;
            let c = correlation(&flatten_outputs(&f.prediction, center), &flatten_outputs(truth, center))?;
            let output_r = (0..truth.ncols())
                .map(|o| {
                    let pred: Vec<f64> = f.prediction.column(o).iter().copied().collect();
                    let real: Vec<f64> = truth.column(o).iter().copied().collect();
                    pearson_r(&pred, &real).ok()
                })
                .collect();
            Ok(TrialResult {
                trial_id: f.trial_id.clone(),
                r: c.r,
                p: c.p,
                lambda: f.lambda,
                output_r,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SubjectReport::from_trials(trialset.subject_id.clone(), per_trial)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: Target,
    pub subjects: Vec<SubjectReport>,
    pub average_r: f64,
}

impl ExperimentResult {
    pub fn new(experiment: Target, mut subjects: Vec<SubjectReport>) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::InvalidArgument("no subject reports".into()));
        }
        subjects.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        let average_r = subjects.iter().map(|s| s.mean_r).sum::<f64>() / subjects.len() as f64;
        Ok(Self {
            experiment,
            subjects,
            average_r,
        })
    }

    /// Fisher fusion of the subjects' fused p-values, shown in the Average row.
    pub fn average_p(&self) -> Result<f64> {
        let p: Vec<f64> = self.subjects.iter().map(|s| s.fused_p).collect();
        fisher_fuse(&p)
    }
}

/// Settings shared by every experiment in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub experiments: Vec<Target>,
    pub smoothing_sigma: f64,
    pub lambda_grid: Vec<f64>,
    pub lags: usize,
    pub seed: u64,
    pub folds: usize,
    pub bands: Vec<BandSpec>,
    pub window_len: usize,
    pub overlap: usize,
    pub bandpass_hz: [f64; 2],
    pub features: FeatureMode,
    pub center_outputs: bool,
}

impl ReportConfig {
    pub fn new(config: &ExperimentConfig, experiments: Vec<Target>) -> Self {
        Self {
            experiments,
            smoothing_sigma: config.smoothing_sigma,
            lambda_grid: config.lambda_grid.clone(),
            lags: config.lags,
            seed: config.seed,
            folds: config.folds,
            bands: config.bands.clone(),
            window_len: config.geometry.window_len,
            overlap: config.geometry.overlap(),
            bandpass_hz: config.bandpass_hz,
            features: config.features,
            center_outputs: config.center_outputs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ReportConfig,
    pub results: Vec<ExperimentResult>,
}

/// Runs each requested experiment over every subject, in subject order.
pub fn run_experiments(subjects: &[TrialSet], config: &ExperimentConfig, targets: &[Target]) -> Result<Report> {
    let results = targets
        .iter()
        .map(|&target| {
            let cfg = config.with_target(target);
            let reports = subjects
                .iter()
                .map(|s| run_subject(s, &cfg))
                .collect::<Result<Vec<_>>>()?;
            ExperimentResult::new(target, reports)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Report {
        config: ReportConfig::new(config, targets.to_vec()),
        results,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidArgument(format!("unknown report format {other}"))),
        }
    }
}

/// Table-style p-value: "< 0.001" below 1e-3, else three significant digits.
pub fn format_p(p: f64) -> String {
    if p < 1e-3 {
        "< 0.001".to_string()
    } else {
        let decimals = (2 - p.log10().floor() as i32).max(0) as usize;
        format!("{p:.decimals$}")
    }
}

pub fn render_report(report: &Report, format: ReportFormat) -> Result<String> {
    if report.results.is_empty() {
        return Err(Error::InvalidArgument("report has no results".into()));
    }
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut s = String::from("subject,experiment,mean_r,fused_p\n");
            for res in &report.results {
                for sub in &res.subjects {
                    writeln!(
                        s,
                        "{},{},{:?},{:?}",
                        sub.subject_id,
                        res.experiment.label(),
                        sub.mean_r,
                        sub.fused_p
                    )
                    .expect("write to string");
                }
            }
            Ok(s)
        }
        ReportFormat::Table => render_table(report),
    }
}

fn render_table(report: &Report) -> Result<String> {
    let mut ids: Vec<&str> = report
        .results
        .iter()
        .flat_map(|r| r.subjects.iter().map(|s| s.subject_id.as_str()))
        .collect();
    ids.sort_unstable();
    ids.dedup();

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut head1 = vec!["Subjects".to_string()];
    let mut head2 = vec![String::new()];
    for res in &report.results {
        head1.extend([res.experiment.column_title().to_string(), String::new()]);
        head2.extend(["r-value".to_string(), "p-value".to_string()]);
    }
    for id in &ids {
        let mut row = vec![id.to_string()];
        for res in &report.results {
            match res.subjects.iter().find(|s| s.subject_id == *id) {
                Some(s) => row.extend([format!("{:.3}", s.mean_r), format_p(s.fused_p)]),
                None => row.extend(["-".to_string(), "-".to_string()]),
            }
        }
        rows.push(row);
    }
    let mut avg = vec!["Average".to_string()];
    for res in &report.results {
        avg.extend([format!("{:.3}", res.average_r), format_p(res.average_p()?)]);
    }

    let all: Vec<&Vec<String>> = [&head1, &head2].into_iter().chain(rows.iter()).chain([&avg]).collect();
    let widths: Vec<usize> = (0..head1.len())
        .map(|c| all.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let line = |row: &Vec<String>| {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        format!("| {} |\n", cells.join(" | "))
    };
    let rule: String = format!(
        "+{}+\n",
        widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("+")
    );

    let mut out = String::new();
    out.push_str(&rule);
    out.push_str(&line(&head1));
    out.push_str(&line(&head2));
    out.push_str(&rule);
    for row in &rows {
        out.push_str(&line(row));
    }
    out.push_str(&rule);
    out.push_str(&line(&avg));
    out.push_str(&rule);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, identity_coupling, SynthConfig, DEAP_CHANNELS};

    fn trial_result(id: &str, r: f64, p: f64) -> TrialResult {
        TrialResult {
            trial_id: id.into(),
            r,
            p,
            lambda: 1.0,
            output_r: vec![Some(r)],
        }
    }

    fn report(mean_rs: &[(&str, f64, f64)]) -> Report {
        let subjects = mean_rs
            .iter()
            .map(|(id, r, p)| SubjectReport::from_trials(*id, vec![trial_result("t01", *r, *p)]).unwrap())
            .collect();
        Report {
            config: ReportConfig::new(&ExperimentConfig::default(), vec![Target::Spectrogram]),
            results: vec![ExperimentResult::new(Target::Spectrogram, subjects).unwrap()],
        }
    }

    #[test]
    fn flattening_is_output_major() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 10.0, 2.0, 20.0, 3.0, 60.0]);
        assert_eq!(flatten_outputs(&m, false), vec![1.0, 2.0, 3.0, 10.0, 20.0, 60.0]);
        assert_eq!(flatten_outputs(&m, true), vec![-1.0, 0.0, 1.0, -20.0, -10.0, 30.0]);
    }

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(1e-9), "< 0.001");
        assert_eq!(format_p(0.000999), "< 0.001");
        assert_eq!(format_p(0.001), "0.00100");
        assert_eq!(format_p(0.056051), "0.0561");
        assert_eq!(format_p(0.5), "0.500");
        assert_eq!(format_p(1.0), "1.00");
    }

    #[test]
    fn table_layout() {
        let rep = report(&[("s02", 0.2, 0.5), ("s01", 0.1, 1e-9)]);
        let table = render_report(&rep, ReportFormat::Table).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[1].contains("Audio-Spectrogram"));
        assert!(lines[2].contains("r-value") && lines[2].contains("p-value"));
        let s01 = lines.iter().position(|l| l.contains("s01")).unwrap();
        let s02 = lines.iter().position(|l| l.contains("s02")).unwrap();
        assert!(s01 < s02);
        assert!(lines[s01].contains("0.100") && lines[s01].contains("< 0.001"));
        assert!(lines[s02].contains("0.500"));
        let avg = lines.iter().find(|l| l.contains("Average")).unwrap();
        assert!(avg.contains("0.150"));
    }

    #[test]
    fn csv_and_json() {
        let rep = report(&[("s01", 0.1, 0.25), ("s02", 0.2, 1e-12)]);
        let csv = render_report(&rep, ReportFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "subject,experiment,mean_r,fused_p");
        let fused = |i: usize| rep.results[0].subjects[i].fused_p;
        assert!((fused(0) - 0.25).abs() < 1e-12);
        assert_eq!(lines[1], format!("s01,spectrogram,0.1,{:?}", fused(0)));
        assert_eq!(lines[2], format!("s02,spectrogram,0.2,{:?}", fused(1)));
        let json = render_report(&rep, ReportFormat::Json).unwrap();
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn subject_report_consistency() {
        let trials = vec![
            trial_result("a", 0.2, 0.3),
            trial_result("b", 0.5, 0.01),
            trial_result("c", -0.1, 0.9),
        ];
        let rep = SubjectReport::from_trials("s", trials).unwrap();
        assert!((rep.mean_r - 0.2).abs() < 1e-12);
        assert_eq!(rep.fused_p, fisher_fuse(&[0.3, 0.01, 0.9]).unwrap());
        assert!(SubjectReport::from_trials("s", vec![]).is_err());
    }

    fn small_subject(coupling: [[f64; 4]; 4], seed: u64) -> TrialSet {
        let cfg = SynthConfig {
            n_trials: 8,
            trial_seconds: 20.0,
            coupling,
            noise_snr_db: 40.0,
            seed,
            ..SynthConfig::default()
        };
        generate_synthetic(&cfg).unwrap().remove(0)
    }

    #[test]
    fn eeg_features_average_t7_t8() {
        let ts = small_subject(identity_coupling(), 1);
        let cfg = ExperimentConfig::default();
        let feats = make_eeg_features(&ts, &cfg).unwrap();
        assert_eq!(feats.len(), 8);
        assert_eq!(feats[0].n_windows, 45);

        // identical T7/T8 give that channel's own spectrogram
        let t7 = DEAP_CHANNELS.iter().position(|c| *c == "T7").unwrap();
        let t8 = DEAP_CHANNELS.iter().position(|c| *c == "T8").unwrap();
        let trial = &ts.eeg_trials[0];
        let mut rows: Vec<Vec<f64>> = trial.channels().map(<[f64]>::to_vec).collect();
        rows[t8] = rows[t7].clone();
        let same = Signal::from_channels(&rows, 128.0).unwrap();
        let got = trial_eeg_features(&same, &ts.channel_names, &cfg).unwrap();
        let single = bandpass(&Signal::mono(rows[t7].clone(), 128.0).unwrap(), 4.0, 45.0).unwrap();
        let want = band_spectrogram(single.channel(0), 128.0, &cfg.geometry, &cfg.bands).unwrap();
        assert_eq!(got.values, want.values);

        // zero T8 halves the T7 spectrogram
        rows[t8] = vec![0.0; rows[t7].len()];
        let half = Signal::from_channels(&rows, 128.0).unwrap();
        let got = trial_eeg_features(&half, &ts.channel_names, &cfg).unwrap();
        for (g, w) in got.values.iter().zip(&want.values) {
            assert!((g - w / 2.0).abs() <= 1e-12 * w.abs().max(1e-12));
        }

        let all = trial_eeg_features(
            trial,
            &ts.channel_names,
            &ExperimentConfig {
                features: FeatureMode::AllChannels,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(all.n_bands(), 128);
        assert_eq!(all.bands[29].name, "T7:alpha");
    }

    #[test]
    fn eeg_features_at_full_length() {
        let cfg = SynthConfig {
            n_trials: 6,
            trial_seconds: 60.0,
            seed: 2,
            ..SynthConfig::default()
        };
        let ts = generate_synthetic(&cfg).unwrap().remove(0);
        let feats = make_eeg_features(&ts, &ExperimentConfig::default()).unwrap();
        assert!(feats.iter().all(|f| f.n_windows == 137 && f.n_bands() == 4));
    }

    #[test]
    fn audio_targets() {
        let cfg = ExperimentConfig::default();
        let constant = Signal::mono(vec![0.8; 7680], 128.0).unwrap();
        let t = make_audio_target(&constant, &cfg).unwrap();
        assert_eq!(t.shape(), (4, 137));
        assert!(t.iter().all(|v| v.abs() < 1e-20));

        let slope_cfg = cfg.with_target(Target::Slope);
        let noise: Vec<f64> = (0..7680).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
        let t = make_audio_target(&Signal::mono(noise, 128.0).unwrap(), &slope_cfg).unwrap();
        assert_eq!(t.shape(), (1, 136));

        // amplitude ramp: power grows linearly in time, so the slope is flat
        let n = 7680;
        let ramp: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / 128.0;
                (1.0 + t).sqrt() * (2.0 * std::f64::consts::PI * 12.0 * t).cos()
            })
            .collect();
        let t = make_audio_target(&Signal::mono(ramp, 128.0).unwrap(), &slope_cfg).unwrap();
        // band-mean power gains 56/128 s * (1/4)/4 /4 per window, averaged over 4 bands
        let want = (56.0 / 128.0) * 0.25 / 4.0 / 4.0;
        for w in 20..116 {
            assert!((t[(0, w)] - want).abs() < 0.02 * want, "{w}: {}", t[(0, w)]);
        }

        let resampled = Signal::mono(vec![0.8; 7680 * 2], 256.0).unwrap();
        assert_eq!(make_audio_target(&resampled, &cfg).unwrap().shape(), (4, 137));
        let stereo = Signal::new(vec![0.0; 256], 128.0, 2).unwrap();
        assert!(make_audio_target(&stereo, &cfg).is_err());
        assert!(make_audio_target(&Signal::mono(vec![0.0; 10], 128.0).unwrap(), &cfg).is_err());
    }

    #[test]
    fn slope_blocks_align() {
        let ts = small_subject(identity_coupling(), 3);
        for target in [Target::Spectrogram, Target::Slope] {
            let cfg = ExperimentConfig::default().with_target(target);
            for b in build_blocks(&ts, &cfg).unwrap() {
                assert_eq!(b.x.nrows(), b.y.nrows());
            }
        }
    }

    #[test]
    fn run_subject_is_consistent_and_order_free() {
        let ts = small_subject(identity_coupling(), 4);
        let cfg = ExperimentConfig::default();
        let rep = run_subject(&ts, &cfg).unwrap();
        assert_eq!(rep.per_trial.len(), 8);
        let mean = rep.per_trial.iter().map(|t| t.r).sum::<f64>() / 8.0;
        assert!((rep.mean_r - mean).abs() < 1e-12);
        let p: Vec<f64> = rep.per_trial.iter().map(|t| t.p).collect();
        assert_eq!(rep.fused_p, fisher_fuse(&p).unwrap());
        assert!(rep.mean_r > 0.5, "{}", rep.mean_r);

        let mut shuffled = ts.clone();
        shuffled.trial_ids.reverse();
        shuffled.eeg_trials.reverse();
        shuffled.audio_trials.reverse();
        let rep2 = run_subject(&shuffled, &cfg).unwrap();
        for t in &rep2.per_trial {
            let orig = rep.per_trial.iter().find(|o| o.trial_id == t.trial_id).unwrap();
            assert_eq!(orig, t);
        }
    }

    #[test]
    fn audio_scaling_leaves_r_unchanged() {
        let ts = small_subject(identity_coupling(), 5);
        let cfg = ExperimentConfig::default();
        let blocks = build_blocks(&ts, &cfg).unwrap();
        let folds = loso_run(&blocks, &cfg.lambda_grid, cfg.folds, cfg.seed).unwrap();
        let f = &folds[2];
        let r = pearson_r(
            &flatten_outputs(&f.prediction, true),
            &flatten_outputs(&blocks[2].y, true),
        )
        .unwrap();
        let rep = run_subject(&ts, &cfg).unwrap();
        assert!((rep.per_trial[2].r - r).abs() < 1e-15);

        let mut scaled = ts.clone();
        let a = 3.0;
        scaled.audio_trials[2] =
            Signal::mono(scaled.audio_trials[2].samples().iter().map(|v| v * a).collect(), 128.0).unwrap();
        let blocks2 = build_blocks(&scaled, &cfg).unwrap();
        // the held-out trial's own prediction is unaffected by its target scale
        let folds2 = loso_run(&blocks2, &cfg.lambda_grid, cfg.folds, cfg.seed).unwrap();
        assert_eq!(folds2[2].prediction, f.prediction);
        let r2 = pearson_r(
            &flatten_outputs(&folds2[2].prediction, true),
            &flatten_outputs(&blocks2[2].y, true),
        )
        .unwrap();
        assert!((r - r2).abs() < 1e-9);
    }

    #[test]
    fn run_experiments_orders_subjects() {
        let cfg = SynthConfig {
            n_subjects: 2,
            n_trials: 6,
            trial_seconds: 10.0,
            seed: 9,
            ..SynthConfig::default()
        };
        let mut sets = generate_synthetic(&cfg).unwrap();
        sets.reverse();
        let rep = run_experiments(
            &sets,
            &ExperimentConfig::default(),
            &[Target::Spectrogram, Target::Slope],
        )
        .unwrap();
        assert_eq!(rep.results.len(), 2);
        assert_eq!(rep.results[1].experiment, Target::Slope);
        assert_eq!(rep.results[0].subjects[0].subject_id, "s01");
        let table = render_report(&rep, ReportFormat::Table).unwrap();
        assert!(table.contains("Audio-Slope") && table.contains("Average"));
    }
}
