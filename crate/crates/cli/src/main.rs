use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stimrecon::dataset::{
    generate_synthetic, identity_coupling, load_dataset, random_coupling, save_trialset, SynthConfig,
};
use stimrecon::experiments::{
    render_report, run_experiments, trial_eeg_features, ExperimentConfig, FeatureMode, Report, ReportFormat, Target,
};
use stimrecon::regression::log_grid;
use stimrecon::sigproc::{resample, Signal, ANALYSIS_RATE_HZ};
use stimrecon::spectrogram::{band_spectrogram, write_features};

#[derive(Parser)]
#[command(name = "stimrecon", version)]
#[command(about = "Reconstruct audio band-power trajectories from EEG with ridge regression")]
struct Cli {
    /// Worker threads (default: available CPUs)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic EEG/audio dataset
    Synth {
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        subjects: u64,

        /// Trials per subject (at least 6)
        #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u64).range(6..))]
        trials: u64,

        /// Trial length in seconds
        #[arg(long, default_value_t = 60.0)]
        seconds: f64,

        /// Signal-to-noise ratio of the EEG channels
        #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
        snr_db: f64,

        #[arg(long, value_enum, default_value_t = Coupling::Identity)]
        coupling: Coupling,

        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Output directory, one subdirectory per subject
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump per-trial EEG and audio band spectrograms as feature files
    Features {
        #[arg(long)]
        data: PathBuf,

        #[arg(long)]
        out: PathBuf,

        #[arg(long, value_enum, default_value_t = Features::Temporal)]
        features: Features,
    },
    /// Run reconstruction experiments and write a JSON report
    Run {
        #[arg(long)]
        data: PathBuf,

        #[arg(long, value_enum, default_value_t = Experiment::Both)]
        experiment: Experiment,

        /// Gaussian smoothing width of the targets, in windows
        #[arg(long, default_value_t = 2.0)]
        sigma: f64,

        /// Neighbouring windows on each side added as features
        #[arg(long, default_value_t = 0)]
        lags: usize,

        /// "lo:hi:count" for a log-spaced grid, or comma-separated values
        #[arg(long, default_value = "1e-3:1e3:13")]
        lambda_grid: String,

        /// Inner cross-validation folds
        #[arg(long, default_value_t = 5)]
        folds: usize,

        #[arg(long, default_value_t = 0)]
        seed: u64,

        #[arg(long, value_enum, default_value_t = Features::Temporal)]
        features: Features,

        /// Correlate raw flattened outputs instead of per-output centered ones
        #[arg(long)]
        no_center: bool,

        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Render a saved report
    Report {
        #[arg(long = "in")]
        input: PathBuf,

        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Coupling {
    Identity,
    Zero,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Spectrogram,
    Slope,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Features {
    /// Mean of the T7 and T8 band spectrograms
    Temporal,
    /// Band spectrograms of every channel
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl From<stimrecon::Error> for Failure {
    fn from(e: stimrecon::Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = |why: String| Failure::Usage(format!("invalid --lambda-grid {spec:?}: {why}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [lo, hi, count] => {
            let lo: f64 = lo.trim().parse().map_err(|e| bad(format!("{e}")))?;
            let hi: f64 = hi.trim().parse().map_err(|e| bad(format!("{e}")))?;
            let count: usize = count.trim().parse().map_err(|e| bad(format!("{e}")))?;
            log_grid(lo, hi, count).map_err(|e| bad(e.to_string()))?
        }
        [list] => list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| bad(format!("{v:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad("expected lo:hi:count or a comma-separated list".into())),
    };
    if grid.is_empty() || grid.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(bad("values must be finite and nonnegative".into()));
    }
    Ok(grid)
}

fn synth(
    subjects: u64,
    trials: u64,
    seconds: f64,
    snr_db: f64,
    coupling: Coupling,
    seed: u64,
    out: &Path,
) -> Result<(), Failure> {
    let config = SynthConfig {
        n_subjects: subjects as usize,
        n_trials: trials as usize,
        trial_seconds: seconds,
        coupling: match coupling {
            Coupling::Identity => identity_coupling(),
            Coupling::Zero => [[0.0; 4]; 4],
            Coupling::Random => random_coupling(seed),
        },
        noise_snr_db: snr_db,
        seed,
    };
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let sets = generate_synthetic(&config)?;
    for ts in &sets {
        let dir = out.join(&ts.subject_id);
        save_trialset(ts, &dir)?;
        println!(
            "{}: {} trials x {} s, {} channels at {} Hz -> {}",
            ts.subject_id,
            ts.len(),
            seconds,
            ts.channel_names.len(),
            ANALYSIS_RATE_HZ,
            dir.display()
        );
    }
    Ok(())
}

fn features(data: &Path, out: &Path, mode: Features) -> Result<(), Failure> {
    let config = ExperimentConfig {
        features: feature_mode(mode),
        ..ExperimentConfig::default()
    };
    let subjects = load_dataset(data)?;
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    for ts in &subjects {
        for ((id, eeg), audio) in ts.trial_ids.iter().zip(&ts.eeg_trials).zip(&ts.audio_trials) {
            let stem = format!("{}_{id}", ts.subject_id);
            let feats = trial_eeg_features(eeg, &ts.channel_names, &config)?;
            write_features(&feats, &out.join(format!("{stem}_eeg")))?;
            let audio = audio_at_analysis_rate(audio)?;
            let spec = band_spectrogram(audio.channel(0), ANALYSIS_RATE_HZ, &config.geometry, &config.bands)?;
            write_features(&spec, &out.join(format!("{stem}_audio")))?;
        }
        println!("{}: {} trials -> {}", ts.subject_id, ts.len(), out.display());
    }
    Ok(())
}

fn audio_at_analysis_rate(audio: &Signal) -> stimrecon::Result<Signal> {
    if audio.sample_rate_hz() == ANALYSIS_RATE_HZ {
        Ok(audio.clone())
    } else {
        resample(audio, ANALYSIS_RATE_HZ)
    }
}

fn feature_mode(mode: Features) -> FeatureMode {
    match mode {
        Features::Temporal => FeatureMode::TemporalMean,
        Features::All => FeatureMode::AllChannels,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_failure(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Synth {
            subjects,
            trials,
            seconds,
            snr_db,
            coupling,
            seed,
            out,
        } => synth(subjects, trials, seconds, snr_db, coupling, seed, &out),
        Command::Features {
            data,
            out,
            features: mode,
        } => features(&data, &out, mode),
        Command::Run {
            data,
            experiment,
            sigma,
            lags,
            lambda_grid,
            folds,
            seed,
            features: mode,
            no_center,
            out,
        } => {
            let config = ExperimentConfig {
                smoothing_sigma: sigma,
                lambda_grid: parse_grid(&lambda_grid)?,
                lags,
                seed,
                folds,
                features: feature_mode(mode),
                center_outputs: !no_center,
                ..ExperimentConfig::default()
            };
            config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            if folds < 2 {
                return Err(Failure::Usage("--folds must be at least 2".into()));
            }
            let targets = match experiment {
                Experiment::Spectrogram => vec![Target::Spectrogram],
                Experiment::Slope => vec![Target::Slope],
                Experiment::Both => vec![Target::Spectrogram, Target::Slope],
            };
            let subjects = load_dataset(&data)?;
            let report = run_experiments(&subjects, &config, &targets)?;
            write_text(&out, &render_report(&report, ReportFormat::Json)?)?;
            print!("{}", render_report(&report, ReportFormat::Table)?);
            Ok(())
        }
        Command::Report { input, format } => {
            let text = fs::read_to_string(&input).map_err(|e| io_failure(&input, e))?;
            let report: Report =
                serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", input.display())))?;
            let format = match format {
                Format::Table => ReportFormat::Table,
                Format::Csv => ReportFormat::Csv,
                Format::Json => ReportFormat::Json,
            };
            print!("{}", render_report(&report, format)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: numeric failure: {msg}");
            ExitCode::from(3)
        }
    }
}
