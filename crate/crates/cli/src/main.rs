//! Command-line surface: dataset generation, offline augmentation, training
//! with subject-wise cross-validation, gradient checking, and feature
//! export.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 I/O error,
//! 3 gradient-check threshold failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pdaug::augment::{AugmentConfig, AugmentPipeline};
use pdaug::cnn::{
    grad_check, Architecture, ModelParams, DEFAULT_BN_EPS, DEFAULT_COORDS_PER_TENSOR, DEFAULT_H,
    DESK_INPUT_LEN, GRADCHECK_THRESHOLD,
};
use pdaug::eval::{augment_dataset, run_experiment, TrainConfig};
use pdaug::io::{read_dataset, write_dataset, write_features_csv, write_report, ConfigFile};
use pdaug::rng::derive_stream;
use pdaug::synth::{gen_dataset, SynthConfig};
use pdaug::tensor::Tensor;
use pdaug::window::CHANNELS;
use pdaug::Error;

#[derive(Parser)]
#[command(name = "pdaug", version, about = "Wearable accelerometer augmentation and CNN training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-class dataset.
    Synth {
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of subjects.
        #[arg(long)]
        subjects: usize,
        /// Windows per subject (classes alternate within each subject).
        #[arg(long = "per-subject")]
        per_subject: usize,
        /// Samples per window.
        #[arg(long = "window-len", default_value_t = 696)]
        window_len: usize,
        /// Master seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-subject sensor-orientation nuisance: on or off.
        #[arg(long, default_value = "on")]
        nuisance: String,
        /// Fraction of atypical windows per class.
        #[arg(long, default_value_t = 0.15)]
        atypical: f64,
        /// White-noise STD added to every element, in g.
        #[arg(long = "noise-floor", default_value_t = 0.01)]
        noise_floor: f64,
    },
    /// Apply an augmentation pipeline to a dataset on disk.
    Augment {
        /// Input dataset directory.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Pipeline string, e.g. "rot+perm+timew"; empty or "none" is the
        /// identity.
        #[arg(long, default_value = "")]
        pipeline: String,
        /// Master seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train with subject-wise k-fold cross-validation and write a report.
    Train {
        /// Input dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated pipeline strings, e.g. "none,rot,rot+perm+timew".
        #[arg(long)]
        pipeline: Option<String>,
        /// Number of subject-wise folds.
        #[arg(long)]
        folds: Option<usize>,
        /// Training epochs per fold.
        #[arg(long)]
        epochs: Option<usize>,
        /// Master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for report.txt, curves.csv, and checkpoints.
        #[arg(long)]
        out: PathBuf,
        /// Minibatch size.
        #[arg(long = "batch-size")]
        batch_size: Option<usize>,
        /// Adam learning rate.
        #[arg(long)]
        lr: Option<f64>,
        /// Config file with key = value lines; explicit flags win.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the finite-difference gradient check on the desk-scale model.
    Gradcheck {
        /// Master seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export the 540-dimensional feature matrix of a dataset.
    Features {
        /// Input dataset directory.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output CSV file (542 columns per row).
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Synth {
            out,
            subjects,
            per_subject,
            window_len,
            seed,
            nuisance,
            atypical,
            noise_floor,
        } => {
            let per_subject_rotation = match nuisance.as_str() {
                "on" => true,
                "off" => false,
                other => {
                    return Err(Error::invalid_argument(format!(
                        "--nuisance must be \"on\" or \"off\", got \"{other}\""
                    )))
                }
            };
            let cfg = SynthConfig {
                n_subjects: subjects,
                windows_per_subject: per_subject,
                window_len,
                per_subject_rotation,
                atypical_fraction: atypical,
                noise_floor,
                ..SynthConfig::default()
            };
            let dataset = gen_dataset(&derive_stream(seed, 0), &cfg)?;
            write_dataset(&out, &dataset)?;
            println!(
                "wrote {} windows ({} subjects) to {}",
                dataset.len(),
                subjects,
                out.display()
            );
            Ok(0)
        }
        Command::Augment {
            input,
            out,
            pipeline,
            seed,
        } => {
            let dataset = read_dataset(&input)?;
            let pipeline = AugmentPipeline::parse(&pipeline, AugmentConfig::default())?;
            let augmented = augment_dataset(&pipeline, &dataset, seed, 0)?;
            write_dataset(&out, &augmented)?;
            println!(
                "augmented {} windows with \"{}\" to {}",
                augmented.len(),
                pipeline.name(),
                out.display()
            );
            Ok(0)
        }
        Command::Train {
            data,
            pipeline,
            folds,
            epochs,
            seed,
            out,
            batch_size,
            lr,
            config,
        } => {
            let file = match &config {
                Some(path) => ConfigFile::parse(path)?,
                None => ConfigFile::default(),
            };
            let mut train_cfg = TrainConfig::default();
            file.apply_train(&mut train_cfg);
            let mut aug_cfg = AugmentConfig::default();
            file.apply_augment(&mut aug_cfg);
            if let Some(e) = epochs {
                train_cfg.epochs = e;
            }
            if let Some(b) = batch_size {
                train_cfg.batch_size = b;
            }
            if let Some(l) = lr {
                train_cfg.adam.lr = l;
            }
            let folds = folds.or(file.folds).unwrap_or(5);
            let seed = seed.or(file.seed).unwrap_or(0);
            let pipeline_spec = pipeline.or(file.pipeline).unwrap_or_else(|| "none".into());

            let pipelines = pipeline_spec
                .split(',')
                .map(|s| AugmentPipeline::parse(s, aug_cfg.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            let dataset = read_dataset(&data)?;
            let report = run_experiment(&dataset, &pipelines, folds, seed, &train_cfg)?;
            let written = write_report(&out, &report)?;
            print!("{}", pdaug::io::render_report(&report));
            println!("wrote {} files to {}", written.len(), out.display());
            Ok(0)
        }
        Command::Gradcheck { seed } => {
            let arch = Architecture::desk(DESK_INPUT_LEN);
            let params = ModelParams::init(&arch, &mut derive_stream(seed, 1));
            let mut data_rng = derive_stream(seed, 2);
            let n = 2 * arch.input_len * CHANNELS;
            let batch = Tensor::new(
                vec![2, 1, arch.input_len, CHANNELS],
                (0..n).map(|_| data_rng.uniform(-1.0, 1.0)).collect(),
            )?;
            let report = grad_check(
                &params,
                &batch,
                &[0, 1],
                DEFAULT_H,
                DEFAULT_COORDS_PER_TENSOR,
                &mut derive_stream(seed, 3),
                DEFAULT_BN_EPS,
            )?;
            for (name, err) in &report.entries {
                println!("{name} max_rel_err={err:.3e}");
            }
            println!("overall max_rel_err={:.3e}", report.max_rel_err);
            if report.passes(GRADCHECK_THRESHOLD) {
                println!("gradcheck PASS (threshold {GRADCHECK_THRESHOLD:.0e})");
                Ok(0)
            } else {
                println!("gradcheck FAIL (threshold {GRADCHECK_THRESHOLD:.0e})");
                Ok(3)
            }
        }
        Command::Features { input, out } => {
            let dataset = read_dataset(&input)?;
            write_features_csv(&out, &dataset)?;
            println!("wrote {} feature rows to {}", dataset.len(), out.display());
            Ok(0)
        }
    }
}
