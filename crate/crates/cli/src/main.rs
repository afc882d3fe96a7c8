//! `sedpool` command line: synthesize a corpus, extract features, train,
//! predict and evaluate.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use sedpool::data::{extract_dataset, load_feature_set, synth_dataset, DatasetManifest, SynthSpec};
use sedpool::model::{CrnnModel, ScenarioPreset};
use sedpool::nn::{read_checkpoint, write_checkpoint};
use sedpool::pipeline::{evaluate_detection_dir, predict_feature_set, write_detection_dir};
use sedpool::psds::{read_ground_truth, write_report};
use sedpool::train::{TrainConfig, Trainer};

#[derive(Parser)]
#[command(name = "sedpool", version, about = "Sound event detection with scenario-tuned temporal pooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetName {
    Scenario1,
    Scenario2,
}

impl PresetName {
    fn load(self) -> Result<ScenarioPreset> {
        let name = match self {
            PresetName::Scenario1 => "scenario1",
            PresetName::Scenario2 => "scenario2",
        };
        Ok(ScenarioPreset::by_name(name)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with manifests and ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// TOML file with every corpus parameter; overrides the flags below.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Only two well separated classes occur.
        #[arg(long)]
        two_class: bool,
        #[arg(long)]
        weak: Option<usize>,
        #[arg(long)]
        strong: Option<usize>,
        #[arg(long)]
        unlabeled: Option<usize>,
        #[arg(long)]
        clip_seconds: Option<f64>,
    },
    /// Compute standardized log-mel features for every clip of a manifest.
    Extract {
        /// The dataset's `dataset.toml`.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reuse normalization statistics (for example from the training set).
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Mean-teacher training on an extracted feature set.
    Train {
        #[arg(long, value_enum)]
        preset: PresetName,
        /// Training config TOML; missing fields take the full-scale defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-threshold detection files from a student checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        preset: PresetName,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a directory of detection files.
    Evaluate {
        #[arg(long)]
        detections_dir: PathBuf,
        #[arg(long)]
        groundtruth: PathBuf,
        #[arg(long)]
        durations: PathBuf,
        #[arg(long, value_enum)]
        preset: PresetName,
        /// Class vocabulary, one per line. Defaults to `classes.txt` in the
        /// detections directory, else the classes found in the ground truth.
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Where to write `psds_report.{txt,tsv}`; defaults to the
        /// detections directory.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
}

/// Like `Cli::parse`, but every usage error also prints the usage line.
fn parse_args() -> Cli {
    match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            std::process::exit(2);
        }
    }
}

fn main() -> Result<()> {
    match parse_args().command {
        Command::Synth { out, spec, seed, two_class, weak, strong, unlabeled, clip_seconds } => {
            let spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => {
                    let base = if two_class { SynthSpec::two_class(seed) } else { SynthSpec { seed, ..SynthSpec::default() } };
                    SynthSpec {
                        n_weak: weak.unwrap_or(base.n_weak),
                        n_strong: strong.unwrap_or(base.n_strong),
                        n_unlabeled: unlabeled.unwrap_or(base.n_unlabeled),
                        clip_seconds: clip_seconds.unwrap_or(base.clip_seconds),
                        ..base
                    }
                }
            };
            let out_files = synth_dataset(&spec, &out)?;
            let (w, s, u) = out_files.manifest.counts();
            println!("wrote {w} weak, {s} strong, {u} unlabeled clips");
            println!("manifest     {}", out_files.index.display());
            println!("ground truth {}", out_files.groundtruth_path.display());
            println!("durations    {}", out_files.durations_path.display());
        }
        Command::Extract { manifest, out, stats } => {
            let m = DatasetManifest::load(&manifest, true)?;
            let (w, s, u) = m.counts();
            eprintln!("manifest: {w} weak, {s} strong, {u} unlabeled clips, {} classes", m.classes.len());
            let stats = match stats {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
                }
                None => None,
            };
            let summary = extract_dataset(&m, &out, stats)?;
            println!("extracted {} clips (up to {} frames) into {}", summary.clips, summary.max_frames, out.display());
        }
        Command::Train { preset, config, features, out } => train(preset.load()?, config.as_deref(), &features, &out)?,
        Command::Predict { checkpoint, features, preset, out } => {
            let preset = preset.load()?;
            let mut model = CrnnModel::from_checkpoint(&read_checkpoint(&checkpoint)?)?;
            if model.preset.pool_specs != preset.pool_specs {
                bail!(
                    "checkpoint was trained with preset {} whose pooling differs from {}",
                    model.preset.name,
                    preset.name
                );
            }
            model.preset = preset;
            let fs = load_feature_set(&features)?;
            let preds = predict_feature_set(&mut model, &fs)?;
            let files = write_detection_dir(&model, &preds, &fs.manifest.classes, &out)?;
            std::fs::write(out.join("classes.txt"), fs.manifest.format_classes())?;
            println!("wrote {} detection files for {} clips into {}", files.len(), preds.len(), out.display());
        }
        Command::Evaluate { detections_dir, groundtruth, durations, preset, classes, report_dir } => {
            let preset = preset.load()?;
            let classes_path = classes.or_else(|| {
                let p = detections_dir.join("classes.txt");
                p.is_file().then_some(p)
            });
            let vocabulary = match classes_path {
                Some(p) => Some(sedpool::data::parse_classes(
                    &std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                    &p,
                )?),
                None => None,
            };
            let gt = read_ground_truth(&groundtruth, &durations, vocabulary.as_deref())?;
            let report = evaluate_detection_dir(&detections_dir, &gt, &preset.psds)?;
            let dir = report_dir.unwrap_or(detections_dir);
            write_report(&dir, "psds_report", &report)?;
            println!("PSDS {:.4}", report.psds);
        }
    }
    Ok(())
}

fn train(preset: ScenarioPreset, config: Option<&Path>, features: &Path, out: &Path) -> Result<()> {
    let config = match config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    let fs = load_feature_set(features)?;
    let data = fs.training_data()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    eprintln!(
        "preset {}: time factor {}, output frame duration {:.4} s",
        preset.name,
        preset.time_factor(),
        preset.frame_duration()
    );
    eprintln!(
        "pools: {} weak, {} strong, {} unlabeled; {} epochs x {} batches of {}",
        data.weak.len(),
        data.strong.len(),
        data.unlabeled.len(),
        config.epochs,
        config.batches_per_epoch,
        config.batch_size
    );
    std::fs::write(out.join("train.toml"), config.to_toml_string())?;

    let mut trainer = Trainer::new(&config, &preset, data)?;
    let metrics_path = out.join("metrics.jsonl");
    let mut log = BufWriter::new(File::create(&metrics_path).with_context(|| format!("creating {}", metrics_path.display()))?);
    let start = Instant::now();
    for epoch in 0..config.epochs {
        let m = trainer.run_epoch(epoch)?;
        writeln!(log, "{}", m.to_json_line())?;
        log.flush()?;
        eprintln!(
            "epoch {:>3}  loss {:.4}  (bce clip {:.4}, frame {:.4}; mse clip {:.4}, frame {:.4})  lr {:.2e}  {:.0?}",
            epoch,
            m.loss.total,
            m.loss.bce_clip,
            m.loss.bce_frame,
            m.loss.mse_clip,
            m.loss.mse_frame,
            m.lr,
            start.elapsed()
        );
    }
    let student = out.join("student.ckpt");
    let teacher = out.join("teacher.ckpt");
    write_checkpoint(&student, &trainer.student.to_checkpoint())?;
    write_checkpoint(&teacher, &trainer.teacher.to_checkpoint())?;
    println!("student checkpoint {}", student.display());
    println!("teacher checkpoint {}", teacher.display());
    Ok(())
}
