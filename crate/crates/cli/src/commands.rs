use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::info;
use memvo_core::eval::{
    kitti_drift, saliency_maps, speed_table, tum_rmse_drift, DriftOptions, DriftReport, TumDriftOptions,
};
use memvo_core::io::{
    parse_kitti_poses, parse_tum_trajectory, read_dataset, write_dataset, write_kitti_poses, CsvTable,
    Sequence,
};
use memvo_core::model::{ModelConfig, VoModel};
use memvo_core::training::{self, loss_csv, sliding_window_infer, DatasetSpec, TrainConfig};
use memvo_tensor::votb;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{EvalArgs, Format, InferArgs, ModelInput, PlotDataArgs, SaliencyArgs, SynthDataArgs, TrainArgs};

/// Name of the resolved training config stored next to a checkpoint.
const TRAIN_CONFIG_FILE: &str = "config.json";
const LOSS_FILE: &str = "loss.csv";

pub fn synth_data(args: SynthDataArgs) -> Result<()> {
    let mut spec: DatasetSpec = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let data = spec.generate()?;
    write_dataset(&args.out, &data).with_context(|| format!("writing {}", args.out.display()))?;
    write_atomic(&args.out.join("spec.json"), to_json(&spec)?.as_bytes())?;
    println!(
        "wrote {} sequences of {} frames to {}",
        data.len(),
        spec.frames,
        args.out.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    require_dir(&args.data)?;
    let mut config: TrainConfig = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(preset) = args.preset {
        config.preset = preset.into();
    }
    if let Some(window) = args.window {
        config.window_length = window;
    }
    if let Some(iterations) = args.iterations {
        config.iterations = iterations;
    }
    config.validate()?;
    create_dir(&args.out)?;

    let data = read_dataset(&args.data)?;
    let mut model = VoModel::init(ModelConfig::for_preset(config.preset), config.seed)?;
    let history = training::train(&mut model, &data, &config, |r| {
        info!("iteration {:>6}  loss {:.6}", r.iteration, r.total);
    })?;
    model.save(&args.out)?;
    write_atomic(&args.out.join(LOSS_FILE), loss_csv(&history).as_bytes())?;
    write_atomic(&args.out.join(TRAIN_CONFIG_FILE), to_json(&config)?.as_bytes())?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!(
            "trained {} iterations: loss {:.6} -> {:.6}; checkpoint in {}",
            history.len(),
            first.total,
            last.total,
            args.out.display()
        );
    }
    Ok(())
}

pub fn infer(args: InferArgs) -> Result<()> {
    let (model, config, seq) = load_model_input(&args.input)?;
    let window = args.window.unwrap_or(config.window_length);
    ensure!(window >= 2, "--window must be at least 2");
    let stride = args.stride.unwrap_or(window - 1);
    let poses = sliding_window_infer(&model, &seq.frames, window, stride, &config.pipeline_options()?)?;
    write_atomic(&args.out, write_kitti_poses(&poses).as_bytes())?;
    println!("wrote {} poses to {}", poses.len(), args.out.display());
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let (est, gt) = (read_text(&args.est)?, read_text(&args.gt)?);
    let table = match args.format {
        Format::Kitti => {
            let est = parse_kitti_poses(&est).with_context(|| args.est.display().to_string())?;
            let gt = parse_kitti_poses(&gt).with_context(|| args.gt.display().to_string())?;
            let options = DriftOptions {
                aggregation: args.aggregation.into(),
                ..drift_defaults(args.lengths)
            };
            let report = kitti_drift(est.poses(), gt.poses(), &options)?;
            println!(
                "t_rel {:.6} %  r_rel {:.6} deg/100m  over {} subsegments",
                report.t_rel,
                report.r_rel,
                report.segments.len()
            );
            drift_table(&report)?
        }
        Format::Tum => {
            let est = parse_tum_trajectory(&est).with_context(|| args.est.display().to_string())?;
            let gt = parse_tum_trajectory(&gt).with_context(|| args.gt.display().to_string())?;
            let drift = tum_rmse_drift(&est, &gt, &TumDriftOptions::default())?;
            println!(
                "rmse {:.6} m/s over {} pairs ({} associated poses)",
                drift.rmse, drift.pairs, drift.associated
            );
            let mut table = CsvTable::new(&["rmse", "pairs", "associated", "scale"]);
            table.push(vec![
                drift.rmse,
                drift.pairs as f64,
                drift.associated as f64,
                drift.alignment.scale,
            ])?;
            table
        }
    };
    write_atomic(&args.out, table.to_csv().as_bytes())
}

pub fn saliency(args: SaliencyArgs) -> Result<()> {
    let (model, config, seq) = load_model_input(&args.input)?;
    let window = args.window.unwrap_or(config.window_length);
    let end = args.start.checked_add(window).filter(|&e| e <= seq.len());
    let Some(end) = end else {
        bail!(
            "window {}..{} runs past the sequence's {} frames",
            args.start,
            args.start.saturating_add(window),
            seq.len()
        );
    };
    let frames = &seq.frames[args.start..end];
    let maps = saliency_maps(
        &model,
        frames,
        args.target,
        args.mode.into(),
        &config.pipeline_options()?,
    )?;
    create_dir(&args.out)?;
    for (offset, map) in maps.iter().enumerate() {
        let path = args.out.join(format!("saliency_{:06}.votb", args.start + offset));
        write_atomic(&path, &votb::encode(&map.to_tensor()))?;
    }
    println!("wrote {} saliency maps to {}", maps.len(), args.out.display());
    Ok(())
}

pub fn plot_data(args: PlotDataArgs) -> Result<()> {
    let est = parse_kitti_poses(&read_text(&args.est)?).with_context(|| args.est.display().to_string())?;
    let gt = parse_kitti_poses(&read_text(&args.gt)?).with_context(|| args.gt.display().to_string())?;
    let options = DriftOptions {
        aggregation: args.aggregation.into(),
        frame_rate: args.frame_rate,
        ..drift_defaults(args.lengths)
    };
    let report = kitti_drift(est.poses(), gt.poses(), &options)?;
    let mut by_length = CsvTable::new(&["length", "segments", "t_rel", "r_rel"]);
    for row in &report.per_length {
        by_length.push(vec![row.length, row.count as f64, row.t_rel, row.r_rel])?;
    }
    let mut by_speed = CsvTable::new(&["speed", "segments", "t_rel", "r_rel"]);
    for row in speed_table(&report, args.speed_bin)? {
        by_speed.push(vec![row.speed, row.count as f64, row.t_rel, row.r_rel])?;
    }
    create_dir(&args.out)?;
    write_atomic(
        &args.out.join("error_vs_length.csv"),
        by_length.to_csv().as_bytes(),
    )?;
    write_atomic(&args.out.join("error_vs_speed.csv"), by_speed.to_csv().as_bytes())?;
    println!("wrote error tables to {}", args.out.display());
    Ok(())
}

fn drift_defaults(lengths: Option<Vec<f64>>) -> DriftOptions {
    let defaults = DriftOptions::default();
    DriftOptions {
        lengths: lengths.unwrap_or(defaults.lengths),
        ..defaults
    }
}

/// Per-length rows followed by the overall figures on a row with length 0.
fn drift_table(report: &DriftReport) -> Result<CsvTable> {
    let mut table = CsvTable::new(&["length", "segments", "t_rel", "r_rel"]);
    for row in &report.per_length {
        table.push(vec![row.length, row.count as f64, row.t_rel, row.r_rel])?;
    }
    table.push(vec![
        0.0,
        report.segments.len() as f64,
        report.t_rel,
        report.r_rel,
    ])?;
    Ok(table)
}

/// Checkpoint, the training config that governs memory selection, and the
/// chosen sequence, all checked against each other.
fn load_model_input(input: &ModelInput) -> Result<(VoModel, TrainConfig, Sequence)> {
    require_dir(&input.checkpoint)?;
    require_dir(&input.data)?;
    let stored = input.checkpoint.join(TRAIN_CONFIG_FILE);
    let config_path: Option<PathBuf> = match &input.config {
        Some(p) => Some(p.clone()),
        None => stored.exists().then_some(stored),
    };
    let config: TrainConfig = load_config(config_path.as_deref())?;
    config.validate()?;
    let model = VoModel::load(&input.checkpoint)?;
    let mut data = read_dataset(&input.data)?;
    ensure!(
        input.sequence < data.len(),
        "--sequence {} out of range: the dataset has {} sequences",
        input.sequence,
        data.len()
    );
    let seq = data.swap_remove(input.sequence);
    let enc = &model.config.encoder;
    ensure!(
        seq.height() == enc.height && seq.width() == enc.width,
        "sequence frames are {}×{}, the checkpoint expects {}×{}",
        seq.height(),
        seq.width(),
        enc.height,
        enc.width
    );
    Ok((model, config, seq))
}

/// A config file's contents, or the defaults when no file is given.
fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => serde_json::from_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display())),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn require_dir(path: &Path) -> Result<()> {
    ensure!(path.is_dir(), "{}: no such directory", path.display());
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Write through a temporary sibling and rename, so a failed run never
/// leaves a truncated output behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}
