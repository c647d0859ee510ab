//! Subcommand implementations.
//!
//! Every command validates its inputs before doing any work and echoes its
//! full effective configuration as JSON into the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use echoseg_core::config::{
    ModelConfig, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE,
};
use echoseg_core::metrics;
use echoseg_core::report::{emit_tables, plot_history, render_overlay, Overlay};
use echoseg_core::scenarios::{
    benchmark_from_predictions, run_scenarios, write_benchmark_csv, write_scenarios_csv,
    FlaggedFrame, MaskSet,
};
use echoseg_core::synth::{
    generate_dataset, split_patients, Dataset, Manifest, PhantomParams, SplitGroup,
};
use echoseg_core::train::{train as train_model, Checkpoint};
use echoseg_core::types::Operator;
use echoseg_core::{Error, Variant};

pub enum AppError {
    /// Bad flags or missing inputs, detected before any work: exit 1.
    Validation(String),
    /// Failure during execution: exit 2.
    Runtime(String),
}

impl From<Error> for AppError {
    fn from(err: Error) -> Self {
        AppError::Runtime(err.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> AppError {
    AppError::Validation(msg.into())
}

/// Only CPU execution exists; any other `ECHOSEG_DEVICE` value is rejected
/// up front.
pub fn check_device_env() -> Result<(), AppError> {
    match std::env::var("ECHOSEG_DEVICE") {
        Err(_) => Ok(()),
        Ok(v) if v.eq_ignore_ascii_case("cpu") || v.is_empty() => Ok(()),
        Ok(other) => Err(invalid(format!(
            "ECHOSEG_DEVICE={other:?} is not supported; this build computes on \"cpu\""
        ))),
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), AppError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{what} {} does not exist", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<(), AppError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(invalid(format!("{what} {} does not exist", path.display())))
    }
}

fn echo_config<T: Serialize>(out_dir: &Path, config: &T) -> Result<(), AppError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| AppError::Runtime(format!("{}: {e}", out_dir.display())))?;
    let path = out_dir.join("cli_config.json");
    let json = serde_json::to_string_pretty(config)
        .map_err(|e| AppError::Runtime(format!("config echo: {e}")))?;
    fs::write(&path, json).map_err(|e| AppError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn parse_operator(s: &str) -> Result<Operator, AppError> {
    match s.to_ascii_uppercase().as_str() {
        "A" | "OA" => Ok(Operator::A),
        "B" | "OB" => Ok(Operator::B),
        other => Err(invalid(format!("unknown operator {other:?}; expected A or B"))),
    }
}

// ---------------------------------------------------------------------------
// synth-gen
// ---------------------------------------------------------------------------

#[derive(Args, Serialize)]
pub struct SynthGenArgs {
    /// Number of synthetic patients
    #[arg(long)]
    pub patients: usize,
    /// Frames generated per patient
    #[arg(long = "frames-per-patient")]
    pub frames_per_patient: usize,
    /// Base seed; per-frame seeds derive from it
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON file overriding the default phantom parameters
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Frame side length when --params is not given
    #[arg(long, default_value_t = 256)]
    pub size: usize,
}

pub fn synth_gen(args: SynthGenArgs) -> Result<(), AppError> {
    if args.patients == 0 || args.frames_per_patient == 0 {
        return Err(invalid("--patients and --frames-per-patient must be positive"));
    }
    let params = match &args.params {
        Some(path) => {
            require_file(path, "params file")?;
            let text = fs::read_to_string(path)
                .map_err(|e| AppError::Runtime(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<PhantomParams>(&text)
                .map_err(|e| invalid(format!("{}: {e}", path.display())))?
        }
        None => PhantomParams::for_size(args.size),
    };
    params.validate().map_err(|e| invalid(e.to_string()))?;

    let manifest = generate_dataset(
        args.patients,
        args.frames_per_patient,
        args.seed,
        &params,
        &args.out,
    )?;
    echo_config(&args.out, &args)?;
    println!(
        "generated {} frames for {} patients under {}",
        manifest.len(),
        args.patients,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

#[derive(Args, Serialize)]
pub struct SplitArgs {
    /// Manifest file to update in place
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated train,val,test fractions
    #[arg(long, default_value = "0.6,0.2,0.2")]
    pub ratios: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn split(args: SplitArgs) -> Result<(), AppError> {
    require_file(&args.manifest, "manifest")?;
    let parts: Vec<&str> = args.ratios.split(',').collect();
    if parts.len() != 3 {
        return Err(invalid(format!(
            "--ratios needs three comma-separated values (train,val,test), got {:?}",
            args.ratios
        )));
    }
    let mut ratios = [0.0f64; 3];
    for (i, part) in parts.iter().enumerate() {
        ratios[i] = part
            .trim()
            .parse()
            .map_err(|_| invalid(format!("ratio {part:?} is not a number")))?;
    }

    let mut manifest = Manifest::read(&args.manifest)?;
    let assignment = split_patients(&manifest.patients(), (ratios[0], ratios[1], ratios[2]), args.seed)?;
    manifest.apply_split(&assignment)?;
    manifest.write(&args.manifest)?;

    let (train, val, test) = assignment.counts();
    if let Some(dir) = args.manifest.parent() {
        #[derive(Serialize)]
        struct SplitEcho<'a> {
            #[serde(flatten)]
            args: &'a SplitArgs,
            counts: (usize, usize, usize),
        }
        let echo = SplitEcho {
            args: &args,
            counts: (train, val, test),
        };
        let path = dir.join("split.json");
        let json = serde_json::to_string_pretty(&echo)
            .map_err(|e| AppError::Runtime(format!("split echo: {e}")))?;
        fs::write(&path, json)
            .map_err(|e| AppError::Runtime(format!("{}: {e}", path.display())))?;
    }
    println!("split {} patients into {train}/{val}/{test}", train + val + test);
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args, Serialize)]
pub struct TrainArgs {
    /// Architecture variant: unet, unet1 or unet2
    #[arg(long)]
    pub variant: String,
    /// Operator whose annotations supervise training: A or B
    #[arg(long)]
    pub operator: String,
    /// Dataset directory (with manifest.csv)
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    pub lr: f64,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch: usize,
    /// Width scale; 1.0 is the full-size architecture
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run directory for config echo, history, checkpoints
    #[arg(long)]
    pub out: PathBuf,
    /// Network input size; 0 means the dataset's native frame size
    #[arg(long = "input-size", default_value_t = 0)]
    pub input_size: usize,
}

pub fn train(args: TrainArgs) -> Result<(), AppError> {
    let variant = Variant::parse_key(&args.variant).map_err(|e| invalid(e.to_string()))?;
    let operator = parse_operator(&args.operator)?;
    require_dir(&args.data, "dataset directory")?;
    require_file(&args.data.join("manifest.csv"), "manifest")?;

    let dataset = Dataset::load(&args.data)?;
    let split = dataset
        .split_assignment()
        .ok_or_else(|| invalid("manifest has no split column; run `echoseg split` first"))?;
    let input_size = match args.input_size {
        0 => dataset
            .frames()
            .first()
            .map(|f| f.image.height())
            .ok_or_else(|| invalid("dataset has no frames"))?,
        s => s,
    };

    let model_config = ModelConfig::for_variant(variant, args.scale)
        .map_err(|e| invalid(e.to_string()))?
        .with_input_size(input_size);
    let train_config = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch,
        seed: args.seed,
        ..TrainConfig::default()
    };
    train_config.validate().map_err(|e| invalid(e.to_string()))?;

    echo_config(&args.out, &args)?;
    let outcome = train_model(
        &model_config,
        &train_config,
        &dataset,
        &split,
        operator,
        Some(&args.out),
    )?;
    plot_history(&outcome.history, &args.out.join("history.png"))?;
    println!(
        "trained {variant} on operator {operator}: best epoch {} (val dice {:.4}), artifacts in {}",
        outcome.best.epoch,
        outcome.best.val_dice.unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Args, Serialize)]
pub struct EvaluateArgs {
    /// Checkpoint file (best.ckpt of a run)
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// Which split group to evaluate
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Reference operator: A or B
    #[arg(long)]
    pub operator: String,
    /// Output directory (metrics.csv, prediction masks, overlays)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), AppError> {
    require_file(&args.checkpoint, "checkpoint")?;
    require_dir(&args.data, "dataset directory")?;
    let group = SplitGroup::parse(&args.split).map_err(|e| invalid(e.to_string()))?;
    let operator = parse_operator(&args.operator)?;

    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let dataset = Dataset::load(&args.data)?;
    let split = dataset
        .split_assignment()
        .ok_or_else(|| invalid("manifest has no split column; run `echoseg split` first"))?;
    let frames = dataset.frames_in(&split, group);
    if frames.is_empty() {
        return Err(invalid(format!("split group {group} has no frames")));
    }

    echo_config(&args.out, &args)?;
    let overlays_dir = args.out.join("overlays");
    fs::create_dir_all(&overlays_dir)
        .map_err(|e| AppError::Runtime(format!("{}: {e}", overlays_dir.display())))?;

    let input_size = checkpoint.model.config().input_size;
    let mut predictions = MaskSet::new();
    let mut csv = String::from("patient_id,frame_id,dice,hausdorff,empty_prediction\n");
    for frame in &frames {
        let reference = frame.mask(operator).ok_or_else(|| {
            AppError::Runtime(format!("frame {} lacks operator {operator} mask", frame.frame_id))
        })?;
        let (image, reference) = if frame.image.shape() == (input_size, input_size) {
            (frame.image.clone(), reference.clone())
        } else {
            echoseg_core::synth::resize_frame(&frame.image, reference, input_size)?
        };
        let prediction = checkpoint.predict(&image)?;
        let pair = metrics::evaluate_pair(&prediction, &reference)?;
        let empty = prediction.is_empty();
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{}\n",
            frame.patient_id, frame.frame_id, pair.dice, pair.hausdorff, empty
        ));

        let manual = metrics::extract_contour(&reference)?;
        let automated = if empty {
            None
        } else {
            Some(metrics::extract_contour(&metrics::largest_component(&prediction))?)
        };
        render_overlay(
            &Overlay {
                image: &image,
                manual: &manual,
                automated: automated.as_ref(),
                metrics: Some(pair),
            },
            &overlays_dir.join(format!("{}.png", frame.frame_id)),
        )?;

        predictions.insert(frame.patient_id.clone(), frame.frame_id.clone(), prediction);
    }
    predictions.save_predictions(&args.out)?;
    let metrics_path = args.out.join("metrics.csv");
    fs::write(&metrics_path, csv)
        .map_err(|e| AppError::Runtime(format!("{}: {e}", metrics_path.display())))?;
    println!(
        "evaluated {} frames; wrote metrics.csv, prediction masks and overlays to {}",
        frames.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// scenarios
// ---------------------------------------------------------------------------

#[derive(Args, Serialize)]
pub struct ScenariosArgs {
    /// Predictions of the model trained on operator A
    #[arg(long = "pred-oa")]
    pub pred_oa: PathBuf,
    /// Predictions of the model trained on operator B
    #[arg(long = "pred-ob")]
    pub pred_ob: PathBuf,
    /// Dataset directory (source of the OA/OB annotations)
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-variant prediction dirs; all three enable benchmark.csv
    #[arg(long = "pred-unet")]
    pub pred_unet: Option<PathBuf>,
    #[arg(long = "pred-unet1")]
    pub pred_unet1: Option<PathBuf>,
    #[arg(long = "pred-unet2")]
    pub pred_unet2: Option<PathBuf>,
}

/// Operator masks for exactly the frames present in `keys`, resized to the
/// prediction resolution when necessary.
fn operator_masks_for(
    dataset: &Dataset,
    keys: &MaskSet,
    operator: Operator,
) -> Result<MaskSet, AppError> {
    let by_key: BTreeMap<(String, String), &echoseg_core::synth::DatasetFrame> = dataset
        .frames()
        .iter()
        .map(|f| ((f.patient_id.clone(), f.frame_id.clone()), f))
        .collect();
    let mut masks = MaskSet::new();
    let mut missing = Vec::new();
    for (key, pred) in keys.iter() {
        match by_key.get(key).and_then(|f| f.mask(operator).map(|m| (f, m))) {
            None => missing.push(format!("{}/{}", key.0, key.1)),
            Some((frame, mask)) => {
                let size = pred.height();
                let mask = if mask.shape() == (size, size) {
                    mask.clone()
                } else {
                    let (_, resized) =
                        echoseg_core::synth::resize_frame(&frame.image, mask, size)?;
                    resized
                };
                masks.insert(key.0.clone(), key.1.clone(), mask);
            }
        }
    }
    if !missing.is_empty() {
        return Err(AppError::Runtime(
            Error::FrameSetMismatch { frames: missing }.to_string(),
        ));
    }
    Ok(masks)
}

pub fn scenarios(args: ScenariosArgs) -> Result<(), AppError> {
    require_dir(&args.pred_oa, "pred-oa directory")?;
    require_dir(&args.pred_ob, "pred-ob directory")?;
    require_dir(&args.data, "dataset directory")?;
    let benchmark_dirs = match (&args.pred_unet, &args.pred_unet1, &args.pred_unet2) {
        (Some(a), Some(b), Some(c)) => {
            for (dir, what) in [(a, "pred-unet"), (b, "pred-unet1"), (c, "pred-unet2")] {
                require_dir(dir, what)?;
            }
            Some((a.clone(), b.clone(), c.clone()))
        }
        (None, None, None) => None,
        _ => {
            return Err(invalid(
                "benchmark needs all three of --pred-unet, --pred-unet1, --pred-unet2",
            ))
        }
    };

    let dataset = Dataset::load(&args.data)?;
    let pred_oa = MaskSet::load_predictions(&args.pred_oa)?;
    let pred_ob = MaskSet::load_predictions(&args.pred_ob)?;
    if pred_oa.is_empty() || pred_ob.is_empty() {
        return Err(AppError::Runtime("prediction directories contain no masks".into()));
    }
    let oa = operator_masks_for(&dataset, &pred_oa, Operator::A)?;
    let ob = operator_masks_for(&dataset, &pred_oa, Operator::B)?;

    echo_config(&args.out, &args)?;
    let report = run_scenarios(&pred_oa, &pred_ob, &oa, &ob)?;
    write_scenarios_csv(&args.out.join("scenarios.csv"), &report.rows)?;
    write_flagged_csv(&args.out.join("flagged.csv"), &report.flagged)?;

    if let Some((unet_dir, unet1_dir, unet2_dir)) = benchmark_dirs {
        let mut predictions = BTreeMap::new();
        predictions.insert(Variant::Unet, MaskSet::load_predictions(&unet_dir)?);
        predictions.insert(Variant::Unet1, MaskSet::load_predictions(&unet1_dir)?);
        predictions.insert(Variant::Unet2, MaskSet::load_predictions(&unet2_dir)?);
        let benchmark = benchmark_from_predictions(&predictions, &oa)?;
        write_benchmark_csv(&args.out.join("benchmark.csv"), &benchmark.rows)?;
    }
    println!(
        "wrote scenario analysis over {} frames to {}",
        pred_oa.len(),
        args.out.display()
    );
    Ok(())
}

fn write_flagged_csv(path: &Path, flagged: &[FlaggedFrame]) -> Result<(), AppError> {
    let mut out = String::from("patient_id,frame_id,assessment\n");
    for f in flagged {
        out.push_str(&format!("{},{},{}\n", f.patient_id, f.frame_id, f.assessment));
    }
    fs::write(path, out).map_err(|e| AppError::Runtime(format!("{}: {e}", path.display())))
}

fn read_flagged_csv(path: &Path) -> Result<Vec<FlaggedFrame>, AppError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::Runtime(format!("{}: {e}", path.display())))?;
    let mut flagged = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(AppError::Runtime(format!(
                "{}: malformed flagged row {line:?}",
                path.display()
            )));
        }
        flagged.push(FlaggedFrame {
            patient_id: fields[0].to_string(),
            frame_id: fields[1].to_string(),
            assessment: fields[2].to_string(),
        });
    }
    Ok(flagged)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Args, Serialize)]
pub struct ReportArgs {
    /// benchmark.csv produced by `scenarios`
    #[arg(long)]
    pub benchmark: PathBuf,
    /// scenarios.csv produced by `scenarios`
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Directory of overlay PNGs produced by `evaluate`
    #[arg(long)]
    pub overlays: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn report(args: ReportArgs) -> Result<(), AppError> {
    require_file(&args.benchmark, "benchmark CSV")?;
    require_file(&args.scenarios, "scenarios CSV")?;
    require_dir(&args.overlays, "overlays directory")?;

    let benchmark = echoseg_core::scenarios::read_benchmark_csv(&args.benchmark)?;
    let scenario_rows = echoseg_core::scenarios::read_scenarios_csv(&args.scenarios)?;
    // The scenario run writes flagged.csv next to scenarios.csv.
    let flagged_path = args
        .scenarios
        .parent()
        .map(|d| d.join("flagged.csv"))
        .filter(|p| p.is_file());
    let flagged = match flagged_path {
        Some(path) => read_flagged_csv(&path)?,
        None => Vec::new(),
    };

    echo_config(&args.out, &args)?;
    emit_tables(&benchmark, &scenario_rows, &flagged, &args.out)?;

    let overlay_out = args.out.join("overlays");
    fs::create_dir_all(&overlay_out)
        .map_err(|e| AppError::Runtime(format!("{}: {e}", overlay_out.display())))?;
    let mut copied = 0usize;
    let entries = fs::read_dir(&args.overlays)
        .map_err(|e| AppError::Runtime(format!("{}: {e}", args.overlays.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| AppError::Runtime(e.to_string()))?;
        let name = entry.file_name();
        if name.to_string_lossy().ends_with(".png") {
            fs::copy(entry.path(), overlay_out.join(&name))
                .map_err(|e| AppError::Runtime(format!("{}: {e}", entry.path().display())))?;
            copied += 1;
        }
    }
    println!(
        "report written to {} ({} overlay images collected)",
        args.out.display(),
        copied
    );
    Ok(())
}
