//! The model benchmark and the five-way inter-observer comparison.
//!
//! Both halves reduce per-frame [`crate::metrics::evaluate_pair`] results to
//! mean±SD rows. Frames iterate in `(patient_id, frame_id)` order and the
//! reductions are fixed-order, so identical inputs give bit-identical rows;
//! in particular the `POA_VS_OA` scenario equals the U-Net benchmark row
//! exactly when both consume the same prediction set.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::config::Variant;
use crate::error::{Error, Result};
use crate::metrics;
use crate::synth::{read_mask_png, write_mask_png, DatasetFrame};
use crate::train::Checkpoint;
use crate::types::{Operator, ScenarioLabel, ScenarioResult, SegMask};

/// `(patient_id, frame_id)`.
pub type FrameKey = (String, String);

/// Masks keyed by frame, ordered for bit-stable reductions.
#[derive(Debug, Clone, Default)]
pub struct MaskSet {
    masks: BTreeMap<FrameKey, SegMask>,
}

impl MaskSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, patient_id: impl Into<String>, frame_id: impl Into<String>, mask: SegMask) {
        self.masks.insert((patient_id.into(), frame_id.into()), mask);
    }

    pub fn get(&self, key: &FrameKey) -> Option<&SegMask> {
        self.masks.get(key)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &FrameKey> {
        self.masks.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FrameKey, &SegMask)> {
        self.masks.iter()
    }

    /// Collects one operator's annotations for the given frames; reports
    /// every frame whose mask is missing.
    pub fn from_frames(frames: &[&DatasetFrame], operator: Operator) -> Result<Self> {
        let missing: Vec<String> = frames
            .iter()
            .filter(|f| f.mask(operator).is_none())
            .map(|f| f.frame_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingMasks {
                operator: operator.label(),
                frame_ids: missing,
            });
        }
        let mut set = Self::new();
        for frame in frames {
            set.insert(
                frame.patient_id.clone(),
                frame.frame_id.clone(),
                frame.mask(operator).expect("checked above").clone(),
            );
        }
        Ok(set)
    }

    /// Writes masks as `<dir>/<patient_id>/<frame_id>_pred.png` (same PNG
    /// encoding as the dataset masks).
    pub fn save_predictions(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for ((patient_id, frame_id), mask) in &self.masks {
            let patient_dir = dir.join(patient_id);
            fs::create_dir_all(&patient_dir).map_err(|e| Error::io(&patient_dir, e))?;
            write_mask_png(&patient_dir.join(format!("{frame_id}_pred.png")), mask)?;
        }
        Ok(())
    }

    /// Loads every `<patient>/<frame>_pred.png` under `dir`.
    pub fn load_predictions(dir: &Path) -> Result<Self> {
        let mut set = Self::new();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            if !entry.path().is_dir() {
                continue;
            }
            let patient_id = entry.file_name().to_string_lossy().to_string();
            let files = fs::read_dir(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
            for file in files {
                let file = file.map_err(|e| Error::io(entry.path(), e))?;
                let name = file.file_name().to_string_lossy().to_string();
                if let Some(frame_id) = name.strip_suffix("_pred.png") {
                    let mask = read_mask_png(&file.path())?;
                    set.insert(patient_id.clone(), frame_id.to_string(), mask);
                }
            }
        }
        Ok(set)
    }
}

/// A frame retained through the declared empty-mask fallbacks, to be called
/// out in reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlaggedFrame {
    pub patient_id: String,
    pub frame_id: String,
    /// Which assessment was empty (e.g. `POA`, `OB`).
    pub assessment: String,
}

/// Mean±SD of Dice and Hausdorff over one (candidate, reference) pairing.
#[derive(Debug, Clone)]
pub struct PairSummary {
    pub dice_mean: f64,
    pub dice_sd: f64,
    pub hd_mean: f64,
    pub hd_sd: f64,
    pub n_frames: usize,
    /// Frames where either side was empty, with the side named.
    pub flagged: Vec<(FrameKey, &'static str)>, // side: "candidate" | "reference"
}

/// Per-frame metrics of `candidate` against `reference` over the exact same
/// frame set, reduced to mean±SD in frame order.
///
/// Empty masks follow the declared fallbacks: an empty candidate scores Dice
/// 0.0 and half-diagonal Hausdorff (and symmetrically for an empty
/// reference); two empty masks agree perfectly. Affected frames are flagged.
pub fn compare_mask_sets(candidate: &MaskSet, reference: &MaskSet) -> Result<PairSummary> {
    let mismatch: Vec<String> = candidate
        .keys()
        .filter(|k| reference.get(k).is_none())
        .chain(reference.keys().filter(|k| candidate.get(k).is_none()))
        .map(|(p, f)| format!("{p}/{f}"))
        .collect();
    if !mismatch.is_empty() {
        return Err(Error::FrameSetMismatch { frames: mismatch });
    }
    if candidate.is_empty() {
        return Err(Error::InvalidConfig(
            "comparison over an empty frame set".to_string(),
        ));
    }

    let mut dices = Vec::with_capacity(candidate.len());
    let mut hds = Vec::with_capacity(candidate.len());
    let mut flagged = Vec::new();
    for (key, cand) in candidate.iter() {
        let reference_mask = reference.get(key).expect("frame sets verified equal");
        let pair = match (cand.is_empty(), reference_mask.is_empty()) {
            (false, false) => metrics::evaluate_pair(cand, reference_mask)?,
            (true, true) => {
                flagged.push((key.clone(), "candidate"));
                flagged.push((key.clone(), "reference"));
                crate::types::MetricPair {
                    dice: 1.0,
                    hausdorff: 0.0,
                }
            }
            (true, false) => {
                flagged.push((key.clone(), "candidate"));
                metrics::evaluate_pair(cand, reference_mask)?
            }
            (false, true) => {
                flagged.push((key.clone(), "reference"));
                // evaluate_pair requires a nonempty reference; apply the same
                // fallback with the roles swapped (Dice is symmetric).
                metrics::evaluate_pair(reference_mask, cand)?
            }
        };
        dices.push(pair.dice);
        hds.push(pair.hausdorff);
    }
    let (dice_mean, dice_sd) = metrics::mean_sd(&dices)?;
    let (hd_mean, hd_sd) = metrics::mean_sd(&hds)?;
    Ok(PairSummary {
        dice_mean,
        dice_sd,
        hd_mean,
        hd_sd,
        n_frames: dices.len(),
        flagged,
    })
}

/// One row of the model benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub variant: Variant,
    pub dice_mean: f64,
    pub dice_sd: f64,
    pub hd_mean: f64,
    pub hd_sd: f64,
    pub n_frames: usize,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    /// Rows ordered U-Net, U-Net 1, U-Net 2.
    pub rows: Vec<BenchmarkRow>,
    pub flagged: Vec<FlaggedFrame>,
}

/// Runs every test frame through each checkpoint and writes the prediction
/// mask set per variant.
pub fn predict_set(checkpoint: &Checkpoint, frames: &[&DatasetFrame]) -> Result<MaskSet> {
    let mut set = MaskSet::new();
    for frame in frames {
        let mask = checkpoint.predict(&frame.image)?;
        set.insert(frame.patient_id.clone(), frame.frame_id.clone(), mask);
    }
    Ok(set)
}

/// Benchmarks the three variants' predictions against one reference operator.
/// `predictions` holds one mask set per variant.
pub fn benchmark_from_predictions(
    predictions: &BTreeMap<Variant, MaskSet>,
    reference: &MaskSet,
) -> Result<BenchmarkReport> {
    let mut rows = Vec::with_capacity(Variant::ALL.len());
    let mut flagged = Vec::new();
    for variant in Variant::ALL {
        let preds = predictions.get(&variant).ok_or_else(|| {
            Error::InvalidConfig(format!("no predictions supplied for {variant}"))
        })?;
        let summary = compare_mask_sets(preds, reference)?;
        for ((patient_id, frame_id), side) in &summary.flagged {
            flagged.push(FlaggedFrame {
                patient_id: patient_id.clone(),
                frame_id: frame_id.clone(),
                assessment: match *side {
                    "candidate" => format!("P{variant}"),
                    _ => "reference".to_string(),
                },
            });
        }
        rows.push(BenchmarkRow {
            variant,
            dice_mean: summary.dice_mean,
            dice_sd: summary.dice_sd,
            hd_mean: summary.hd_mean,
            hd_sd: summary.hd_sd,
            n_frames: summary.n_frames,
        });
    }
    Ok(BenchmarkReport { rows, flagged })
}

/// Predicts the test frames with each variant's checkpoint (all trained on
/// the same reference operator) and aggregates Dice/Hausdorff per variant.
pub fn run_benchmark(
    unet: &Checkpoint,
    unet1: &Checkpoint,
    unet2: &Checkpoint,
    test_frames: &[&DatasetFrame],
    reference: &MaskSet,
) -> Result<BenchmarkReport> {
    let mut predictions = BTreeMap::new();
    predictions.insert(Variant::Unet, predict_set(unet, test_frames)?);
    predictions.insert(Variant::Unet1, predict_set(unet1, test_frames)?);
    predictions.insert(Variant::Unet2, predict_set(unet2, test_frames)?);
    benchmark_from_predictions(&predictions, reference)
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    /// Rows in the fixed order OA_VS_OB, POA_VS_OA, POA_VS_OB, POB_VS_OB,
    /// POB_VS_OA.
    pub rows: Vec<ScenarioResult>,
    pub flagged: Vec<FlaggedFrame>,
}

/// Computes the five comparison scenarios from the four assessments of each
/// test frame: two human operators and the predictions of models trained on
/// each of them.
pub fn run_scenarios(
    pred_oa: &MaskSet,
    pred_ob: &MaskSet,
    oa: &MaskSet,
    ob: &MaskSet,
) -> Result<ScenarioReport> {
    let pairs: [(ScenarioLabel, &MaskSet, &'static str, &MaskSet, &'static str); 5] = [
        (ScenarioLabel::OaVsOb, oa, "OA", ob, "OB"),
        (ScenarioLabel::PoaVsOa, pred_oa, "POA", oa, "OA"),
        (ScenarioLabel::PoaVsOb, pred_oa, "POA", ob, "OB"),
        (ScenarioLabel::PobVsOb, pred_ob, "POB", ob, "OB"),
        (ScenarioLabel::PobVsOa, pred_ob, "POB", oa, "OA"),
    ];
    let mut rows = Vec::with_capacity(5);
    let mut flagged: Vec<FlaggedFrame> = Vec::new();
    for (label, candidate, cand_name, reference, ref_name) in pairs {
        let summary = compare_mask_sets(candidate, reference)?;
        for ((patient_id, frame_id), side) in &summary.flagged {
            let assessment = if *side == "candidate" { cand_name } else { ref_name };
            let entry = FlaggedFrame {
                patient_id: patient_id.clone(),
                frame_id: frame_id.clone(),
                assessment: assessment.to_string(),
            };
            if !flagged.contains(&entry) {
                flagged.push(entry);
            }
        }
        rows.push(ScenarioResult::new(
            label,
            summary.dice_mean,
            summary.dice_sd,
            summary.hd_mean,
            summary.hd_sd,
            summary.n_frames,
        )?);
    }
    Ok(ScenarioReport { rows, flagged })
}

/// Writes `benchmark.csv`: `model,dice_mean,dice_sd,hd_mean,hd_sd,n`.
pub fn write_benchmark_csv(path: &Path, rows: &[BenchmarkRow]) -> Result<()> {
    let mut out = String::from("model,dice_mean,dice_sd,hd_mean,hd_sd,n\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.variant.key(),
            r.dice_mean,
            r.dice_sd,
            r.hd_mean,
            r.hd_sd,
            r.n_frames
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_benchmark_csv(path: &Path) -> Result<Vec<BenchmarkRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::InvalidConfig(format!(
                "{}: malformed benchmark row {line:?}",
                path.display()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| {
                Error::InvalidConfig(format!("{}: bad number {:?}", path.display(), fields[i]))
            })
        };
        rows.push(BenchmarkRow {
            variant: Variant::parse_key(fields[0])?,
            dice_mean: num(1)?,
            dice_sd: num(2)?,
            hd_mean: num(3)?,
            hd_sd: num(4)?,
            n_frames: fields[5].parse().map_err(|_| {
                Error::InvalidConfig(format!("{}: bad count {:?}", path.display(), fields[5]))
            })?,
        });
    }
    Ok(rows)
}

/// Writes `scenarios.csv`: `scenario,dice_mean,dice_sd,hd_mean,hd_sd,n`.
pub fn write_scenarios_csv(path: &Path, rows: &[ScenarioResult]) -> Result<()> {
    let mut out = String::from("scenario,dice_mean,dice_sd,hd_mean,hd_sd,n\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.label, r.dice_mean, r.dice_sd, r.hd_mean, r.hd_sd, r.n_frames
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_scenarios_csv(path: &Path) -> Result<Vec<ScenarioResult>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::InvalidConfig(format!(
                "{}: malformed scenario row {line:?}",
                path.display()
            )));
        }
        let label = ScenarioLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == fields[0])
            .ok_or_else(|| {
                Error::InvalidConfig(format!("{}: unknown scenario {:?}", path.display(), fields[0]))
            })?;
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| {
                Error::InvalidConfig(format!("{}: bad number {:?}", path.display(), fields[i]))
            })
        };
        rows.push(ScenarioResult::new(
            label,
            num(1)?,
            num(2)?,
            num(3)?,
            num(4)?,
            fields[5].parse().map_err(|_| {
                Error::InvalidConfig(format!("{}: bad count {:?}", path.display(), fields[5]))
            })?,
        )?);
    }
    Ok(rows)
}

/// Reference measurements reported for the original private clinical corpus.
/// They are retained as documentation targets for comparison; the synthetic
/// corpus cannot and does not reproduce them.
pub mod reference {
    /// mean±SD of Dice and Hausdorff as published.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct ReportedRow {
        pub dice_mean: f64,
        pub dice_sd: f64,
        pub hd_mean: f64,
        pub hd_sd: f64,
    }

    pub const UNET: ReportedRow = ReportedRow { dice_mean: 0.92, dice_sd: 0.05, hd_mean: 3.97, hd_sd: 0.82 };
    pub const UNET1: ReportedRow = ReportedRow { dice_mean: 0.92, dice_sd: 0.04, hd_mean: 4.16, hd_sd: 0.73 };
    pub const UNET2: ReportedRow = ReportedRow { dice_mean: 0.90, dice_sd: 0.12, hd_mean: 4.09, hd_sd: 0.80 };

    pub const OA_VS_OB: ReportedRow = ReportedRow { dice_mean: 0.88, dice_sd: 0.06, hd_mean: 4.50, hd_sd: 0.87 };
    pub const POA_VS_OA: ReportedRow = ReportedRow { dice_mean: 0.92, dice_sd: 0.05, hd_mean: 3.97, hd_sd: 0.82 };
    pub const POA_VS_OB: ReportedRow = ReportedRow { dice_mean: 0.90, dice_sd: 0.05, hd_mean: 4.08, hd_sd: 0.91 };
    pub const POB_VS_OB: ReportedRow = ReportedRow { dice_mean: 0.91, dice_sd: 0.06, hd_mean: 4.24, hd_sd: 0.75 };
    pub const POB_VS_OA: ReportedRow = ReportedRow { dice_mean: 0.89, dice_sd: 0.07, hd_mean: 4.14, hd_sd: 0.80 };

    /// The inter-observer Dice level targeted by the synthetic operator-B
    /// calibration.
    pub const INTER_OBSERVER_DICE: f64 = 0.88;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_mask(size: usize, lo: usize, hi: usize) -> SegMask {
        SegMask::from_fn(size, size, |r, c| (lo..hi).contains(&r) && (lo..hi).contains(&c))
    }

    fn set_of(masks: &[(&str, &str, SegMask)]) -> MaskSet {
        let mut set = MaskSet::new();
        for (p, f, m) in masks {
            set.insert(*p, *f, m.clone());
        }
        set
    }

    #[test]
    fn identical_sets_score_perfect() {
        let a = set_of(&[
            ("p0", "p0_f0", square_mask(16, 4, 9)),
            ("p1", "p1_f0", square_mask(16, 3, 8)),
        ]);
        let summary = compare_mask_sets(&a, &a.clone()).unwrap();
        assert_eq!(summary.dice_mean, 1.0);
        assert_eq!(summary.dice_sd, 0.0);
        assert_eq!(summary.hd_mean, 0.0);
        assert_eq!(summary.n_frames, 2);
        assert!(summary.flagged.is_empty());
    }

    #[test]
    fn frame_set_mismatch_lists_missing() {
        let a = set_of(&[("p0", "p0_f0", square_mask(8, 2, 5))]);
        let b = set_of(&[("p0", "p0_f1", square_mask(8, 2, 5))]);
        match compare_mask_sets(&a, &b) {
            Err(Error::FrameSetMismatch { frames }) => {
                assert_eq!(frames.len(), 2);
                assert!(frames.contains(&"p0/p0_f0".to_string()));
                assert!(frames.contains(&"p0/p0_f1".to_string()));
            }
            other => panic!("expected FrameSetMismatch, got {other:?}"),
        }
    }

    #[test]
    fn empty_candidate_uses_fallback_and_flags() {
        let gt = set_of(&[("p0", "p0_f0", square_mask(16, 4, 9))]);
        let empty = set_of(&[("p0", "p0_f0", SegMask::zeros(16, 16))]);
        let summary = compare_mask_sets(&empty, &gt).unwrap();
        assert_eq!(summary.dice_mean, 0.0);
        assert!((summary.hd_mean - metrics::empty_prediction_fallback(16, 16)).abs() < 1e-12);
        assert_eq!(summary.flagged, vec![(("p0".to_string(), "p0_f0".to_string()), "candidate")]);
        // Swapped roles flag the reference side instead.
        let swapped = compare_mask_sets(&gt, &empty).unwrap();
        assert_eq!(swapped.dice_mean, 0.0);
        assert_eq!(swapped.flagged[0].1, "reference");
    }

    #[test]
    fn scenario_rows_are_ordered_and_symmetric_inputs_agree() {
        let oa = set_of(&[
            ("p0", "p0_f0", square_mask(16, 4, 9)),
            ("p1", "p1_f0", square_mask(16, 5, 10)),
        ]);
        let ob = set_of(&[
            ("p0", "p0_f0", square_mask(16, 4, 10)),
            ("p1", "p1_f0", square_mask(16, 5, 9)),
        ]);
        // All four assessments identical -> all rows perfect.
        let report = run_scenarios(&oa, &oa, &oa, &oa).unwrap();
        assert_eq!(report.rows.len(), 5);
        for row in &report.rows {
            assert_eq!(row.dice_mean, 1.0);
            assert_eq!(row.hd_mean, 0.0);
        }
        let labels: Vec<ScenarioLabel> = report.rows.iter().map(|r| r.label).collect();
        assert_eq!(labels, ScenarioLabel::ALL.to_vec());

        // Swapping the two inputs of a symmetric comparison leaves Dice and
        // HD unchanged.
        let ab = compare_mask_sets(&oa, &ob).unwrap();
        let ba = compare_mask_sets(&ob, &oa).unwrap();
        assert_eq!(ab.dice_mean, ba.dice_mean);
        assert_eq!(ab.hd_mean, ba.hd_mean);
    }

    #[test]
    fn poa_vs_oa_equals_benchmark_row_bitwise() {
        let oa = set_of(&[
            ("p0", "p0_f0", square_mask(32, 8, 20)),
            ("p1", "p1_f0", square_mask(32, 9, 21)),
            ("p2", "p2_f0", square_mask(32, 7, 18)),
        ]);
        // A slightly dilated "prediction" set.
        let pred = set_of(&[
            ("p0", "p0_f0", square_mask(32, 7, 21)),
            ("p1", "p1_f0", square_mask(32, 9, 22)),
            ("p2", "p2_f0", square_mask(32, 7, 19)),
        ]);
        let mut predictions = BTreeMap::new();
        predictions.insert(Variant::Unet, pred.clone());
        predictions.insert(Variant::Unet1, pred.clone());
        predictions.insert(Variant::Unet2, pred.clone());
        let benchmark = benchmark_from_predictions(&predictions, &oa).unwrap();
        let scenario = run_scenarios(&pred, &pred, &oa, &oa).unwrap();
        let bench_unet = &benchmark.rows[0];
        let poa_oa = &scenario.rows[1];
        assert_eq!(poa_oa.label, ScenarioLabel::PoaVsOa);
        assert_eq!(bench_unet.dice_mean.to_bits(), poa_oa.dice_mean.to_bits());
        assert_eq!(bench_unet.dice_sd.to_bits(), poa_oa.dice_sd.to_bits());
        assert_eq!(bench_unet.hd_mean.to_bits(), poa_oa.hd_mean.to_bits());
        assert_eq!(bench_unet.hd_sd.to_bits(), poa_oa.hd_sd.to_bits());
    }

    #[test]
    fn csv_roundtrip_to_six_decimals() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![BenchmarkRow {
            variant: Variant::Unet,
            dice_mean: 0.923_456_789,
            dice_sd: 0.051_234_5,
            hd_mean: 3.971_111_9,
            hd_sd: 0.821_999,
            n_frames: 64,
        }];
        let path = dir.path().join("benchmark.csv");
        write_benchmark_csv(&path, &rows).unwrap();
        let back = read_benchmark_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert!((back[0].dice_mean - rows[0].dice_mean).abs() < 5e-7);
        assert!((back[0].hd_mean - rows[0].hd_mean).abs() < 5e-7);
        assert_eq!(back[0].n_frames, 64);

        let srows = vec![ScenarioResult::new(ScenarioLabel::OaVsOb, 0.881_234_56, 0.06, 4.5, 0.87, 10).unwrap()];
        let spath = dir.path().join("scenarios.csv");
        write_scenarios_csv(&spath, &srows).unwrap();
        let sback = read_scenarios_csv(&spath).unwrap();
        assert_eq!(sback[0].label, ScenarioLabel::OaVsOb);
        assert!((sback[0].dice_mean - srows[0].dice_mean).abs() < 5e-7);
    }

    #[test]
    fn prediction_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let set = set_of(&[
            ("p0", "p0_f0", square_mask(16, 4, 9)),
            ("p1", "p1_f1", square_mask(16, 2, 6)),
        ]);
        set.save_predictions(dir.path()).unwrap();
        let back = MaskSet::load_predictions(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        for (key, mask) in set.iter() {
            assert_eq!(back.get(key).unwrap(), mask);
        }
    }
}
