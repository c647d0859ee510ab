//! On-disk dataset generation and loading.
//!
//! Layout under the dataset root:
//!
//! ```text
//! <root>/
//!   manifest.csv            # patient_id,frame_id,split
//!   params.json             # generator provenance
//!   <patient_id>/
//!     <frame_id>_img.png    # 8-bit grayscale
//!     <frame_id>_maskA.png  # 0 = background, 255 = LV
//!     <frame_id>_maskB.png
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageReader, Luma};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::phantom::{generate_labeled, PhantomParams};
use crate::synth::split::{SplitAssignment, SplitGroup};
use crate::synth::frame_seed;
use crate::types::{AnnotationRecord, ImageFrame, Operator, SegMask};

/// Provenance echoed next to the generated files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub frames_per_patient: usize,
    pub base_seed: u64,
    pub params: PhantomParams,
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub patient_id: String,
    pub frame_id: String,
    pub split: Option<SplitGroup>,
}

/// The frame listing, ordered by (patient_id, frame_id).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(mut entries: Vec<ManifestEntry>) -> Self {
        entries.sort_by(|a, b| {
            (a.patient_id.as_str(), a.frame_id.as_str())
                .cmp(&(b.patient_id.as_str(), b.frame_id.as_str()))
        });
        Self { entries }
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted unique patient ids.
    pub fn patients(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.entries.iter().map(|e| e.patient_id.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Copies split groups from a patient assignment onto every frame row.
    pub fn apply_split(&mut self, split: &SplitAssignment) -> Result<()> {
        for entry in &mut self.entries {
            let group = split.group_of(&entry.patient_id).ok_or_else(|| {
                Error::InvalidSplit(format!(
                    "patient {} missing from the split assignment",
                    entry.patient_id
                ))
            })?;
            entry.split = Some(group);
        }
        Ok(())
    }

    /// Reconstructs the patient assignment from the split column, if every
    /// row carries one consistently.
    pub fn split_assignment(&self) -> Option<SplitAssignment> {
        let mut groups = std::collections::BTreeMap::new();
        for entry in &self.entries {
            let group = entry.split?;
            if *groups.entry(entry.patient_id.clone()).or_insert(group) != group {
                return None; // split must be patient-level
            }
        }
        if groups.is_empty() {
            None
        } else {
            Some(SplitAssignment::new(groups))
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let as_csv = |e: &ManifestEntry| {
            [
                e.patient_id.clone(),
                e.frame_id.clone(),
                e.split.map(|g| g.as_str().to_string()).unwrap_or_default(),
            ]
        };
        writer
            .write_record(["patient_id", "frame_id", "split"])
            .and_then(|_| {
                self.entries
                    .iter()
                    .try_for_each(|e| writer.write_record(as_csv(e)))
            })
            .and_then(|_| writer.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                source: e,
            })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                source: e,
            })?;
            let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
            let split = match field(2).as_str() {
                "" => None,
                s => Some(SplitGroup::parse(s)?),
            };
            entries.push(ManifestEntry {
                patient_id: field(0),
                frame_id: field(1),
                split,
            });
        }
        Ok(Self::new(entries))
    }
}

/// Writes intensities in `[0, 1]` as an 8-bit grayscale PNG.
pub fn write_gray_png(path: &Path, pixels: &Array2<f32>) -> Result<()> {
    let (h, w) = pixels.dim();
    let mut img = GrayImage::new(w as u32, h as u32);
    for ((r, c), &v) in pixels.indexed_iter() {
        img.put_pixel(c as u32, r as u32, Luma([(v * 255.0).round() as u8]));
    }
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_gray_png(path: &Path) -> Result<Array2<f32>> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })?
        .into_luma8();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        img.get_pixel(c as u32, r as u32)[0] as f32 / 255.0
    }))
}

/// Writes a binary mask as an 8-bit PNG with foreground 255.
pub fn write_mask_png(path: &Path, mask: &SegMask) -> Result<()> {
    let (h, w) = mask.shape();
    let mut img = GrayImage::new(w as u32, h as u32);
    for ((r, c), &v) in mask.values().indexed_iter() {
        img.put_pixel(c as u32, r as u32, Luma([v * 255]));
    }
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_mask_png(path: &Path) -> Result<SegMask> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })?
        .into_luma8();
    let (w, h) = img.dimensions();
    Ok(SegMask::from_fn(h as usize, w as usize, |r, c| {
        img.get_pixel(c as u32, r as u32)[0] >= 128
    }))
}

/// Generates `n_patients * frames_per_patient` frames into `out_dir` and
/// returns the manifest (also written to `manifest.csv`).
///
/// Per-frame seeds derive from `(base_seed, patient index, frame index)`, so
/// regenerating any subset yields identical bytes regardless of order.
pub fn generate_dataset(
    n_patients: usize,
    frames_per_patient: usize,
    base_seed: u64,
    params: &PhantomParams,
    out_dir: &Path,
) -> Result<Manifest> {
    if n_patients == 0 || frames_per_patient == 0 {
        return Err(Error::InvalidParams(
            "need at least one patient and one frame per patient".to_string(),
        ));
    }
    params.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut entries = Vec::with_capacity(n_patients * frames_per_patient);
    for p in 0..n_patients {
        let patient_id = format!("p{p:03}");
        let patient_dir = out_dir.join(&patient_id);
        fs::create_dir_all(&patient_dir).map_err(|e| Error::io(&patient_dir, e))?;
        for f in 0..frames_per_patient {
            let frame_id = format!("{patient_id}_f{f:02}");
            let phantom = generate_labeled(
                frame_seed(base_seed, p, f),
                params,
                &frame_id,
                &patient_id,
            )?;
            write_gray_png(
                &patient_dir.join(format!("{frame_id}_img.png")),
                phantom.image.pixels(),
            )?;
            write_mask_png(
                &patient_dir.join(format!("{frame_id}_maskA.png")),
                &phantom.ground_truth,
            )?;
            write_mask_png(
                &patient_dir.join(format!("{frame_id}_maskB.png")),
                &phantom.operator_b,
            )?;
            entries.push(ManifestEntry {
                patient_id: patient_id.clone(),
                frame_id,
                split: None,
            });
        }
    }

    let manifest = Manifest::new(entries);
    manifest.write(&out_dir.join("manifest.csv"))?;

    let config = GeneratorConfig {
        n_patients,
        frames_per_patient,
        base_seed,
        params: params.clone(),
    };
    let params_path = out_dir.join("params.json");
    let json = serde_json::to_string_pretty(&config).map_err(|e| Error::Json {
        path: params_path.clone(),
        source: e,
    })?;
    fs::write(&params_path, json).map_err(|e| Error::io(&params_path, e))?;

    Ok(manifest)
}

/// One loaded frame; operator masks are optional so that partially annotated
/// corpora load and the consumer can report exactly which masks are missing.
#[derive(Debug, Clone)]
pub struct DatasetFrame {
    pub patient_id: String,
    pub frame_id: String,
    pub image: ImageFrame,
    pub mask_a: Option<SegMask>,
    pub mask_b: Option<SegMask>,
}

impl DatasetFrame {
    pub fn mask(&self, operator: Operator) -> Option<&SegMask> {
        match operator {
            Operator::A => self.mask_a.as_ref(),
            Operator::B => self.mask_b.as_ref(),
        }
    }

    pub fn annotation(&self, operator: Operator) -> Option<AnnotationRecord> {
        Some(AnnotationRecord {
            frame_id: self.frame_id.clone(),
            patient_id: self.patient_id.clone(),
            operator,
            mask: self.mask(operator)?.clone(),
        })
    }
}

/// A fully loaded dataset, frames ordered by (patient_id, frame_id).
#[derive(Debug, Clone)]
pub struct Dataset {
    frames: Vec<DatasetFrame>,
    manifest: Manifest,
    root: PathBuf,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let manifest = Manifest::read(&root.join("manifest.csv"))?;
        let mut frames = Vec::with_capacity(manifest.len());
        for entry in manifest.entries() {
            let dir = root.join(&entry.patient_id);
            let image_path = dir.join(format!("{}_img.png", entry.frame_id));
            let pixels = read_gray_png(&image_path)?;
            let image = ImageFrame::new(pixels, &entry.frame_id, &entry.patient_id)?;
            let mask = |suffix: &str| -> Result<Option<SegMask>> {
                let path = dir.join(format!("{}_{suffix}.png", entry.frame_id));
                if path.exists() {
                    read_mask_png(&path).map(Some)
                } else {
                    Ok(None)
                }
            };
            frames.push(DatasetFrame {
                patient_id: entry.patient_id.clone(),
                frame_id: entry.frame_id.clone(),
                image,
                mask_a: mask("maskA")?,
                mask_b: mask("maskB")?,
            });
        }
        Ok(Self {
            frames,
            manifest,
            root: root.to_path_buf(),
        })
    }

    pub fn frames(&self) -> &[DatasetFrame] {
        &self.frames
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn patients(&self) -> Vec<String> {
        self.manifest.patients()
    }

    pub fn split_assignment(&self) -> Option<SplitAssignment> {
        self.manifest.split_assignment()
    }

    /// Frames whose patient belongs to the given split group.
    pub fn frames_in(&self, split: &SplitAssignment, group: SplitGroup) -> Vec<&DatasetFrame> {
        self.frames
            .iter()
            .filter(|f| split.group_of(&f.patient_id) == Some(group))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::split_patients;
    use tempfile::tempdir;

    fn small_params() -> PhantomParams {
        PhantomParams::for_size(32)
    }

    #[test]
    fn counts_and_patients() {
        let dir = tempdir().unwrap();
        let manifest = generate_dataset(3, 2, 5, &small_params(), dir.path()).unwrap();
        assert_eq!(manifest.len(), 6);
        assert_eq!(manifest.patients().len(), 3);
        let dataset = Dataset::load(dir.path()).unwrap();
        assert_eq!(dataset.frames().len(), 6);
        assert!(dataset.frames().iter().all(|f| f.mask_a.is_some() && f.mask_b.is_some()));
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let ma = generate_dataset(2, 2, 9, &small_params(), dir_a.path()).unwrap();
        let mb = generate_dataset(2, 2, 9, &small_params(), dir_b.path()).unwrap();
        assert_eq!(ma, mb);
        for entry in ma.entries() {
            for suffix in ["img", "maskA", "maskB"] {
                let rel = format!("{}/{}_{suffix}.png", entry.patient_id, entry.frame_id);
                let a = std::fs::read(dir_a.path().join(&rel)).unwrap();
                let b = std::fs::read(dir_b.path().join(&rel)).unwrap();
                assert_eq!(a, b, "{rel} differs between regenerations");
            }
        }
        let a = std::fs::read(dir_a.path().join("manifest.csv")).unwrap();
        let b = std::fs::read(dir_b.path().join("manifest.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn manifest_split_roundtrip() {
        let dir = tempdir().unwrap();
        let mut manifest = generate_dataset(5, 1, 1, &small_params(), dir.path()).unwrap();
        assert!(manifest.split_assignment().is_none());
        let split = split_patients(&manifest.patients(), (0.6, 0.2, 0.2), 3).unwrap();
        manifest.apply_split(&split).unwrap();
        manifest.write(&dir.path().join("manifest.csv")).unwrap();

        let reloaded = Manifest::read(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(reloaded.split_assignment().unwrap(), split);
    }

    #[test]
    fn image_png_roundtrip_preserves_quantized_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.png");
        let pixels = Array2::from_shape_fn((16, 16), |(r, c)| {
            (((r * 16 + c) % 256) as f32) / 255.0
        });
        write_gray_png(&path, &pixels).unwrap();
        let back = read_gray_png(&path).unwrap();
        for (a, b) in pixels.iter().zip(back.iter()) {
            assert!((a - b).abs() < 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn missing_mask_loads_as_none() {
        let dir = tempdir().unwrap();
        generate_dataset(1, 1, 2, &small_params(), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("p000/p000_f00_maskB.png")).unwrap();
        let dataset = Dataset::load(dir.path()).unwrap();
        assert!(dataset.frames()[0].mask_a.is_some());
        assert!(dataset.frames()[0].mask_b.is_none());
    }
}
