//! Shared domain types: image frames, binary masks, contours and result rows.
//!
//! All grids are indexed `(row, col)` with the origin at the top-left corner;
//! distances are Euclidean in pixel units. Every type is immutable after
//! construction and safe to share across threads.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2D grayscale intensity grid with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    pixels: Array2<f32>,
    frame_id: String,
    patient_id: String,
}

impl ImageFrame {
    /// Validates that every intensity lies in `[0, 1]`.
    pub fn new(
        pixels: Array2<f32>,
        frame_id: impl Into<String>,
        patient_id: impl Into<String>,
    ) -> Result<Self> {
        for ((row, col), &value) in pixels.indexed_iter() {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(Error::IntensityOutOfRange { row, col, value });
            }
        }
        Ok(Self {
            pixels,
            frame_id: frame_id.into(),
            patient_id: patient_id.into(),
        })
    }

    pub fn pixels(&self) -> &Array2<f32> {
        &self.pixels
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }
}

/// A binary 2D grid marking LV-cavity pixels (1 = cavity, 0 = background).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    values: Array2<u8>,
}

impl SegMask {
    /// Validates that every value is 0 or 1.
    pub fn new(values: Array2<u8>) -> Result<Self> {
        for ((row, col), &value) in values.indexed_iter() {
            if value > 1 {
                return Err(Error::NonBinaryMask { row, col, value });
            }
        }
        Ok(Self { values })
    }

    /// Builds a mask from a per-pixel predicate.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        Self {
            values: Array2::from_shape_fn((height, width), |(r, c)| u8::from(f(r, c))),
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            values: Array2::zeros((height, width)),
        }
    }

    pub fn values(&self) -> &Array2<u8> {
        &self.values
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[(row, col)] == 1
    }

    /// Foreground pixel coordinates in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.values
            .indexed_iter()
            .filter(|(_, &v)| v == 1)
            .map(|(idx, _)| idx)
    }

    pub(crate) fn same_shape(&self, other: &SegMask) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }
}

/// The human operator that produced an annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "OA")]
    A,
    #[serde(rename = "OB")]
    B,
}

impl Operator {
    pub fn label(self) -> &'static str {
        match self {
            Operator::A => "OA",
            Operator::B => "OB",
        }
    }
}

impl std::fmt::Display for Operator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One manual tracing of one frame by one operator.
#[derive(Debug, Clone)]
pub struct AnnotationRecord {
    pub frame_id: String,
    pub patient_id: String,
    pub operator: Operator,
    pub mask: SegMask,
}

/// An ordered, closed sequence of boundary pixel coordinates.
///
/// Consecutive points are 8-adjacent and the last point is 8-adjacent to the
/// first. Points may repeat where the boundary is one pixel wide (the trace
/// walks out and back along such protrusions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    points: Vec<(usize, usize)>,
    closed: bool,
}

impl Contour {
    /// Validates 8-adjacency between consecutive points and closure.
    pub fn new(points: Vec<(usize, usize)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyContour);
        }
        let adjacent = |a: (usize, usize), b: (usize, usize)| {
            let dr = a.0.abs_diff(b.0);
            let dc = a.1.abs_diff(b.1);
            dr <= 1 && dc <= 1
        };
        for window in points.windows(2) {
            if !adjacent(window[0], window[1]) {
                return Err(Error::InvalidContour(format!(
                    "{:?} and {:?} are not 8-adjacent",
                    window[0], window[1]
                )));
            }
        }
        let first = points[0];
        let last = *points.last().expect("nonempty");
        if !adjacent(first, last) {
            return Err(Error::InvalidContour(format!(
                "endpoints {first:?} and {last:?} are not 8-adjacent"
            )));
        }
        Ok(Self {
            points,
            closed: true,
        })
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn closed(&self) -> bool {
        self.closed
    }
}

/// Per-frame evaluation result: Dice coefficient (unitless, `[0, 1]`) and
/// Hausdorff distance (pixels, `>= 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub dice: f64,
    pub hausdorff: f64,
}

impl MetricPair {
    pub fn new(dice: f64, hausdorff: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&dice) {
            return Err(Error::InvalidConfig(format!(
                "dice {dice} outside [0, 1]"
            )));
        }
        if hausdorff < 0.0 || hausdorff.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "hausdorff {hausdorff} is negative"
            )));
        }
        Ok(Self { dice, hausdorff })
    }
}

/// The five comparison scenarios: two human operators (OA, OB) and the model
/// predictions trained on each of them (POA, POB).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioLabel {
    OaVsOb,
    PoaVsOa,
    PoaVsOb,
    PobVsOb,
    PobVsOa,
}

impl ScenarioLabel {
    pub const ALL: [ScenarioLabel; 5] = [
        ScenarioLabel::OaVsOb,
        ScenarioLabel::PoaVsOa,
        ScenarioLabel::PoaVsOb,
        ScenarioLabel::PobVsOb,
        ScenarioLabel::PobVsOa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioLabel::OaVsOb => "OA_VS_OB",
            ScenarioLabel::PoaVsOa => "POA_VS_OA",
            ScenarioLabel::PoaVsOb => "POA_VS_OB",
            ScenarioLabel::PobVsOb => "POB_VS_OB",
            ScenarioLabel::PobVsOa => "POB_VS_OA",
        }
    }

    /// Table heading form, e.g. `OA VS OB`.
    pub fn display_name(self) -> String {
        self.as_str().replace('_', " ")
    }
}

impl std::fmt::Display for ScenarioLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of the scenario table: mean±SD of Dice and Hausdorff distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub label: ScenarioLabel,
    pub dice_mean: f64,
    pub dice_sd: f64,
    pub hd_mean: f64,
    pub hd_sd: f64,
    pub n_frames: usize,
}

impl ScenarioResult {
    pub fn new(
        label: ScenarioLabel,
        dice_mean: f64,
        dice_sd: f64,
        hd_mean: f64,
        hd_sd: f64,
        n_frames: usize,
    ) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::InvalidConfig(
                "scenario over zero frames".to_string(),
            ));
        }
        if dice_sd < 0.0 || hd_sd < 0.0 {
            return Err(Error::InvalidConfig(
                "negative standard deviation".to_string(),
            ));
        }
        Ok(Self {
            label,
            dice_mean,
            dice_sd,
            hd_mean,
            hd_sd,
            n_frames,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn image_frame_rejects_out_of_range() {
        let bad = array![[0.0_f32, 1.2], [0.5, 0.5]];
        assert!(matches!(
            ImageFrame::new(bad, "f", "p"),
            Err(Error::IntensityOutOfRange { row: 0, col: 1, .. })
        ));
        let good = array![[0.0_f32, 1.0], [0.5, 0.25]];
        assert!(ImageFrame::new(good, "f", "p").is_ok());
    }

    #[test]
    fn seg_mask_rejects_non_binary() {
        let bad = array![[0_u8, 2]];
        assert!(matches!(
            SegMask::new(bad),
            Err(Error::NonBinaryMask { value: 2, .. })
        ));
    }

    #[test]
    fn mask_area_and_foreground() {
        let mask = SegMask::from_fn(3, 3, |r, c| r == 1 && c >= 1);
        assert_eq!(mask.area(), 2);
        assert_eq!(mask.foreground().collect::<Vec<_>>(), vec![(1, 1), (1, 2)]);
        assert!(!mask.is_empty());
        assert!(SegMask::zeros(2, 2).is_empty());
    }

    #[test]
    fn contour_validates_adjacency() {
        assert!(Contour::new(vec![(0, 0), (0, 1), (1, 1), (1, 0)]).is_ok());
        assert!(Contour::new(vec![(0, 0)]).is_ok());
        assert!(matches!(
            Contour::new(vec![(0, 0), (0, 2)]),
            Err(Error::InvalidContour(_))
        ));
        assert!(matches!(Contour::new(vec![]), Err(Error::EmptyContour)));
        // Open chain: endpoints too far apart to close.
        assert!(matches!(
            Contour::new(vec![(0, 0), (0, 1), (0, 2)]),
            Err(Error::InvalidContour(_))
        ));
    }

    #[test]
    fn metric_pair_bounds() {
        assert!(MetricPair::new(0.5, 3.0).is_ok());
        assert!(MetricPair::new(1.2, 0.0).is_err());
        assert!(MetricPair::new(0.5, -1.0).is_err());
    }

    #[test]
    fn scenario_labels_render() {
        assert_eq!(ScenarioLabel::OaVsOb.as_str(), "OA_VS_OB");
        assert_eq!(ScenarioLabel::PobVsOa.display_name(), "POB VS OA");
        assert_eq!(ScenarioLabel::ALL.len(), 5);
    }
}
