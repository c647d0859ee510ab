//! Browser bindings for the phantom generator and the agreement metrics.
//!
//! Three interactive operations back the static page in `www/`:
//!
//! 1. [`phantom_rgba`] renders a seeded phantom with the two tracings
//!    overlaid (ground truth blue, simulated second observer yellow).
//! 2. [`phantom_metrics_json`] scores the two tracings against each other
//!    (Dice, Hausdorff).
//! 3. [`calibration_curve_json`] sweeps the observer-perturbation magnitude
//!    and reports mean Dice per step, the curve used to pin the default.
//!
//! All computation is the same code the native pipeline runs; the wrappers
//! only shuttle parameters and encode results.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use echoseg_core::metrics::{dice, evaluate_pair, extract_contour};
use echoseg_core::report::{grayscale_rgb, overlay_image, Overlay};
use echoseg_core::synth::{generate_phantom, PhantomParams};
use echoseg_core::types::MetricPair;

/// Slider-controlled subset of the phantom parameters.
#[derive(Clone, Copy)]
pub struct DemoParams {
    pub size: usize,
    pub speckle: f64,
    pub dropout: f64,
    pub perturbation: f64,
    pub sector_angle: f64,
}

impl DemoParams {
    fn to_phantom(self) -> PhantomParams {
        PhantomParams {
            speckle_strength: self.speckle,
            border_dropout_prob: self.dropout,
            operator_b_perturbation: self.perturbation,
            sector_angle: self.sector_angle,
            ..PhantomParams::for_size(self.size)
        }
    }
}

/// Scene buffer plus the per-frame agreement metrics.
pub struct Scene {
    pub rgba: Vec<u8>,
    pub size: usize,
    pub metrics: MetricPair,
}

/// Renders one phantom with both tracings and scores operator B against the
/// ground truth.
pub fn render_scene(seed: u32, params: DemoParams, show_contours: bool) -> Result<Scene, String> {
    let phantom_params = params.to_phantom();
    let phantom = generate_phantom(seed as u64, &phantom_params).map_err(|e| e.to_string())?;
    let pair = evaluate_pair(&phantom.operator_b, &phantom.ground_truth).map_err(|e| e.to_string())?;

    let rgb = if show_contours {
        let manual = extract_contour(&phantom.ground_truth).map_err(|e| e.to_string())?;
        let automated = extract_contour(&phantom.operator_b).map_err(|e| e.to_string())?;
        overlay_image(&Overlay {
            image: &phantom.image,
            manual: &manual,
            automated: Some(&automated),
            metrics: Some(pair),
        })
        .map_err(|e| e.to_string())?
    } else {
        grayscale_rgb(&phantom.image)
    };

    let size = params.size;
    let mut rgba = Vec::with_capacity(size * size * 4);
    for pixel in rgb.pixels() {
        rgba.extend_from_slice(&[pixel[0], pixel[1], pixel[2], 255]);
    }
    Ok(Scene {
        rgba,
        size,
        metrics: pair,
    })
}

#[derive(Serialize)]
struct CurvePoint {
    magnitude: f64,
    mean_dice: f64,
}

/// Mean Dice(gt, operator B) over `n_seeds` phantoms for each perturbation
/// magnitude (pixels).
pub fn calibration_curve(
    params: DemoParams,
    magnitudes: &[f64],
    n_seeds: u32,
) -> Result<Vec<(f64, f64)>, String> {
    if n_seeds == 0 || magnitudes.is_empty() {
        return Err("need at least one seed and one magnitude".to_string());
    }
    let mut points = Vec::with_capacity(magnitudes.len());
    for &magnitude in magnitudes {
        let phantom_params = PhantomParams {
            operator_b_perturbation: magnitude,
            ..params.to_phantom()
        };
        let mut total = 0.0;
        for seed in 0..n_seeds {
            let phantom =
                generate_phantom(seed as u64, &phantom_params).map_err(|e| e.to_string())?;
            total += dice(&phantom.ground_truth, &phantom.operator_b).map_err(|e| e.to_string())?;
        }
        points.push((magnitude, total / n_seeds as f64));
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// wasm-bindgen surface
// ---------------------------------------------------------------------------

fn demo_params(
    size: usize,
    speckle: f64,
    dropout: f64,
    perturbation: f64,
    sector_angle: f64,
) -> DemoParams {
    DemoParams {
        size,
        speckle,
        dropout,
        perturbation,
        sector_angle,
    }
}

/// RGBA pixel buffer (size × size × 4) of a seeded phantom scene.
#[wasm_bindgen]
pub fn phantom_rgba(
    seed: u32,
    size: usize,
    speckle: f64,
    dropout: f64,
    perturbation: f64,
    sector_angle: f64,
    show_contours: bool,
) -> Result<Vec<u8>, JsError> {
    render_scene(seed, demo_params(size, speckle, dropout, perturbation, sector_angle), show_contours)
        .map(|scene| scene.rgba)
        .map_err(|e| JsError::new(&e))
}

/// `{"dice": .., "hausdorff": ..}` between ground truth and the simulated
/// second observer for one seeded phantom.
#[wasm_bindgen]
pub fn phantom_metrics_json(
    seed: u32,
    size: usize,
    speckle: f64,
    dropout: f64,
    perturbation: f64,
    sector_angle: f64,
) -> Result<String, JsError> {
    let scene = render_scene(
        seed,
        demo_params(size, speckle, dropout, perturbation, sector_angle),
        false,
    )
    .map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&scene.metrics).map_err(|e| JsError::new(&e.to_string()))
}

/// JSON array of `{magnitude, mean_dice}` sweeping the perturbation from
/// `from` to `to` in `steps` steps, `n_seeds` phantoms each.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn calibration_curve_json(
    size: usize,
    speckle: f64,
    dropout: f64,
    sector_angle: f64,
    from: f64,
    to: f64,
    steps: usize,
    n_seeds: u32,
) -> Result<String, JsError> {
    if steps < 2 || to <= from {
        return Err(JsError::new("need steps >= 2 and to > from"));
    }
    let magnitudes: Vec<f64> = (0..steps)
        .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
        .collect();
    let params = demo_params(size, speckle, dropout, 0.0, sector_angle);
    let points = calibration_curve(params, &magnitudes, n_seeds).map_err(|e| JsError::new(&e))?;
    let encoded: Vec<CurvePoint> = points
        .into_iter()
        .map(|(magnitude, mean_dice)| CurvePoint {
            magnitude,
            mean_dice,
        })
        .collect();
    serde_json::to_string(&encoded).map_err(|e| JsError::new(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(size: usize) -> DemoParams {
        let defaults = PhantomParams::for_size(size);
        DemoParams {
            size,
            speckle: defaults.speckle_strength,
            dropout: defaults.border_dropout_prob,
            perturbation: defaults.operator_b_perturbation,
            sector_angle: defaults.sector_angle,
        }
    }

    #[test]
    fn scene_buffer_has_rgba_layout() {
        let scene = render_scene(5, params(64), true).unwrap();
        assert_eq!(scene.rgba.len(), 64 * 64 * 4);
        assert!(scene.rgba.iter().skip(3).step_by(4).all(|&a| a == 255));
        assert!(scene.metrics.dice > 0.5 && scene.metrics.dice < 1.0);
        // Contour overlay actually paints some blue and yellow pixels.
        let mut blue = 0;
        let mut yellow = 0;
        for px in scene.rgba.chunks(4) {
            if px[..3] == [0, 0, 255] {
                blue += 1;
            }
            if px[..3] == [255, 255, 0] {
                yellow += 1;
            }
        }
        assert!(blue > 0 && yellow > 0);
    }

    #[test]
    fn scene_is_seed_deterministic() {
        let a = render_scene(9, params(64), false).unwrap();
        let b = render_scene(9, params(64), false).unwrap();
        assert_eq!(a.rgba, b.rgba);
    }

    #[test]
    fn curve_is_monotone_decreasing_on_average() {
        let points = calibration_curve(params(64), &[0.0, 1.0, 3.0], 12).unwrap();
        assert_eq!(points.len(), 3);
        assert!((points[0].1 - 1.0).abs() < 1e-12, "zero magnitude agrees exactly");
        assert!(points[2].1 < points[0].1);
    }

    #[test]
    fn json_surfaces_are_well_formed() {
        let metrics = phantom_metrics_json(3, 64, 0.3, 0.1, 2.0, 72.0).unwrap();
        let value: serde_json::Value = serde_json::from_str(&metrics).unwrap();
        assert!(value["dice"].is_number());
        assert!(value["hausdorff"].is_number());

        let curve = calibration_curve_json(64, 0.3, 0.1, 72.0, 0.0, 3.0, 4, 4).unwrap();
        let value: serde_json::Value = serde_json::from_str(&curve).unwrap();
        assert_eq!(value.as_array().unwrap().len(), 4);
    }
}
