//! Single-frame phantom generation.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ImageFrame, SegMask};

/// Base intensities of the scene, before speckle.
const BG_LEVEL: f32 = 0.02;
const CAVITY_LEVEL: f32 = 0.10;
const RING_LEVEL: f32 = 0.80;
const TISSUE_LEVEL: f32 = 0.42;
/// Myocardial ring spans normalized ellipse radii (1, RING_RHO].
const RING_RHO: f64 = 1.30;

/// Geometry and degradation parameters of the phantom scene.
///
/// All lengths are in pixels; the perturbation magnitude is the RMS of the
/// smooth displacement field applied to the ground truth to synthesize the
/// second observer's tracing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    /// Square frame side length.
    pub image_size: usize,
    /// Cavity ellipse semi-axes (rows, cols).
    pub cavity_axes: (f64, f64),
    /// Cavity ellipse center (row, col).
    pub cavity_center: (f64, f64),
    /// Full opening angle of the imaging sector, degrees.
    pub sector_angle: f64,
    /// Multiplicative speckle strength (0 disables).
    pub speckle_strength: f64,
    /// Probability that one angular wedge of the ring is attenuated.
    pub border_dropout_prob: f64,
    /// RMS magnitude of the operator-B displacement field, pixels.
    pub operator_b_perturbation: f64,
}

/// Operator-B perturbation as a fraction of the frame side. Calibrated by
/// sweeping the magnitude and measuring mean Dice(gt, operator B) over 100
/// seeds: 0.033 lands at 0.886 (64 px frames) and 0.879 (256 px frames),
/// matching the 0.88 inter-observer agreement level.
pub(crate) const PERTURBATION_FRACTION: f64 = 0.033;

impl PhantomParams {
    /// Sensible defaults for a square frame of the given side length; the
    /// geometry and perturbation scale with the frame so agreement statistics
    /// are size-independent.
    pub fn for_size(image_size: usize) -> Self {
        let s = image_size as f64;
        Self {
            image_size,
            cavity_axes: (0.21 * s, 0.135 * s),
            cavity_center: (0.55 * s, 0.5 * s),
            sector_angle: 72.0,
            speckle_strength: 0.32,
            border_dropout_prob: 0.15,
            operator_b_perturbation: PERTURBATION_FRACTION * s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(Error::InvalidParams(format!(
                "image size {} below the 8-pixel minimum",
                self.image_size
            )));
        }
        if self.cavity_axes.0 < 1.0 || self.cavity_axes.1 < 1.0 {
            return Err(Error::InvalidParams(format!(
                "cavity axes {:?} must be at least one pixel",
                self.cavity_axes
            )));
        }
        if !(0.0..=180.0).contains(&self.sector_angle) || self.sector_angle <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "sector angle {} outside (0, 180]",
                self.sector_angle
            )));
        }
        if self.speckle_strength < 0.0 {
            return Err(Error::InvalidParams("negative speckle strength".into()));
        }
        if !(0.0..=1.0).contains(&self.border_dropout_prob) {
            return Err(Error::InvalidParams(format!(
                "border dropout probability {} outside [0, 1]",
                self.border_dropout_prob
            )));
        }
        if self.operator_b_perturbation < 0.0 {
            return Err(Error::InvalidParams("negative perturbation".into()));
        }
        let base = Ellipse {
            center: self.cavity_center,
            axes: self.cavity_axes,
            rotation: 0.0,
        };
        if !self.sector().contains_ellipse(&base, self.image_size) {
            return Err(Error::InvalidParams(
                "cavity ellipse is not fully inside the imaging sector".into(),
            ));
        }
        Ok(())
    }

    fn sector(&self) -> Sector {
        let s = self.image_size as f64;
        Sector {
            apex: (-0.04 * s, 0.5 * s),
            half_angle: (self.sector_angle / 2.0).to_radians(),
            radius: 1.08 * s,
        }
    }
}

/// One generated frame: the image plus the two annotations.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: ImageFrame,
    pub ground_truth: SegMask,
    pub operator_b: SegMask,
}

struct Sector {
    apex: (f64, f64),
    half_angle: f64,
    radius: f64,
}

impl Sector {
    fn contains(&self, r: f64, c: f64) -> bool {
        let dr = r - self.apex.0;
        let dc = c - self.apex.1;
        if dr <= 0.0 {
            return false;
        }
        let depth = (dr * dr + dc * dc).sqrt();
        depth <= self.radius && dc.atan2(dr).abs() <= self.half_angle
    }

    fn contains_ellipse(&self, ellipse: &Ellipse, image_size: usize) -> bool {
        let s = image_size as f64;
        (0..256).all(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / 256.0;
            let (r, c) = ellipse.boundary_point(theta);
            r >= 0.0 && c >= 0.0 && r < s && c < s && self.contains(r, c)
        })
    }
}

#[derive(Clone, Copy)]
struct Ellipse {
    center: (f64, f64),
    axes: (f64, f64),
    rotation: f64,
}

impl Ellipse {
    /// Normalized elliptical radius: 1.0 on the boundary.
    fn rho(&self, r: f64, c: f64) -> f64 {
        let dr = r - self.center.0;
        let dc = c - self.center.1;
        let (sin, cos) = self.rotation.sin_cos();
        let u = dr * cos + dc * sin;
        let v = -dr * sin + dc * cos;
        let a = (u / self.axes.0).powi(2) + (v / self.axes.1).powi(2);
        a.sqrt()
    }

    fn boundary_point(&self, theta: f64) -> (f64, f64) {
        let (sin, cos) = self.rotation.sin_cos();
        let u = self.axes.0 * theta.cos();
        let v = self.axes.1 * theta.sin();
        (self.center.0 + u * cos - v * sin, self.center.1 + u * sin + v * cos)
    }
}

/// Low-frequency wave numbers available to the displacement field; (0, 0) is
/// excluded so every component actually varies across the frame.
fn wave_numbers() -> Vec<(i32, i32)> {
    let mut waves = Vec::new();
    for fr in -2..=2 {
        for fc in -2..=2 {
            if (fr, fc) != (0, 0) {
                waves.push((fr, fc));
            }
        }
    }
    waves
}

/// Smooth random displacement field with the requested RMS magnitude.
struct DisplacementField {
    rows: Array2<f64>,
    cols: Array2<f64>,
}

impl DisplacementField {
    fn sample(rng: &mut ChaCha12Rng, size: usize, rms: f64) -> Self {
        let waves = wave_numbers();
        let mut components = Vec::new();
        for _ in 0..2 {
            // one set per displacement axis
            let mut axis = Vec::new();
            for _ in 0..4 {
                let wave = waves[rng.random_range(0..waves.len())];
                let amplitude: f64 = StandardNormal.sample(rng);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                axis.push((wave, amplitude, phase));
            }
            components.push(axis);
        }

        let s = size as f64;
        let field = |axis: &[((i32, i32), f64, f64)]| {
            Array2::from_shape_fn((size, size), |(r, c)| {
                axis.iter()
                    .map(|&((fr, fc), amplitude, phase)| {
                        let arg = std::f64::consts::TAU
                            * (fr as f64 * r as f64 + fc as f64 * c as f64)
                            / s
                            + phase;
                        amplitude * arg.cos()
                    })
                    .sum::<f64>()
            })
        };
        let mut rows = field(&components[0]);
        let mut cols = field(&components[1]);

        let mean_sq = (rows.iter().map(|v| v * v).sum::<f64>()
            + cols.iter().map(|v| v * v).sum::<f64>())
            / (size * size) as f64;
        let scale = if mean_sq > 0.0 { rms / mean_sq.sqrt() } else { 0.0 };
        rows.mapv_inplace(|v| v * scale);
        cols.mapv_inplace(|v| v * scale);
        Self { rows, cols }
    }
}

/// Generates one phantom frame. Identical `(seed, params)` reproduce
/// bit-identical outputs; the random draws happen in a fixed order that does
/// not depend on parameter values.
pub fn generate_phantom(seed: u64, params: &PhantomParams) -> Result<Phantom> {
    generate_labeled(seed, params, &format!("seed{seed}"), "synthetic")
}

pub(crate) fn generate_labeled(
    seed: u64,
    params: &PhantomParams,
    frame_id: &str,
    patient_id: &str,
) -> Result<Phantom> {
    params.validate()?;
    let size = params.image_size;
    let s = size as f64;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sector = params.sector();

    // Per-frame anatomy jitter, shrunk deterministically until the jittered
    // ellipse stays inside the sector (the unjittered one always does).
    let center_jitter = (
        rng.random_range(-0.02..0.02) * s,
        rng.random_range(-0.02..0.02) * s,
    );
    let axis_jitter = (
        rng.random_range(0.92..1.08),
        rng.random_range(0.92..1.08),
    );
    let rotation = rng.random_range(-0.15..0.15);
    let jittered = |f: f64| Ellipse {
        center: (
            params.cavity_center.0 + f * center_jitter.0,
            params.cavity_center.1 + f * center_jitter.1,
        ),
        axes: (
            params.cavity_axes.0 * (1.0 + f * (axis_jitter.0 - 1.0)),
            params.cavity_axes.1 * (1.0 + f * (axis_jitter.1 - 1.0)),
        ),
        rotation: f * rotation,
    };
    let cavity = [1.0, 0.5, 0.25, 0.0]
        .iter()
        .map(|&f| jittered(f))
        .find(|e| sector.contains_ellipse(e, size))
        .expect("zero jitter reproduces the validated base ellipse");

    // Fixed draw order: dropout decision, wedge geometry, tissue texture
    // phases, speckle field, displacement field.
    let dropout_roll: f64 = rng.random_range(0.0..1.0);
    let wedge_center = rng.random_range(0.0..std::f64::consts::TAU);
    let wedge_width = rng.random_range(0.5..1.0);
    let dropout_active = dropout_roll < params.border_dropout_prob;

    let texture_phase = (
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
    );

    let ground_truth = SegMask::from_fn(size, size, |r, c| {
        cavity.rho(r as f64, c as f64) <= 1.0
    });

    let mut pixels = Array2::from_elem((size, size), BG_LEVEL);
    for ((r, c), px) in pixels.indexed_iter_mut() {
        let rf = r as f64;
        let cf = c as f64;
        if !sector.contains(rf, cf) {
            continue;
        }
        let rho = cavity.rho(rf, cf);
        let mut value = if rho <= 1.0 {
            CAVITY_LEVEL
        } else if rho <= RING_RHO {
            let mut ring = RING_LEVEL;
            if dropout_active {
                let angle = (cf - cavity.center.1).atan2(rf - cavity.center.0);
                let mut delta = (angle - wedge_center).rem_euclid(std::f64::consts::TAU);
                if delta > std::f64::consts::PI {
                    delta = std::f64::consts::TAU - delta;
                }
                if delta <= wedge_width / 2.0 {
                    ring = TISSUE_LEVEL * 0.45;
                }
            }
            ring
        } else {
            // Gentle low-frequency shading so the far field is not flat.
            let wave = ((rf / s * 4.4 + texture_phase.0).sin()
                + (cf / s * 5.1 + texture_phase.1).cos())
                * 0.03;
            (TISSUE_LEVEL as f64 + wave) as f32
        };
        // Depth attenuation toward the bottom of the fan.
        let depth = ((rf - sector.apex.0).powi(2) + (cf - sector.apex.1).powi(2)).sqrt();
        value *= 1.0 - 0.12 * (depth / sector.radius) as f32;
        *px = value;
    }

    // Multiplicative speckle; one draw per pixel in row-major order so the
    // stream layout never depends on the geometry above.
    for ((r, c), px) in pixels.indexed_iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        if sector.contains(r as f64, c as f64) {
            let noisy = *px as f64 * (1.0 + params.speckle_strength * z);
            *px = noisy.clamp(0.0, 1.0) as f32;
        }
    }

    let displacement =
        DisplacementField::sample(&mut rng, size, params.operator_b_perturbation);
    let warped = SegMask::from_fn(size, size, |r, c| {
        let src_r = (r as f64 - displacement.rows[(r, c)]).round() as i64;
        let src_c = (c as f64 - displacement.cols[(r, c)]).round() as i64;
        src_r >= 0
            && src_c >= 0
            && (src_r as usize) < size
            && (src_c as usize) < size
            && ground_truth.get(src_r as usize, src_c as usize)
    });
    // The warp can in principle pinch off a sliver; keep the dominant region
    // so every emitted mask is a single 4-connected tracing.
    let operator_b = crate::metrics::largest_component(&warped);

    Ok(Phantom {
        image: ImageFrame::new(pixels, frame_id, patient_id)?,
        ground_truth,
        operator_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;

    fn clean_params(size: usize) -> PhantomParams {
        PhantomParams {
            speckle_strength: 0.0,
            border_dropout_prob: 0.0,
            operator_b_perturbation: 0.0,
            ..PhantomParams::for_size(size)
        }
    }

    #[test]
    fn noiseless_unperturbed_case() {
        let params = clean_params(64);
        let phantom = generate_phantom(11, &params).unwrap();
        assert_eq!(phantom.operator_b, phantom.ground_truth);

        // Cavity pixels strictly darker than myocardial-ring pixels.
        let gt = &phantom.ground_truth;
        let img = phantom.image.pixels();
        let cavity_max = gt
            .foreground()
            .map(|(r, c)| img[(r, c)])
            .fold(f32::MIN, f32::max);
        // Ring = pixels just outside the cavity (dilation minus cavity).
        let mut ring_min = f32::MAX;
        for (r, c) in gt.foreground() {
            for (nr, nc) in [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)] {
                if nr < 64 && nc < 64 && !gt.get(nr, nc) {
                    ring_min = ring_min.min(img[(nr, nc)]);
                }
            }
        }
        assert!(
            cavity_max < ring_min,
            "cavity max {cavity_max} must be darker than ring min {ring_min}"
        );
    }

    #[test]
    fn identical_seed_is_bit_identical() {
        let params = PhantomParams::for_size(64);
        let a = generate_phantom(7, &params).unwrap();
        let b = generate_phantom(7, &params).unwrap();
        assert_eq!(a.image.pixels(), b.image.pixels());
        assert_eq!(a.ground_truth, b.ground_truth);
        assert_eq!(a.operator_b, b.operator_b);
        let c = generate_phantom(8, &params).unwrap();
        assert_ne!(a.ground_truth, c.ground_truth);
    }

    #[test]
    fn ellipse_outside_sector_is_rejected() {
        let mut params = PhantomParams::for_size(64);
        params.cavity_center = (4.0, 4.0);
        assert!(matches!(
            params.validate(),
            Err(Error::InvalidParams(_))
        ));
        assert!(generate_phantom(1, &params).is_err());
    }

    #[test]
    fn masks_are_nonempty_connected_and_binary() {
        let params = PhantomParams::for_size(64);
        for seed in 0..40 {
            let phantom = generate_phantom(seed, &params).unwrap();
            for mask in [&phantom.ground_truth, &phantom.operator_b] {
                assert!(!mask.is_empty(), "seed {seed}");
                let largest = metrics::largest_component(mask);
                assert_eq!(largest.area(), mask.area(), "seed {seed}: mask not 4-connected");
            }
        }
    }

    #[test]
    fn perturbation_moves_the_second_observer() {
        let params = PhantomParams::for_size(64);
        assert!(params.operator_b_perturbation > 0.0);
        let mut below_one = 0;
        for seed in 0..20 {
            let phantom = generate_phantom(seed, &params).unwrap();
            let d = metrics::dice(&phantom.ground_truth, &phantom.operator_b).unwrap();
            if d < 1.0 {
                below_one += 1;
            }
        }
        assert_eq!(below_one, 20, "warped tracing must differ from gt");
    }
}
