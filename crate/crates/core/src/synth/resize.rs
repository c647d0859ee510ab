//! Frame/mask resizing: bilinear for intensities, nearest-neighbor for masks
//! (so label values stay binary). Both use pixel-center coordinate mapping.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::{ImageFrame, SegMask};

/// Resizes an image/mask pair to `target`×`target`.
///
/// A source already at the target size is returned unchanged, bit-identical.
pub fn resize_frame(
    image: &ImageFrame,
    mask: &SegMask,
    target: usize,
) -> Result<(ImageFrame, SegMask)> {
    let (h, w) = image.shape();
    if (h, w) != mask.shape() {
        return Err(Error::ShapeMismatch {
            expected: (h, w),
            got: mask.shape(),
        });
    }
    if h < 8 || w < 8 {
        return Err(Error::InvalidParams(format!(
            "source {h}x{w} below the 8x8 minimum"
        )));
    }
    if target == 0 {
        return Err(Error::InvalidParams("target size 0".to_string()));
    }
    if (h, w) == (target, target) {
        return Ok((image.clone(), mask.clone()));
    }

    let scale_r = h as f64 / target as f64;
    let scale_c = w as f64 / target as f64;

    let src = image.pixels();
    let pixels = Array2::from_shape_fn((target, target), |(r, c)| {
        let sr = ((r as f64 + 0.5) * scale_r - 0.5).clamp(0.0, (h - 1) as f64);
        let sc = ((c as f64 + 0.5) * scale_c - 0.5).clamp(0.0, (w - 1) as f64);
        let r0 = sr.floor() as usize;
        let c0 = sc.floor() as usize;
        let r1 = (r0 + 1).min(h - 1);
        let c1 = (c0 + 1).min(w - 1);
        let fr = (sr - r0 as f64) as f32;
        let fc = (sc - c0 as f64) as f32;
        let top = src[(r0, c0)] * (1.0 - fc) + src[(r0, c1)] * fc;
        let bottom = src[(r1, c0)] * (1.0 - fc) + src[(r1, c1)] * fc;
        (top * (1.0 - fr) + bottom * fr).clamp(0.0, 1.0)
    });

    let resized_mask = SegMask::from_fn(target, target, |r, c| {
        let sr = (((r as f64 + 0.5) * scale_r).floor() as usize).min(h - 1);
        let sc = (((c as f64 + 0.5) * scale_c).floor() as usize).min(w - 1);
        mask.get(sr, sc)
    });

    let resized_image = ImageFrame::new(pixels, image.frame_id(), image.patient_id())?;
    Ok((resized_image, resized_mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn frame(pixels: Array2<f32>) -> ImageFrame {
        ImageFrame::new(pixels, "f", "p").unwrap()
    }

    #[test]
    fn identity_resize_is_bit_identical() {
        let pixels = Array2::from_shape_fn((256, 256), |(r, c)| {
            ((r * 31 + c * 7) % 256) as f32 / 255.0
        });
        let image = frame(pixels);
        let mask = SegMask::from_fn(256, 256, |r, c| (r + c) % 3 == 0);
        let (ri, rm) = resize_frame(&image, &mask, 256).unwrap();
        assert_eq!(ri.pixels(), image.pixels());
        assert_eq!(rm, mask);
    }

    #[test]
    fn constant_mask_stays_constant() {
        let image = frame(Array2::from_elem((512, 512), 0.5));
        let ones = SegMask::from_fn(512, 512, |_, _| true);
        let (_, rm) = resize_frame(&image, &ones, 256).unwrap();
        assert_eq!(rm.area(), 256 * 256);
    }

    #[test]
    fn downscaled_disk_matches_rasterization_oracle() {
        // A centered disk of 256 px diameter in a 512x512 frame becomes a
        // 128 px diameter disk at 256x256. The expected area fraction comes
        // from rasterizing the target-scale disk directly.
        let disk = |size: usize, radius: f64| {
            SegMask::from_fn(size, size, |r, c| {
                let center = (size as f64 - 1.0) / 2.0;
                let dr = r as f64 - center;
                let dc = c as f64 - center;
                dr * dr + dc * dc <= radius * radius
            })
        };
        let source_mask = disk(512, 128.0);
        let image = frame(Array2::from_elem((512, 512), 0.25));
        let (_, resized) = resize_frame(&image, &source_mask, 256).unwrap();

        let oracle = disk(256, 64.0);
        let oracle_fraction = oracle.area() as f64 / (256.0 * 256.0);
        let resized_fraction = resized.area() as f64 / (256.0 * 256.0);
        // Nearest-neighbor sampling may differ from direct rasterization by a
        // thin boundary band only.
        assert!(
            (resized_fraction - oracle_fraction).abs() < 0.01,
            "resized {resized_fraction:.4} vs oracle {oracle_fraction:.4}"
        );
        let overlap = crate::metrics::dice(&resized, &oracle).unwrap();
        assert!(overlap > 0.97, "dice vs oracle disk {overlap:.4}");
    }

    #[test]
    fn degenerate_sources_are_rejected() {
        let image = frame(Array2::from_elem((4, 64), 0.0));
        let mask = SegMask::zeros(4, 64);
        assert!(resize_frame(&image, &mask, 256).is_err());
        let image = frame(Array2::from_elem((64, 64), 0.0));
        let bad_mask = SegMask::zeros(32, 64);
        assert!(matches!(
            resize_frame(&image, &bad_mask, 256),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn resize_preserves_binarity_and_bounds(
                bits in proptest::collection::vec(any::<bool>(), 64),
                target in 8usize..40,
            ) {
                let image = frame(Array2::from_elem((8, 8), 0.5));
                let mask = SegMask::from_fn(8, 8, |r, c| bits[r * 8 + c]);
                let (ri, rm) = resize_frame(&image, &mask, target).unwrap();
                prop_assert_eq!(rm.shape(), (target, target));
                prop_assert_eq!(ri.shape(), (target, target));
                // SegMask construction enforces {0,1}; spot-check intensities.
                for &v in ri.pixels() {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
