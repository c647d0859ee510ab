//! Segmentation quality metrics: Dice coefficient, boundary extraction and
//! symmetric Hausdorff distance.
//!
//! Conventions (also echoed in generated reports):
//!
//! * Dice of two empty masks is 1.0.
//! * Hausdorff distance is the exact symmetric maximum, computed between
//!   contour point sets in pixel units.
//! * An empty prediction scores Dice 0.0 and a fallback Hausdorff distance of
//!   half the image diagonal, so failed frames rank strictly worse than any
//!   plausible contour.
//! * Predictions are reduced to their largest 4-connected component before
//!   contour extraction; Dice is computed on the raw masks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::types::{Contour, MetricPair, SegMask};

/// Dice coefficient `2|A∩B| / (|A| + |B|)`.
///
/// Returns 1.0 when both masks are empty (declared convention).
pub fn dice(a: &SegMask, b: &SegMask) -> Result<f64> {
    a.same_shape(b)?;
    let mut intersection = 0usize;
    let mut total = 0usize;
    for (&x, &y) in a.values().iter().zip(b.values().iter()) {
        intersection += usize::from(x & y);
        total += usize::from(x) + usize::from(y);
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * intersection as f64 / total as f64)
}

/// Largest 4-connected foreground component; ties resolved toward the
/// component discovered first in row-major order.
pub fn largest_component(mask: &SegMask) -> SegMask {
    let (height, width) = mask.shape();
    let mut label = vec![0u32; height * width];
    let mut best_label = 0u32;
    let mut best_size = 0usize;
    let mut next = 1u32;
    let mut queue = Vec::new();

    for start_r in 0..height {
        for start_c in 0..width {
            if !mask.get(start_r, start_c) || label[start_r * width + start_c] != 0 {
                continue;
            }
            let current = next;
            next += 1;
            let mut size = 0usize;
            queue.push((start_r, start_c));
            label[start_r * width + start_c] = current;
            while let Some((r, c)) = queue.pop() {
                size += 1;
                let mut visit = |nr: usize, nc: usize| {
                    if mask.get(nr, nc) && label[nr * width + nc] == 0 {
                        label[nr * width + nc] = current;
                        queue.push((nr, nc));
                    }
                };
                if r > 0 {
                    visit(r - 1, c);
                }
                if r + 1 < height {
                    visit(r + 1, c);
                }
                if c > 0 {
                    visit(r, c - 1);
                }
                if c + 1 < width {
                    visit(r, c + 1);
                }
            }
            if size > best_size {
                best_size = size;
                best_label = current;
            }
        }
    }

    SegMask::from_fn(height, width, |r, c| label[r * width + c] == best_label && best_label != 0)
}

/// Moore-neighbor deltas in clockwise order: W, NW, N, NE, E, SE, S, SW.
const MOORE: [(i64, i64); 8] = [
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
];

/// Ordered closed boundary of a 4-connected mask via Moore-neighbor tracing.
///
/// The walk starts at the topmost-leftmost foreground pixel and proceeds
/// clockwise; it terminates by Jacob's stopping criterion (about to leave the
/// start pixel in the initial direction a second time). The trace follows the
/// *outer* boundary: for masks whose background is connected to the grid edge
/// (no interior holes) the traced points are exactly the foreground pixels
/// with a background 4-neighbor or on the grid edge. One-pixel-wide
/// protrusions are walked out and back, so points may repeat in the sequence.
pub fn extract_contour(mask: &SegMask) -> Result<Contour> {
    let (height, width) = mask.shape();
    let start = mask
        .foreground()
        .next()
        .ok_or(Error::EmptyMask {
            context: "contour extraction",
        })?;

    let fg = |r: i64, c: i64| {
        r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width
            && mask.get(r as usize, c as usize)
    };
    let next_move = |p: (i64, i64), backtrack: (i64, i64)| -> Option<(usize, (i64, i64))> {
        let back_dir = MOORE
            .iter()
            .position(|&(dr, dc)| (p.0 + dr, p.1 + dc) == backtrack)
            .expect("backtrack is a Moore neighbor");
        for step in 1..=8 {
            let dir = (back_dir + step) % 8;
            let q = (p.0 + MOORE[dir].0, p.1 + MOORE[dir].1);
            if fg(q.0, q.1) {
                return Some((dir, q));
            }
        }
        None
    };

    let start_pos = (start.0 as i64, start.1 as i64);
    // Row-major scan reaches the start pixel from its (background) west side.
    let initial_backtrack = (start_pos.0, start_pos.1 - 1);

    let mut points = vec![start];
    let (first_dir, mut pos) = match next_move(start_pos, initial_backtrack) {
        Some(found) => found,
        None => return Contour::new(points), // isolated pixel
    };
    // Backtrack after a move is the last background neighbor scanned before
    // the move direction; ring-adjacent cells are 8-adjacent, so it is a
    // valid Moore neighbor of the new position.
    let mut backtrack = (
        start_pos.0 + MOORE[(first_dir + 7) % 8].0,
        start_pos.1 + MOORE[(first_dir + 7) % 8].1,
    );
    points.push((pos.0 as usize, pos.1 as usize));

    let step_limit = 8 * height * width + 8;
    loop {
        let (dir, q) = next_move(pos, backtrack)
            .expect("a traced pixel always has the previous pixel as neighbor");
        // Jacob's stopping criterion: about to leave the start pixel in the
        // initial direction a second time.
        if pos == start_pos && dir == first_dir {
            break;
        }
        backtrack = (pos.0 + MOORE[(dir + 7) % 8].0, pos.1 + MOORE[(dir + 7) % 8].1);
        pos = q;
        points.push((pos.0 as usize, pos.1 as usize));
        if points.len() > step_limit {
            return Err(Error::InvalidContour(
                "boundary trace exceeded step limit (mask not 4-connected?)".to_string(),
            ));
        }
    }
    // The walk re-appends the start pixel just before closing; drop it.
    if points.len() > 1 && *points.last().unwrap() == start {
        points.pop();
    }
    Contour::new(points)
}

fn squared(a: (i64, i64), b: (i64, i64)) -> u64 {
    let dr = (a.0 - b.0).unsigned_abs();
    let dc = (a.1 - b.1).unsigned_abs();
    dr * dr + dc * dc
}

/// Directed squared Hausdorff `max_{p∈a} min_{q∈b} d²(p, q)` with the
/// early-break rule: once a candidate in `b` is within the running maximum,
/// the current `p` cannot raise it and the inner scan stops. Distances are
/// exact in integer arithmetic, so scan order only affects speed.
fn directed_squared(a: &[(i64, i64)], b: &[(i64, i64)], order: &[usize]) -> u64 {
    let mut max_min = 0u64;
    for &p in a {
        let mut min_sq = u64::MAX;
        let mut skipped = false;
        for &j in order {
            let d = squared(p, b[j]);
            if d <= max_min {
                skipped = true;
                break;
            }
            if d < min_sq {
                min_sq = d;
            }
        }
        if !skipped && min_sq > max_min {
            max_min = min_sq;
        }
    }
    max_min
}

fn dedup_points(contour: &Contour) -> Vec<(i64, i64)> {
    let mut pts: Vec<(i64, i64)> = contour
        .points()
        .iter()
        .map(|&(r, c)| (r as i64, c as i64))
        .collect();
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// Exact symmetric Hausdorff distance between two contours, in pixels.
///
/// Candidate order is shuffled with a fixed seed so the early break engages
/// quickly on structured inputs; the result is the exact maximum either way.
pub fn hausdorff(a: &Contour, b: &Contour) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyContour);
    }
    let pa = dedup_points(a);
    let pb = dedup_points(b);

    let mut rng = ChaCha12Rng::seed_from_u64(0x4844);
    let mut order_a: Vec<usize> = (0..pa.len()).collect();
    let mut order_b: Vec<usize> = (0..pb.len()).collect();
    order_a.shuffle(&mut rng);
    order_b.shuffle(&mut rng);

    let forward = directed_squared(&pa, &pb, &order_b);
    let backward = directed_squared(&pb, &pa, &order_a);
    Ok((forward.max(backward) as f64).sqrt())
}

/// Hausdorff fallback for an empty prediction: half the image diagonal.
pub fn empty_prediction_fallback(height: usize, width: usize) -> f64 {
    0.5 * ((height * height + width * width) as f64).sqrt()
}

/// Dice and Hausdorff for one (prediction, ground truth) pair.
///
/// Dice is computed on the raw masks. For the Hausdorff distance the
/// prediction is first reduced to its largest 4-connected component, then
/// both masks are contour-traced. An empty prediction yields Dice 0.0 and
/// the declared fallback distance.
pub fn evaluate_pair(pred: &SegMask, gt: &SegMask) -> Result<MetricPair> {
    gt.same_shape(pred)?;
    if gt.is_empty() {
        return Err(Error::EmptyMask {
            context: "evaluate_pair ground truth",
        });
    }
    let dice_value = dice(pred, gt)?;
    let hausdorff_value = if pred.is_empty() {
        empty_prediction_fallback(gt.height(), gt.width())
    } else {
        let cleaned = largest_component(pred);
        let pred_contour = extract_contour(&cleaned)?;
        let gt_contour = extract_contour(gt)?;
        hausdorff(&pred_contour, &gt_contour)?
    };
    MetricPair::new(dice_value, hausdorff_value)
}

/// Arithmetic mean and sample standard deviation (divisor `n - 1`).
///
/// A single value has SD 0.0 by declaration.
pub fn mean_sd(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidConfig(
            "mean_sd of an empty list".to_string(),
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mask_from_points(height: usize, width: usize, points: &[(usize, usize)]) -> SegMask {
        SegMask::from_fn(height, width, |r, c| points.contains(&(r, c)))
    }

    fn contour_of(points: &[(usize, usize)]) -> Contour {
        Contour::new(points.to_vec()).unwrap()
    }

    #[test]
    fn dice_identity_and_disjoint() {
        let a = mask_from_points(4, 4, &[(1, 1), (1, 2), (2, 1)]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let b = mask_from_points(4, 4, &[(0, 0)]);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn dice_hand_enumerated_overlap() {
        // A = {(0,0),(0,1)}, B = {(0,1),(0,2)}: 2*1 / (2+2) = 0.5
        let a = mask_from_points(1, 3, &[(0, 0), (0, 1)]);
        let b = mask_from_points(1, 3, &[(0, 1), (0, 2)]);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(dice(&b, &a).unwrap(), 0.5);
    }

    #[test]
    fn dice_both_empty_convention() {
        let a = SegMask::zeros(3, 3);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn dice_shape_mismatch_errors() {
        let a = SegMask::zeros(3, 3);
        let b = SegMask::zeros(3, 4);
        assert!(matches!(dice(&a, &b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn contour_single_pixel() {
        let mask = mask_from_points(3, 3, &[(1, 1)]);
        let contour = extract_contour(&mask).unwrap();
        assert_eq!(contour.points(), &[(1, 1)]);
    }

    #[test]
    fn contour_of_solid_square_visits_perimeter() {
        let mask = SegMask::from_fn(5, 5, |r, c| (1..4).contains(&r) && (1..4).contains(&c));
        let contour = extract_contour(&mask).unwrap();
        let mut traced: Vec<_> = contour.points().to_vec();
        traced.sort_unstable();
        traced.dedup();
        let mut expected: Vec<_> = (1..4)
            .flat_map(|r| (1..4).map(move |c| (r, c)))
            .filter(|&(r, c)| !(r == 2 && c == 2))
            .collect();
        expected.sort_unstable();
        assert_eq!(traced, expected, "8 perimeter pixels, center excluded");
    }

    #[test]
    fn contour_of_row_covers_every_pixel() {
        let mask = SegMask::from_fn(1, 5, |_, _| true);
        let contour = extract_contour(&mask).unwrap();
        let mut traced: Vec<_> = contour.points().to_vec();
        traced.sort_unstable();
        traced.dedup();
        assert_eq!(traced, (0..5).map(|c| (0, c)).collect::<Vec<_>>());
    }

    #[test]
    fn contour_of_empty_mask_errors() {
        assert!(matches!(
            extract_contour(&SegMask::zeros(4, 4)),
            Err(Error::EmptyMask { .. })
        ));
    }

    #[test]
    fn hausdorff_identity_and_345() {
        let a = contour_of(&[(0, 0)]);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        let b = contour_of(&[(3, 4)]);
        assert_eq!(hausdorff(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn hausdorff_asymmetric_sets() {
        // A = {(0,0),(10,0)}, B = {(0,0)}: directed A->B = 10, B->A = 0, so
        // the symmetric distance is 10. The two-point set does not chain into
        // a closed contour, so this exercises the directed core directly.
        let pa = vec![(0i64, 0i64), (10, 0)];
        let pb = vec![(0i64, 0i64)];
        let forward = directed_squared(&pa, &pb, &[0]);
        let backward = directed_squared(&pb, &pa, &[0, 1]);
        assert_eq!((forward.max(backward) as f64).sqrt(), 10.0);
    }

    #[test]
    fn largest_component_keeps_biggest() {
        let mask = mask_from_points(5, 5, &[(0, 0), (2, 2), (2, 3), (3, 2)]);
        let cleaned = largest_component(&mask);
        assert_eq!(cleaned.area(), 3);
        assert!(!cleaned.get(0, 0));
        assert!(cleaned.get(2, 2));
    }

    #[test]
    fn largest_component_tie_prefers_first_in_scan_order() {
        let mask = mask_from_points(3, 5, &[(0, 0), (2, 4)]);
        let cleaned = largest_component(&mask);
        assert!(cleaned.get(0, 0));
        assert!(!cleaned.get(2, 4));
    }

    #[test]
    fn evaluate_pair_identity() {
        let gt = SegMask::from_fn(8, 8, |r, c| (2..6).contains(&r) && (2..6).contains(&c));
        let pair = evaluate_pair(&gt, &gt).unwrap();
        assert_eq!(pair.dice, 1.0);
        assert_eq!(pair.hausdorff, 0.0);
    }

    /// One 4-neighbor dilation step.
    fn dilate(mask: &SegMask) -> SegMask {
        SegMask::from_fn(mask.height(), mask.width(), |r, c| {
            mask.get(r, c)
                || (r > 0 && mask.get(r - 1, c))
                || (r + 1 < mask.height() && mask.get(r + 1, c))
                || (c > 0 && mask.get(r, c - 1))
                || (c + 1 < mask.width() && mask.get(r, c + 1))
        })
    }

    #[test]
    fn evaluate_pair_dilated_square() {
        // gt: solid 3x3 square; pred: gt dilated by one pixel. Every point of
        // either contour is exactly one pixel from the other contour.
        let gt = SegMask::from_fn(9, 9, |r, c| (3..6).contains(&r) && (3..6).contains(&c));
        let pred = dilate(&gt);
        let pair = evaluate_pair(&pred, &gt).unwrap();
        assert!(pair.dice < 1.0);
        assert_eq!(pair.hausdorff, 1.0);
        let brute = brute_force_hd(
            &extract_contour(&pred).unwrap(),
            &extract_contour(&gt).unwrap(),
        );
        assert_abs_diff_eq!(pair.hausdorff, brute, epsilon = 1e-12);
    }

    #[test]
    fn evaluate_pair_empty_prediction_uses_fallback() {
        let gt = mask_from_points(4, 4, &[(1, 1)]);
        let pred = SegMask::zeros(4, 4);
        let pair = evaluate_pair(&pred, &gt).unwrap();
        assert_eq!(pair.dice, 0.0);
        assert_abs_diff_eq!(pair.hausdorff, 0.5 * 32f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn fallback_is_half_diagonal_at_256() {
        assert_abs_diff_eq!(
            empty_prediction_fallback(256, 256),
            181.019_335_983_756_22,
            epsilon = 1e-9
        );
    }

    #[test]
    fn mean_sd_examples() {
        assert_eq!(mean_sd(&[5.0]).unwrap(), (5.0, 0.0));
        let (mean, sd) = mean_sd(&[1.0, 3.0]).unwrap();
        assert_eq!(mean, 2.0);
        assert_abs_diff_eq!(sd, 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(mean_sd(&[2.0, 2.0, 2.0]).unwrap(), (2.0, 0.0));
        assert!(mean_sd(&[]).is_err());
    }

    /// Independent O(n·m) reference used by the unit-level equivalence checks.
    fn brute_force_hd(a: &Contour, b: &Contour) -> f64 {
        let dist = |p: (usize, usize), q: (usize, usize)| {
            let dr = p.0 as f64 - q.0 as f64;
            let dc = p.1 as f64 - q.1 as f64;
            (dr * dr + dc * dc).sqrt()
        };
        let directed = |xs: &[(usize, usize)], ys: &[(usize, usize)]| {
            xs.iter()
                .map(|&p| {
                    ys.iter()
                        .map(|&q| dist(p, q))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max)
        };
        directed(a.points(), b.points()).max(directed(b.points(), a.points()))
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn random_mask(height: usize, width: usize) -> impl Strategy<Value = SegMask> {
            proptest::collection::vec(proptest::bool::weighted(0.3), height * width).prop_map(
                move |bits| SegMask::from_fn(height, width, |r, c| bits[r * width + c]),
            )
        }

        /// A random nonempty 4-connected blob grown from a seed pixel, with
        /// interior background holes filled (the outer trace is compared
        /// against the boundary definition, which only matches hole-free
        /// masks).
        fn random_blob(height: usize, width: usize) -> impl Strategy<Value = SegMask> {
            (
                0..height,
                0..width,
                proptest::collection::vec(any::<u32>(), 1..60),
            )
                .prop_map(move |(r0, c0, moves)| {
                    let mut cells = vec![(r0, c0)];
                    for m in moves {
                        let (r, c) = cells[(m as usize / 4) % cells.len()];
                        let (nr, nc) = match m % 4 {
                            0 if r > 0 => (r - 1, c),
                            1 if r + 1 < height => (r + 1, c),
                            2 if c > 0 => (r, c - 1),
                            _ if c + 1 < width => (r, c + 1),
                            _ => (r, c),
                        };
                        if !cells.contains(&(nr, nc)) {
                            cells.push((nr, nc));
                        }
                    }
                    let grown = SegMask::from_fn(height, width, |r, c| cells.contains(&(r, c)));
                    fill_holes(&grown)
                })
        }

        /// Turns background pixels unreachable from the grid edge into
        /// foreground.
        fn fill_holes(mask: &SegMask) -> SegMask {
            let (h, w) = mask.shape();
            let mut outside = vec![false; h * w];
            let mut queue = Vec::new();
            let mut push = |r: usize, c: usize, outside: &mut Vec<bool>, queue: &mut Vec<(usize, usize)>| {
                if !mask.get(r, c) && !outside[r * w + c] {
                    outside[r * w + c] = true;
                    queue.push((r, c));
                }
            };
            for r in 0..h {
                push(r, 0, &mut outside, &mut queue);
                push(r, w - 1, &mut outside, &mut queue);
            }
            for c in 0..w {
                push(0, c, &mut outside, &mut queue);
                push(h - 1, c, &mut outside, &mut queue);
            }
            while let Some((r, c)) = queue.pop() {
                if r > 0 {
                    push(r - 1, c, &mut outside, &mut queue);
                }
                if r + 1 < h {
                    push(r + 1, c, &mut outside, &mut queue);
                }
                if c > 0 {
                    push(r, c - 1, &mut outside, &mut queue);
                }
                if c + 1 < w {
                    push(r, c + 1, &mut outside, &mut queue);
                }
            }
            SegMask::from_fn(h, w, |r, c| !outside[r * w + c])
        }

        proptest! {
            #[test]
            fn dice_is_symmetric(a in random_mask(12, 12), b in random_mask(12, 12)) {
                prop_assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
            }

            #[test]
            fn dice_self_is_one_and_bounded(a in random_mask(12, 12), b in random_mask(12, 12)) {
                prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
                let d = dice(&a, &b).unwrap();
                prop_assert!((0.0..=1.0).contains(&d));
            }

            #[test]
            fn traced_boundary_matches_definition(mask in random_blob(14, 14)) {
                let contour = extract_contour(&mask).unwrap();
                let mut traced: Vec<_> = contour.points().to_vec();
                traced.sort_unstable();
                traced.dedup();

                let (h, w) = mask.shape();
                let mut expected: Vec<(usize, usize)> = mask
                    .foreground()
                    .filter(|&(r, c)| {
                        r == 0 || r == h - 1 || c == 0 || c == w - 1
                            || !mask.get(r - 1, c)
                            || !mask.get(r + 1, c)
                            || !mask.get(r, c - 1)
                            || !mask.get(r, c + 1)
                    })
                    .collect();
                expected.sort_unstable();
                prop_assert_eq!(traced, expected);
            }

            #[test]
            fn hausdorff_properties(
                a in random_blob(12, 12),
                b in random_blob(12, 12),
                c in random_blob(12, 12),
            ) {
                let ca = extract_contour(&a).unwrap();
                let cb = extract_contour(&b).unwrap();
                let cc = extract_contour(&c).unwrap();
                let ab = hausdorff(&ca, &cb).unwrap();
                let ba = hausdorff(&cb, &ca).unwrap();
                let ac = hausdorff(&ca, &cc).unwrap();
                let cb_d = hausdorff(&cc, &cb).unwrap();
                prop_assert_eq!(ab, ba);
                prop_assert_eq!(hausdorff(&ca, &ca).unwrap(), 0.0);
                // Triangle inequality on point-set Hausdorff distance.
                prop_assert!(ab <= ac + cb_d + 1e-9);
            }

            #[test]
            fn hausdorff_translation_invariant(a in random_blob(10, 10), b in random_blob(10, 10)) {
                let shift = |m: &SegMask| {
                    SegMask::from_fn(m.height() + 3, m.width() + 2, |r, c| {
                        r >= 3 && c >= 2 && m.get(r - 3, c - 2)
                    })
                };
                let d0 = hausdorff(&extract_contour(&a).unwrap(), &extract_contour(&b).unwrap()).unwrap();
                let d1 = hausdorff(
                    &extract_contour(&shift(&a)).unwrap(),
                    &extract_contour(&shift(&b)).unwrap(),
                )
                .unwrap();
                prop_assert_eq!(d0, d1);
            }

            #[test]
            fn accelerated_hausdorff_matches_brute_force(
                a in random_blob(16, 16),
                b in random_blob(16, 16),
            ) {
                let ca = extract_contour(&a).unwrap();
                let cb = extract_contour(&b).unwrap();
                let fast = hausdorff(&ca, &cb).unwrap();
                let brute = brute_force_hd(&ca, &cb);
                prop_assert!((fast - brute).abs() <= 1e-9);
            }

            #[test]
            fn evaluate_pair_dice_in_bounds(a in random_blob(12, 12), b in random_blob(12, 12)) {
                let pair = evaluate_pair(&a, &b).unwrap();
                prop_assert!((0.0..=1.0).contains(&pair.dice));
                prop_assert!(pair.hausdorff >= 0.0);
            }
        }
    }

    #[test]
    fn dice_strictly_decreasing_under_dilation() {
        // Solid disk ground truth; dilate by k = 1, 2, 3 steps and expect a
        // strict decrease in Dice at every step.
        let disk = SegMask::from_fn(41, 41, |r, c| {
            let dr = r as f64 - 20.0;
            let dc = c as f64 - 20.0;
            dr * dr + dc * dc <= 100.0
        });
        let mut grown = disk.clone();
        let mut previous = 1.0;
        for _ in 1..=3 {
            grown = dilate(&grown);
            let d = dice(&disk, &grown).unwrap();
            assert!(d < previous, "dice must strictly decrease with dilation");
            previous = d;
        }
    }
}
