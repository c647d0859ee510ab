//! Human-readable artifacts: contour overlays, mean±SD tables and training
//! plots.
//!
//! Overlays follow the established color convention: the manual annotation is
//! drawn in blue first, the automated contour in yellow on top. Table values
//! render as `mean±SD` with two decimals and a dot decimal separator
//! regardless of locale.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::scenarios::{self, BenchmarkRow, FlaggedFrame};
use crate::train::TrainingHistory;
use crate::types::{Contour, ImageFrame, MetricPair, ScenarioResult};

pub const MANUAL_COLOR: Rgb<u8> = Rgb([0, 0, 255]);
pub const AUTOMATED_COLOR: Rgb<u8> = Rgb([255, 255, 0]);
const FAILED_COLOR: Rgb<u8> = Rgb([255, 60, 60]);
const TEXT_COLOR: Rgb<u8> = Rgb([255, 255, 255]);

/// Inputs for one overlay rendering. `automated: None` marks a failed frame
/// and produces a `FAILED` banner instead of a second contour.
pub struct Overlay<'a> {
    pub image: &'a ImageFrame,
    pub manual: &'a Contour,
    pub automated: Option<&'a Contour>,
    pub metrics: Option<MetricPair>,
}

/// Expands a grayscale frame into an RGB buffer.
pub fn grayscale_rgb(image: &ImageFrame) -> RgbImage {
    let (h, w) = image.shape();
    let mut img = RgbImage::new(w as u32, h as u32);
    for ((r, c), &v) in image.pixels().indexed_iter() {
        let g = (v * 255.0).round() as u8;
        img.put_pixel(c as u32, r as u32, Rgb([g, g, g]));
    }
    img
}

/// Renders the overlay into an RGB buffer (manual first, automated on top,
/// 1-pixel strokes, metric annotation in the top-left corner).
pub fn overlay_image(overlay: &Overlay) -> Result<RgbImage> {
    let (h, w) = overlay.image.shape();
    let mut img = grayscale_rgb(overlay.image);

    let mut stroke = |contour: &Contour, color: Rgb<u8>| -> Result<()> {
        for &(r, c) in contour.points() {
            if r >= h || c >= w {
                return Err(Error::ContourOutOfBounds {
                    row: r,
                    col: c,
                    height: h,
                    width: w,
                });
            }
            img.put_pixel(c as u32, r as u32, color);
        }
        Ok(())
    };
    stroke(overlay.manual, MANUAL_COLOR)?;
    let mut text_row = 2;
    match overlay.automated {
        Some(contour) => stroke(contour, AUTOMATED_COLOR)?,
        None => {
            draw_text(&mut img, 2, text_row, "FAILED", FAILED_COLOR);
            text_row += 9;
        }
    }
    if let Some(pair) = overlay.metrics {
        let label = format!("DC {:.2} HD {:.2}", pair.dice, pair.hausdorff);
        draw_text(&mut img, 2, text_row, &label, TEXT_COLOR);
    }
    Ok(img)
}

/// Renders and writes the overlay PNG.
pub fn render_overlay(overlay: &Overlay, out: &Path) -> Result<()> {
    let img = overlay_image(overlay)?;
    img.save(out).map_err(|e| Error::Image {
        path: out.to_path_buf(),
        source: e,
    })
}

/// `mean±SD` with two decimals, locale-independent.
pub fn format_mean_sd(mean: f64, sd: f64) -> String {
    format!("{mean:.2}\u{00b1}{sd:.2}")
}

/// Writes `report.md` plus `benchmark.csv` and `scenarios.csv` into
/// `out_dir`. The markdown mirrors the two-part summary table layout (models
/// on the left half, comparison scenarios on the right) and calls out frames
/// that went through the empty-mask fallbacks.
pub fn emit_tables(
    benchmark: &[BenchmarkRow],
    scenario_rows: &[ScenarioResult],
    flagged: &[FlaggedFrame],
    out_dir: &Path,
) -> Result<()> {
    if benchmark.is_empty() || scenario_rows.is_empty() {
        return Err(Error::InvalidConfig(
            "emit_tables needs benchmark and scenario rows".to_string(),
        ));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    scenarios::write_benchmark_csv(&out_dir.join("benchmark.csv"), benchmark)?;
    scenarios::write_scenarios_csv(&out_dir.join("scenarios.csv"), scenario_rows)?;

    let mut md = String::new();
    md.push_str("# Evaluation summary\n\n");
    md.push_n_frames(benchmark);

    md.push_str("## Models\n\n| Model | DC | HD |\n|---|---|---|\n");
    for row in benchmark {
        md.push_str(&format!(
            "| {} | {} | {} |\n",
            row.variant.display_name(),
            format_mean_sd(row.dice_mean, row.dice_sd),
            format_mean_sd(row.hd_mean, row.hd_sd),
        ));
    }

    md.push_str("\n## Compared scenarios\n\n| Compared Scenarios | DC | HD |\n|---|---|---|\n");
    for row in scenario_rows {
        md.push_str(&format!(
            "| {} | {} | {} |\n",
            row.label.display_name(),
            format_mean_sd(row.dice_mean, row.dice_sd),
            format_mean_sd(row.hd_mean, row.hd_sd),
        ));
    }

    md.push_str(
        "\n## Conventions\n\n\
         - Dice of two empty masks is 1.0.\n\
         - An empty prediction scores Dice 0.0 and a Hausdorff fallback of \
         half the image diagonal (181.02 px at 256x256), ranking failed \
         frames strictly worse than any plausible contour.\n\
         - Hausdorff distances are exact symmetric maxima over contour \
         point sets, in pixels.\n\
         - Predictions are reduced to their largest 4-connected component \
         before contour extraction.\n\
         - SD is the sample standard deviation (divisor n-1).\n",
    );

    if !flagged.is_empty() {
        md.push_str("\n## Flagged frames\n\nFrames retained via the empty-mask fallbacks:\n\n");
        for f in flagged {
            md.push_str(&format!(
                "- {}/{}: empty {} mask\n",
                f.patient_id, f.frame_id, f.assessment
            ));
        }
    }

    let path = out_dir.join("report.md");
    std::fs::write(&path, md).map_err(|e| Error::io(&path, e))
}

trait PushFrames {
    fn push_n_frames(&mut self, rows: &[BenchmarkRow]);
}

impl PushFrames for String {
    fn push_n_frames(&mut self, rows: &[BenchmarkRow]) {
        if let Some(first) = rows.first() {
            self.push_str(&format!(
                "Evaluation over {} test frames; values are mean\u{00b1}SD.\n\n",
                first.n_frames
            ));
        }
    }
}

const PLOT_W: u32 = 760;
const PLOT_H: u32 = 480;
const MARGIN_L: u32 = 70;
const MARGIN_R: u32 = 70;
const MARGIN_T: u32 = 46;
const MARGIN_B: u32 = 50;
const TRAIN_COLOR: Rgb<u8> = Rgb([214, 69, 65]);
const VAL_COLOR: Rgb<u8> = Rgb([243, 156, 18]);
const DICE_COLOR: Rgb<u8> = Rgb([41, 105, 176]);
const BEST_COLOR: Rgb<u8> = Rgb([39, 174, 96]);
const AXIS_COLOR: Rgb<u8> = Rgb([40, 40, 40]);
const GRID_COLOR: Rgb<u8> = Rgb([225, 225, 225]);

/// Plots training/validation loss (left axis) and validation Dice (right
/// axis, 0..1) against epochs, marking the best epoch.
pub fn plot_history(history: &TrainingHistory, out: &Path) -> Result<()> {
    if history.is_empty() {
        return Err(Error::InvalidConfig("empty training history".to_string()));
    }
    let records = history.records();
    let mut img = RgbImage::from_pixel(PLOT_W, PLOT_H, Rgb([255, 255, 255]));

    let max_loss = records
        .iter()
        .flat_map(|r| [r.train_loss, r.val_loss])
        .fold(0.0f64, f64::max)
        .max(1e-6);
    let epochs = records.len();
    let max_epoch = records.last().expect("nonempty").epoch as f64;
    let min_epoch = records[0].epoch as f64;

    let x0 = MARGIN_L as f64;
    let x1 = (PLOT_W - MARGIN_R) as f64;
    let y0 = (PLOT_H - MARGIN_B) as f64;
    let y1 = MARGIN_T as f64;
    let x_of = |epoch: f64| -> i64 {
        if max_epoch > min_epoch {
            (x0 + (epoch - min_epoch) / (max_epoch - min_epoch) * (x1 - x0)).round() as i64
        } else {
            ((x0 + x1) / 2.0).round() as i64
        }
    };
    let y_loss = |v: f64| -> i64 { (y0 - (v / max_loss).clamp(0.0, 1.0) * (y0 - y1)).round() as i64 };
    let y_dice = |v: f64| -> i64 { (y0 - v.clamp(0.0, 1.0) * (y0 - y1)).round() as i64 };

    // Grid and axes.
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y = (y0 - frac * (y0 - y1)).round() as i64;
        draw_line(&mut img, (x0 as i64, y), (x1 as i64, y), GRID_COLOR);
        draw_text(
            &mut img,
            6,
            (y - 3) as i64,
            &format!("{:.2}", frac * max_loss),
            AXIS_COLOR,
        );
        draw_text(
            &mut img,
            (x1 as i64) + 8,
            (y - 3) as i64,
            &format!("{frac:.2}"),
            AXIS_COLOR,
        );
    }
    draw_line(&mut img, (x0 as i64, y0 as i64), (x1 as i64, y0 as i64), AXIS_COLOR);
    draw_line(&mut img, (x0 as i64, y0 as i64), (x0 as i64, y1 as i64), AXIS_COLOR);
    draw_line(&mut img, (x1 as i64, y0 as i64), (x1 as i64, y1 as i64), AXIS_COLOR);

    let tick_step = (epochs / 10).max(1);
    for record in records.iter().step_by(tick_step) {
        let x = x_of(record.epoch as f64);
        draw_line(&mut img, (x, y0 as i64), (x, y0 as i64 + 4), AXIS_COLOR);
        draw_text(&mut img, x - 5, y0 as i64 + 8, &record.epoch.to_string(), AXIS_COLOR);
    }
    draw_text(&mut img, (PLOT_W / 2 - 18) as i64, (PLOT_H - 14) as i64, "EPOCH", AXIS_COLOR);
    draw_text(&mut img, 6, 14, "LOSS", AXIS_COLOR);
    draw_text(&mut img, (x1 as i64) + 8, 14, "DICE", AXIS_COLOR);

    // Best-epoch marker first so the curves draw over it.
    if let Some(best) = history.best_epoch() {
        let x = x_of(best as f64);
        draw_line(&mut img, (x, y0 as i64), (x, y1 as i64), BEST_COLOR);
        draw_text(&mut img, x + 3, y1 as i64 - 9, &format!("BEST {best}"), BEST_COLOR);
    }

    let mut curve = |value: &dyn Fn(usize) -> i64, color: Rgb<u8>| {
        let points: Vec<(i64, i64)> = records
            .iter()
            .enumerate()
            .map(|(i, r)| (x_of(r.epoch as f64), value(i)))
            .collect();
        if points.len() == 1 {
            draw_dot(&mut img, points[0], color);
        }
        for pair in points.windows(2) {
            draw_line(&mut img, pair[0], pair[1], color);
        }
    };
    curve(&|i| y_loss(records[i].train_loss), TRAIN_COLOR);
    curve(&|i| y_loss(records[i].val_loss), VAL_COLOR);
    curve(&|i| y_dice(records[i].val_dice), DICE_COLOR);

    // Legend.
    let legend = [
        ("TRAIN LOSS", TRAIN_COLOR),
        ("VAL LOSS", VAL_COLOR),
        ("VAL DICE", DICE_COLOR),
    ];
    let mut lx = MARGIN_L as i64;
    for (label, color) in legend {
        draw_dot(&mut img, (lx, 16), color);
        draw_text(&mut img, lx + 8, 12, label, AXIS_COLOR);
        lx += 8 + 6 * (label.len() as i64) + 24;
    }

    img.save(out).map_err(|e| Error::Image {
        path: out.to_path_buf(),
        source: e,
    })
}

fn draw_dot(img: &mut RgbImage, (x, y): (i64, i64), color: Rgb<u8>) {
    for dy in -1..=1 {
        for dx in -1..=1 {
            put(img, x + dx, y + dy, color);
        }
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Bresenham line segment.
fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    loop {
        put(img, x, y, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// 5x7 bitmap text, clipped at the image border.
fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: Rgb<u8>) {
    let mut cx = x;
    for ch in text.chars() {
        if let Some(glyph) = glyph(ch) {
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..5 {
                    if bits & (0x10 >> col) != 0 {
                        put(img, cx + col as i64, y + row as i64, color);
                    }
                }
            }
        }
        cx += 6;
    }
}

/// Classic 5x7 glyphs; bit 4 is the leftmost column.
fn glyph(ch: char) -> Option<[u8; 7]> {
    let g = match ch.to_ascii_uppercase() {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '+' => [0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00],
        '=' => [0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00],
        '/' => [0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        ' ' => [0x00; 7],
        _ => return None,
    };
    Some(g)
}
