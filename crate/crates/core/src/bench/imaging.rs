//! Image helpers for the super-resolution experiment.

use std::path::Path;

use image::{GrayImage, Luma};
use nalgebra::DVector;

use crate::error::{Error, Result};

const ZOOM: usize = 8;
const GAP: usize = 4;

/// Fraction of sources with intensity at least `min_intensity` that have a
/// nonzero reconstructed pixel within Chebyshev distance `tol`.
///
/// Returns `None` when no source qualifies.
pub fn support_recall(truth: &DVector<f64>, recon: &DVector<f64>, side: usize, min_intensity: f64, tol: usize) -> Option<f64> {
    let peak = recon.amax();
    let on = |r: usize, c: usize| recon[r * side + c] > 1e-6 * peak;
    let mut hits = 0usize;
    let mut total = 0usize;
    for (i, &v) in truth.iter().enumerate() {
        if v < min_intensity {
            continue;
        }
        total += 1;
        let (r, c) = (i / side, i % side);
        let rows = r.saturating_sub(tol)..=(r + tol).min(side - 1);
        if rows.clone().any(|rr| (c.saturating_sub(tol)..=(c + tol).min(side - 1)).any(|cc| on(rr, cc))) {
            hits += 1;
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Nearest-neighbour upsampling of a row-major `low×low` image by `q`.
pub fn upsample(img: &DVector<f64>, low: usize, q: usize) -> DVector<f64> {
    let side = low * q;
    DVector::from_fn(side * side, |i, _| img[(i / side / q) * low + (i % side) / q])
}

fn to_gray(panel: &DVector<f64>, side: usize, out: &mut GrayImage, x0: usize) {
    let peak = panel.amax();
    for r in 0..side * ZOOM {
        for c in 0..side * ZOOM {
            let v = panel[(r / ZOOM) * side + c / ZOOM];
            let g = if peak > 0.0 { (255.0 * v.max(0.0) / peak).round() as u8 } else { 0 };
            out.put_pixel((x0 + c) as u32, r as u32, Luma([g]));
        }
    }
}

/// Truth, observation (upsampled) and reconstruction side by side, each
/// normalized to its own maximum.
pub fn write_triptych(
    path: &Path,
    side: usize,
    q: usize,
    truth: &DVector<f64>,
    counts: &DVector<f64>,
    recon: &DVector<f64>,
) -> Result<()> {
    let panel = side * ZOOM;
    let mut img = GrayImage::from_pixel((3 * panel + 2 * GAP) as u32, panel as u32, Luma([255]));
    let obs = upsample(counts, side / q, q);
    for (j, p) in [truth, &obs, recon].into_iter().enumerate() {
        to_gray(p, side, &mut img, j * (panel + GAP));
    }
    img.save(path).map_err(|e| Error::Image(e.to_string()))
}

/// Row-major image as CSV, one image row per line.
pub fn write_image_csv(path: &Path, img: &DVector<f64>, side: usize) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for r in 0..side {
        w.write_record((0..side).map(|c| format!("{:e}", img[r * side + c])))?;
    }
    w.flush()?;
    Ok(())
}
