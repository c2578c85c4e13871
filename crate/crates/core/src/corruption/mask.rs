//! Per-frame rasterization of [`RegionParams`] into `(B_t, C_t)`.
//!
//! Only `+ - * /` and `sqrt` are used on floats so that regenerated masks
//! are identical across platforms.

use rayon::prelude::*;

use super::rng::{lattice_value, splitmix64};
use super::spec::{PerturbationSpec, Rect, RegionParams};
use super::CorruptionError;
use crate::frame_store::MaskStack;

/// Builds the mask stack for `spec`, one frame per output time step.
pub fn generate_mask(spec: &PerturbationSpec) -> Result<MaskStack, CorruptionError> {
    spec.validate()?;
    let [t, h, w] = spec.video_shape;
    let frames: Vec<(Vec<u8>, Vec<f32>)> = (0..t)
        .into_par_iter()
        .map(|ti| rasterize(spec, ti, h, w))
        .collect();
    let (binary, modulation): (Vec<Vec<u8>>, Vec<Vec<f32>>) = frames.into_iter().unzip();
    Ok(MaskStack::new(t, h, w, binary.concat(), modulation.concat())?)
}

/// Normalized vertical coordinate: 0 at the top row, 1 at the bottom.
/// Lower rows are treated as nearer to the camera.
fn depth_proxy(y: usize, h: usize) -> f32 {
    if h <= 1 {
        1.0
    } else {
        y as f32 / (h - 1) as f32
    }
}

fn fill_rect(binary: &mut [u8], modulation: &mut [f32], w: usize, h: usize, r: Rect, c: f32) {
    let y0 = r.y.max(0);
    let y1 = (r.y + r.h).min(h as i64);
    let x0 = r.x.max(0);
    let x1 = (r.x + r.w).min(w as i64);
    for y in y0..y1 {
        for x in x0..x1 {
            let i = y as usize * w + x as usize;
            binary[i] = 1;
            modulation[i] = c;
        }
    }
}

fn shifted(r: Rect, velocity: [i64; 2], t: usize) -> Rect {
    Rect {
        y: r.y + velocity[0] * t as i64,
        x: r.x + velocity[1] * t as i64,
        ..r
    }
}

fn smooth(f: f32) -> f32 {
    f * f * (3.0 - 2.0 * f)
}

fn value_noise(seed: u64, y: f32, x: f32) -> f32 {
    let (fy, fx) = (y.floor(), x.floor());
    let (iy, ix) = (fy as i64, fx as i64);
    let (ty, tx) = (smooth(y - fy), smooth(x - fx));
    let v00 = lattice_value(seed, ix, iy);
    let v01 = lattice_value(seed, ix + 1, iy);
    let v10 = lattice_value(seed, ix, iy + 1);
    let v11 = lattice_value(seed, ix + 1, iy + 1);
    let top = v00 + (v01 - v00) * tx;
    let bottom = v10 + (v11 - v10) * tx;
    top + (bottom - top) * ty
}

fn inside_convex(poly: &[[f32; 2]], y: f32, x: f32) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0.0f32;
    for i in 0..n {
        let [ay, ax] = poly[i];
        let [by, bx] = poly[(i + 1) % n];
        let cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

pub(crate) fn rasterize(spec: &PerturbationSpec, t: usize, h: usize, w: usize) -> (Vec<u8>, Vec<f32>) {
    let eta = spec.effective_intensity();
    let n = h * w;
    let mut binary = vec![0u8; n];
    let mut modulation = vec![1.0f32; n];
    match &spec.region_params {
        RegionParams::Fog { cell, drift, base } => {
            let noise_seed = splitmix64(spec.seed ^ u64::from(spec.style.code()));
            let cell = cell.max(1.0);
            let (oy, ox) = (drift[0] * t as f32, drift[1] * t as f32);
            for y in 0..h {
                for x in 0..w {
                    let v = value_noise(noise_seed, (y as f32 + oy) / cell, (x as f32 + ox) / cell);
                    let density = base + (1.0 - base) * v;
                    let i = y * w + x;
                    binary[i] = 1;
                    modulation[i] = (1.0 - eta * density).clamp(0.0, 1.0);
                }
            }
        }
        RegionParams::Rain {
            streaks,
            velocity,
            strength,
        } => {
            let c = (1.0 - eta * strength).clamp(0.0, 1.0);
            for &r in streaks {
                fill_rect(&mut binary, &mut modulation, w, h, shifted(r, *velocity, t), c);
            }
        }
        RegionParams::Snow {
            flakes,
            velocity,
            strength,
        } => {
            let c = (1.0 - eta * strength).clamp(0.0, 1.0);
            for &r in flakes {
                fill_rect(&mut binary, &mut modulation, w, h, shifted(r, *velocity, t), c);
            }
        }
        RegionParams::Dusk { base, slope } => {
            for y in 0..h {
                // Sky (upper rows) keeps more light than the foreground.
                let c = (1.0 - eta * (base + slope * depth_proxy(y, h))).clamp(0.0, 1.0);
                for x in 0..w {
                    binary[y * w + x] = 1;
                    modulation[y * w + x] = c;
                }
            }
        }
        RegionParams::Night { base, vignette } => {
            let cy = (h as f32 - 1.0) / 2.0;
            let cx = (w as f32 - 1.0) / 2.0;
            for y in 0..h {
                for x in 0..w {
                    let dy = if cy > 0.0 { (y as f32 - cy) / cy } else { 0.0 };
                    let dx = if cx > 0.0 { (x as f32 - cx) / cx } else { 0.0 };
                    let r2 = (dy * dy + dx * dx) / 2.0;
                    let i = y * w + x;
                    binary[i] = 1;
                    modulation[i] = (1.0 - eta * (base + vignette * r2)).clamp(0.0, 1.0);
                }
            }
        }
        RegionParams::Overexposure { center, radii } => {
            let ry = radii[0].max(0.5);
            let rx = radii[1].max(0.5);
            for y in 0..h {
                for x in 0..w {
                    let dy = (y as f32 - center[0]) / ry;
                    let dx = (x as f32 - center[1]) / rx;
                    let r2 = dy * dy + dx * dx;
                    if r2 <= 1.0 {
                        let i = y * w + x;
                        binary[i] = 1;
                        // Washed out towards the hot spot.
                        modulation[i] = ((1.0 - eta) * r2).clamp(0.0, 1.0);
                    }
                }
            }
        }
        RegionParams::Shadow { polygon } => {
            for y in 0..h {
                let c = (1.0 - eta * depth_proxy(y, h)).clamp(0.0, 1.0);
                for x in 0..w {
                    if inside_convex(polygon, y as f32, x as f32) {
                        binary[y * w + x] = 1;
                        modulation[y * w + x] = c;
                    }
                }
            }
        }
        RegionParams::Translation { velocity } => {
            let dy = velocity[0] * t as i64;
            let dx = velocity[1] * t as i64;
            let (hi, wi) = (h as i64, w as i64);
            let rows = if dy >= 0 { 0..dy.min(hi) } else { (hi + dy).max(0)..hi };
            let cols = if dx >= 0 { 0..dx.min(wi) } else { (wi + dx).max(0)..wi };
            for y in 0..hi {
                for x in 0..wi {
                    if rows.contains(&y) || cols.contains(&x) {
                        let i = (y * wi + x) as usize;
                        binary[i] = 1;
                        modulation[i] = 0.0;
                    }
                }
            }
        }
        RegionParams::Zoom { ring_rate } => {
            let ring = ((ring_rate * t as f32).floor() as usize).min(h.min(w).div_ceil(2));
            for y in 0..h {
                for x in 0..w {
                    let edge = y.min(h - 1 - y).min(x).min(w - 1 - x);
                    if edge < ring {
                        binary[y * w + x] = 1;
                        modulation[y * w + x] = 0.0;
                    }
                }
            }
        }
        RegionParams::Rotation { tan_half_rate } => {
            let u = tan_half_rate * t as f32;
            let cos = (1.0 - u * u) / (1.0 + u * u);
            let sin = 2.0 * u / (1.0 + u * u);
            let cy = (h as f32 - 1.0) / 2.0;
            let cx = (w as f32 - 1.0) / 2.0;
            for y in 0..h {
                for x in 0..w {
                    let py = y as f32 - cy;
                    let px = x as f32 - cx;
                    // Source location under the inverse rotation.
                    let sy = cos * py - sin * px;
                    let sx = sin * py + cos * px;
                    if sy.abs() > cy + 0.5 || sx.abs() > cx + 0.5 {
                        binary[y * w + x] = 1;
                        modulation[y * w + x] = 0.0;
                    }
                }
            }
        }
        RegionParams::Occlusion { boxes, velocity } => {
            let c = (1.0 - eta).clamp(0.0, 1.0);
            for &r in boxes {
                fill_rect(&mut binary, &mut modulation, w, h, shifted(r, *velocity, t), c);
            }
        }
    }
    (binary, modulation)
}
