//! Regenerable perturbation metadata.
//!
//! A [`PerturbationSpec`] carries everything needed to rebuild a corrupted
//! video from its clean source: style, intensity, seed, the optional frame
//! permutation and the concrete region parameters that were sampled for it.
//! Region parameters are sampled once, from the seed, and stored inline so
//! the JSON form is self-describing.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rng::{stream_rng, Purpose};
use super::style::{PerturbationStyle, Subtype};
use super::CorruptionError;

pub const SCHEMA_VERSION: u32 = 1;

/// Intensities below this are raised to it before rendering.
pub const MIN_INTENSITY: f32 = 0.01;

/// How the fused mask is applied to a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMode {
    /// `f * ((1 - B) + B * C)`: clean pixels untouched, corrupted pixels scaled by `C`.
    #[default]
    Attenuate,
    /// `f * (B * C)`: the product exactly as written, zeroing clean pixels.
    Literal,
}

/// Axis-aligned box in pixel units, `(y, x)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub y: i64,
    pub x: i64,
    pub h: i64,
    pub w: i64,
}

/// Style-specific geometry and effect strengths.
///
/// Velocities are `[vy, vx]` in whole pixels per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionParams {
    Fog {
        cell: f32,
        drift: [f32; 2],
        base: f32,
    },
    Rain {
        streaks: Vec<Rect>,
        velocity: [i64; 2],
        strength: f32,
    },
    Snow {
        flakes: Vec<Rect>,
        velocity: [i64; 2],
        strength: f32,
    },
    Dusk {
        base: f32,
        slope: f32,
    },
    Night {
        base: f32,
        vignette: f32,
    },
    Overexposure {
        center: [f32; 2],
        radii: [f32; 2],
    },
    Shadow {
        /// Convex polygon vertices `[y, x]` in order.
        polygon: Vec<[f32; 2]>,
    },
    Translation {
        velocity: [i64; 2],
    },
    Zoom {
        /// Border ring growth in pixels per frame.
        ring_rate: f32,
    },
    Rotation {
        /// Growth per frame of `tan(theta / 2)`.
        tan_half_rate: f32,
    },
    Occlusion {
        boxes: Vec<Rect>,
        velocity: [i64; 2],
    },
}

impl RegionParams {
    fn matches(&self, style: PerturbationStyle) -> bool {
        use Subtype::*;
        matches!(
            (self, style.subtype()),
            (RegionParams::Fog { .. }, Fog)
                | (RegionParams::Rain { .. }, Rain)
                | (RegionParams::Snow { .. }, Snow)
                | (RegionParams::Dusk { .. }, Dusk)
                | (RegionParams::Night { .. }, Night)
                | (RegionParams::Overexposure { .. }, Overexposure)
                | (RegionParams::Shadow { .. }, Shadow)
                | (RegionParams::Translation { .. }, Translation)
                | (RegionParams::Zoom { .. }, Zoom)
                | (RegionParams::Rotation { .. }, Rotation)
                | (RegionParams::Occlusion { .. }, Static | Dynamic)
        )
    }

    /// Samples parameters for `style`. Coverage of region styles scales with
    /// `intensity`; moving sprites use integer velocities no larger than
    /// `min(H, W) / 24` and are placed so they never leave the frame.
    pub fn sample(
        style: PerturbationStyle,
        intensity: f32,
        (t, h, w): (usize, usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> RegionParams {
        let eta = intensity.clamp(MIN_INTENSITY, 1.0);
        let (hf, wf) = (h as f32, w as f32);
        let (hi, wi) = (h as i64, w as i64);
        let span = (t.max(1) - 1) as i64;
        let vmax = (h.min(w) / 24) as i64;
        let area = hf * wf;
        match style.subtype() {
            Subtype::Fog => RegionParams::Fog {
                cell: rng.random_range(0.15..0.35) * hf.max(wf).max(4.0),
                drift: [rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)],
                base: rng.random_range(0.2..0.4),
            },
            Subtype::Rain => {
                let mut len = (hi / 8).max(2).min(hi);
                let mut vy = if vmax >= 1 { rng.random_range(1..=vmax) } else { 0 };
                if span > 0 {
                    vy = vy.min((hi - len).max(0) / span);
                }
                if len + vy * span > hi {
                    len = hi;
                }
                let n = ((eta * wf / 2.0).round() as usize).clamp(1, w);
                let columns = rand::seq::index::sample(rng, w, n).into_vec();
                let y_max = (hi - len - vy * span).max(0);
                let streaks = columns
                    .into_iter()
                    .map(|x| Rect {
                        y: rng.random_range(0..=y_max),
                        x: x as i64,
                        h: len,
                        w: 1,
                    })
                    .collect();
                RegionParams::Rain {
                    streaks,
                    velocity: [vy, 0],
                    strength: rng.random_range(0.6..1.0),
                }
            }
            Subtype::Snow => {
                let size = if h >= 16 && w >= 16 { 2 } else { 1 };
                let mut vy = if vmax >= 1 { rng.random_range(1..=vmax) } else { 0 };
                let vx_max = vmax / 2;
                let mut vx = if vx_max >= 1 { rng.random_range(-vx_max..=vx_max) } else { 0 };
                if span > 0 {
                    vy = vy.min((hi - size).max(0) / span);
                    vx = vx.signum() * vx.abs().min((wi - size).max(0) / span);
                }
                let n = ((eta * area / 64.0).round() as usize).max(1);
                let (dy, dx) = (vy * span, vx * span);
                let y_range = (0, (hi - size - dy).max(0));
                let x_range = ((-dx).max(0), (wi - size - dx.max(0)).max((-dx).max(0)));
                let flakes = (0..n)
                    .map(|_| Rect {
                        y: rng.random_range(y_range.0..=y_range.1),
                        x: rng.random_range(x_range.0..=x_range.1),
                        h: size,
                        w: size,
                    })
                    .collect();
                RegionParams::Snow {
                    flakes,
                    velocity: [vy, vx],
                    strength: rng.random_range(0.5..0.9),
                }
            }
            Subtype::Dusk => RegionParams::Dusk {
                base: rng.random_range(0.3..0.45),
                slope: rng.random_range(0.15..0.3),
            },
            Subtype::Night => RegionParams::Night {
                base: rng.random_range(0.55..0.7),
                vignette: rng.random_range(0.15..0.3),
            },
            Subtype::Overexposure => {
                let s = (0.3 * eta / std::f32::consts::PI).sqrt();
                RegionParams::Overexposure {
                    center: [
                        rng.random_range(0.15..0.5) * hf,
                        rng.random_range(0.2..0.8) * wf,
                    ],
                    radii: [
                        s * hf * rng.random_range(0.8..1.0),
                        s * wf * rng.random_range(0.8..1.0),
                    ],
                }
            }
            Subtype::Shadow => {
                let target = 0.4 * eta * area;
                let b = (target.sqrt() * rng.random_range(0.7..1.3)).min(hf / 2.0).max(1.0);
                let a = (target / b).min(wf * 0.66).max(1.0);
                let skew = rng.random_range(0.0..=a / 2.0);
                // Shadows fall on the nearer (lower) half of the frame.
                let y0 = rng.random_range(hf / 2.0..=(hf - b).max(hf / 2.0));
                let x0 = rng.random_range(0.0..=(wf - a - skew).max(0.0));
                RegionParams::Shadow {
                    polygon: vec![
                        [y0, x0 + skew],
                        [y0, x0 + skew + a],
                        [y0 + b, x0 + a],
                        [y0 + b, x0],
                    ],
                }
            }
            Subtype::Translation => {
                let mut axis = || {
                    let mag = (eta * vmax as f32 * rng.random_range(0.5..=1.0)).round() as i64;
                    if rng.random_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                };
                RegionParams::Translation {
                    velocity: [axis(), axis()],
                }
            }
            Subtype::Zoom => RegionParams::Zoom {
                ring_rate: eta * (h.min(w) as f32) / (4.0 * span.max(1) as f32)
                    * rng.random_range(0.7..=1.0),
            },
            Subtype::Rotation => RegionParams::Rotation {
                // tan(7.5 deg) bounds the half-angle reached on the last frame.
                tan_half_rate: eta * 0.131_652_5 / span.max(1) as f32 * rng.random_range(0.7..=1.0),
            },
            Subtype::Static | Subtype::Dynamic => {
                let dynamic = style.subtype() == Subtype::Dynamic;
                let k = if dynamic { 1 } else { rng.random_range(1..=2) };
                let velocity = if dynamic && vmax >= 1 {
                    loop {
                        let v = [
                            rng.random_range(-vmax..=vmax),
                            rng.random_range(-vmax..=vmax),
                        ];
                        if v != [0, 0] {
                            break v;
                        }
                    }
                } else {
                    [0, 0]
                };
                let boxes = (0..k)
                    .map(|_| {
                        // Depth proxy: nearer (lower) occluders are larger.
                        let cy = rng.random_range(0.45..0.9) * hf;
                        let depth = cy / hf;
                        let box_area = 0.25 * eta * area / k as f32 * (0.75 + 0.5 * depth);
                        let aspect = rng.random_range(0.6..1.6);
                        let bh = ((box_area * aspect).sqrt().round() as i64).clamp(1, hi);
                        let bw = ((box_area / bh as f32).round() as i64).clamp(1, wi);
                        let (dy, dx) = (velocity[0] * span, velocity[1] * span);
                        let y_lo = (-dy).max(0);
                        let y_hi = (hi - bh - dy.max(0)).max(y_lo);
                        let x_lo = (-dx).max(0);
                        let x_hi = (wi - bw - dx.max(0)).max(x_lo);
                        let y = ((cy - bh as f32 / 2.0).round() as i64).clamp(y_lo, y_hi);
                        Rect {
                            y,
                            x: rng.random_range(x_lo..=x_hi),
                            h: bh,
                            w: bw,
                        }
                    })
                    .collect();
                RegionParams::Occlusion { boxes, velocity }
            }
        }
    }
}

/// Metadata from which a corrupted video is deterministically regenerable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub schema_version: u32,
    pub style: PerturbationStyle,
    /// Intensity in `(0, 1]`.
    pub intensity: f32,
    pub seed: u64,
    pub shuffle: bool,
    /// 0-based frame permutation: output frame `t` is input frame `permutation[t]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<usize>>,
    pub region_params: RegionParams,
    /// `[T, H, W]`.
    pub video_shape: [usize; 3],
    #[serde(default)]
    pub blend: BlendMode,
}

impl PerturbationSpec {
    /// Samples region parameters (and the permutation, when shuffling) from `seed`.
    pub fn sample(
        style: PerturbationStyle,
        intensity: f32,
        seed: u64,
        video_shape: [usize; 3],
        shuffle: bool,
    ) -> Result<Self, CorruptionError> {
        validate_intensity(intensity)?;
        let [t, h, w] = video_shape;
        if t == 0 || h == 0 || w == 0 {
            return Err(CorruptionError::Shape(format!(
                "video shape must be positive, got {video_shape:?}"
            )));
        }
        let mut rng = stream_rng(seed, Purpose::RegionParams, style.code(), 0);
        let region_params = RegionParams::sample(style, intensity, (t, h, w), &mut rng);
        let permutation = shuffle.then(|| sample_permutation(seed, style.code(), t));
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            style,
            intensity,
            seed,
            shuffle,
            permutation,
            region_params,
            video_shape,
            blend: BlendMode::default(),
        })
    }

    pub fn with_blend(mut self, blend: BlendMode) -> Self {
        self.blend = blend;
        self
    }

    pub fn validate(&self) -> Result<(), CorruptionError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CorruptionError::SchemaVersion(self.schema_version));
        }
        validate_intensity(self.intensity)?;
        let [t, h, w] = self.video_shape;
        if t == 0 || h == 0 || w == 0 {
            return Err(CorruptionError::Shape(format!(
                "video shape must be positive, got {:?}",
                self.video_shape
            )));
        }
        if !self.region_params.matches(self.style) {
            return Err(CorruptionError::RegionMismatch(self.style.to_string()));
        }
        if let RegionParams::Occlusion { velocity, .. } = &self.region_params {
            if self.style.subtype() == Subtype::Static && *velocity != [0, 0] {
                return Err(CorruptionError::RegionMismatch(
                    "static occlusion must have zero velocity".into(),
                ));
            }
        }
        if let Some(p) = &self.permutation {
            check_permutation(p, t)?;
        }
        Ok(())
    }

    /// Intensity after clamping to the rendering minimum.
    pub fn effective_intensity(&self) -> f32 {
        self.intensity.max(MIN_INTENSITY)
    }

    /// The frame order applied before masking: explicit permutation, a
    /// seed-derived one when shuffling without an explicit order, or identity.
    pub fn resolved_permutation(&self) -> Vec<usize> {
        let t = self.video_shape[0];
        match (&self.permutation, self.shuffle) {
            (Some(p), true) => p.clone(),
            (None, true) => sample_permutation(self.seed, self.style.code(), t),
            (_, false) => (0..t).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CorruptionError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CorruptionError::Json(e.to_string()))?;
        // Report an unknown schema before field-level errors from a newer layout.
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(CorruptionError::SchemaVersion(v as u32)),
            None => return Err(CorruptionError::Json("missing schema_version".into())),
        }
        let spec: Self =
            serde_json::from_value(value).map_err(|e| CorruptionError::Json(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn validate_intensity(intensity: f32) -> Result<(), CorruptionError> {
    if intensity.is_finite() && intensity > 0.0 && intensity <= 1.0 {
        Ok(())
    } else {
        Err(CorruptionError::Intensity(intensity))
    }
}

/// Uniform permutation of `0..t` drawn from the perturbation spec seed.
pub fn sample_permutation(seed: u64, style_code: u8, t: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, Purpose::Permutation, style_code, 0);
    let mut p: Vec<usize> = (0..t).collect();
    p.shuffle(&mut rng);
    p
}

pub fn check_permutation(p: &[usize], t: usize) -> Result<(), CorruptionError> {
    if p.len() != t {
        return Err(CorruptionError::PermutationLength {
            expected: t,
            actual: p.len(),
        });
    }
    let mut seen = vec![false; t];
    for &i in p {
        if i >= t || std::mem::replace(&mut seen[i], true) {
            return Err(CorruptionError::NotBijective);
        }
    }
    Ok(())
}
