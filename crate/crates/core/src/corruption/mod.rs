//! Structured spatio-temporal corruption.
//!
//! A corrupted video is `V' = { f_pi(t) * P_t }`: frames are first reordered
//! by a permutation `pi` (when the perturbation spec asks for shuffling), then each output
//! position `t` is multiplied by the fused mask `P_t = B_t * C_t` of the
//! sampled style. All randomness flows from the perturbation spec seed, so
//! [`regenerate`] reproduces the corrupted bytes exactly.

mod apply;
mod mask;
pub mod rng;
mod spec;
mod style;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use apply::{apply_corruption, apply_mask, regenerate, temporal_shuffle};
pub use mask::generate_mask;
pub use spec::{
    check_permutation, sample_permutation, BlendMode, PerturbationSpec, Rect, RegionParams,
    MIN_INTENSITY, SCHEMA_VERSION,
};
pub use style::{Family, PerturbationStyle, Subtype};

use crate::frame_store::FrameError;

#[derive(Debug, Error)]
pub enum CorruptionError {
    #[error("subtype {subtype:?} does not belong to family {family:?}")]
    UnknownSubtype { family: Family, subtype: Subtype },
    #[error("intensity {0} outside (0, 1]")]
    Intensity(f32),
    #[error("permutation has length {actual}, expected {expected}")]
    PermutationLength { expected: usize, actual: usize },
    #[error("permutation is not a bijection")]
    NotBijective,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown spec schema version {0}")]
    SchemaVersion(u32),
    #[error("region parameters do not match style {0}")]
    RegionMismatch(String),
    #[error("invalid spec json: {0}")]
    Json(String),
    #[error("invalid style weights: {0}")]
    StyleWeights(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Whether perturbations are fixed per video or redrawn on every call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionProtocol {
    /// Style and seed are pure functions of the video id.
    #[default]
    Static,
    /// Style and seed are drawn from the caller's generator.
    Dynamic,
}

/// Turns a video id and shape into a [`PerturbationSpec`] under a protocol.
#[derive(Debug, Clone)]
pub struct Corruptor {
    pub protocol: CorruptionProtocol,
    /// Weights over [`Family::ALL`] (weather, lighting, camera, occlusion).
    pub style_weights: [f64; 4],
    pub intensity: f32,
    pub shuffle: bool,
    pub blend: BlendMode,
}

impl Default for Corruptor {
    fn default() -> Self {
        Self {
            protocol: CorruptionProtocol::Static,
            style_weights: [1.0; 4],
            intensity: 0.7,
            shuffle: true,
            blend: BlendMode::Attenuate,
        }
    }
}

impl Corruptor {
    pub fn sample_style<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PerturbationStyle, CorruptionError> {
        let index = WeightedIndex::new(self.style_weights)
            .map_err(|e| CorruptionError::StyleWeights(e.to_string()))?;
        let family = Family::ALL[index.sample(rng)];
        let subtypes = family.subtypes();
        let subtype = subtypes[rng.random_range(0..subtypes.len())];
        PerturbationStyle::new(family, subtype)
    }

    pub fn make_spec<R: RngCore + ?Sized>(
        &self,
        video_id: &str,
        video_shape: [usize; 3],
        rng: &mut R,
    ) -> Result<PerturbationSpec, CorruptionError> {
        let (style, seed) = match self.protocol {
            CorruptionProtocol::Static => {
                let mut style_rng = rng::stream_rng(
                    rng::derive_seed(&[b"style", video_id.as_bytes()]),
                    rng::Purpose::StyleChoice,
                    0,
                    0,
                );
                let style = self.sample_style(&mut style_rng)?;
                let seed = rng::derive_seed(&[video_id.as_bytes(), style.to_string().as_bytes()]);
                (style, seed)
            }
            CorruptionProtocol::Dynamic => {
                let style = self.sample_style(rng)?;
                (style, rng.next_u64())
            }
        };
        Ok(
            PerturbationSpec::sample(style, self.intensity, seed, video_shape, self.shuffle)?
                .with_blend(self.blend),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_store::FrameSequence;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_video(rng: &mut ChaCha8Rng, t: usize, h: usize, w: usize) -> FrameSequence {
        let mut data = vec![0u8; t * h * w * 3];
        rng.fill_bytes(&mut data);
        FrameSequence::new(t, h, w, data).unwrap()
    }

    fn frame_checksum(frame: &[u8]) -> u64 {
        rng::derive_seed(&[frame])
    }

    #[test]
    fn identity_permutation_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_video(&mut rng, 5, 4, 4);
        let out = temporal_shuffle(&v, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn reversal_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_video(&mut rng, 3, 2, 2);
        // pi = (3, 2, 1) in 1-based notation.
        let out = temporal_shuffle(&v, &[2, 1, 0]).unwrap();
        for t in 0..3 {
            assert_eq!(out.frame(t), v.frame(2 - t));
        }
    }

    #[test]
    fn shuffle_preserves_frame_multiset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_video(&mut rng, 16, 8, 8);
        let perm = sample_permutation(77, 0, 16);
        let out = temporal_shuffle(&v, &perm).unwrap();
        let mut a: Vec<u64> = v.frames().map(frame_checksum).collect();
        let mut b: Vec<u64> = out.frames().map(frame_checksum).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_permutations_rejected() {
        let v = FrameSequence::zeros(3, 1, 1).unwrap();
        assert!(temporal_shuffle(&v, &[0, 1]).is_err());
        assert!(temporal_shuffle(&v, &[0, 1, 1]).is_err());
    }

    #[test]
    fn low_intensity_region_styles_cover_at_most_one_percent() {
        for style in PerturbationStyle::all().filter(|s| !s.is_full_field()) {
            for seed in 0..5 {
                let spec = PerturbationSpec::sample(style, 0.01, seed, [8, 64, 64], false).unwrap();
                let mask = generate_mask(&spec).unwrap();
                for t in 0..8 {
                    assert!(
                        mask.coverage(t) <= 0.01,
                        "{style} seed {seed} frame {t}: coverage {}",
                        mask.coverage(t)
                    );
                }
            }
        }
    }

    #[test]
    fn static_occlusion_top_left_quadrant() {
        let style = PerturbationStyle::new(Family::Occlusion, Subtype::Static).unwrap();
        let mut spec = PerturbationSpec::sample(style, 0.7, 5, [6, 32, 48], false).unwrap();
        spec.region_params = RegionParams::Occlusion {
            boxes: vec![Rect { y: 0, x: 0, h: 16, w: 24 }],
            velocity: [0, 0],
        };
        let mask = generate_mask(&spec).unwrap();
        for t in 0..6 {
            let b = mask.binary_frame(t);
            for y in 0..32 {
                for x in 0..48 {
                    let expected = u8::from(y < 16 && x < 24);
                    assert_eq!(b[y * 48 + x], expected, "frame {t} ({y}, {x})");
                }
            }
        }
    }

    #[test]
    fn same_seed_same_mask() {
        for style in PerturbationStyle::all() {
            let spec = PerturbationSpec::sample(style, 0.7, 123, [4, 24, 40], true).unwrap();
            assert_eq!(generate_mask(&spec).unwrap(), generate_mask(&spec).unwrap());
        }
    }

    #[test]
    fn masks_respect_value_domains() {
        for style in PerturbationStyle::all() {
            for seed in 0..3 {
                let spec = PerturbationSpec::sample(style, 1.0, seed, [5, 20, 30], false).unwrap();
                let mask = generate_mask(&spec).unwrap();
                assert!(mask.binary().iter().all(|&b| b <= 1));
                assert!(mask.modulation().iter().all(|c| (0.0..=1.0).contains(c)));
            }
        }
    }

    #[test]
    fn dynamic_styles_move_coherently_and_static_styles_do_not_move() {
        for style in PerturbationStyle::all() {
            for (h, w) in [(32, 32), (48, 64), (64, 64), (64, 96)] {
                for seed in 0..8 {
                    let spec = PerturbationSpec::sample(style, 0.9, seed, [16, h, w], false).unwrap();
                    let mask = generate_mask(&spec).unwrap();
                    let max_step = h as f64 / 8.0;
                    for t in 1..16 {
                        if !style.is_dynamic() {
                            assert_eq!(mask.binary_frame(t), mask.binary_frame(0), "{style}");
                        }
                        if let (Some(a), Some(b)) = (mask.centroid(t - 1), mask.centroid(t)) {
                            let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                            assert!(
                                d < max_step,
                                "{style} {h}x{w} seed {seed} t {t}: centroid moved {d}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn attenuate_with_empty_mask_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = random_video(&mut rng, 4, 6, 6);
        let mask = crate::MaskStack::new(4, 6, 6, vec![0; 144], vec![0.3; 144]).unwrap();
        let perm = [3, 1, 0, 2];
        let out = apply_mask(&v, &perm, &mask, BlendMode::Attenuate).unwrap();
        assert_eq!(out, temporal_shuffle(&v, &perm).unwrap());
        let literal = apply_mask(&v, &perm, &mask, BlendMode::Literal).unwrap();
        assert!(literal.as_bytes().iter().all(|&b| b == 0));
    }

    #[test]
    fn attenuate_halves_pixel() {
        let v = FrameSequence::new(1, 1, 1, vec![200, 200, 200]).unwrap();
        let mask = crate::MaskStack::new(1, 1, 1, vec![1], vec![0.5]).unwrap();
        let out = apply_mask(&v, &[0], &mask, BlendMode::Attenuate).unwrap();
        assert_eq!(out.as_bytes(), &[100, 100, 100]);
    }

    #[test]
    fn regenerate_matches_and_checks_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_video(&mut rng, 6, 16, 16);
        let style = PerturbationStyle::new(Family::Weather, Subtype::Snow).unwrap();
        let spec = PerturbationSpec::sample(style, 0.7, 8, [6, 16, 16], true).unwrap();
        let first = apply_corruption(&v, &spec, BlendMode::Attenuate).unwrap();
        assert_eq!(regenerate(&spec, &v).unwrap(), first);
        let other = random_video(&mut rng, 6, 16, 12);
        assert!(matches!(regenerate(&spec, &other), Err(CorruptionError::Shape(_))));
    }

    #[test]
    fn static_protocol_is_a_function_of_video_id() {
        let corruptor = Corruptor::default();
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(2);
        let s1 = corruptor.make_spec("clip-17", [4, 16, 16], &mut a).unwrap();
        let s2 = corruptor.make_spec("clip-17", [4, 16, 16], &mut b).unwrap();
        assert_eq!(s1, s2);
        let dynamic = Corruptor {
            protocol: CorruptionProtocol::Dynamic,
            ..Corruptor::default()
        };
        let d1 = dynamic.make_spec("clip-17", [4, 16, 16], &mut a).unwrap();
        let d2 = dynamic.make_spec("clip-17", [4, 16, 16], &mut a).unwrap();
        assert_ne!(d1.seed, d2.seed);
    }

    #[test]
    fn style_weights_force_family() {
        let corruptor = Corruptor {
            style_weights: [1.0, 0.0, 0.0, 0.0],
            ..Corruptor::default()
        };
        for i in 0..50 {
            let spec = corruptor
                .make_spec(&format!("v{i}"), [2, 8, 8], &mut ChaCha8Rng::seed_from_u64(i))
                .unwrap();
            assert_eq!(spec.style.family(), Family::Weather);
        }
        let bad = Corruptor {
            style_weights: [0.0; 4],
            ..Corruptor::default()
        };
        assert!(bad.make_spec("x", [2, 8, 8], &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
