//! Synthetic video question answering task.
//!
//! A clean video has `TOY_FRAMES` frames of height 1 and width
//! `TOY_FEATURES`; every pixel is black or white. Columns 0..3 all show bit
//! 0 of the label and columns 3..6 all show bit 1; columns 6..12 are random
//! distractors. The answer is one of `A..D` with index `bit0 + 2 * bit1`.
//!
//! The perturbation is a real static-occlusion spec covering one cue column
//! plus a temporal shuffle. The toy renderer inverts covered pixels instead
//! of darkening them, so the occluded cue points to the wrong answer and a
//! policy must weigh the remaining cue columns to stay correct.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GrpoError;
use crate::corruption::rng::derive_seed;
use crate::corruption::{
    generate_mask, sample_permutation, temporal_shuffle, BlendMode, Family, PerturbationSpec, PerturbationStyle, Rect,
    RegionParams, Subtype, SCHEMA_VERSION,
};
use crate::frame_store::{FrameSequence, FRAME_CHANNELS};

pub const TOY_FRAMES: usize = 4;
pub const TOY_FEATURES: usize = 12;
pub const TOY_ACTIONS: usize = 4;
const CUES_PER_BIT: usize = 3;
const CUE_COLUMNS: usize = 2 * CUES_PER_BIT;

pub const QUESTION: &str = "Which pattern do the cue columns show? Answer with A, B, C or D.";

pub fn answer_letter(index: usize) -> &'static str {
    ["A", "B", "C", "D"][index]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    pub query_id: String,
    pub label: usize,
    pub clean: FrameSequence,
    pub spec: PerturbationSpec,
    pub perturbed: FrameSequence,
    pub mask_coverage: f64,
}

impl ToySample {
    pub fn truth(&self) -> &'static str {
        answer_letter(self.label)
    }
}

/// Deterministically builds the sample for `query_id`.
pub fn toy_sample(query_id: &str) -> Result<ToySample, GrpoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[b"toy-sample", query_id.as_bytes()]));
    let label = rng.random_range(0..TOY_ACTIONS);
    let bits = [label & 1, label >> 1];
    let mut data = Vec::with_capacity(TOY_FRAMES * TOY_FEATURES * FRAME_CHANNELS);
    for _ in 0..TOY_FRAMES {
        for col in 0..TOY_FEATURES {
            let on = if col < CUE_COLUMNS { bits[col / CUES_PER_BIT] == 1 } else { rng.random_bool(0.5) };
            let v = if on { 255 } else { 0 };
            data.extend(std::iter::repeat_n(v, FRAME_CHANNELS));
        }
    }
    let clean = FrameSequence::new(TOY_FRAMES, 1, TOY_FEATURES, data).map_err(|e| GrpoError::Toy(e.to_string()))?;
    let column = rng.random_range(0..CUE_COLUMNS) as i64;
    let style = PerturbationStyle::new(Family::Occlusion, Subtype::Static).map_err(|e| GrpoError::Toy(e.to_string()))?;
    let seed = derive_seed(&[query_id.as_bytes(), b"toy-spec"]);
    let spec = PerturbationSpec {
        schema_version: SCHEMA_VERSION,
        style,
        intensity: 0.7,
        seed,
        shuffle: true,
        permutation: Some(sample_permutation(seed, style.code(), TOY_FRAMES)),
        region_params: RegionParams::Occlusion { boxes: vec![Rect { y: 0, x: column, h: 1, w: 1 }], velocity: [0, 0] },
        video_shape: [TOY_FRAMES, 1, TOY_FEATURES],
        blend: BlendMode::default(),
    };
    let (perturbed, mask_coverage) = toy_corrupt(&clean, &spec)?;
    Ok(ToySample { query_id: query_id.to_string(), label, clean, spec, perturbed, mask_coverage })
}

/// Shuffles by the perturbation spec's permutation, then inverts every pixel under the
/// binary mask. Returns the perturbed video and its mean mask coverage.
pub fn toy_corrupt(clean: &FrameSequence, spec: &PerturbationSpec) -> Result<(FrameSequence, f64), GrpoError> {
    let err = |e: crate::corruption::CorruptionError| GrpoError::Toy(e.to_string());
    spec.validate().map_err(err)?;
    let mask = generate_mask(spec).map_err(err)?;
    let shuffled = temporal_shuffle(clean, &spec.resolved_permutation()).map_err(err)?;
    let (t, h, w) = shuffled.shape();
    let mut data = shuffled.as_bytes().to_vec();
    for (pixel, &b) in data.chunks_mut(FRAME_CHANNELS).zip(mask.binary()) {
        if b == 1 {
            pixel.iter_mut().for_each(|v| *v = 255 - *v);
        }
    }
    let out = FrameSequence::new(t, h, w, data).map_err(|e| GrpoError::Toy(e.to_string()))?;
    Ok((out, mask.mean_coverage()))
}

/// Per-column fraction of frames in which the pixel is lit.
pub fn features(seq: &FrameSequence) -> Vec<f64> {
    let (t, _, w) = seq.shape();
    let mut out = vec![0.0; w];
    for frame in seq.frames() {
        for (o, px) in out.iter_mut().zip(frame.chunks(FRAME_CHANNELS)) {
            if px[0] > 127 {
                *o += 1.0;
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= t as f64);
    out
}

/// Templated rollout text for an observation and a chosen answer.
pub fn render_output(features: &[f64], answer: usize) -> String {
    let observed: Vec<String> = features
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let name = if i < CUE_COLUMNS { format!("c{i}") } else { format!("n{}", i - CUE_COLUMNS) };
            format!("{name}{}", if v >= 0.5 { "hi" } else { "lo" })
        })
        .collect();
    let letter = answer_letter(answer);
    format!(
        "<think>I observe {}. Therefore the evidence favors {letter}. I will answer {letter}.</think><answer>{letter}</answer>",
        observed.join(" ")
    )
}
