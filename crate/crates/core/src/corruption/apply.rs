use rayon::prelude::*;

use super::mask::generate_mask;
use super::spec::{check_permutation, BlendMode, PerturbationSpec};
use super::CorruptionError;
use crate::frame_store::{FrameSequence, MaskStack, FRAME_CHANNELS};

/// Reorders frames so that output frame `t` is input frame `perm[t]` (0-based).
pub fn temporal_shuffle(seq: &FrameSequence, perm: &[usize]) -> Result<FrameSequence, CorruptionError> {
    check_permutation(perm, seq.len())?;
    let frames = perm.iter().map(|&src| seq.frame(src).to_vec()).collect();
    let (_, h, w) = seq.shape();
    Ok(FrameSequence::from_frames(h, w, frames)?.with_frame_rate(seq.frame_rate()))
}

/// Shuffles `seq` by the perturbation spec's permutation, then scales every pixel by the
/// fused mask. Output values never exceed input values in either blend mode.
pub fn apply_corruption(
    seq: &FrameSequence,
    spec: &PerturbationSpec,
    mode: BlendMode,
) -> Result<FrameSequence, CorruptionError> {
    check_shape(seq, spec)?;
    let mask = generate_mask(spec)?;
    let perm = spec.resolved_permutation();
    apply_mask(seq, &perm, &mask, mode)
}

/// Applies an already generated mask. `perm` selects the source frame for
/// each output position.
pub fn apply_mask(
    seq: &FrameSequence,
    perm: &[usize],
    mask: &MaskStack,
    mode: BlendMode,
) -> Result<FrameSequence, CorruptionError> {
    check_permutation(perm, seq.len())?;
    if mask.shape() != seq.shape() {
        return Err(CorruptionError::Shape(format!(
            "mask shape {:?} does not match video shape {:?}",
            mask.shape(),
            seq.shape()
        )));
    }
    let (_, h, w) = seq.shape();
    let frames: Vec<Vec<u8>> = perm
        .par_iter()
        .enumerate()
        .map(|(t, &src)| {
            let input = seq.frame(src);
            let b = mask.binary_frame(t);
            let c = mask.modulation_frame(t);
            let mut out = Vec::with_capacity(input.len());
            for (p, px) in input.chunks_exact(FRAME_CHANNELS).enumerate() {
                let factor = match mode {
                    BlendMode::Attenuate if b[p] == 0 => 1.0,
                    BlendMode::Attenuate => c[p],
                    BlendMode::Literal => f32::from(b[p]) * c[p],
                };
                out.extend(px.iter().map(|&v| scale(v, factor)));
            }
            out
        })
        .collect();
    Ok(FrameSequence::from_frames(h, w, frames)?.with_frame_rate(seq.frame_rate()))
}

#[inline]
fn scale(v: u8, factor: f32) -> u8 {
    if factor >= 1.0 {
        v
    } else {
        (f32::from(v) * factor).round() as u8
    }
}

/// Rebuilds the corrupted video for `spec` from the clean source, using the
/// blend mode recorded in the perturbation spec.
pub fn regenerate(spec: &PerturbationSpec, clean: &FrameSequence) -> Result<FrameSequence, CorruptionError> {
    apply_corruption(clean, spec, spec.blend)
}

fn check_shape(seq: &FrameSequence, spec: &PerturbationSpec) -> Result<(), CorruptionError> {
    let (t, h, w) = seq.shape();
    if [t, h, w] != spec.video_shape {
        return Err(CorruptionError::Shape(format!(
            "spec video_shape {:?} does not match video shape [{t}, {h}, {w}]",
            spec.video_shape
        )));
    }
    Ok(())
}
