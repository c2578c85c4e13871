//! Robust video alignment toolkit.
//!
//! The crate is organised around the training pipeline it implements:
//!
//! - [`frame_store`]: dense 8-bit video tensors and the `.rvf` container.
//! - [`corruption`]: temporal shuffling and style-specific spatial masks,
//!   regenerable bit-for-bit from a [`corruption::PerturbationSpec`].
//! - [`judge`]: prompt templates, verdict parsing, an OpenAI-compatible
//!   remote client and a deterministic offline stub.
//! - [`reward`]: format, accuracy and clean/perturbed alignment rewards.
//! - [`curriculum`]: difficulty routing and the replay memory.
//! - [`grpo`]: group-relative advantages, the clipped surrogate and a toy
//!   differentiable policy trained with dual-branch GRPO.
//! - [`cost`]: analytic per-step training cost model.
//! - [`pipeline`]: the end-to-end loop tying the above together.

pub mod corruption;
pub mod cost;
pub mod curriculum;
pub mod frame_store;
pub mod grpo;
pub mod judge;
pub mod pipeline;
pub mod reward;

pub use frame_store::{FrameSequence, MaskStack};
