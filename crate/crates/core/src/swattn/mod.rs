//! Sliding-window temporal attention with 1D rotary phases.
//!
//! Plain per-frame attention is the `w = 0` special case: rotations of
//! queries and keys by the same frame's phases cancel inside the scores,
//! so the windowed path reproduces single-frame attention exactly while
//! `w > 0` adds cross-frame terms scored by relative time only.

mod cache;
mod rope;
mod window;

pub use cache::{KvCache, StreamingAttention};
pub use rope::{apply_rope, RotaryConfig};
pub use window::{
    cross_windowed_attention, vanilla_attention, window_indices, windowed_attention,
    windowed_attention_detailed, FrameTokens, WindowSpec, WindowStats, WindowedOutput,
};
