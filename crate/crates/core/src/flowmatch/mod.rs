//! Rectified flow matching over synthetic 4D latent sequences: the toy
//! diffusion-transformer backbone, the training objective, Euler
//! sampling, and checkpoint persistence.

mod checkpoint;
mod model;
mod sample;
mod synth;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{
    ForwardMode, ForwardStats, StreamingField, Supervision, ToyDiT, ToyDiTConfig, VelocityField,
    WindowOverride,
};
pub use sample::euler_sample;
pub use synth::{
    decode_sequence, decode_states, synth_sequence, unit_sphere_mesh, MotionParams, MotionState,
    SynthDims, SyntheticSequence,
};
pub use train::{
    flow_target, fm_loss, frame_noise_seed, smoothed_endpoints, train_demo, window_starts,
    write_loss_csv, TrainConfig, TrainResult,
};
