//! Motion-aware latent video diffusion.

pub mod checkpoint;
pub mod guidance;
pub mod latent;
pub mod loss;
pub mod network;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use guidance::{cfg_combine, cfg_combine_slices, GuidanceWeights};
pub use latent::{decode, encode, encode_frames, LatentShape, LatentVideo, LATENT_CHANNELS, LATENT_FACTOR};
pub use loss::{latent_motion_magnitude, loss_ldm, loss_mr, total_loss};
pub use network::{ConditionSignal, Denoiser, DenoiserConfig};
pub use sampler::{ddim_sample_from, gaussian_latent, sample, NoisePredictor, SampleConfig};
pub use schedule::{NoiseSchedule, ScheduleConfig};
pub use train::{evaluate, train, train_with_progress, ConditionKind, LossParts, TrainConfig, TrainExample, TrainReport};
