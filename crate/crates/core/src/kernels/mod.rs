//! Forward-only numerical kernels for feature extraction and implicit
//! decoding. Parameters are supplied explicitly or drawn from a seeded
//! generator; there is no training path.
//!
//! Every kernel accumulates in `f64` and stores `f32`. Work is split only
//! across independent outputs (windows, channels, queries), so results are
//! bit-identical for any rayon pool size.

mod attention;
mod conv;
mod decode;
mod extractors;
mod linear;
mod loss;
mod pipeline;
mod steb;
mod window;

pub use attention::{attention_probabilities, multi_head_self_attention, AttentionParams, AttentionStats};
pub use conv::{conv2d, downsample_half, upsample_double, upsample_nearest, ConvParams};
pub use decode::{
    decode_candidate, decode_frame, modulate_channels, neighbor_weights, output_size, query_grid, spatial_decode,
    temporal_attention, temporal_embed, Neighbor, TemporalParams,
};
pub use extractors::{
    fuse_features, holistic_extractor_forward, holistic_extractor_forward_with_stats, regional_extractor_forward,
    regional_extractor_forward_with_stats, HolisticParams, RegionalParams,
};
pub use linear::{layer_norm, mlp_forward, Activation, Dense, LayerNormParams, MlpParams};
pub use loss::charbonnier_loss;
pub use pipeline::{pipeline_forward, PipelineConfig, PipelineOutput, PipelineParams, PipelineReport};
pub use steb::{steb_forward, steb_forward_with_stats, StebParams};
pub use window::{cyclic_shift, window_partition, window_unpartition};

use rand::Rng;

use crate::tensor::Tensor;

/// Uniform `(-1/√fan_in, 1/√fan_in)` initialisation.
pub(crate) fn init_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(shape.to_vec(), data).expect("initialised shape is consistent")
}
