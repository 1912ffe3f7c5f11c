//! End-to-end forward pass `I_out = f(I_in, E, s, T)`.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::attention::AttentionStats;
use super::conv::ConvParams;
use super::decode::{decode_frame, temporal_embed, TemporalParams};
use super::extractors::{
    fuse_features, holistic_extractor_forward_with_stats, regional_extractor_forward_with_stats, HolisticParams,
    RegionalParams,
};
use super::linear::{Activation, LayerNormParams, MlpParams};
use super::steb::StebParams;
use crate::error::{Error, Result};
use crate::event_model::{EventStream, IntensityFrame};
use crate::representations::{build_segment_grid, build_tpr, build_voxel_grid};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Number of input frames `N_in`.
    pub input_frames: usize,
    /// Bins of each inter-frame voxel grid.
    pub voxel_bins: usize,
    pub tpr_levels: usize,
    pub tpr_moments: usize,
    pub tpr_attenuation: f64,
    /// TPR half-window in µs; half the input span when `None`.
    pub tpr_half_window: Option<f64>,
    /// `C_r`.
    pub regional_channels: usize,
    /// `C_t`.
    pub temporal_dim: usize,
    /// `C_ts`.
    pub compressed_dim: usize,
    /// Attention window side `M`.
    pub window_size: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub regional_blocks: usize,
    /// Number of down-sampling stages in the holistic extractor.
    pub holistic_depth: usize,
    pub decoder_hidden: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input_frames: 4,
            voxel_bins: 4,
            tpr_levels: 7,
            tpr_moments: 2,
            tpr_attenuation: 3.0,
            tpr_half_window: None,
            regional_channels: 8,
            temporal_dim: 640,
            compressed_dim: 64,
            window_size: 4,
            heads: 2,
            mlp_ratio: 2,
            regional_blocks: 4,
            holistic_depth: 3,
            decoder_hidden: 64,
        }
    }
}

impl PipelineConfig {
    /// Channels of the holistic feature, equal to the flattened regional
    /// feature `L·C_r`.
    pub fn holistic_channels(&self) -> usize {
        self.tpr_levels * self.regional_channels
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_frames", self.input_frames.saturating_sub(1)),
            ("voxel_bins", self.voxel_bins),
            ("tpr_levels", self.tpr_levels),
            ("tpr_moments", self.tpr_moments),
            ("regional_channels", self.regional_channels),
            ("temporal_dim", self.temporal_dim),
            ("compressed_dim", self.compressed_dim),
            ("window_size", self.window_size),
            ("heads", self.heads),
            ("decoder_hidden", self.decoder_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("pipeline config field {name} is out of range")));
        }
        if !(self.tpr_attenuation > 1.0) {
            return Err(Error::invalid("TPR attenuation must exceed 1"));
        }
        if !self.regional_channels.is_multiple_of(self.heads) || !self.holistic_channels().is_multiple_of(self.heads) {
            return Err(Error::invalid("attention heads must divide the channel counts"));
        }
        Ok(())
    }

    /// Checks that an `h×w` input is compatible with windowing and the
    /// holistic down-sampling.
    pub fn validate_resolution(&self, h: usize, w: usize) -> Result<()> {
        if !h.is_multiple_of(self.window_size) || !w.is_multiple_of(self.window_size) {
            return Err(Error::invalid(format!("window size {} must divide {h}x{w}", self.window_size)));
        }
        let scale = 1usize << self.holistic_depth;
        if !h.is_multiple_of(scale) || !w.is_multiple_of(scale) {
            return Err(Error::invalid(format!("{h}x{w} must be divisible by 2^{}", self.holistic_depth)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub regional: RegionalParams,
    pub holistic: HolisticParams,
    pub fuse: ConvParams,
    pub temporal: TemporalParams,
    pub decoder: MlpParams,
}

impl PipelineParams {
    /// Parameters drawn from a ChaCha8 stream seeded with `seed`.
    pub fn seeded(config: &PipelineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let rng = &mut ChaCha8Rng::seed_from_u64(seed);
        let c = config;
        let regional =
            RegionalParams::seeded(rng, c.tpr_moments, c.regional_channels, c.heads, c.mlp_ratio, c.regional_blocks)?;
        let holistic = HolisticParams::seeded(
            rng,
            c.input_frames,
            c.voxel_bins,
            c.holistic_channels(),
            c.heads,
            c.mlp_ratio,
            c.holistic_depth,
        )?;
        let fuse = ConvParams::seeded(rng, c.holistic_channels(), c.temporal_dim, 1, 1, 0);
        let temporal = TemporalParams::seeded(rng, c.temporal_dim, c.compressed_dim);
        let h = c.decoder_hidden;
        let decoder = MlpParams::seeded(rng, &[c.compressed_dim + 2, h, h, h, 3], Activation::Relu);
        Ok(Self { regional, holistic, fuse, temporal, decoder })
    }

    /// Visits every parameter tensor with a stable dotted name.
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        fn conv(prefix: &str, p: &mut ConvParams, f: &mut dyn FnMut(&str, &mut Tensor)) {
            f(&format!("{prefix}.weight"), &mut p.weight);
            f(&format!("{prefix}.bias"), &mut p.bias);
        }
        fn mlp(prefix: &str, p: &mut MlpParams, f: &mut dyn FnMut(&str, &mut Tensor)) {
            for (i, (d, _)) in p.layers.iter_mut().enumerate() {
                f(&format!("{prefix}.{i}.weight"), &mut d.weight);
                f(&format!("{prefix}.{i}.bias"), &mut d.bias);
            }
        }
        fn norm(prefix: &str, p: &mut LayerNormParams, f: &mut dyn FnMut(&str, &mut Tensor)) {
            f(&format!("{prefix}.gamma"), &mut p.gamma);
            f(&format!("{prefix}.beta"), &mut p.beta);
        }
        fn steb(prefix: &str, p: &mut StebParams, f: &mut dyn FnMut(&str, &mut Tensor)) {
            norm(&format!("{prefix}.norm1"), &mut p.norm1, f);
            let a = &mut p.attention;
            for (name, d) in [("q", &mut a.query), ("k", &mut a.key), ("v", &mut a.value), ("o", &mut a.output)] {
                f(&format!("{prefix}.attn.{name}.weight"), &mut d.weight);
                f(&format!("{prefix}.attn.{name}.bias"), &mut d.bias);
            }
            norm(&format!("{prefix}.norm2"), &mut p.norm2, f);
            mlp(&format!("{prefix}.mlp"), &mut p.mlp, f);
        }

        conv("regional.lift", &mut self.regional.lift, f);
        for (i, b) in self.regional.blocks.iter_mut().enumerate() {
            steb(&format!("regional.block{i}"), b, f);
        }
        let hol = &mut self.holistic;
        conv("holistic.lift", &mut hol.lift, f);
        for (i, b) in hol.encoder.iter_mut().enumerate() {
            steb(&format!("holistic.encoder{i}"), b, f);
        }
        for (i, d) in hol.down.iter_mut().enumerate() {
            conv(&format!("holistic.down{i}"), d, f);
        }
        for (i, b) in hol.decoder.iter_mut().enumerate() {
            steb(&format!("holistic.decoder{i}"), b, f);
        }
        for (i, u) in hol.up.iter_mut().enumerate() {
            conv(&format!("holistic.up{i}"), u, f);
        }
        conv("fuse", &mut self.fuse, f);
        mlp("temporal.mlp", &mut self.temporal.mlp, f);
        conv("temporal.compress", &mut self.temporal.compress, f);
        mlp("decoder", &mut self.decoder, f);
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut copy = self.clone();
        let mut out = Vec::new();
        copy.visit_mut(&mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    /// Builds parameters for `config` from named tensors; every name must be
    /// present with the expected shape.
    pub fn from_named_tensors(config: &PipelineConfig, tensors: &[(String, Tensor)]) -> Result<Self> {
        let mut params = Self::seeded(config, 0)?;
        let lookup: std::collections::HashMap<&str, &Tensor> =
            tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut err = None;
        params.visit_mut(&mut |name, slot| {
            if err.is_some() {
                return;
            }
            match lookup.get(name) {
                Some(t) if t.shape() == slot.shape() => *slot = (*t).clone(),
                Some(t) => {
                    err = Some(Error::format(format!(
                        "parameter {name} has shape {:?}, expected {:?}",
                        t.shape(),
                        slot.shape()
                    )))
                }
                None => err = Some(Error::format(format!("missing parameter {name}"))),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(params),
        }
    }
}

/// Invariant and shape summary of one forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineReport {
    pub holistic_calls: usize,
    pub regional_calls: usize,
    pub stage_shapes: Vec<(String, Vec<usize>)>,
    pub attention_rows: u64,
    pub max_softmax_row_deviation: f64,
}

impl PipelineReport {
    fn record(&mut self, stage: &str, shape: &[usize]) {
        if !self.stage_shapes.iter().any(|(s, _)| s == stage) {
            self.stage_shapes.push((stage.to_string(), shape.to_vec()));
        }
    }
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "holistic_calls {}", self.holistic_calls)?;
        writeln!(f, "regional_calls {}", self.regional_calls)?;
        for (stage, shape) in &self.stage_shapes {
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            writeln!(f, "shape {stage} {}", dims.join("x"))?;
        }
        writeln!(f, "softmax_rows {}", self.attention_rows)?;
        writeln!(f, "softmax_max_row_deviation {:e}", self.max_softmax_row_deviation)?;
        writeln!(f, "softmax_rows_ok {}", self.max_softmax_row_deviation <= 1e-6)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// One `[sH, sW, 3]` frame per requested time, values in `[0, 1]`.
    pub frames: Vec<Tensor>,
    pub report: PipelineReport,
}

fn frame_tensor(frame: &IntensityFrame) -> Tensor {
    let (h, w, c) = (frame.height(), frame.width(), frame.channels());
    let mut data = vec![0.0f32; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                let src = if c == 1 { 0 } else { ch };
                data[(ch * h + y) * w + x] = frame.get(x, y, src) as f32;
            }
        }
    }
    Tensor::from_vec(vec![3, h, w], data).expect("frame values are finite")
}

/// Runs the whole forward pass. The holistic extractor runs once; the
/// regional branch, fusion, temporal embedding and decoding run per time.
pub fn pipeline_forward(
    frames: &[IntensityFrame],
    events: &EventStream,
    scale: f64,
    times: &[f64],
    config: &PipelineConfig,
    params: &PipelineParams,
) -> Result<PipelineOutput> {
    config.validate()?;
    if frames.len() != config.input_frames {
        return Err(Error::invalid(format!(
            "configured for {} input frames, got {}",
            config.input_frames,
            frames.len()
        )));
    }
    let (h, w) = (frames[0].height(), frames[0].width());
    if frames.iter().any(|f| f.height() != h || f.width() != w) {
        return Err(Error::invalid("input frames differ in size"));
    }
    if events.width() as usize != w || events.height() as usize != h {
        return Err(Error::invalid("event sensor size does not match the frames"));
    }
    if frames.windows(2).any(|p| p[1].timestamp() <= p[0].timestamp()) {
        return Err(Error::invalid("input frame timestamps must be strictly increasing"));
    }
    if let Some(t) = times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::invalid(format!("output time {t} outside [0, 1]")));
    }
    config.validate_resolution(h, w)?;

    let mut report = PipelineReport::default();
    let stamps: Vec<u64> = frames.iter().map(|f| f.timestamp()).collect();
    let (first, last) = (stamps[0], *stamps.last().unwrap());
    let span = (last - first) as f64;

    let frame_tensors: Vec<Tensor> = frames.iter().map(frame_tensor).collect();
    let segments = stamps
        .windows(2)
        .enumerate()
        .map(|(k, pair)| {
            let grid = if k + 2 == stamps.len() {
                build_voxel_grid(events, config.voxel_bins, pair[0], pair[1])?
            } else {
                build_segment_grid(events, config.voxel_bins, pair[0], pair[1])?
            };
            Ok(grid.to_tensor())
        })
        .collect::<Result<Vec<_>>>()?;
    report.record("voxel_segment", segments[0].shape());

    let (holistic, hol_stats) =
        holistic_extractor_forward_with_stats(&frame_tensors, &segments, &params.holistic, config.window_size)?;
    report.holistic_calls += 1;
    report.record("holistic_feature", holistic.shape());

    let half_window = config.tpr_half_window.unwrap_or(span / 2.0);
    let per_time: Vec<(Tensor, AttentionStats, Vec<(&'static str, Vec<usize>)>)> = times
        .par_iter()
        .map(|&t| {
            let center = first as f64 + t * span;
            let tpr = build_tpr(
                events,
                center,
                half_window,
                config.tpr_levels,
                config.tpr_moments,
                config.tpr_attenuation,
            )?
            .to_tensor();
            let (regional, stats) =
                regional_extractor_forward_with_stats(&tpr, &params.regional, config.window_size)?;
            let regional_shape = regional.shape().to_vec();
            let flat = regional.reshape(&[config.holistic_channels(), h, w])?;
            let fused = fuse_features(&holistic, &flat, &params.fuse)?;
            let embedded = temporal_embed(t, &params.temporal, &fused)?;
            let mut out = decode_frame(&embedded, scale, &params.decoder)?;
            for v in out.data_mut() {
                *v = v.clamp(0.0, 1.0);
            }
            let shapes = vec![
                ("tpr", tpr.shape().to_vec()),
                ("regional_feature", regional_shape),
                ("fused_feature", fused.shape().to_vec()),
                ("temporal_embedded", embedded.shape().to_vec()),
                ("output_frame", out.shape().to_vec()),
            ];
            Ok((out, stats, shapes))
        })
        .collect::<Result<_>>()?;

    let mut stats = hol_stats;
    let mut outputs = Vec::with_capacity(per_time.len());
    for (out, s, shapes) in per_time {
        report.regional_calls += 1;
        stats = stats.merge(s);
        for (stage, shape) in shapes {
            report.record(stage, &shape);
        }
        outputs.push(out);
    }
    report.attention_rows = stats.rows;
    report.max_softmax_row_deviation = stats.max_row_deviation;
    Ok(PipelineOutput { frames: outputs, report })
}
