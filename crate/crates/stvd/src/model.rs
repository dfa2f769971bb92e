//! The denoising network and its checkpoint format.
//!
//! Three temporally strided frames pass through a shared spatial encoder;
//! a temporal bottleneck fuses the three feature stacks into one
//! spatiotemporal representation; a decoder upsamples back to input
//! resolution, concatenating fused per-level skip connections on the way
//! up. Each side is `spatial_stages` scaling blocks plus one non-scaling
//! conv block, six blocks per side at the default five stages, giving the
//! `(H, W, 1) -> (H/32, W/32, top)` contract.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::autodiff::{Scalar, Shape, Tape, TensorId};
use crate::clip::Frame;
use crate::error::{Error, Result};
use crate::rng::{self, stream, NormalSampler};

/// Network hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Channel width of the first conv block; doubles per scaling stage.
    pub base_channels: usize,
    /// Cap on the channel schedule.
    pub max_channels: usize,
    /// Number of 2x down/up stages. Input dims must divide `2^spatial_stages`.
    pub spatial_stages: usize,
    /// Temporal stride between the three input frames.
    pub stride_t: usize,
    /// Clamp inference output into `[0, 1]`.
    pub clamp_output: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

impl ModelConfig {
    /// CPU-trainable default: widths 8..128 over five stages.
    pub fn desk_scale() -> Self {
        ModelConfig {
            base_channels: 8,
            max_channels: 128,
            spatial_stages: 5,
            stride_t: 1,
            clamp_output: true,
        }
    }

    /// Full-width preset: 16 rising to 512 over five stages.
    pub fn full_scale() -> Self {
        ModelConfig { base_channels: 16, max_channels: 512, ..Self::desk_scale() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.max_channels < self.base_channels {
            return Err(Error::Config(format!(
                "channel schedule {}..{} is empty",
                self.base_channels, self.max_channels
            )));
        }
        if self.spatial_stages == 0 {
            return Err(Error::Config("spatial_stages must be >= 1".into()));
        }
        if self.stride_t == 0 {
            return Err(Error::Config("stride_t must be >= 1".into()));
        }
        Ok(())
    }

    /// Channel widths per level: index 0 is the stem, index `j` the output
    /// of scaling stage `j`.
    pub fn channel_schedule(&self) -> Vec<usize> {
        (0..=self.spatial_stages)
            .map(|j| (self.base_channels << j).min(self.max_channels))
            .collect()
    }

    /// Spatial downscale factor at the bottleneck.
    pub fn scale_factor(&self) -> usize {
        1 << self.spatial_stages
    }

    pub fn check_input_dims(&self, height: usize, width: usize) -> Result<()> {
        let f = self.scale_factor();
        if height % f != 0 || width % f != 0 {
            return Err(Error::Shape(format!(
                "input {height}x{width} not divisible by 2^{} = {f}",
                self.spatial_stages
            )));
        }
        Ok(())
    }
}

/// A convolution layer's tensors. `transposed` layers store weights as
/// `(in_c, out_c, k, k)` and upsample by `k`; plain layers store
/// `(out_c, in_c, k, k)` and run at stride 1 with padding `k/2`.
#[derive(Debug, Clone)]
pub struct ConvLayer<S> {
    pub w: Vec<S>,
    pub b: Vec<S>,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub transposed: bool,
}

impl<S: Scalar> ConvLayer<S> {
    fn zeroed(in_c: usize, out_c: usize, k: usize, transposed: bool) -> Self {
        ConvLayer {
            w: vec![S::zero(); in_c * out_c * k * k],
            b: vec![S::zero(); out_c],
            in_c,
            out_c,
            k,
            transposed,
        }
    }

    fn weight_shape(&self) -> Shape {
        if self.transposed {
            Shape::new(self.in_c, self.out_c, self.k, self.k)
        } else {
            Shape::new(self.out_c, self.in_c, self.k, self.k)
        }
    }

    fn bias_shape(&self) -> Shape {
        Shape::new(1, self.out_c, 1, 1)
    }
}

/// All learnable tensors. One encoder is shared by the three input frames.
#[derive(Debug, Clone)]
pub struct ModelParams<S> {
    /// Non-scaling entry block, 1 -> c0.
    pub stem: ConvLayer<S>,
    /// Scaling-stage convs, c_{j-1} -> c_j (max pool follows each).
    pub enc: Vec<ConvLayer<S>>,
    /// Per-stage skip taps: 1x1 conv of the pooled stage input, c_{j-1} -> c_j.
    pub skip: Vec<ConvLayer<S>>,
    /// Bottleneck convs over the concatenated three-frame features.
    pub fuse1: ConvLayer<S>,
    pub fuse2: ConvLayer<S>,
    /// Per-level skip combiners merging the three frames' skips, 3c_j -> c_j.
    pub comb: Vec<ConvLayer<S>>,
    /// Decoder upsamplers in application order (deepest level first),
    /// 2c_j -> c_{j-1}.
    pub dec_up: Vec<ConvLayer<S>>,
    /// Decoder convs after each upsample, c_{j-1} -> c_{j-1}.
    pub dec_conv: Vec<ConvLayer<S>>,
    /// Non-scaling output block, c0 -> 1, linear.
    pub head: ConvLayer<S>,
}

impl<S: Scalar> ModelParams<S> {
    /// Zero-filled parameters with the shapes implied by `config`.
    pub fn shaped(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let ch = config.channel_schedule();
        let s = config.spatial_stages;
        let top = ch[s];
        Ok(ModelParams {
            stem: ConvLayer::zeroed(1, ch[0], 3, false),
            enc: (1..=s).map(|j| ConvLayer::zeroed(ch[j - 1], ch[j], 3, false)).collect(),
            skip: (1..=s).map(|j| ConvLayer::zeroed(ch[j - 1], ch[j], 1, false)).collect(),
            fuse1: ConvLayer::zeroed(3 * top, top, 3, false),
            fuse2: ConvLayer::zeroed(top, top, 3, false),
            comb: (1..=s).map(|j| ConvLayer::zeroed(3 * ch[j], ch[j], 1, false)).collect(),
            dec_up: (1..=s).rev().map(|j| ConvLayer::zeroed(2 * ch[j], ch[j - 1], 2, true)).collect(),
            dec_conv: (1..=s).rev().map(|j| ConvLayer::zeroed(ch[j - 1], ch[j - 1], 3, false)).collect(),
            head: ConvLayer::zeroed(ch[0], 1, 3, false),
        })
    }

    /// Layers in canonical (checkpoint) order.
    pub fn layers(&self) -> Vec<&ConvLayer<S>> {
        let mut out = Vec::new();
        out.push(&self.stem);
        out.extend(self.enc.iter());
        out.extend(self.skip.iter());
        out.push(&self.fuse1);
        out.push(&self.fuse2);
        out.extend(self.comb.iter());
        for i in 0..self.dec_up.len() {
            out.push(&self.dec_up[i]);
            out.push(&self.dec_conv[i]);
        }
        out.push(&self.head);
        out
    }

    pub fn layers_mut(&mut self) -> Vec<&mut ConvLayer<S>> {
        let mut out: Vec<&mut ConvLayer<S>> = Vec::new();
        out.push(&mut self.stem);
        out.extend(self.enc.iter_mut());
        out.extend(self.skip.iter_mut());
        out.push(&mut self.fuse1);
        out.push(&mut self.fuse2);
        out.extend(self.comb.iter_mut());
        for (up, conv) in self.dec_up.iter_mut().zip(self.dec_conv.iter_mut()) {
            out.push(up);
            out.push(conv);
        }
        out.push(&mut self.head);
        out
    }

    pub fn total_scalars(&self) -> usize {
        self.layers().iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

/// Fan-in-scaled normal initialization (std = sqrt(2/fan_in)), zero biases,
/// drawn from a per-layer derived stream so the result depends only on
/// `(config, seed)`.
pub fn init_model<S: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<S>> {
    let mut params = ModelParams::<S>::shaped(config)?;
    for (index, layer) in params.layers_mut().into_iter().enumerate() {
        let fan_in = layer.in_c * layer.k * layer.k;
        let std = (2.0 / fan_in as f64).sqrt();
        let mut sampler =
            NormalSampler::new(rng::stream_rng(seed, &[stream::MODEL_INIT, index as u64]));
        for w in &mut layer.w {
            *w = S::from_f64(sampler.next() * std);
        }
        // biases stay zero
    }
    Ok(params)
}

/// Tape handles for one staged copy of the parameters, in canonical order.
pub struct StagedParams {
    pub ids: Vec<(TensorId, TensorId)>,
}

/// Copy every parameter onto the tape as leaves.
pub fn stage_params<S: Scalar>(tape: &mut Tape<S>, params: &ModelParams<S>) -> StagedParams {
    let ids = params
        .layers()
        .into_iter()
        .map(|l| {
            let w = tape.leaf(l.weight_shape(), l.w.clone());
            let b = tape.leaf(l.bias_shape(), l.b.clone());
            (w, b)
        })
        .collect();
    StagedParams { ids }
}

/// Named view into [`StagedParams`] following the canonical order.
struct StagedView {
    stem: (TensorId, TensorId),
    enc: Vec<(TensorId, TensorId)>,
    skip: Vec<(TensorId, TensorId)>,
    fuse1: (TensorId, TensorId),
    fuse2: (TensorId, TensorId),
    comb: Vec<(TensorId, TensorId)>,
    dec: Vec<((TensorId, TensorId), (TensorId, TensorId))>,
    head: (TensorId, TensorId),
}

fn staged_view(staged: &StagedParams, stages: usize) -> StagedView {
    let ids = &staged.ids;
    let mut i = 0;
    let mut next = || {
        let v = ids[i];
        i += 1;
        v
    };
    let stem = next();
    let enc: Vec<_> = (0..stages).map(|_| next()).collect();
    let skip: Vec<_> = (0..stages).map(|_| next()).collect();
    let fuse1 = next();
    let fuse2 = next();
    let comb: Vec<_> = (0..stages).map(|_| next()).collect();
    let dec: Vec<_> = (0..stages).map(|_| (next(), next())).collect();
    let head = next();
    debug_assert_eq!(i, ids.len());
    StagedView { stem, enc, skip, fuse1, fuse2, comb, dec, head }
}

/// Encoder over one staged input: returns bottleneck-resolution features and
/// the per-level skip tensors (level 1 first).
fn encode_staged<S: Scalar>(
    tape: &mut Tape<S>,
    view: &StagedView,
    x: TensorId,
) -> Result<(TensorId, Vec<TensorId>)> {
    let c = tape.conv2d(x, view.stem.0, view.stem.1, 1)?;
    let mut cur = tape.relu(c);
    let mut skips = Vec::with_capacity(view.enc.len());
    for (enc, skip) in view.enc.iter().zip(&view.skip) {
        let stage_in = cur;
        let c = tape.conv2d(stage_in, enc.0, enc.1, 1)?;
        let r = tape.relu(c);
        cur = tape.maxpool2(r)?;
        let pooled = tape.maxpool2(stage_in)?;
        skips.push(tape.conv2d(pooled, skip.0, skip.1, 0)?);
    }
    Ok((cur, skips))
}

/// Full staged forward pass over three input tensors `(current, t-T, t-2T)`,
/// each `(batch, 1, H, W)`. Returns the raw (unclamped) prediction.
pub fn forward_staged<S: Scalar>(
    tape: &mut Tape<S>,
    staged: &StagedParams,
    config: &ModelConfig,
    inputs: [TensorId; 3],
) -> Result<TensorId> {
    let view = staged_view(staged, config.spatial_stages);
    let (f_cur, s_cur) = encode_staged(tape, &view, inputs[0])?;
    let (f_past, s_past) = encode_staged(tape, &view, inputs[1])?;
    let (f_past2, s_past2) = encode_staged(tape, &view, inputs[2])?;

    // temporal bottleneck over the concatenated appearance features
    let cat = tape.concat_channels(&[f_cur, f_past, f_past2])?;
    let z1 = tape.conv2d(cat, view.fuse1.0, view.fuse1.1, 1)?;
    let z1 = tape.relu(z1);
    let z2 = tape.conv2d(z1, view.fuse2.0, view.fuse2.1, 1)?;
    let mut d = tape.relu(z2);

    // per-level combiners merge the three frames' skips (current first)
    let mut fused_skips = Vec::with_capacity(view.comb.len());
    for (level, comb) in view.comb.iter().enumerate() {
        let cat = tape.concat_channels(&[s_cur[level], s_past[level], s_past2[level]])?;
        fused_skips.push(tape.conv2d(cat, comb.0, comb.1, 0)?);
    }

    // decoder: deepest level first
    for (i, (up, conv)) in view.dec.iter().enumerate() {
        let level = view.comb.len() - 1 - i;
        let with_skip = tape.concat_channels(&[d, fused_skips[level]])?;
        let u = tape.conv_transpose2d(with_skip, up.0, up.1)?;
        let u = tape.relu(u);
        let c = tape.conv2d(u, conv.0, conv.1, 1)?;
        d = tape.relu(c);
    }
    tape.conv2d(d, view.head.0, view.head.1, 1)
}

/// Pack frames into a `(len, 1, H, W)` leaf.
pub fn frames_to_leaf<S: Scalar>(tape: &mut Tape<S>, frames: &[&Frame]) -> TensorId {
    let (h, w) = (frames[0].height(), frames[0].width());
    let mut data = Vec::with_capacity(frames.len() * h * w);
    for f in frames {
        data.extend(f.data().iter().map(|&v| S::from_f64(v)));
    }
    tape.leaf(Shape::new(frames.len(), 1, h, w), data)
}

/// Single-window inference: predict the reconstruction for `current` given
/// its two past frames. Applies the config's output clamp.
pub fn predict_frame<S: Scalar>(
    params: &ModelParams<S>,
    config: &ModelConfig,
    current: &Frame,
    past: &Frame,
    past2: &Frame,
) -> Result<Frame> {
    if !current.same_dims(past) || !current.same_dims(past2) {
        return Err(Error::Shape("predict_frame: input frames differ in size".into()));
    }
    config.check_input_dims(current.height(), current.width())?;
    let mut tape = Tape::new();
    let staged = stage_params(&mut tape, params);
    let xs = [
        frames_to_leaf(&mut tape, &[current]),
        frames_to_leaf(&mut tape, &[past]),
        frames_to_leaf(&mut tape, &[past2]),
    ];
    let pred = forward_staged(&mut tape, &staged, config, xs)?;
    let mut data: Vec<f64> = tape.value(pred).iter().map(|&v| v.as_f64()).collect();
    if config.clamp_output {
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
    }
    Frame::new(current.height(), current.width(), data)
}

/// A plain (off-tape) tensor value.
#[derive(Debug, Clone)]
pub struct FeatureMap<S> {
    pub shape: Shape,
    pub data: Vec<S>,
}

/// Run the shared encoder on one frame; returns bottleneck features and the
/// per-level skip maps.
pub fn encode<S: Scalar>(
    params: &ModelParams<S>,
    config: &ModelConfig,
    frame: &Frame,
) -> Result<(FeatureMap<S>, Vec<FeatureMap<S>>)> {
    config.check_input_dims(frame.height(), frame.width())?;
    let mut tape = Tape::new();
    let staged = stage_params(&mut tape, params);
    let view = staged_view(&staged, config.spatial_stages);
    let x = frames_to_leaf(&mut tape, &[frame]);
    let (features, skips) = encode_staged(&mut tape, &view, x)?;
    let grab = |tape: &Tape<S>, id: TensorId| FeatureMap {
        shape: tape.shape(id),
        data: tape.value(id).to_vec(),
    };
    let f = grab(&tape, features);
    let s = skips.iter().map(|&id| grab(&tape, id)).collect();
    Ok((f, s))
}

// --- checkpoint format ---------------------------------------------------

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SAVD";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model: config, bookkeeping, and all parameters.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: u64,
    pub seed: u64,
    pub params: ModelParams<f32>,
}

/// Serialize as a fixed-layout header plus little-endian IEEE-754 32-bit
/// parameter arrays in canonical layer order (weights then bias per layer).
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let total = ckpt.params.total_scalars() as u64;
    let mut bytes = Vec::with_capacity(64 + total as usize * 4);
    bytes.extend_from_slice(&CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let c = &ckpt.config;
    for v in [c.base_channels, c.max_channels, c.spatial_stages, c.stride_t] {
        bytes.extend_from_slice(&(v as u32).to_le_bytes());
    }
    bytes.push(c.clamp_output as u8);
    bytes.extend_from_slice(&ckpt.step.to_le_bytes());
    bytes.extend_from_slice(&ckpt.seed.to_le_bytes());
    bytes.extend_from_slice(&total.to_le_bytes());
    for layer in ckpt.params.layers() {
        for &v in layer.w.iter().chain(&layer.b) {
            bytes.write_all(&v.to_le_bytes())?;
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let fail = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 49 {
        return Err(fail("truncated header"));
    }
    if bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(fail("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != CHECKPOINT_VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let config = ModelConfig {
        base_channels: u32_at(8) as usize,
        max_channels: u32_at(12) as usize,
        spatial_stages: u32_at(16) as usize,
        stride_t: u32_at(20) as usize,
        clamp_output: bytes[24] != 0,
    };
    config.validate().map_err(|e| fail(&format!("invalid config: {e}")))?;
    let step = u64_at(25);
    let seed = u64_at(33);
    let total = u64_at(41) as usize;

    let mut params = ModelParams::<f32>::shaped(&config)?;
    if params.total_scalars() != total {
        return Err(fail(&format!(
            "parameter count {total} does not match config (expected {})",
            params.total_scalars()
        )));
    }
    let data = &bytes[49..];
    if data.len() != total * 4 {
        return Err(fail(&format!(
            "expected {} parameter bytes, found {}",
            total * 4,
            data.len()
        )));
    }
    let mut offset = 0;
    let mut read = |n: usize| {
        let slice = &data[offset..offset + n * 4];
        offset += n * 4;
        slice
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect::<Vec<f32>>()
    };
    for layer in params.layers_mut() {
        layer.w = read(layer.w.len());
        layer.b = read(layer.b.len());
    }
    Ok(Checkpoint { config, step, seed, params })
}
