//! Self-supervised training over frame windows and full-clip inference.
//!
//! Each step draws a batch of valid windows, builds the reconstruction
//! target for every window center, runs the network on the three strided
//! input frames, and applies one Adam update on the mean-squared
//! reconstruction error. Shuffling, initialization, and every kernel are
//! seeded and order-fixed, so `(config, seed, data)` determine the final
//! checkpoint bytes.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::autodiff::{adam_step, Tape};
use crate::clip::{valid_windows, Clip, Frame, FrameWindow};
use crate::error::{Error, Result};
use crate::model::{
    frames_to_leaf, forward_staged, init_model, predict_frame, save_checkpoint, stage_params,
    Checkpoint, ModelConfig,
};
use crate::rng::{self, stream};
use crate::targets::{TargetContext, TargetKind};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub target: TargetKind,
    /// Apply the final `[0,1]` clamp to PFD-style targets (default on).
    pub clamp_target: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            target: TargetKind::Pfd { stride: 1, inverted: false },
            clamp_target: true,
            epochs: 30,
            batch_size: 4,
            learning_rate: 1e-3,
            seed: 0,
            model: ModelConfig::desk_scale(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        self.model.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Temporal stride of the training windows: PFD targets share theirs
    /// with the network input; everything else uses the model's.
    pub fn window_stride(&self) -> usize {
        match self.target {
            TargetKind::Pfd { stride, .. } => stride,
            _ => self.model.stride_t,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub checkpoint_path: PathBuf,
}

impl TrainReport {
    /// `epoch,loss,seconds` rows. Timing is wall clock and is the one part
    /// of a run that is not reproducible byte-for-byte.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,seconds\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:.8},{:.3}\n", e.epoch, e.loss, e.seconds));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// All valid windows over all clips, clip order first, then ascending `t`.
pub fn build_dataset(clips: &[Clip], stride: usize) -> Vec<(usize, FrameWindow)> {
    let mut out = Vec::new();
    for (clip_idx, clip) in clips.iter().enumerate() {
        for w in valid_windows(clip, stride) {
            out.push((clip_idx, w));
        }
    }
    out
}

/// Drop windows whose target needs frames outside the clip (wider sigma /
/// sum windows than the input stride provides).
fn filter_for_target(
    dataset: Vec<(usize, FrameWindow)>,
    clips: &[Clip],
    target: &TargetKind,
) -> Vec<(usize, FrameWindow)> {
    let (past, future) = target.reach();
    dataset
        .into_iter()
        .filter(|(ci, w)| {
            let t = w.center();
            t >= past && t + future < clips[*ci].len()
        })
        .collect()
}

struct AdamBuf {
    mw: Vec<f32>,
    vw: Vec<f32>,
    mb: Vec<f32>,
    vb: Vec<f32>,
}

/// Train a model from scratch on `clips`, saving the checkpoint after every
/// epoch (last kept) to `checkpoint_path`.
pub fn train(
    config: &TrainConfig,
    clips: &[Clip],
    checkpoint_path: &Path,
) -> Result<(Checkpoint, TrainReport)> {
    train_with_progress(config, clips, checkpoint_path, |_| {})
}

/// [`train`] with a per-epoch observer (the CLI prints progress lines).
pub fn train_with_progress(
    config: &TrainConfig,
    clips: &[Clip],
    checkpoint_path: &Path,
    mut progress: impl FnMut(&EpochStats),
) -> Result<(Checkpoint, TrainReport)> {
    config.validate()?;
    if clips.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (h, w) = (clips[0].height(), clips[0].width());
    for clip in clips {
        if clip.height() != h || clip.width() != w {
            return Err(Error::Shape("all training clips must share one frame size".into()));
        }
    }
    let stride = config.window_stride();
    let mut model_config = config.model;
    model_config.stride_t = stride;
    model_config.check_input_dims(h, w)?;

    let dataset = filter_for_target(build_dataset(clips, stride), clips, &config.target);
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut params = init_model::<f32>(&model_config, config.seed)?;
    let mut adam: Vec<AdamBuf> = params
        .layers()
        .iter()
        .map(|l| AdamBuf {
            mw: vec![0.0; l.w.len()],
            vw: vec![0.0; l.w.len()],
            mb: vec![0.0; l.b.len()],
            vb: vec![0.0; l.b.len()],
        })
        .collect();
    let contexts: Vec<TargetContext> = clips.iter().map(TargetContext::new).collect();

    let lr = config.learning_rate as f32;
    let (beta1, beta2, eps) = (0.9f32, 0.999f32, 1e-8f32);
    let mut step: u64 = 0;
    let mut report = TrainReport { epochs: Vec::new(), checkpoint_path: checkpoint_path.into() };

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        rng::shuffle(&mut order, &mut rng::stream_rng(config.seed, &[stream::SHUFFLE, epoch as u64]));

        let mut loss_sum = 0.0f64;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let mut current = Vec::with_capacity(batch.len());
            let mut past = Vec::with_capacity(batch.len());
            let mut past2 = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for &i in batch {
                let (clip_idx, window) = dataset[i];
                let clip = &clips[clip_idx];
                let [cur, p1, p2] = window.inputs(clip);
                current.push(cur);
                past.push(p1);
                past2.push(p2);
                targets.push(contexts[clip_idx].target(
                    window.center(),
                    &config.target,
                    config.clamp_target,
                )?);
            }

            let mut tape = Tape::<f32>::new();
            let staged = stage_params(&mut tape, &params);
            let xs = [
                frames_to_leaf(&mut tape, &current),
                frames_to_leaf(&mut tape, &past),
                frames_to_leaf(&mut tape, &past2),
            ];
            let pred = forward_staged(&mut tape, &staged, &model_config, xs)?;
            let target_refs: Vec<&Frame> = targets.iter().collect();
            let target_leaf = frames_to_leaf(&mut tape, &target_refs);
            let loss = tape.mse_loss(pred, target_leaf)?;
            let loss_value = tape.value(loss)[0] as f64;
            if !loss_value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
            }
            tape.backward(loss)?;

            step += 1;
            for ((layer, buf), &(wid, bid)) in
                params.layers_mut().into_iter().zip(&mut adam).zip(&staged.ids)
            {
                let gw = tape.grad(wid).expect("weight gradient");
                adam_step(&mut layer.w, gw, &mut buf.mw, &mut buf.vw, step, lr, beta1, beta2, eps)?;
                let gb = tape.grad(bid).expect("bias gradient");
                adam_step(&mut layer.b, gb, &mut buf.mb, &mut buf.vb, step, lr, beta1, beta2, eps)?;
            }
            loss_sum += loss_value * batch.len() as f64;
        }

        let stats = EpochStats {
            epoch,
            loss: loss_sum / dataset.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        };
        progress(&stats);
        report.epochs.push(stats);

        let ckpt =
            Checkpoint { config: model_config, step, seed: config.seed, params: params.clone() };
        save_checkpoint(&ckpt, checkpoint_path)?;
    }

    let ckpt = Checkpoint { config: model_config, step, seed: config.seed, params };
    Ok((ckpt, report))
}

/// Denoise every frame of a clip. Frames earlier than `2T` reuse the
/// earliest available frames (temporal edge replication), so the output has
/// one frame per input frame.
pub fn denoise_clip(checkpoint: &Checkpoint, clip: &Clip) -> Result<Clip> {
    let config = &checkpoint.config;
    config.check_input_dims(clip.height(), clip.width())?;
    let stride = config.stride_t;
    let mut frames = Vec::with_capacity(clip.len());
    for t in 0..clip.len() {
        let past = clip.frame(t.saturating_sub(stride));
        let past2 = clip.frame(t.saturating_sub(2 * stride));
        frames.push(predict_frame(&checkpoint.params, config, clip.frame(t), past, past2)?);
    }
    Clip::new(frames, clip.fps(), clip.source_id())
}
