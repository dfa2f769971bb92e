//! Finite-difference verification of every differentiable op and the full
//! network, in double precision.
//!
//! Each check builds a scalar loss, reads analytic gradients off the tape,
//! and compares them against central differences with step `h = 1e-5`.
//! Per-op tolerance is 1e-6 relative; the end-to-end network check allows
//! 1e-5. Inputs avoid ReLU kinks and max-pool ties by construction.

use rand::Rng;

use crate::autodiff::{Shape, Tape, TensorId};
use crate::clip::Frame;
use crate::error::Result;
use crate::model::{
    forward_staged, frames_to_leaf, init_model, stage_params, ModelConfig, ModelParams,
};
use crate::rng::{self, stream};

const FD_STEP: f64 = 1e-5;
const OP_RTOL: f64 = 1e-6;
const END_TO_END_RTOL: f64 = 1e-5;
const ATOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct OpReport {
    pub name: &'static str,
    pub worst_rel: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl std::fmt::Display for OpReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "op={} worst_rel={:.3e} tol={:.0e} {}",
            self.name,
            self.worst_rel,
            self.tolerance,
            if self.pass { "ok" } else { "FAIL" }
        )
    }
}

pub fn all_passed(reports: &[OpReport]) -> bool {
    reports.iter().all(|r| r.pass)
}

fn rand_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Worst relative error between analytic and numeric gradients, ignoring
/// pairs that agree within the absolute tolerance.
fn worst_rel(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let err = (a - n).abs();
            if err <= ATOL {
                0.0
            } else {
                err / a.abs().max(n.abs()).max(1e-12)
            }
        })
        .fold(0.0, f64::max)
}

/// Central finite differences of `f` over `data`.
fn central_diff(data: &mut Vec<f64>, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut grads = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let orig = data[i];
        data[i] = orig + FD_STEP;
        let fp = f(data);
        data[i] = orig - FD_STEP;
        let fm = f(data);
        data[i] = orig;
        grads.push((fp - fm) / (2.0 * FD_STEP));
    }
    grads
}

struct OpCase {
    name: &'static str,
    tolerance: f64,
    /// (analytic, numeric) per differentiated buffer
    buffers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl OpCase {
    fn report(&self, corrupt: bool) -> OpReport {
        let mut worst = 0.0f64;
        for (analytic, numeric) in &self.buffers {
            let mut analytic = analytic.clone();
            if corrupt && !analytic.is_empty() {
                analytic[0] += 1e-3;
            }
            worst = worst.max(worst_rel(&analytic, numeric));
        }
        OpReport {
            name: self.name,
            worst_rel: worst,
            tolerance: self.tolerance,
            pass: worst <= self.tolerance,
        }
    }
}

/// Compare analytic and FD gradients for `loss = build(inputs)`. The
/// builder returns the leaf id of every input buffer plus the loss id.
fn check_buffers(
    name: &'static str,
    tolerance: f64,
    inputs: Vec<Vec<f64>>,
    build: impl Fn(&mut Tape<f64>, &[Vec<f64>]) -> (Vec<TensorId>, TensorId),
) -> OpCase {
    let mut tape = Tape::<f64>::new();
    let (ids, loss) = build(&mut tape, &inputs);
    assert_eq!(ids.len(), inputs.len());
    tape.backward(loss).expect("backward");

    let mut buffers = Vec::new();
    let mut data = inputs.clone();
    for (i, &id) in ids.iter().enumerate() {
        let analytic = tape
            .grad(id)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        let numeric = central_diff(&mut data[i], |changed| {
            let mut probe = inputs.clone();
            probe[i] = changed.to_vec();
            let mut t = Tape::<f64>::new();
            let (_, l) = build(&mut t, &probe);
            t.value(l)[0]
        });
        buffers.push((analytic, numeric));
    }
    OpCase { name, tolerance, buffers }
}

fn conv_case(rng: &mut impl Rng) -> OpCase {
    let (n, ci, co, h, w) = (2, 3, 2, 5, 5);
    let inputs = vec![
        rand_vec(rng, n * ci * h * w, -1.0, 1.0),
        rand_vec(rng, co * ci * 9, -0.7, 0.7),
        rand_vec(rng, co, -0.3, 0.3),
        rand_vec(rng, n * co * h * w, -1.0, 1.0), // target
    ];
    check_buffers("conv2d", OP_RTOL, inputs, move |tape, data| {
        let x = tape.leaf(Shape::new(n, ci, h, w), data[0].clone());
        let wt = tape.leaf(Shape::new(co, ci, 3, 3), data[1].clone());
        let b = tape.leaf(Shape::new(1, co, 1, 1), data[2].clone());
        let t = tape.leaf(Shape::new(n, co, h, w), data[3].clone());
        let y = tape.conv2d(x, wt, b, 1).unwrap();
        (vec![x, wt, b, t], tape.mse_loss(y, t).unwrap())
    })
}

fn conv1x1_case(rng: &mut impl Rng) -> OpCase {
    let (n, ci, co, h, w) = (1, 4, 3, 4, 4);
    let inputs = vec![
        rand_vec(rng, n * ci * h * w, -1.0, 1.0),
        rand_vec(rng, co * ci, -0.7, 0.7),
        rand_vec(rng, co, -0.3, 0.3),
        rand_vec(rng, n * co * h * w, -1.0, 1.0),
    ];
    check_buffers("conv2d_1x1", OP_RTOL, inputs, move |tape, data| {
        let x = tape.leaf(Shape::new(n, ci, h, w), data[0].clone());
        let wt = tape.leaf(Shape::new(co, ci, 1, 1), data[1].clone());
        let b = tape.leaf(Shape::new(1, co, 1, 1), data[2].clone());
        let t = tape.leaf(Shape::new(n, co, h, w), data[3].clone());
        let y = tape.conv2d(x, wt, b, 0).unwrap();
        (vec![x, wt, b, t], tape.mse_loss(y, t).unwrap())
    })
}

fn conv_transpose_case(rng: &mut impl Rng) -> OpCase {
    let (n, ci, co, h, w) = (2, 3, 2, 3, 4);
    let inputs = vec![
        rand_vec(rng, n * ci * h * w, -1.0, 1.0),
        rand_vec(rng, ci * co * 4, -0.7, 0.7),
        rand_vec(rng, co, -0.3, 0.3),
        rand_vec(rng, n * co * h * w * 4, -1.0, 1.0),
    ];
    check_buffers("conv_transpose2d", OP_RTOL, inputs, move |tape, data| {
        let x = tape.leaf(Shape::new(n, ci, h, w), data[0].clone());
        let wt = tape.leaf(Shape::new(ci, co, 2, 2), data[1].clone());
        let b = tape.leaf(Shape::new(1, co, 1, 1), data[2].clone());
        let t = tape.leaf(Shape::new(n, co, h * 2, w * 2), data[3].clone());
        let y = tape.conv_transpose2d(x, wt, b).unwrap();
        (vec![x, wt, b, t], tape.mse_loss(y, t).unwrap())
    })
}

fn maxpool_case(rng: &mut impl Rng) -> OpCase {
    let (n, c, h, w) = (2, 2, 4, 4);
    // spread values so no two window entries sit within the FD step
    let mut x = rand_vec(rng, n * c * h * w, 0.0, 1.0);
    for (i, v) in x.iter_mut().enumerate() {
        *v = (*v * 50.0).round() / 50.0 + (i % 4) as f64 * 1e-3 + (i / 4 % 2) as f64 * 2e-3;
    }
    let inputs = vec![x, rand_vec(rng, n * c * h * w / 4, -1.0, 1.0)];
    check_buffers("maxpool2d", OP_RTOL, inputs, move |tape, data| {
        let x = tape.leaf(Shape::new(n, c, h, w), data[0].clone());
        let t = tape.leaf(Shape::new(n, c, h / 2, w / 2), data[1].clone());
        let y = tape.maxpool2(x).unwrap();
        (vec![x, t], tape.mse_loss(y, t).unwrap())
    })
}

fn relu_case(rng: &mut impl Rng) -> OpCase {
    // keep inputs clear of the kink at zero
    let x: Vec<f64> = (0..64)
        .map(|_| {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.05..1.0)
        })
        .collect();
    let inputs = vec![x, rand_vec(rng, 64, -1.0, 1.0)];
    check_buffers("relu", OP_RTOL, inputs, |tape, data| {
        let x = tape.leaf(Shape::new(1, 4, 4, 4), data[0].clone());
        let t = tape.leaf(Shape::new(1, 4, 4, 4), data[1].clone());
        let y = tape.relu(x);
        (vec![x, t], tape.mse_loss(y, t).unwrap())
    })
}

fn concat_case(rng: &mut impl Rng) -> OpCase {
    let inputs = vec![
        rand_vec(rng, 2 * 2 * 9, -1.0, 1.0),
        rand_vec(rng, 2 * 3 * 9, -1.0, 1.0),
        rand_vec(rng, 2 * 9, -1.0, 1.0),
        rand_vec(rng, 2 * 6 * 9, -1.0, 1.0),
    ];
    check_buffers("concat_channels", OP_RTOL, inputs, |tape, data| {
        let a = tape.leaf(Shape::new(2, 2, 3, 3), data[0].clone());
        let b = tape.leaf(Shape::new(2, 3, 3, 3), data[1].clone());
        let c = tape.leaf(Shape::new(2, 1, 3, 3), data[2].clone());
        let t = tape.leaf(Shape::new(2, 6, 3, 3), data[3].clone());
        let y = tape.concat_channels(&[a, b, c]).unwrap();
        (vec![a, b, c, t], tape.mse_loss(y, t).unwrap())
    })
}

fn mse_case(rng: &mut impl Rng) -> OpCase {
    let inputs = vec![rand_vec(rng, 32, -1.0, 1.0), rand_vec(rng, 32, -1.0, 1.0)];
    check_buffers("mse_loss", OP_RTOL, inputs, |tape, data| {
        let a = tape.leaf(Shape::new(1, 2, 4, 4), data[0].clone());
        let b = tape.leaf(Shape::new(1, 2, 4, 4), data[1].clone());
        (vec![a, b], tape.mse_loss(a, b).unwrap())
    })
}

/// End-to-end check on the small model: analytic gradients of every
/// parameter and the three input frames vs central differences.
fn end_to_end_case(seed: u64) -> OpCase {
    let config = ModelConfig {
        base_channels: 2,
        max_channels: 64,
        spatial_stages: 2,
        stride_t: 1,
        clamp_output: false,
    };
    let params: ModelParams<f64> = init_model(&config, seed).expect("init");
    let mut rng = rng::stream_rng(seed, &[stream::GRADCHECK, 1]);
    let mut frame = || {
        let data = (0..64).map(|_| rng.gen_range(0.1..0.9)).collect();
        Frame::new(8, 8, data).unwrap()
    };
    let frames = [frame(), frame(), frame()];
    let target: Vec<f64> = {
        let mut rng = rng::stream_rng(seed, &[stream::GRADCHECK, 2]);
        rand_vec(&mut rng, 64, 0.0, 1.0)
    };

    let loss_of = |params: &ModelParams<f64>, frames: &[Frame; 3], target: &[f64]| -> f64 {
        let mut tape = Tape::<f64>::new();
        let staged = stage_params(&mut tape, params);
        let xs = [
            frames_to_leaf(&mut tape, &[&frames[0]]),
            frames_to_leaf(&mut tape, &[&frames[1]]),
            frames_to_leaf(&mut tape, &[&frames[2]]),
        ];
        let pred = forward_staged(&mut tape, &staged, &config, xs).expect("forward");
        let t = tape.leaf(Shape::new(1, 1, 8, 8), target.to_vec());
        let loss = tape.mse_loss(pred, t).expect("loss");
        tape.value(loss)[0]
    };

    // analytic pass
    let mut tape = Tape::<f64>::new();
    let staged = stage_params(&mut tape, &params);
    let xs = [
        frames_to_leaf(&mut tape, &[&frames[0]]),
        frames_to_leaf(&mut tape, &[&frames[1]]),
        frames_to_leaf(&mut tape, &[&frames[2]]),
    ];
    let pred = forward_staged(&mut tape, &staged, &config, xs).expect("forward");
    let t = tape.leaf(Shape::new(1, 1, 8, 8), target.clone());
    let loss = tape.mse_loss(pred, t).expect("loss");
    tape.backward(loss).expect("backward");

    let mut buffers = Vec::new();
    for (li, &(wid, bid)) in staged.ids.iter().enumerate() {
        for (is_bias, id) in [(false, wid), (true, bid)] {
            let analytic = tape.grad(id).expect("param grad").to_vec();
            let mut probe = params.clone();
            let mut data = {
                let layer = probe.layers()[li];
                if is_bias {
                    layer.b.clone()
                } else {
                    layer.w.clone()
                }
            };
            let numeric = central_diff(&mut data, |changed| {
                {
                    let layer = probe.layers_mut().into_iter().nth(li).unwrap();
                    if is_bias {
                        layer.b.copy_from_slice(changed);
                    } else {
                        layer.w.copy_from_slice(changed);
                    }
                }
                loss_of(&probe, &frames, &target)
            });
            buffers.push((analytic, numeric));
        }
    }
    for (fi, x) in xs.iter().enumerate() {
        let analytic = tape.grad(*x).expect("input grad").to_vec();
        let mut data = frames[fi].data().to_vec();
        let numeric = central_diff(&mut data, |changed| {
            let mut probe_frames = frames.clone();
            probe_frames[fi] = Frame::new(8, 8, changed.to_vec()).unwrap();
            loss_of(&params, &probe_frames, &target)
        });
        buffers.push((analytic, numeric));
    }

    OpCase { name: "end_to_end", tolerance: END_TO_END_RTOL, buffers }
}

/// Run the whole suite. `corrupt` deliberately perturbs one analytic
/// gradient per op so the failure path stays testable.
pub fn run_suite(seed: u64, corrupt: bool) -> Vec<OpReport> {
    let mut rng = rng::stream_rng(seed, &[stream::GRADCHECK, 0]);
    let cases = vec![
        conv_case(&mut rng),
        conv1x1_case(&mut rng),
        conv_transpose_case(&mut rng),
        maxpool_case(&mut rng),
        relu_case(&mut rng),
        concat_case(&mut rng),
        mse_case(&mut rng),
        end_to_end_case(seed),
    ];
    cases.iter().map(|c| c.report(corrupt)).collect()
}

/// CLI wrapper: prints one line per op, returns overall pass.
pub fn run_and_print(seed: u64, corrupt: bool) -> Result<bool> {
    let reports = run_suite(seed, corrupt);
    for r in &reports {
        println!("{r}");
    }
    Ok(all_passed(&reports))
}
