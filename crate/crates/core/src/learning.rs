//! Dictionary learning: gradient descent on kernels between solves.
//!
//! Training alternates inference and dictionary updates. Each input gets a
//! full network solve; every active layer then receives the gradient of its
//! own reconstruction error — the correlation of its final residual with
//! its final activations — and its kernels are renormalized to unit length.
//! Updates can be batched over several inputs. The whole loop is a pure
//! function of the schedule seed: shuffling uses a dedicated rng stream and
//! gradients accumulate in fixed input order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::conv::KernelStack;
use crate::error::{DscError, DscResult};
use crate::hierarchy::{final_layer_inputs, solve_network, LayerGraph, NetworkInput};
use crate::tensor::Tensor;

/// How long and how hard to train.
///
/// A zero learning rate is allowed: the loop then degenerates to a metrics
/// pass that leaves every kernel untouched, which is the cheapest way to
/// measure a dictionary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Inputs per dictionary update; gradients are averaged over the batch.
    pub update_every: usize,
    pub seed: u64,
}

impl TrainSchedule {
    pub fn validate(&self) -> DscResult<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(DscError::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.update_every == 0 {
            return Err(DscError::Config(
                "update_every must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// One metrics row per (input, active layer) visit during training.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    /// Index of the input in the dataset (not the shuffled visit order).
    pub input_index: usize,
    pub layer: String,
    pub recon_energy: f64,
    pub sparsity_fraction: f64,
}

/// Renders metrics in the export format, one row per layer visit.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("epoch,input_index,layer,recon_energy,sparsity_fraction\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.input_index, r.layer, r.recon_energy, r.sparsity_fraction
        ));
    }
    out
}

/// Gradient of `0.5 * ||x - conv_transpose(a)||^2` with respect to the
/// kernels, holding `a` fixed:
///
/// `grad[f, c, ky, kx] = -sum over (oy, ox) of
/// a[f, oy, ox] * residual[c, oy*sh - pad_h + ky, ox*sw - pad_w + kx]`
///
/// i.e. each kernel accumulates the residual patches under its feature's
/// activations. Each kernel block is owned by one task and sums in fixed
/// `(oy, ox)` order, so results are bitwise deterministic.
pub fn dictionary_gradient(x: &Tensor, a: &Tensor, stack: &KernelStack) -> DscResult<Tensor> {
    let expected = stack.output_shape(x.shape())?;
    if expected != a.shape() {
        return Err(DscError::Geometry(format!(
            "activations {:?} do not match feature-map shape {:?} for input {:?}",
            a.shape(),
            expected,
            x.shape()
        )));
    }
    let residual = x.sub(&stack.conv_transpose(a)?)?;
    let (c_n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kh, kw) = stack.kernel_size();
    let (sh, sw) = stack.stride();
    let (pad_h, pad_w) = stack.pad();
    let (oh, ow) = (a.shape()[1], a.shape()[2]);

    let ad = a.data();
    let rd = residual.data();
    let mut grad = Tensor::zeros(stack.kernels().shape());
    grad.data_mut()
        .par_chunks_mut(c_n * kh * kw)
        .enumerate()
        .for_each(|(f, block)| {
            let af = &ad[f * oh * ow..(f + 1) * oh * ow];
            for c in 0..c_n {
                let rc = &rd[c * h * w..(c + 1) * h * w];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let y = (oy * sh + ky) as isize - pad_h as isize;
                            if y < 0 || y as usize >= h {
                                continue;
                            }
                            let row = &rc[y as usize * w..(y as usize + 1) * w];
                            let arow = &af[oy * ow..(oy + 1) * ow];
                            for ox in 0..ow {
                                let xcol = (ox * sw + kx) as isize - pad_w as isize;
                                if xcol < 0 || xcol as usize >= w {
                                    continue;
                                }
                                acc += arow[ox] * row[xcol as usize];
                            }
                        }
                        block[c * kh * kw + ky * kw + kx] = -acc;
                    }
                }
            }
        });
    Ok(grad)
}

/// Descends the kernels along `gradient` and renormalizes each to unit
/// length. An exactly zero step (zero gradient or zero rate) leaves the
/// kernels bitwise untouched rather than re-dividing by a norm of one.
pub fn apply_update(
    stack: &mut KernelStack,
    gradient: &Tensor,
    learning_rate: f64,
) -> DscResult<()> {
    if gradient.shape() != stack.kernels().shape() {
        return Err(DscError::Geometry(format!(
            "gradient shape {:?} does not match kernels {:?}",
            gradient.shape(),
            stack.kernels().shape()
        )));
    }
    if learning_rate == 0.0 || gradient.data().iter().all(|&g| learning_rate * g == 0.0) {
        return Ok(());
    }
    stack.kernels_mut().add_scaled(gradient, -learning_rate)?;
    stack.normalize_kernels()
}

/// Per-layer gradient accumulator for one mini-batch.
struct BatchAccumulator {
    /// `sums[layer][parent slot]`, zero until the first contribution.
    sums: Vec<Vec<Tensor>>,
    count: usize,
}

impl BatchAccumulator {
    fn new(graph: &LayerGraph) -> BatchAccumulator {
        let sums = graph
            .layers()
            .iter()
            .map(|l| {
                l.stacks()
                    .iter()
                    .map(|s| Tensor::zeros(s.kernels().shape()))
                    .collect()
            })
            .collect();
        BatchAccumulator { sums, count: 0 }
    }

    fn flush(&mut self, graph: &mut LayerGraph, learning_rate: f64) -> DscResult<()> {
        if self.count == 0 {
            return Ok(());
        }
        let rate = learning_rate / self.count as f64;
        for (idx, slots) in self.sums.iter_mut().enumerate() {
            for (slot, sum) in slots.iter_mut().enumerate() {
                apply_update(&mut graph.layer_mut(idx).stacks_mut()[slot], sum, rate)?;
                *sum = Tensor::zeros(sum.shape());
            }
        }
        self.count = 0;
        Ok(())
    }
}

/// Runs `schedule.epochs` passes over `inputs`, interleaving inference and
/// dictionary updates, and returns the per-visit metrics log. Layers train
/// simultaneously, each against the reconstruction target it saw at the
/// end of its solve. Divergence aborts with the epoch and input attached.
pub fn train(
    graph: &mut LayerGraph,
    inputs: &[NetworkInput],
    schedule: &TrainSchedule,
) -> DscResult<Vec<MetricsRow>> {
    schedule.validate()?;
    if inputs.is_empty() {
        return Err(DscError::Precondition(
            "training needs at least one input".to_string(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(schedule.seed);
    rng.set_stream(1);

    let mut rows = Vec::new();
    let mut batch = BatchAccumulator::new(graph);
    for epoch in 0..schedule.epochs {
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.shuffle(&mut rng);
        for &input_index in &order {
            let input = &inputs[input_index];
            let net = solve_network(graph, input).map_err(|e| match e {
                DscError::NumericDivergence { layer, iteration } => {
                    DscError::NumericDivergence {
                        layer: format!("{} (epoch {}, input {})", layer, epoch, input_index),
                        iteration,
                    }
                }
                other => other,
            })?;
            for (idx, layer) in graph.layers().iter().enumerate() {
                if !net.is_active(layer.name())? {
                    continue;
                }
                let targets = final_layer_inputs(graph, input, &net, layer.name())?;
                let a = net.state(layer.name())?.a();
                for (slot, target) in targets.iter().enumerate() {
                    let g = dictionary_gradient(target.x, a, target.stack)?;
                    batch.sums[idx][slot].add_scaled(&g, target.scale)?;
                }
                let trace_end = net
                    .trace(layer.name())?
                    .last()
                    .expect("active layers always trace");
                rows.push(MetricsRow {
                    epoch,
                    input_index,
                    layer: layer.name().to_string(),
                    recon_energy: trace_end.reconstruction,
                    sparsity_fraction: a.nonzero_fraction(),
                });
            }
            batch.count += 1;
            if batch.count == schedule.update_every {
                batch.flush(graph, schedule.learning_rate)?;
            }
        }
        // A partial batch never leaks across the epoch boundary.
        batch.flush(graph, schedule.learning_rate)?;
    }
    Ok(rows)
}
