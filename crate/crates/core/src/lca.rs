//! Single-layer sparse-coding dynamics.
//!
//! Each layer is a population of leaky integrator units. A unit's membrane
//! potential `u` is driven by the correlation of its kernel with the
//! layer's reconstruction residual; the visible activation is `a =
//! threshold(u)`. Writing the update in residual form,
//!
//! `u <- u + dt_over_tau * (-u + conv_forward(x - conv_transpose(a)) + a - r)`
//!
//! folds the lateral inhibition between overlapping kernels into a single
//! reconstruction pass, so the pairwise interaction matrix is never
//! materialized. The `+ a` term removes each unit's inhibition of itself;
//! `r` is an optional top-down residual injected as inhibitory drive.
//!
//! A layer can reconstruct several parent signals through one shared
//! activation map (one kernel stack per parent); the drive is then the
//! weighted sum of the per-parent residual correlations, still with a
//! single self-interaction correction.

use crate::conv::KernelStack;
use crate::error::{DscError, DscResult};
use crate::tensor::Tensor;

/// Which transfer function maps membrane potentials to activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdKind {
    /// Shrink toward zero by lambda (the default; pairs with the l1 cost).
    Soft,
    /// Pass the membrane through unchanged where it exceeds lambda.
    Hard,
}

/// Solver settings for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LcaParams {
    /// Threshold strength; also weights the sparsity term of the energy.
    pub lambda: f64,
    /// Integration step in units of the membrane time constant, in (0, 1].
    pub dt_over_tau: f64,
    pub n_iterations: usize,
    /// Rectified activations: negative membrane never activates.
    pub nonnegative: bool,
    pub threshold: ThresholdKind,
}

impl LcaParams {
    pub fn new(
        lambda: f64,
        dt_over_tau: f64,
        n_iterations: usize,
        nonnegative: bool,
    ) -> DscResult<LcaParams> {
        let p = LcaParams {
            lambda,
            dt_over_tau,
            n_iterations,
            nonnegative,
            threshold: ThresholdKind::Soft,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> DscResult<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(DscError::Precondition(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.dt_over_tau > 0.0 && self.dt_over_tau <= 1.0) {
            return Err(DscError::Precondition(format!(
                "dt_over_tau must lie in (0, 1], got {}",
                self.dt_over_tau
            )));
        }
        if self.n_iterations == 0 {
            return Err(DscError::Precondition(
                "n_iterations must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Applies the transfer function elementwise.
///
/// Soft mode: `sign(u) * max(|u| - lambda, 0)`; nonnegative soft:
/// `max(u - lambda, 0)`. Hard mode keeps the membrane value wherever it
/// exceeds the threshold instead of shrinking it.
pub fn threshold_with(u: &Tensor, lambda: f64, kind: ThresholdKind, nonnegative: bool) -> Tensor {
    let mut out = u.clone();
    for v in out.data_mut() {
        *v = match (kind, nonnegative) {
            (ThresholdKind::Soft, false) => v.signum() * (v.abs() - lambda).max(0.0),
            (ThresholdKind::Soft, true) => (*v - lambda).max(0.0),
            (ThresholdKind::Hard, false) => {
                if v.abs() > lambda {
                    *v
                } else {
                    0.0
                }
            }
            (ThresholdKind::Hard, true) => {
                if *v > lambda {
                    *v
                } else {
                    0.0
                }
            }
        };
    }
    out
}

/// Soft threshold, the default transfer function.
pub fn threshold(u: &Tensor, lambda: f64, nonnegative: bool) -> Tensor {
    threshold_with(u, lambda, ThresholdKind::Soft, nonnegative)
}

/// Membrane potentials and the activations derived from them.
///
/// The two fields never desynchronize: every constructor and step computes
/// `a` from `u` through the layer's transfer function.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    u: Tensor,
    a: Tensor,
}

impl LayerState {
    pub fn zeros(shape: &[usize]) -> LayerState {
        LayerState {
            u: Tensor::zeros(shape),
            a: Tensor::zeros(shape),
        }
    }

    pub fn from_membrane(u: Tensor, p: &LcaParams) -> LayerState {
        let a = threshold_with(&u, p.lambda, p.threshold, p.nonnegative);
        LayerState { u, a }
    }

    pub fn u(&self) -> &Tensor {
        &self.u
    }

    pub fn a(&self) -> &Tensor {
        &self.a
    }
}

/// One parent signal a layer reconstructs, with its drive weight.
#[derive(Clone, Copy)]
pub struct BranchInput<'a> {
    pub x: &'a Tensor,
    pub stack: &'a KernelStack,
    pub scale: f64,
}

/// One point of an energy trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyPoint {
    /// Weighted reconstruction error, `sum over parents of scale * 0.5 *
    /// ||x - conv_transpose(a)||^2`.
    pub reconstruction: f64,
    /// Sparsity cost `lambda * ||a||_1`.
    pub sparsity: f64,
}

impl EnergyPoint {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.sparsity
    }
}

/// Renders a trace in the export format: one row per iteration.
pub fn energy_trace_csv(trace: &[EnergyPoint]) -> String {
    let mut out = String::from("iteration,reconstruction_term,sparsity_term,total\n");
    for (i, e) in trace.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i,
            e.reconstruction,
            e.sparsity,
            e.total()
        ));
    }
    out
}

/// Sparse-coding energy of `a` against one parent signal.
pub fn energy(x: &Tensor, stack: &KernelStack, a: &Tensor, lambda: f64) -> DscResult<EnergyPoint> {
    energy_multi(&[BranchInput { x, stack, scale: 1.0 }], a, lambda)
}

/// Energy of one shared activation map against several parent signals.
pub fn energy_multi(inputs: &[BranchInput], a: &Tensor, lambda: f64) -> DscResult<EnergyPoint> {
    let mut reconstruction = 0.0;
    for b in inputs {
        let residual = b.x.sub(&b.stack.conv_transpose(a)?)?;
        reconstruction += b.scale * 0.5 * residual.dot(&residual)?;
    }
    Ok(EnergyPoint {
        reconstruction,
        sparsity: lambda * a.l1_norm(),
    })
}

/// Weighted residual correlation plus self-interaction correction, and the
/// reconstruction energy of `a` computed from the same residuals.
fn residual_drive(a: &Tensor, inputs: &[BranchInput]) -> DscResult<(Tensor, f64)> {
    if inputs.is_empty() {
        return Err(DscError::Precondition(
            "a layer update needs at least one parent input".to_string(),
        ));
    }
    let mut drive = Tensor::zeros(a.shape());
    let mut reconstruction = 0.0;
    for b in inputs {
        let expected = b.stack.output_shape(b.x.shape())?;
        if expected != a.shape() {
            return Err(DscError::Geometry(format!(
                "activations {:?} do not match feature-map shape {:?} for input {:?}",
                a.shape(),
                expected,
                b.x.shape()
            )));
        }
        let residual = b.x.sub(&b.stack.conv_transpose(a)?)?;
        reconstruction += b.scale * 0.5 * residual.dot(&residual)?;
        drive.add_scaled(&b.stack.conv_forward(&residual)?, b.scale)?;
    }
    drive.add_scaled(a, 1.0)?;
    Ok((drive, reconstruction))
}

/// Result of one step: the new state, plus the energy of the state the
/// step consumed, measured against this step's inputs. Solvers collect
/// these into a trace without recomputing any reconstruction.
pub struct StepOutcome {
    pub state: LayerState,
    pub energy_of_previous: EnergyPoint,
}

/// One leaky-integrator step against a single parent signal.
pub fn lca_step(
    state: &LayerState,
    x: &Tensor,
    stack: &KernelStack,
    feedback: Option<&Tensor>,
    p: &LcaParams,
    layer: &str,
    iteration: usize,
) -> DscResult<StepOutcome> {
    lca_step_multi(
        state,
        &[BranchInput { x, stack, scale: 1.0 }],
        feedback,
        p,
        layer,
        iteration,
    )
}

/// One leaky-integrator step of a shared activation map against all of its
/// parent signals.
///
/// The membrane update is computed as
/// `u' = (1 - dt_over_tau) * u + dt_over_tau * (drive - r)`,
/// so with zero drive and no feedback the membrane decays geometrically by
/// exactly `(1 - dt_over_tau)` per step.
pub fn lca_step_multi(
    state: &LayerState,
    inputs: &[BranchInput],
    feedback: Option<&Tensor>,
    p: &LcaParams,
    layer: &str,
    iteration: usize,
) -> DscResult<StepOutcome> {
    let (drive, reconstruction) = residual_drive(&state.a, inputs)?;
    let energy_of_previous = EnergyPoint {
        reconstruction,
        sparsity: p.lambda * state.a.l1_norm(),
    };

    if let Some(r) = feedback {
        if r.shape() != state.u.shape() {
            return Err(DscError::Geometry(format!(
                "feedback shape {:?} does not match membrane shape {:?}",
                r.shape(),
                state.u.shape()
            )));
        }
    }

    let keep = 1.0 - p.dt_over_tau;
    let dt = p.dt_over_tau;
    let mut u = Tensor::zeros(state.u.shape());
    match feedback {
        Some(r) => {
            for (((out, &u0), &d), &ri) in u
                .data_mut()
                .iter_mut()
                .zip(state.u.data())
                .zip(drive.data())
                .zip(r.data())
            {
                *out = keep * u0 + dt * (d - ri);
            }
        }
        None => {
            for ((out, &u0), &d) in u
                .data_mut()
                .iter_mut()
                .zip(state.u.data())
                .zip(drive.data())
            {
                *out = keep * u0 + dt * d;
            }
        }
    }

    if !u.all_finite() {
        return Err(DscError::NumericDivergence {
            layer: layer.to_string(),
            iteration,
        });
    }

    let a = threshold_with(&u, p.lambda, p.threshold, p.nonnegative);
    Ok(StepOutcome {
        state: LayerState { u, a },
        energy_of_previous,
    })
}

/// Sup norm of `u - (drive at the current activations)`; zero exactly at a
/// fixed point of the dynamics with no feedback.
pub fn fixed_point_residual_multi(state: &LayerState, inputs: &[BranchInput]) -> DscResult<f64> {
    let (drive, _) = residual_drive(&state.a, inputs)?;
    Ok(state.u.sub(&drive)?.max_abs())
}

/// Single-parent form of [`fixed_point_residual_multi`].
pub fn fixed_point_residual(state: &LayerState, x: &Tensor, stack: &KernelStack) -> DscResult<f64> {
    fixed_point_residual_multi(state, &[BranchInput { x, stack, scale: 1.0 }])
}

/// Runs the dynamics from a zero state against a fixed input.
///
/// The trace has `n_iterations + 1` entries: entry 0 is the energy of the
/// empty code (the all-zeros baseline), entry `k` the energy after `k`
/// steps.
pub fn solve_single_layer(
    x: &Tensor,
    stack: &KernelStack,
    p: &LcaParams,
    layer: &str,
) -> DscResult<(LayerState, Vec<EnergyPoint>)> {
    p.validate()?;
    let out_shape = stack.output_shape(x.shape())?;
    let mut state = LayerState::zeros(&out_shape);
    let mut trace = Vec::with_capacity(p.n_iterations + 1);
    for iteration in 1..=p.n_iterations {
        let outcome = lca_step(&state, x, stack, None, p, layer, iteration)?;
        trace.push(outcome.energy_of_previous);
        state = outcome.state;
    }
    trace.push(energy(x, stack, &state.a, p.lambda)?);
    Ok((state, trace))
}
