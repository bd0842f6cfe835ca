//! Toy-scale fine-tuning: frozen miniature models, adapters, exact gradients
//! and a deterministic gradient-descent loop.

mod model;

pub use model::{
    backward, forward, loss, loss_and_grad, mse, AdapterSet, LayerKind, Slot, SlotAdapter, ToyModel,
};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::adapter::AdapterConfig;
use crate::error::{domain, Error, Result};

/// Synthetic regression task definition.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: LayerKind,
    pub d: usize,
    /// Hidden width of the FFN kind.
    pub d_ff: usize,
    /// Rows per input (tokens for attention; samples for linear/ffn).
    pub rows: usize,
    pub num_inputs: usize,
    /// Adapter family the target is planted from.
    pub teacher: AdapterConfig,
    /// Standard deviation of the planted parameters around identity.
    pub planted_scale: f64,
    /// Slots carrying adapters; `None` means the model's defaults.
    pub targets: Option<Vec<Slot>>,
}

impl TaskSpec {
    /// Linear model, 64 Gaussian samples, planted scale 0.3.
    pub fn linear(d: usize, teacher: AdapterConfig) -> Self {
        TaskSpec {
            kind: LayerKind::Linear,
            d,
            d_ff: d,
            rows: 64,
            num_inputs: 1,
            teacher,
            planted_scale: 0.3,
            targets: None,
        }
    }
}

/// A frozen model with inputs and targets produced by a planted adapter set,
/// so the training loss has infimum zero.
#[derive(Debug, Clone)]
pub struct Task {
    pub model: ToyModel,
    pub inputs: Vec<DMatrix<f64>>,
    pub targets: Vec<DMatrix<f64>>,
    pub planted: AdapterSet,
    pub slots: Vec<Slot>,
}

impl Task {
    /// Loss of the frozen model with no adaptation.
    pub fn baseline_loss(&self) -> Result<f64> {
        loss(&self.model, &AdapterSet::new(), &self.inputs, &self.targets)
    }
}

pub fn make_task(spec: &TaskSpec, seed: u64) -> Result<Task> {
    if spec.rows == 0 || spec.num_inputs == 0 {
        return domain("task needs at least one input row");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = match spec.kind {
        LayerKind::Linear => ToyModel::random_linear(spec.d, &mut rng),
        LayerKind::Attention => ToyModel::random_attention(spec.d, &mut rng),
        LayerKind::Ffn => ToyModel::random_ffn(spec.d, spec.d_ff, &mut rng),
    };
    let slots = spec
        .targets
        .clone()
        .unwrap_or_else(|| model.default_targets().to_vec());
    let planted = AdapterSet::random(&model, &slots, &spec.teacher, &mut rng, spec.planted_scale)?;
    let inputs: Vec<DMatrix<f64>> = (0..spec.num_inputs)
        .map(|_| DMatrix::from_fn(spec.rows, spec.d, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let targets = forward(&model, &planted, &inputs)?;
    Ok(Task {
        model,
        inputs,
        targets,
        planted,
        slots,
    })
}

/// Linear task whose target is `Delta_true * W*` with `Delta_true` drawn from
/// the family described by `config`.
pub fn make_realizable_task(d: usize, config: &AdapterConfig, seed: u64) -> Result<Task> {
    make_task(&TaskSpec::linear(d, config.clone().with_dim(d)), seed)
}

/// What is trained on a task.
#[derive(Debug, Clone, PartialEq)]
pub enum Student {
    /// Multiplicative compound adapters, identity start.
    Compound(AdapterConfig),
    /// Additive low-rank adapters, zero start.
    Lora { rank: usize, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub steps: usize,
    pub lr: f64,
    /// Heavy-ball momentum; `0` is plain gradient descent.
    pub momentum: f64,
    /// Record every `log_every` steps (the first and last step are always kept).
    pub log_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 1000,
            lr: 0.1,
            momentum: 0.0,
            log_every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainState {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub states: Vec<TrainState>,
    pub params: AdapterSet,
    pub num_params: usize,
}

impl TrainHistory {
    pub fn initial_loss(&self) -> f64 {
        self.states[0].loss
    }

    pub fn final_loss(&self) -> f64 {
        self.states.last().expect("history is never empty").loss
    }
}

pub fn init_student(task: &Task, student: &Student, seed: u64) -> Result<AdapterSet> {
    match student {
        Student::Compound(cfg) => AdapterSet::identity(&task.model, &task.slots, cfg),
        Student::Lora { rank, alpha } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            AdapterSet::lora(&task.model, &task.slots, *rank, *alpha, &mut rng)
        }
    }
}

/// Full-batch gradient descent from the identity start.
pub fn train(task: &Task, student: &Student, opts: &TrainOptions, seed: u64) -> Result<TrainHistory> {
    if opts.lr <= 0.0 || !opts.lr.is_finite() {
        return domain(format!("learning rate must be positive, got {}", opts.lr));
    }
    if !(0.0..1.0).contains(&opts.momentum) {
        return domain(format!("momentum must lie in [0, 1), got {}", opts.momentum));
    }
    let mut params = init_student(task, student, seed)?;
    let mut x = params.to_vec();
    let mut velocity = vec![0.0; x.len()];
    let every = opts.log_every.max(1);
    let mut states = Vec::new();
    for step in 0..=opts.steps {
        params.set_from_slice(&x)?;
        let (l, g) = loss_and_grad(&task.model, &params, &task.inputs, &task.targets).map_err(|e| match e {
            Error::Numerical(m) => Error::Numerical(format!("diverged at step {step}: {m}")),
            other => other,
        })?;
        let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::Numerical(format!("diverged at step {step}: non-finite gradient (loss {l})")));
        }
        if step % every == 0 || step == opts.steps {
            states.push(TrainState {
                step,
                loss: l,
                lr: opts.lr,
                grad_norm,
            });
        }
        if step == opts.steps {
            break;
        }
        for ((xi, vi), gi) in x.iter_mut().zip(velocity.iter_mut()).zip(&g) {
            *vi = opts.momentum * *vi - opts.lr * gi;
            *xi += *vi;
        }
    }
    let num_params = params.num_params();
    Ok(TrainHistory {
        states,
        params,
        num_params,
    })
}
