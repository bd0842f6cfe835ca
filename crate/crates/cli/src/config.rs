//! Experiment configuration files.
//!
//! One experiment per JSON file. Every section is optional except `mode`;
//! unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use qadapt::trainer::{LayerKind, Slot, Student, TaskSpec, TrainOptions};
use qadapt::{AdapterConfig, MinorOp, Orthogonality};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Verify,
    Train,
    Sweep,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub adapter: AdapterSection,
    #[serde(default)]
    pub task: TaskSection,
    #[serde(default)]
    pub student: StudentSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub table: TableSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Report directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Write each trained adapter matrix next to the report.
    #[serde(default)]
    pub export: Option<ExportFormat>,
}

/// Sector matrices grow as `C(n, 3)`; beyond this the suite is impractically slow.
pub const MAX_VERIFY_QUBITS: usize = 16;

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// The `(C', O, r, gamma, beta)` tuple plus layer width and stack depth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdapterSection {
    pub d: usize,
    pub orders: Vec<usize>,
    pub op: MinorOp,
    pub r: usize,
    pub gamma: u8,
    pub beta: u8,
    pub m: usize,
    pub max_order: usize,
}

impl Default for AdapterSection {
    fn default() -> Self {
        AdapterSection {
            d: 16,
            orders: vec![1, 2],
            op: MinorOp::Comp,
            r: 2,
            gamma: 0,
            beta: 0,
            m: 1,
            max_order: qadapt::adapter::DEFAULT_MAX_ORDER,
        }
    }
}

impl AdapterSection {
    pub fn to_config(&self) -> Result<AdapterConfig, String> {
        let ortho = Orthogonality::from_gamma(self.gamma).map_err(|e| format!("gamma: {e}"))?;
        if self.beta > 1 {
            return Err(format!("beta: must be 0 or 1, got {}", self.beta));
        }
        let mut cfg = AdapterConfig::new(self.d, &self.orders, self.r)
            .with_op(self.op)
            .with_orthogonality(ortho)
            .with_block_share(self.beta == 1)
            .with_num_adapters(self.m);
        cfg.max_order = self.max_order;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub kind: LayerKind,
    /// FFN hidden width; defaults to `d`.
    pub d_ff: Option<usize>,
    pub rows: usize,
    pub inputs: usize,
    pub planted_scale: f64,
    /// Family the target is planted from; defaults to the trained adapter.
    pub teacher: Option<AdapterSection>,
    pub targets: Option<Vec<Slot>>,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection {
            kind: LayerKind::Linear,
            d_ff: None,
            rows: 64,
            inputs: 1,
            planted_scale: 0.3,
            teacher: None,
            targets: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudentKind {
    Compound,
    Lora,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentSection {
    pub kind: StudentKind,
    /// LoRA rank.
    pub rank: usize,
    /// LoRA scale.
    pub alpha: f64,
}

impl Default for StudentSection {
    fn default() -> Self {
        StudentSection {
            kind: StudentKind::Compound,
            rank: 1,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Emit a loss row every this many steps; `0` keeps only the endpoints.
    pub log_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            steps: 1000,
            lr: 0.05,
            momentum: 0.0,
            log_every: 0,
        }
    }
}

impl TrainSection {
    pub fn options(&self) -> TrainOptions {
        TrainOptions {
            steps: self.steps,
            lr: self.lr,
            momentum: self.momentum,
            log_every: if self.log_every == 0 { self.steps.max(1) } else { self.log_every },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    FinalLoss,
    LossRatio,
    ParamCount,
    BaseDim,
}

impl SweepMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepMetric::FinalLoss => "final_loss",
            SweepMetric::LossRatio => "loss_ratio",
            SweepMetric::ParamCount => "param_count",
            SweepMetric::BaseDim => "base_dim",
        }
    }

    pub fn needs_training(self) -> bool {
        matches!(self, SweepMetric::FinalLoss | SweepMetric::LossRatio)
    }
}

/// Axis value lists; an absent axis holds the `adapter` section's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub orders: Option<Vec<Vec<usize>>>,
    pub op: Option<Vec<MinorOp>>,
    pub r: Option<Vec<usize>>,
    pub gamma: Option<Vec<u8>>,
    pub beta: Option<Vec<u8>>,
    pub m: Option<Vec<usize>>,
    pub metric: SweepMetric,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            orders: None,
            op: None,
            r: None,
            gamma: None,
            beta: None,
            m: None,
            metric: SweepMetric::FinalLoss,
        }
    }
}

impl GridSection {
    /// Cartesian product in axis order `orders, op, r, gamma, beta, m`.
    pub fn cells(&self, base: &AdapterSection) -> Vec<AdapterSection> {
        let orders = self.orders.clone().unwrap_or_else(|| vec![base.orders.clone()]);
        let ops = self.op.clone().unwrap_or_else(|| vec![base.op]);
        let rs = self.r.clone().unwrap_or_else(|| vec![base.r]);
        let gammas = self.gamma.clone().unwrap_or_else(|| vec![base.gamma]);
        let betas = self.beta.clone().unwrap_or_else(|| vec![base.beta]);
        let ms = self.m.clone().unwrap_or_else(|| vec![base.m]);
        let mut cells = Vec::new();
        for o in &orders {
            for &op in &ops {
                for &r in &rs {
                    for &gamma in &gammas {
                        for &beta in &betas {
                            for &m in &ms {
                                cells.push(AdapterSection {
                                    orders: o.clone(),
                                    op,
                                    r,
                                    gamma,
                                    beta,
                                    m,
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    fn empty_axis(&self) -> Option<&'static str> {
        let axes: [(&'static str, bool); 6] = [
            ("grid.orders", self.orders.as_ref().is_some_and(|v| v.is_empty())),
            ("grid.op", self.op.as_ref().is_some_and(|v| v.is_empty())),
            ("grid.r", self.r.as_ref().is_some_and(|v| v.is_empty())),
            ("grid.gamma", self.gamma.as_ref().is_some_and(|v| v.is_empty())),
            ("grid.beta", self.beta.as_ref().is_some_and(|v| v.is_empty())),
            ("grid.m", self.m.as_ref().is_some_and(|v| v.is_empty())),
        ];
        axes.iter().find(|(_, empty)| *empty).map(|(name, _)| *name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TableName {
    /// Base dimension chosen for each compound layout and block size.
    DimensionMatching,
    /// Trainable parameters per adapted matrix.
    ParamCounts,
}

impl TableName {
    pub fn as_str(self) -> &'static str {
        match self {
            TableName::DimensionMatching => "dimension-matching",
            TableName::ParamCounts => "param-counts",
        }
    }
}

pub fn standard_layouts() -> Vec<Vec<usize>> {
    vec![
        vec![1],
        vec![2],
        vec![3],
        vec![1, 2],
        vec![1, 3],
        vec![2, 3],
        vec![1, 2, 3],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableSection {
    pub name: TableName,
    pub block_sizes: Vec<usize>,
    pub orders: Vec<Vec<usize>>,
}

impl Default for TableSection {
    fn default() -> Self {
        TableSection {
            name: TableName::DimensionMatching,
            block_sizes: vec![256],
            orders: standard_layouts(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Quantum,
    CauchyBinet,
    Orthogonality,
    Gradients,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Quantum => "quantum",
            Suite::CauchyBinet => "cauchy-binet",
            Suite::Orthogonality => "orthogonality",
            Suite::Gradients => "gradients",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub suites: Vec<Suite>,
    /// Random draws per suite and seed.
    pub trials: usize,
    /// Largest qubit count for the circuit suite.
    pub max_qubits: usize,
    /// Coordinates checked by the gradient suite.
    pub coordinates: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            suites: vec![Suite::Quantum, Suite::CauchyBinet, Suite::Orthogonality, Suite::Gradients],
            trials: 50,
            max_qubits: 8,
            coordinates: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Circuit sector action vs compound of the unary matrix.
    pub equivalence: f64,
    /// Per-gate change of sector probabilities and of the norm.
    pub leakage: f64,
    pub cauchy_binet: f64,
    /// `|C^T C - I|_max` for compounds of orthogonal bases.
    pub orthogonality: f64,
    /// Same check on assembled adapters.
    pub adapter_orthogonality: f64,
    pub fd_step: f64,
    pub gradient_rel: f64,
    pub gradient_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            equivalence: 1e-9,
            leakage: 1e-12,
            cauchy_binet: 1e-9,
            orthogonality: 1e-10,
            adapter_orthogonality: 1e-9,
            fd_step: 1e-5,
            gradient_rel: 1e-4,
            gradient_abs: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Binary,
    Text,
}

impl ExperimentConfig {
    pub fn new(mode: Mode) -> Self {
        ExperimentConfig {
            mode,
            adapter: AdapterSection::default(),
            task: TaskSection::default(),
            student: StudentSection::default(),
            train: TrainSection::default(),
            grid: GridSection::default(),
            table: TableSection::default(),
            verify: VerifySection::default(),
            seeds: default_seeds(),
            output: None,
            tolerances: Tolerances::default(),
            export: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: strip_position(&e.to_string()),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks every field the selected mode reads.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return invalid("seeds", "at least one seed is required");
        }
        let tol = &self.tolerances;
        for (name, v) in [
            ("tolerances.equivalence", tol.equivalence),
            ("tolerances.leakage", tol.leakage),
            ("tolerances.cauchy_binet", tol.cauchy_binet),
            ("tolerances.orthogonality", tol.orthogonality),
            ("tolerances.adapter_orthogonality", tol.adapter_orthogonality),
            ("tolerances.fd_step", tol.fd_step),
            ("tolerances.gradient_rel", tol.gradient_rel),
            ("tolerances.gradient_abs", tol.gradient_abs),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return invalid(name, format!("must be positive and finite, got {v}"));
            }
        }
        match self.mode {
            Mode::Train => {
                self.adapter_config("adapter", &self.adapter)?;
                self.validate_task()?;
                self.validate_train()?;
            }
            Mode::Sweep => {
                if let Some(axis) = self.grid.empty_axis() {
                    return invalid(axis, "axis has no values");
                }
                // Cells may be infeasible, but the shared fields must be sound.
                if self.adapter.d == 0 {
                    return invalid("adapter.d", "must be positive");
                }
                if self.grid.metric.needs_training() {
                    self.validate_task()?;
                    self.validate_train()?;
                }
            }
            Mode::Table => {
                if self.table.orders.is_empty() {
                    return invalid("table.orders", "no layouts listed");
                }
                if self.table.name == TableName::DimensionMatching && self.table.block_sizes.is_empty() {
                    return invalid("table.block_sizes", "no block sizes listed");
                }
                if self.table.name == TableName::ParamCounts {
                    let mut probe = self.adapter.clone();
                    probe.orders = vec![1];
                    self.adapter_config("adapter", &probe)?;
                }
            }
            Mode::Verify => {
                if self.verify.suites.is_empty() {
                    return invalid("verify.suites", "no suites listed");
                }
                if self.verify.trials == 0 {
                    return invalid("verify.trials", "must be positive");
                }
                if !(2..=MAX_VERIFY_QUBITS).contains(&self.verify.max_qubits) {
                    return invalid("verify.max_qubits", format!("must lie in 2..={MAX_VERIFY_QUBITS}"));
                }
                if self.verify.suites.contains(&Suite::Gradients) {
                    self.adapter_config("adapter", &self.adapter)?;
                    if self.verify.coordinates == 0 {
                        return invalid("verify.coordinates", "must be positive");
                    }
                }
            }
        }
        Ok(())
    }

    fn adapter_config(&self, field: &str, section: &AdapterSection) -> Result<AdapterConfig, CliError> {
        let cfg = section.to_config().map_err(|m| CliError::Invalid {
            field: field.into(),
            message: m,
        })?;
        cfg.block_spec().map_err(|e| CliError::Invalid {
            field: field.into(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    fn validate_task(&self) -> Result<(), CliError> {
        let t = &self.task;
        if t.rows == 0 {
            return invalid("task.rows", "must be positive");
        }
        if t.inputs == 0 {
            return invalid("task.inputs", "must be positive");
        }
        if !(t.planted_scale.is_finite() && t.planted_scale >= 0.0) {
            return invalid("task.planted_scale", "must be finite and non-negative");
        }
        if t.d_ff == Some(0) {
            return invalid("task.d_ff", "must be positive");
        }
        if let Some(teacher) = &t.teacher {
            if teacher.d != self.adapter.d {
                return invalid("task.teacher.d", "must equal adapter.d");
            }
            self.adapter_config("task.teacher", teacher)?;
        }
        if let Some(targets) = &t.targets {
            if targets.is_empty() {
                return invalid("task.targets", "no slots listed");
            }
        }
        if self.student.kind == StudentKind::Lora && self.student.rank == 0 {
            return invalid("student.rank", "must be positive");
        }
        Ok(())
    }

    fn validate_train(&self) -> Result<(), CliError> {
        let t = &self.train;
        if !(t.lr.is_finite() && t.lr > 0.0) {
            return invalid("train.lr", "must be positive");
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return invalid("train.momentum", "must lie in [0, 1)");
        }
        Ok(())
    }

    /// Task definition for a student adapter `cell`.
    pub fn task_spec(&self, cell: &AdapterConfig) -> Result<TaskSpec, String> {
        let teacher = match &self.task.teacher {
            Some(t) => t.to_config()?,
            None => cell.clone(),
        };
        Ok(TaskSpec {
            kind: self.task.kind,
            d: self.adapter.d,
            d_ff: self.task.d_ff.unwrap_or(self.adapter.d),
            rows: self.task.rows,
            num_inputs: self.task.inputs,
            teacher,
            planted_scale: self.task.planted_scale,
            targets: self.task.targets.clone(),
        })
    }

    pub fn student(&self, cell: &AdapterConfig) -> Student {
        match self.student.kind {
            StudentKind::Compound => Student::Compound(cell.clone()),
            StudentKind::Lora => Student::Lora {
                rank: self.student.rank,
                alpha: self.student.alpha,
            },
        }
    }
}

fn invalid<T>(field: &str, message: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Invalid {
        field: field.into(),
        message: message.into(),
    })
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}
