use nalgebra::DMatrix;
use qadapt::export::MatrixHeader;
use qadapt::trainer::{make_task, train, SlotAdapter, Student};
use qadapt::{fit_base_dim, param_count, AdapterConfig, BlockSpec};
use rayon::prelude::*;

use crate::config::{AdapterSection, ExperimentConfig, Mode, StudentKind, SweepMetric, TableName};
use crate::error::CliError;
use crate::report::{canonical_order, echo, fmt_f64, Provenance, ReportRow};
use crate::verify;

/// An adapter matrix produced by a training run.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub header: MatrixHeader,
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub rows: Vec<ReportRow>,
    pub artifacts: Vec<Artifact>,
    /// Any verification row failed.
    pub failed: bool,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let mut out = match cfg.mode {
        Mode::Table => Outcome {
            rows: table(cfg)?,
            ..Outcome::default()
        },
        Mode::Train => run_train(cfg)?,
        Mode::Sweep => Outcome {
            rows: sweep(cfg)?,
            ..Outcome::default()
        },
        Mode::Verify => verify::run(cfg)?,
    };
    canonical_order(&mut out.rows);
    Ok(out)
}

/// Echo of one training cell: the adapter tuple, the task and the optimizer.
pub fn cell_echo(cfg: &ExperimentConfig, cell: &AdapterSection) -> String {
    let t = &cfg.task;
    let mut pairs = vec![
        ("d", cell.d.to_string()),
        ("cfg", qadapt::adapter::orders_label(&cell.orders)),
        ("op", cell.op.to_string()),
        ("r", cell.r.to_string()),
        ("gamma", cell.gamma.to_string()),
        ("beta", cell.beta.to_string()),
        ("m", cell.m.to_string()),
        ("task", t.kind.as_str().to_string()),
    ];
    if let Some(d_ff) = t.d_ff {
        pairs.push(("d_ff", d_ff.to_string()));
    }
    pairs.push(("rows", t.rows.to_string()));
    pairs.push(("inputs", t.inputs.to_string()));
    pairs.push(("scale", fmt_f64(t.planted_scale)));
    if let Some(teacher) = &t.teacher {
        pairs.push((
            "teacher",
            format!(
                "{}/{}/r{}/g{}/b{}/m{}",
                qadapt::adapter::orders_label(&teacher.orders),
                teacher.op,
                teacher.r,
                teacher.gamma,
                teacher.beta,
                teacher.m
            ),
        ));
    }
    if let Some(slots) = &t.targets {
        pairs.push(("slots", slots.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("+")));
    }
    match cfg.student.kind {
        StudentKind::Compound => pairs.push(("student", "compound".into())),
        StudentKind::Lora => pairs.push((
            "student",
            format!("lora/rank{}/alpha{}", cfg.student.rank, fmt_f64(cfg.student.alpha)),
        )),
    }
    pairs.push(("steps", cfg.train.steps.to_string()));
    pairs.push(("lr", fmt_f64(cfg.train.lr)));
    pairs.push(("momentum", fmt_f64(cfg.train.momentum)));
    echo(&pairs)
}

struct CellRun {
    rows: Vec<ReportRow>,
    artifacts: Vec<Artifact>,
}

enum CellError {
    Infeasible(String),
    Diverged(String),
}

fn feasible(cell: &AdapterSection) -> Result<(AdapterConfig, BlockSpec), CellError> {
    let config = cell.to_config().map_err(CellError::Infeasible)?;
    let spec = config.block_spec().map_err(|e| CellError::Infeasible(e.to_string()))?;
    Ok((config, spec))
}

fn train_cell(cfg: &ExperimentConfig, cell: &AdapterSection, seed: u64, id: &str) -> Result<CellRun, CellError> {
    let (config, spec) = feasible(cell)?;
    let task_spec = cfg.task_spec(&config).map_err(CellError::Infeasible)?;
    let task = make_task(&task_spec, seed).map_err(|e| CellError::Infeasible(e.to_string()))?;
    let student = cfg.student(&config);
    let history = train(&task, &student, &cfg.train.options(), seed).map_err(|e| match e {
        qadapt::Error::Numerical(m) => CellError::Diverged(m),
        other => CellError::Infeasible(other.to_string()),
    })?;
    let s = Some(seed);
    let mut rows = vec![ReportRow::new(id, "status", "ok", Provenance::Measured, s)];
    if matches!(student, Student::Compound(_)) {
        rows.push(ReportRow::new(id, "base_dim", spec.n.to_string(), Provenance::Counted, s));
        let per_matrix = param_count(&config).map_err(|e| CellError::Infeasible(e.to_string()))?;
        rows.push(ReportRow::new(id, "param_count", per_matrix.to_string(), Provenance::Counted, s));
    }
    rows.push(ReportRow::new(id, "num_params", history.num_params.to_string(), Provenance::Counted, s));
    if cfg.train.log_every > 0 {
        for st in &history.states {
            rows.push(ReportRow::new(id, format!("loss@{}", st.step), fmt_f64(st.loss), Provenance::Measured, s));
        }
    }
    let (l0, l1) = (history.initial_loss(), history.final_loss());
    rows.push(ReportRow::new(id, "initial_loss", fmt_f64(l0), Provenance::Measured, s));
    rows.push(ReportRow::new(id, "final_loss", fmt_f64(l1), Provenance::Measured, s));
    rows.push(ReportRow::new(id, "loss_ratio", fmt_f64(ratio(l1, l0)), Provenance::Measured, s));

    let mut artifacts = Vec::new();
    if cfg.export.is_some() {
        for (slot, adapter) in history.params.entries() {
            if let SlotAdapter::Compound(p) = adapter {
                let matrix = p.matrix().map_err(|e| CellError::Infeasible(e.to_string()))?;
                artifacts.push(Artifact {
                    name: format!("adapter-seed{seed}-{}", slot.as_str()),
                    header: MatrixHeader::from(p.config()),
                    matrix,
                });
            }
        }
    }
    Ok(CellRun { rows, artifacts })
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn failure_rows(id: &str, seed: u64, err: CellError) -> Vec<ReportRow> {
    let (status, msg) = match err {
        CellError::Infeasible(m) => ("infeasible", m),
        CellError::Diverged(m) => ("diverged", m),
    };
    vec![
        ReportRow::new(id, "status", status, Provenance::Measured, Some(seed)),
        ReportRow::new(id, "diagnostic", msg, Provenance::Measured, Some(seed)),
    ]
}

fn run_train(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let id = cell_echo(cfg, &cfg.adapter);
    let runs: Vec<(Vec<ReportRow>, Vec<Artifact>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| match train_cell(cfg, &cfg.adapter, seed, &id) {
            Ok(run) => (run.rows, run.artifacts),
            Err(e) => (failure_rows(&id, seed, e), Vec::new()),
        })
        .collect();
    let mut out = Outcome::default();
    for (rows, artifacts) in runs {
        out.rows.extend(rows);
        out.artifacts.extend(artifacts);
    }
    Ok(out)
}

/// One row per grid cell and seed.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, CliError> {
    let metric = cfg.grid.metric;
    let cells = cfg.grid.cells(&cfg.adapter);
    let jobs: Vec<(&AdapterSection, u64)> = cells
        .iter()
        .flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(cell, seed)| sweep_cell(cfg, cell, seed, metric))
        .collect();
    Ok(rows)
}

fn sweep_cell(cfg: &ExperimentConfig, cell: &AdapterSection, seed: u64, metric: SweepMetric) -> ReportRow {
    let id = cell_echo(cfg, cell);
    let prov = if metric.needs_training() {
        Provenance::Measured
    } else {
        Provenance::Counted
    };
    let value = match metric {
        SweepMetric::FinalLoss | SweepMetric::LossRatio => match train_cell(cfg, cell, seed, &id) {
            Ok(run) => run
                .rows
                .into_iter()
                .find(|r| r.metric == metric.as_str())
                .map(|r| r.value)
                .unwrap_or_else(|| "infeasible".into()),
            Err(CellError::Infeasible(_)) => "infeasible".into(),
            Err(CellError::Diverged(_)) => "diverged".into(),
        },
        SweepMetric::ParamCount => match feasible(cell) {
            Ok((config, _)) => param_count(&config).map_or_else(|_| "infeasible".into(), |c| c.to_string()),
            Err(_) => "infeasible".into(),
        },
        SweepMetric::BaseDim => match feasible(cell) {
            Ok((_, spec)) => spec.n.to_string(),
            Err(_) => "infeasible".into(),
        },
    };
    ReportRow::new(&id, metric.as_str(), value, prov, Some(seed))
}

pub fn table(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, CliError> {
    let t = &cfg.table;
    let mut rows = Vec::new();
    match t.name {
        TableName::DimensionMatching => {
            for &b in &t.block_sizes {
                for orders in &t.orders {
                    let id = echo(&[
                        ("table", t.name.as_str().into()),
                        ("b", b.to_string()),
                        ("cfg", qadapt::adapter::orders_label(orders)),
                    ]);
                    let value = fit_base_dim(b, orders).map_or_else(|_| "infeasible".into(), |n| n.to_string());
                    rows.push(ReportRow::new(&id, "base_dim", value, Provenance::Counted, None));
                }
            }
        }
        TableName::ParamCounts => {
            for orders in &t.orders {
                let cell = AdapterSection {
                    orders: orders.clone(),
                    ..cfg.adapter.clone()
                };
                let id = echo(&[
                    ("table", t.name.as_str().into()),
                    ("d", cell.d.to_string()),
                    ("cfg", qadapt::adapter::orders_label(orders)),
                    ("r", cell.r.to_string()),
                    ("gamma", cell.gamma.to_string()),
                    ("beta", cell.beta.to_string()),
                    ("m", cell.m.to_string()),
                ]);
                let value = match feasible(&cell) {
                    Ok((config, _)) => param_count(&config)?.to_string(),
                    Err(_) => "infeasible".into(),
                };
                rows.push(ReportRow::new(&id, "param_count", value, Provenance::Counted, None));
            }
        }
    }
    Ok(rows)
}
