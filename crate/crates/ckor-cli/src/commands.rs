//! Subcommand implementations. Every command is deterministic given the
//! configuration and seeds; wall-clock timings are reported separately from
//! the result tables so result files stay byte-identical across re-runs.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ckor::data::{
    load_csv, rmse, subsample_farthest, subsample_uniform, write_csv, InducingSet, Normalizer,
    SnapshotDataset,
};
use ckor::estimator::{
    fit_bedmdc, fit_ckor, fit_ny_ckor, load_model, pod_reduce, save_model, ModelKind, Observable,
    PodCriterion,
};
use ckor::kernel::KernelSpec;
use ckor::mpc::{closed_loop, Controller, MpcProblem, Reference, ScaledModel};
use ckor::systems::{
    duffing, generate_snapshots, van_der_pol, ControlAffineOde, InitialConditions, InputLaw,
    SimConfig,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::{
    AnchorSelection, EstimatorKind, ExperimentConfig, IcsConfig, LawConfig, SystemName,
};
use crate::CliError;

pub fn ode_of(name: SystemName) -> ControlAffineOde {
    match name {
        SystemName::Duffing => duffing(),
        SystemName::VanDerPol => van_der_pol(),
    }
}

fn sim_config(cfg: &ExperimentConfig) -> SimConfig {
    let mut sim = SimConfig::new(cfg.system.ts);
    sim.substeps = cfg.system.substeps;
    sim
}

fn ics_of(cfg: &IcsConfig) -> InitialConditions {
    match cfg {
        IcsConfig::Grid { points_per_dim, limits } => InitialConditions::Grid {
            points_per_dim: *points_per_dim,
            limits: limits.clone(),
        },
        IcsConfig::Random { count, limits } => InitialConditions::Random {
            count: *count,
            limits: limits.clone(),
        },
    }
}

fn law_of(cfg: &LawConfig) -> InputLaw<'static> {
    match cfg {
        LawConfig::Uniform { lo, hi } => InputLaw::UniformRandom { lo: *lo, hi: *hi },
        LawConfig::Sine { amplitude, freq_hz } => InputLaw::Sine {
            amplitude: *amplitude,
            freq_hz: *freq_hz,
        },
    }
}

fn classify(e: ckor::Error) -> CliError {
    match e {
        ckor::Error::Input(_) | ckor::Error::Parse { .. } | ckor::Error::Unsupported(_) => {
            CliError::Config(e.to_string())
        }
        ckor::Error::Io(_) => CliError::Config(e.to_string()),
        _ => CliError::Numerical(e.to_string()),
    }
}

/// Training data per the config: loaded from CSV or generated from the spec.
fn training_data(cfg: &ExperimentConfig) -> Result<SnapshotDataset, CliError> {
    if let Some(path) = &cfg.data.train_csv {
        return load_csv(path).map_err(classify);
    }
    let gen = cfg.data.generate.as_ref().expect("validated");
    let ode = ode_of(cfg.system.name);
    generate_snapshots(
        &ode,
        &ics_of(&gen.initial_conditions),
        &law_of(&gen.input),
        gen.steps,
        &sim_config(cfg),
        gen.seed,
    )
    .map_err(classify)
}

fn test_data(cfg: &ExperimentConfig) -> Result<Option<SnapshotDataset>, CliError> {
    let Some(eval) = &cfg.evaluation else {
        return Ok(None);
    };
    let ode = ode_of(cfg.system.name);
    let ds = generate_snapshots(
        &ode,
        &ics_of(&eval.initial_conditions),
        &law_of(&eval.input),
        eval.horizon,
        &sim_config(cfg),
        eval.seed,
    )
    .map_err(classify)?;
    Ok(Some(ds))
}

fn anchors_for(
    ds: &SnapshotDataset,
    m: usize,
    selection: AnchorSelection,
    seed: u64,
) -> Result<InducingSet, CliError> {
    match selection {
        AnchorSelection::Uniform => subsample_uniform(ds, m, seed).map_err(classify),
        AnchorSelection::Farthest => subsample_farthest(ds, m, seed).map_err(classify),
    }
}

pub struct FitOutcome {
    pub model: ModelKind,
    pub fit_seconds: f64,
    pub lifted_dim: usize,
    pub rank: Option<usize>,
}

/// Fit the configured estimator; `mu`/`gamma` override the config values so
/// the sweep can reuse this path cell by cell.
fn fit_estimator(
    cfg: &ExperimentConfig,
    train: &SnapshotDataset,
    kind: EstimatorKind,
    mu: Option<f64>,
    gamma: Option<f64>,
) -> Result<FitOutcome, CliError> {
    let state_kernel = match (&cfg.kernel.state, mu) {
        (KernelSpec::Gaussian { .. }, Some(mu)) => KernelSpec::Gaussian { bandwidth: mu },
        (KernelSpec::GaussianPlusLinear { .. }, Some(mu)) => {
            KernelSpec::GaussianPlusLinear { bandwidth: mu }
        }
        (spec, _) => spec.clone(),
    };
    let gamma = gamma.unwrap_or(cfg.kernel.gamma);
    let start = Instant::now();
    let (model, lifted_dim, rank) = match kind {
        EstimatorKind::Ckor => {
            let model = fit_ckor(
                train,
                state_kernel,
                cfg.kernel.control.clone(),
                gamma,
                Observable::FullState,
            )
            .map_err(classify)?;
            let dim = model.lifted_dim();
            (ModelKind::Ckor(model), dim, None)
        }
        EstimatorKind::NyCkor => {
            let m = cfg.estimator.m.expect("validated");
            let anchors = anchors_for(train, m, cfg.estimator.selection, cfg.estimator.anchor_seed)?;
            let model = fit_ny_ckor(
                train,
                &anchors,
                state_kernel,
                cfg.kernel.control.clone(),
                gamma,
                Observable::FullState,
            )
            .map_err(classify)?;
            if let Some(tau) = cfg.estimator.pod_tau {
                let reduced = pod_reduce(&model, PodCriterion::Energy(tau)).map_err(classify)?;
                let rank = reduced.rank();
                (ModelKind::Reduced(reduced), rank, Some(rank))
            } else {
                let dim = model.lifted_dim();
                (ModelKind::Ckor(model), dim, None)
            }
        }
        EstimatorKind::Bedmdc => {
            let m = cfg.estimator.m.expect("validated");
            let anchors = anchors_for(train, m, cfg.estimator.selection, cfg.estimator.anchor_seed)?;
            let model = fit_bedmdc(train, &anchors, state_kernel, gamma, Observable::FullState)
                .map_err(classify)?;
            let dim = model.lifted_dim();
            (ModelKind::Bedmdc(model), dim, None)
        }
    };
    Ok(FitOutcome {
        model,
        fit_seconds: start.elapsed().as_secs_f64(),
        lifted_dim,
        rank,
    })
}

fn rollout_outputs(
    model: &ModelKind,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
) -> Result<DMatrix<f64>, ckor::Error> {
    let rollout = match model {
        ModelKind::Ckor(m) => m.rollout(x0, inputs)?,
        ModelKind::Reduced(m) => m.rollout(x0, inputs)?,
        ModelKind::Bedmdc(m) => m.rollout(x0, inputs)?,
    };
    Ok(rollout.outputs)
}

/// Per-trajectory views of a dataset: (x0, inputs, successor block).
fn trajectories(ds: &SnapshotDataset) -> Vec<(DVector<f64>, Vec<DVector<f64>>, DMatrix<f64>)> {
    let segments: Vec<usize> = ds
        .segments
        .clone()
        .unwrap_or_else(|| vec![ds.len()]);
    let mut out = Vec::with_capacity(segments.len());
    let mut row = 0;
    for len in segments {
        let x0 = ds.x.row(row).transpose();
        let inputs: Vec<DVector<f64>> =
            (0..len).map(|k| ds.u.row(row + k).transpose()).collect();
        let targets = ds.x_plus.rows(row, len).into_owned();
        out.push((x0, inputs, targets));
        row += len;
    }
    out
}

/// Mean and standard deviation of the per-trajectory multi-step RMSE.
/// Diverged rollouts count as infinite RMSE instead of aborting.
fn evaluate(
    model: &ModelKind,
    norm: Option<&Normalizer>,
    test: &SnapshotDataset,
    horizon: usize,
) -> (f64, f64, f64) {
    let start = Instant::now();
    let mut scores = Vec::new();
    for (x0, inputs, targets) in trajectories(test) {
        let h = horizon.min(inputs.len());
        let (x0, inputs) = match norm {
            Some(n) => (
                x0.component_div(&n.x_scale),
                inputs[..h]
                    .iter()
                    .map(|u| u.component_div(&n.u_scale))
                    .collect(),
            ),
            None => (x0, inputs[..h].to_vec()),
        };
        let score = match rollout_outputs(model, &x0, &inputs) {
            Ok(mut outputs) => {
                if let Some(n) = norm {
                    for (j, s) in n.x_scale.iter().enumerate() {
                        outputs.column_mut(j).scale_mut(*s);
                    }
                }
                rmse(&targets.rows(0, h).into_owned(), &outputs).unwrap_or(f64::INFINITY)
            }
            Err(_) => f64::INFINITY,
        };
        scores.push(if score.is_finite() { score } else { f64::INFINITY });
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let std = if mean.is_finite() {
        (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt()
    } else {
        f64::INFINITY
    };
    (mean, std, start.elapsed().as_secs_f64())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<bool, CliError> {
    if cfg.data.generate.is_none() {
        return Err(CliError::Config(
            "generate requires a [data.generate] table".into(),
        ));
    }
    ensure_dir(out)?;
    let train = training_data(cfg)?;
    write_csv(&train, out.join("train.csv")).map_err(classify)?;
    println!(
        "wrote {} ({} rows, {} trajectories)",
        out.join("train.csv").display(),
        train.len(),
        train.segments.as_ref().map_or(1, |s| s.len())
    );
    if let Some(test) = test_data(cfg)? {
        write_csv(&test, out.join("test.csv")).map_err(classify)?;
        println!(
            "wrote {} ({} rows, {} trajectories)",
            out.join("test.csv").display(),
            test.len(),
            test.segments.as_ref().map_or(1, |s| s.len())
        );
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

pub fn cmd_fit(cfg: &ExperimentConfig, out: &Path) -> Result<bool, CliError> {
    ensure_dir(out)?;
    let raw = training_data(cfg)?;
    let (train, norm) = if cfg.data.normalize {
        let n = Normalizer::fit_max_abs(&raw);
        (n.apply(&raw), Some(n))
    } else {
        (raw, None)
    };
    let outcome = fit_estimator(cfg, &train, cfg.estimator.kind, None, None)?;
    let model_path = out.join("model.json");
    save_model(&outcome.model, &model_path).map_err(classify)?;

    let mut report = serde_json::Map::new();
    report.insert("estimator".into(), cfg.estimator.kind.label().into());
    report.insert("samples".into(), (train.len() as u64).into());
    report.insert("state_dim".into(), (train.state_dim() as u64).into());
    report.insert("input_dim".into(), (train.input_dim() as u64).into());
    report.insert("lifted_dim".into(), (outcome.lifted_dim as u64).into());
    if let Some(r) = outcome.rank {
        report.insert("pod_rank".into(), (r as u64).into());
    }
    if !matches!(cfg.estimator.kind, EstimatorKind::Ckor) {
        if let Some(m) = cfg.estimator.m {
            report.insert("inducing_points".into(), (m as u64).into());
        }
    }
    report.insert("fit_seconds".into(), outcome.fit_seconds.into());
    if let Some(n) = &norm {
        report.insert(
            "x_scale".into(),
            n.x_scale.iter().copied().collect::<Vec<f64>>().into(),
        );
        report.insert(
            "u_scale".into(),
            n.u_scale.iter().copied().collect::<Vec<f64>>().into(),
        );
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(report))
        .expect("report serialization");
    write_text(&out.join("fit_report.json"), &text)?;
    println!(
        "fitted {} on {} samples in {:.3} s -> {}",
        cfg.estimator.kind.label(),
        train.len(),
        outcome.fit_seconds,
        model_path.display()
    );
    Ok(false)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<bool, CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep requires a [sweep] table".into()))?;
    let test = test_data(cfg)?
        .ok_or_else(|| CliError::Config("sweep requires an [evaluation] table".into()))?;
    ensure_dir(out)?;
    let raw = training_data(cfg)?;
    let (train, norm) = if cfg.data.normalize {
        let n = Normalizer::fit_max_abs(&raw);
        (n.apply(&raw), Some(n))
    } else {
        (raw, None)
    };

    struct Cell {
        mu: f64,
        gamma: f64,
        kind: EstimatorKind,
        rep: usize,
    }
    let mut cells = Vec::new();
    for &mu in &sweep.mu {
        for &gamma in &sweep.gamma {
            for &kind in &sweep.estimators {
                for rep in 0..sweep.repeats {
                    cells.push(Cell { mu, gamma, kind, rep });
                }
            }
        }
    }

    let results: Vec<Result<(f64, f64, f64, f64), CliError>> = cells
        .par_iter()
        .map(|cell| {
            let outcome = fit_estimator(cfg, &train, cell.kind, Some(cell.mu), Some(cell.gamma))?;
            let (mean, std, predict_seconds) =
                evaluate(&outcome.model, norm.as_ref(), &test, sweep.horizon);
            Ok((mean, std, outcome.fit_seconds, predict_seconds))
        })
        .collect();

    let mut table = String::from("mu,gamma,estimator,rep,mean_rmse,std_rmse\n");
    let mut timings = String::from("mu,gamma,estimator,rep,fit_seconds,predict_seconds\n");
    let mut diverged = 0usize;
    for (cell, res) in cells.iter().zip(&results) {
        match res {
            Ok((mean, std, fit_s, pred_s)) => {
                if !mean.is_finite() {
                    diverged += 1;
                }
                table.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    cell.mu,
                    cell.gamma,
                    cell.kind.label(),
                    cell.rep,
                    mean,
                    std
                ));
                timings.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    cell.mu, cell.gamma, cell.kind.label(), cell.rep, fit_s, pred_s
                ));
            }
            Err(CliError::Config(msg)) => return Err(CliError::Config(msg.clone())),
            Err(_) => {
                diverged += 1;
                table.push_str(&format!(
                    "{},{},{},{},inf,inf\n",
                    cell.mu,
                    cell.gamma,
                    cell.kind.label(),
                    cell.rep
                ));
                timings.push_str(&format!(
                    "{},{},{},{},0,0\n",
                    cell.mu, cell.gamma, cell.kind.label(), cell.rep
                ));
            }
        }
    }
    write_text(&out.join("sweep.csv"), &table)?;
    write_text(&out.join("sweep_timings.csv"), &timings)?;
    println!(
        "sweep: {} cells, {} diverged -> {}",
        cells.len(),
        diverged,
        out.join("sweep.csv").display()
    );
    Ok(diverged > 0)
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

pub fn cmd_predict(
    model_path: &Path,
    data_path: &Path,
    horizon: usize,
    out: &Path,
) -> Result<bool, CliError> {
    if horizon == 0 {
        return Err(CliError::Config("horizon must be at least 1".into()));
    }
    let model = load_model(model_path).map_err(classify)?;
    let data = load_csv(data_path).map_err(classify)?;
    ensure_dir(out)?;

    let n_x = data.state_dim();
    let mut csv = String::from("traj_id,step");
    for j in 1..=n_x {
        csv.push_str(&format!(",xhat_{j}"));
    }
    csv.push('\n');
    let mut scores = Vec::new();
    for (traj_id, (x0, inputs, targets)) in trajectories(&data).into_iter().enumerate() {
        let h = horizon.min(inputs.len());
        let outputs = rollout_outputs(&model, &x0, &inputs[..h]).map_err(classify)?;
        if outputs.ncols() != n_x {
            return Err(CliError::Config(format!(
                "model predicts {} outputs but the dataset has {} state columns",
                outputs.ncols(),
                n_x
            )));
        }
        for k in 0..h {
            csv.push_str(&format!("{traj_id},{k}"));
            for j in 0..n_x {
                csv.push_str(&format!(",{}", outputs[(k, j)]));
            }
            csv.push('\n');
        }
        scores.push(rmse(&targets.rows(0, h).into_owned(), &outputs).map_err(classify)?);
    }
    write_text(&out.join("predictions.csv"), &csv)?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let summary = serde_json::json!({
        "trajectories": scores.len(),
        "horizon": horizon,
        "mean_rmse": mean,
        "per_trajectory_rmse": scores,
    });
    write_text(
        &out.join("rmse_summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serialization"),
    )?;
    println!("predict: mean RMSE {mean} over {} trajectories", scores.len());
    Ok(false)
}

// ---------------------------------------------------------------------------
// mpc
// ---------------------------------------------------------------------------

pub fn cmd_mpc(cfg: &ExperimentConfig, out: &Path) -> Result<bool, CliError> {
    let mpc = cfg
        .mpc
        .as_ref()
        .ok_or_else(|| CliError::Config("mpc requires an [mpc] table".into()))?;
    ensure_dir(out)?;
    let ode = ode_of(cfg.system.name);
    let n_x = ode.n_x;
    let n_u = ode.n_u;
    for phase in &mpc.reference {
        if phase.target.len() != n_x {
            return Err(CliError::Config(format!(
                "mpc.reference target has {} entries, the system state has {n_x}",
                phase.target.len()
            )));
        }
    }
    if mpc.q.len() != n_x || mpc.r.len() != n_u {
        return Err(CliError::Config(format!(
            "mpc.q needs {n_x} entries and mpc.r needs {n_u}"
        )));
    }

    // header-only logs for a zero-duration run
    let header = {
        let mut h = String::from("t");
        for j in 1..=n_x {
            h.push_str(&format!(",x_{j}"));
        }
        for j in 1..=n_u {
            h.push_str(&format!(",u_{j}"));
        }
        h.push('\n');
        h
    };
    if mpc.duration == 0.0 {
        for (i, _) in mpc.x0.iter().enumerate() {
            write_text(&out.join(format!("mpc_run_{i}.csv")), &header)?;
        }
        let summary = serde_json::json!({ "runs": mpc.x0.len(), "steps": 0, "failed_runs": 0 });
        write_text(
            &out.join("mpc_summary.json"),
            &serde_json::to_string_pretty(&summary).expect("summary serialization"),
        )?;
        println!("mpc: zero-duration run, header-only logs written");
        return Ok(false);
    }

    // fit the prediction model from the same config as cmd_fit
    let raw = training_data(cfg)?;
    let (train, norm) = if cfg.data.normalize {
        let n = Normalizer::fit_max_abs(&raw);
        (n.apply(&raw), Some(n))
    } else {
        (raw, None)
    };
    let outcome = fit_estimator(cfg, &train, cfg.estimator.kind, None, None)?;
    let bilinear = match &outcome.model {
        ModelKind::Ckor(m) => m.bilinear().map_err(classify)?,
        ModelKind::Reduced(m) => m.bilinear(),
        ModelKind::Bedmdc(_) => {
            return Err(CliError::Config(
                "mpc requires a ckor-family model (bedmdc has no bilinear form)".into(),
            ))
        }
    };

    let q = DMatrix::from_diagonal(&DVector::from_vec(mpc.q.clone()));
    let problem = MpcProblem {
        q: q.clone(),
        r: DMatrix::from_diagonal(&DVector::from_vec(mpc.r.clone())),
        q_terminal: q * mpc.q_terminal_scale,
        horizon: mpc.horizon,
        u_min: mpc.u_min.clone().map(DVector::from_vec),
        u_max: mpc.u_max.clone().map(DVector::from_vec),
        x_min: mpc.x_min.clone().map(DVector::from_vec),
        x_max: mpc.x_max.clone().map(DVector::from_vec),
    };
    let phases: Vec<(f64, DVector<f64>)> = mpc
        .reference
        .iter()
        .map(|p| (p.until, DVector::from_vec(p.target.clone())))
        .collect();
    let target_at = |t: f64| -> DVector<f64> {
        for (until, target) in &phases {
            if t < *until {
                return target.clone();
            }
        }
        phases.last().expect("validated").1.clone()
    };

    let sim = sim_config(cfg);
    let mut failed_runs = 0usize;
    let mut run_summaries = Vec::new();
    for (i, x0) in mpc.x0.iter().enumerate() {
        if x0.len() != n_x {
            return Err(CliError::Config(format!(
                "mpc.x0[{i}] has {} entries, the system state has {n_x}",
                x0.len()
            )));
        }
        let model: Box<dyn ckor::mpc::PredictionModel> = match &norm {
            Some(n) => Box::new(ScaledModel::new(bilinear.clone(), n).map_err(classify)?),
            None => Box::new(bilinear.clone()),
        };
        let mut schedule = |t: f64| -> Reference { Reference::constant(target_at(t)) };
        let mut ctrl = Controller::new(model, problem.clone(), Reference::constant(target_at(0.0)));
        let log = closed_loop(
            &mut ctrl,
            &ode,
            &DVector::from_vec(x0.clone()),
            mpc.duration,
            &sim,
            Some(&mut schedule),
        )
        .map_err(classify)?;

        let mut csv = header.clone();
        for (k, u) in log.inputs.iter().enumerate() {
            csv.push_str(&format!("{}", log.times[k]));
            for v in log.states[k].iter() {
                csv.push_str(&format!(",{v}"));
            }
            for v in u.iter() {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
        write_text(&out.join(format!("mpc_run_{i}.csv")), &csv)?;

        if log.failed {
            failed_runs += 1;
        }
        let t_final = *log.times.last().expect("log holds the initial time");
        let final_err = (log.final_state() - target_at(t_final)).norm();
        run_summaries.push(serde_json::json!({
            "x0": x0,
            "steps": log.inputs.len(),
            "failed": log.failed,
            "failure_reason": log.failure_reason,
            "fallback_steps": log.step_info.iter().filter(|s| s.fallback).count(),
            "final_state": log.final_state().iter().copied().collect::<Vec<f64>>(),
            "final_tracking_error": final_err,
        }));
        println!(
            "mpc run {i}: {} steps, failed = {}, final tracking error {final_err:.4}",
            log.inputs.len(),
            log.failed
        );
    }
    let summary = serde_json::json!({
        "runs": mpc.x0.len(),
        "failed_runs": failed_runs,
        "details": run_summaries,
    });
    write_text(
        &out.join("mpc_summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serialization"),
    )?;
    if failed_runs == mpc.x0.len() {
        return Err(CliError::Numerical("every MPC run failed".into()));
    }
    Ok(failed_runs > 0)
}

// ---------------------------------------------------------------------------
// inspect-model
// ---------------------------------------------------------------------------

pub fn cmd_inspect_model(model_path: &Path) -> Result<bool, CliError> {
    let model = load_model(model_path).map_err(classify)?;
    let mut out = std::io::stdout().lock();
    let describe_kernel = |spec: &KernelSpec| -> String {
        match spec {
            KernelSpec::Gaussian { bandwidth } => format!("gaussian(bandwidth = {bandwidth})"),
            KernelSpec::Linear => "linear".to_string(),
            KernelSpec::GaussianPlusLinear { bandwidth } => {
                format!("gaussian+linear(bandwidth = {bandwidth})")
            }
        }
    };
    match &model {
        ModelKind::Ckor(m) => {
            writeln!(out, "kind: ckor").ok();
            writeln!(out, "lifted_dim: {}", m.lifted_dim()).ok();
            writeln!(out, "state_dim: {}", m.x_anchors.ncols()).ok();
            writeln!(out, "input_dim: {}", m.u_anchors.ncols()).ok();
            writeln!(out, "state_kernel: {}", describe_kernel(&m.state_kernel)).ok();
            writeln!(out, "control_kernel: {}", describe_kernel(&m.control_kernel)).ok();
        }
        ModelKind::Reduced(m) => {
            writeln!(out, "kind: reduced ny-ckor").ok();
            writeln!(out, "rank: {}", m.rank()).ok();
            writeln!(out, "anchors: {}", m.x_anchors.nrows()).ok();
            writeln!(out, "state_dim: {}", m.x_anchors.ncols()).ok();
            writeln!(out, "input_dim: {}", m.u_anchors.ncols()).ok();
            writeln!(out, "state_kernel: {}", describe_kernel(&m.state_kernel)).ok();
            writeln!(out, "control_kernel: {}", describe_kernel(&m.control_kernel)).ok();
        }
        ModelKind::Bedmdc(m) => {
            writeln!(out, "kind: bedmdc").ok();
            writeln!(out, "lifted_dim: {}", m.lifted_dim()).ok();
            writeln!(out, "centers: {}", m.centers.nrows()).ok();
            writeln!(out, "state_dim: {}", m.centers.ncols()).ok();
            writeln!(out, "input_dim: {}", m.n_u).ok();
            writeln!(out, "state_kernel: {}", describe_kernel(&m.state_kernel)).ok();
        }
    }
    Ok(false)
}

/// The path a PathBuf-valued flag resolves to: the flag wins over the config.
pub fn resolve_out(cfg: Option<&ExperimentConfig>, flag: Option<&PathBuf>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.clone();
    }
    cfg.map(|c| c.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}
