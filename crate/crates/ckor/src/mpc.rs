//! Iterated LPV model predictive control on the lifted bilinear dynamics.
//!
//! At every control step the bilinear term is frozen along a scheduling
//! trajectory of lifted states, which turns the prediction model into an LPV
//! chain `z_{i+1} = A z_i + B(p_i) u_i`. The finite-horizon tracking problem
//! is condensed into a dense QP over the input sequence and handed to the
//! ADMM solver; after solving, the schedule is refreshed by simulating the
//! bilinear model under the optimal inputs.

use nalgebra::{DMatrix, DVector};

use crate::predictor::BilinearModel;
use crate::qp::{solve_qp, Qp, QpSolution, SolverSettings};
use crate::systems::{simulate, ControlAffineOde, SimConfig};
use crate::{Error, Result};

/// Tracking MPC specification in output coordinates.
#[derive(Debug, Clone)]
pub struct MpcProblem {
    /// Stage output weight, n_y x n_y.
    pub q: DMatrix<f64>,
    /// Input weight, n_u x n_u (positive definite).
    pub r: DMatrix<f64>,
    /// Additional terminal output weight, n_y x n_y.
    pub q_terminal: DMatrix<f64>,
    pub horizon: usize,
    pub u_min: Option<DVector<f64>>,
    pub u_max: Option<DVector<f64>>,
    pub x_min: Option<DVector<f64>>,
    pub x_max: Option<DVector<f64>>,
}

impl MpcProblem {
    pub fn validate(&self, n_y: usize, n_u: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::input("MPC horizon must be at least 1".to_string()));
        }
        for (name, m, dim) in [
            ("Q", &self.q, n_y),
            ("R", &self.r, n_u),
            ("Q_terminal", &self.q_terminal, n_y),
        ] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::input(format!(
                    "{name} must be {dim}x{dim}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if (m - m.transpose()).amax() > 1e-10 * m.amax().max(1.0) {
                return Err(Error::input(format!("{name} must be symmetric")));
            }
        }
        if self.r.clone().cholesky().is_none() {
            return Err(Error::input("R must be positive definite".to_string()));
        }
        for (name, v, dim) in [
            ("u_min", &self.u_min, n_u),
            ("u_max", &self.u_max, n_u),
            ("x_min", &self.x_min, n_y),
            ("x_max", &self.x_max, n_y),
        ] {
            if let Some(v) = v {
                if v.len() != dim {
                    return Err(Error::input(format!(
                        "{name} has dimension {}, expected {dim}",
                        v.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Output reference over the horizon. `targets[i]` is tracked at prediction
/// step `i + 1`; a single entry is held over the whole horizon.
#[derive(Debug, Clone)]
pub struct Reference {
    pub targets: Vec<DVector<f64>>,
}

impl Reference {
    pub fn constant(target: DVector<f64>) -> Self {
        Self { targets: vec![target] }
    }

    fn at(&self, i: usize) -> &DVector<f64> {
        if self.targets.len() == 1 {
            &self.targets[0]
        } else {
            &self.targets[i.min(self.targets.len() - 1)]
        }
    }
}

/// Prediction matrices shared by the LPV and LTI controllers.
pub trait PredictionModel {
    fn a(&self) -> &DMatrix<f64>;
    fn c(&self) -> &DMatrix<f64>;
    fn input_dim(&self) -> usize;
    fn lift_state(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    /// Per-step input matrices along the schedule (length = horizon).
    fn input_matrices(&self, schedule: &[DVector<f64>]) -> Vec<DMatrix<f64>>;
    /// Lifted trajectory `z_0 .. z_T` under concrete inputs, used to refresh
    /// the schedule.
    fn lifted_trajectory(&self, z0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>>;
}

impl<M: PredictionModel + ?Sized> PredictionModel for Box<M> {
    fn a(&self) -> &DMatrix<f64> {
        (**self).a()
    }
    fn c(&self) -> &DMatrix<f64> {
        (**self).c()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn lift_state(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).lift_state(x)
    }
    fn input_matrices(&self, schedule: &[DVector<f64>]) -> Vec<DMatrix<f64>> {
        (**self).input_matrices(schedule)
    }
    fn lifted_trajectory(&self, z0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        (**self).lifted_trajectory(z0, inputs)
    }
}

impl PredictionModel for BilinearModel {
    fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn input_dim(&self) -> usize {
        self.channels.len()
    }
    fn lift_state(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        BilinearModel::lift_state(self, x)
    }
    fn input_matrices(&self, schedule: &[DVector<f64>]) -> Vec<DMatrix<f64>> {
        schedule.iter().map(|p| self.input_matrix(p)).collect()
    }
    fn lifted_trajectory(&self, z0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        self.simulate_lifted(z0, inputs)
    }
}

/// Discrete-time LTI prediction model used by the linearization baseline.
#[derive(Debug, Clone)]
pub struct LtiModel {
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl PredictionModel for LtiModel {
    fn a(&self) -> &DMatrix<f64> {
        &self.a_d
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn input_dim(&self) -> usize {
        self.b_d.ncols()
    }
    fn lift_state(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(x.clone())
    }
    fn input_matrices(&self, schedule: &[DVector<f64>]) -> Vec<DMatrix<f64>> {
        schedule.iter().map(|_| self.b_d.clone()).collect()
    }
    fn lifted_trajectory(&self, z0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let mut traj = vec![z0.clone()];
        for u in inputs {
            let next = &self.a_d * traj.last().unwrap() + &self.b_d * u;
            traj.push(next);
        }
        Ok(traj)
    }
}

/// Adapter exposing a model fitted on max-abs-scaled data in physical units:
/// states are divided by `x_scale` before lifting, the readout is multiplied
/// back, and inputs are divided by `u_scale`, so the controller's weights,
/// bounds, and references all stay in the original units.
#[derive(Debug, Clone)]
pub struct ScaledModel<M: PredictionModel> {
    inner: M,
    x_scale: DVector<f64>,
    u_scale: DVector<f64>,
    c_physical: DMatrix<f64>,
}

impl<M: PredictionModel> ScaledModel<M> {
    pub fn new(inner: M, normalizer: &crate::data::Normalizer) -> Result<Self> {
        if normalizer.x_shift.amax() != 0.0 || normalizer.u_shift.amax() != 0.0 {
            return Err(Error::input(
                "ScaledModel supports pure scaling only (zero shifts)".to_string(),
            ));
        }
        let c_inner = inner.c();
        if c_inner.nrows() != normalizer.x_scale.len() {
            return Err(Error::input(format!(
                "readout has {} rows but the normalizer scales {} state channels",
                c_inner.nrows(),
                normalizer.x_scale.len()
            )));
        }
        let mut c_physical = c_inner.clone();
        for (i, s) in normalizer.x_scale.iter().enumerate() {
            c_physical.row_mut(i).scale_mut(*s);
        }
        Ok(Self {
            inner,
            x_scale: normalizer.x_scale.clone(),
            u_scale: normalizer.u_scale.clone(),
            c_physical,
        })
    }

    fn scale_down_u(&self, u: &DVector<f64>) -> DVector<f64> {
        u.component_div(&self.u_scale)
    }
}

impl<M: PredictionModel> PredictionModel for ScaledModel<M> {
    fn a(&self) -> &DMatrix<f64> {
        self.inner.a()
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c_physical
    }
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn lift_state(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.inner.lift_state(&x.component_div(&self.x_scale))
    }
    fn input_matrices(&self, schedule: &[DVector<f64>]) -> Vec<DMatrix<f64>> {
        let mut mats = self.inner.input_matrices(schedule);
        for b in mats.iter_mut() {
            for (j, s) in self.u_scale.iter().enumerate() {
                b.column_mut(j).scale_mut(1.0 / s);
            }
        }
        mats
    }
    fn lifted_trajectory(&self, z0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let scaled: Vec<DVector<f64>> = inputs.iter().map(|u| self.scale_down_u(u)).collect();
        self.inner.lifted_trajectory(z0, &scaled)
    }
}

/// Condensed QP for one control step: decision variable is the stacked input
/// sequence `U = [u_0; ...; u_{T-1}]`.
pub fn build_qp(
    a: &DMatrix<f64>,
    b_seq: &[DMatrix<f64>],
    c: &DMatrix<f64>,
    problem: &MpcProblem,
    z0: &DVector<f64>,
    reference: &Reference,
) -> Result<Qp> {
    let horizon = problem.horizon;
    if b_seq.len() != horizon {
        return Err(Error::input(format!(
            "expected {horizon} input matrices, got {}",
            b_seq.len()
        )));
    }
    let n_y = c.nrows();
    let n_u = b_seq[0].ncols();
    problem.validate(n_y, n_u)?;

    // free response in output space: rows of c_h are C A^i z0, i = 1..T
    let mut c_pow = Vec::with_capacity(horizon); // C A^k, k = 0..T-1
    c_pow.push(c.clone());
    for k in 1..horizon {
        let next = &c_pow[k - 1] * a;
        c_pow.push(next);
    }
    let mut free = DVector::zeros(horizon * n_y);
    let mut z_pow = a * z0; // A^{i} z0
    for i in 0..horizon {
        free.rows_mut(i * n_y, n_y).copy_from(&(c * &z_pow));
        if i + 1 < horizon {
            z_pow = a * z_pow;
        }
    }

    // forced response: block (i, j) of G is C A^{i-j-1} B_j (i > j)
    let mut g = DMatrix::zeros(horizon * n_y, horizon * n_u);
    for j in 0..horizon {
        for i in (j + 1)..=horizon {
            let block = &c_pow[i - 1 - j] * &b_seq[j];
            g.view_mut(((i - 1) * n_y, j * n_u), (n_y, n_u)).copy_from(&block);
        }
    }

    // stacked reference and stage weights (terminal weight added at i = T)
    let mut target = DVector::zeros(horizon * n_y);
    for i in 0..horizon {
        target.rows_mut(i * n_y, n_y).copy_from(reference.at(i));
    }
    let weighted = |rows: &DMatrix<f64>| -> DMatrix<f64> {
        // Q-bar * rows, with Q-bar block diagonal
        let mut out = DMatrix::zeros(rows.nrows(), rows.ncols());
        for i in 0..horizon {
            let w = if i + 1 == horizon {
                &problem.q + &problem.q_terminal
            } else {
                problem.q.clone()
            };
            let block = rows.view((i * n_y, 0), (n_y, rows.ncols()));
            out.view_mut((i * n_y, 0), (n_y, rows.ncols()))
                .copy_from(&(w * block));
        }
        out
    };
    let wg = weighted(&g);
    let mut p = g.transpose() * &wg;
    for i in 0..horizon {
        let block = p.view((i * n_u, i * n_u), (n_u, n_u)) + &problem.r;
        p.view_mut((i * n_u, i * n_u), (n_u, n_u)).copy_from(&block);
    }
    p *= 2.0;
    // symmetrize round-off
    let pt = p.transpose();
    p = (&p + &pt) * 0.5;
    let residual = &free - &target;
    let q_lin = (wg.transpose() * residual) * 2.0;

    // constraints: input box rows, then output box rows
    let has_input_box = problem.u_min.is_some() || problem.u_max.is_some();
    let has_state_box = problem.x_min.is_some() || problem.x_max.is_some();
    let n_rows = if has_input_box { horizon * n_u } else { 0 }
        + if has_state_box { horizon * n_y } else { 0 };
    let mut a_con = DMatrix::zeros(n_rows, horizon * n_u);
    let mut l = DVector::from_element(n_rows, f64::NEG_INFINITY);
    let mut u = DVector::from_element(n_rows, f64::INFINITY);
    let mut row = 0;
    if has_input_box {
        for i in 0..horizon * n_u {
            a_con[(row + i, i)] = 1.0;
            let ch = i % n_u;
            if let Some(lo) = &problem.u_min {
                l[row + i] = lo[ch];
            }
            if let Some(hi) = &problem.u_max {
                u[row + i] = hi[ch];
            }
        }
        row += horizon * n_u;
    }
    if has_state_box {
        a_con.view_mut((row, 0), (horizon * n_y, horizon * n_u)).copy_from(&g);
        for i in 0..horizon {
            for ch in 0..n_y {
                let r = row + i * n_y + ch;
                if let Some(lo) = &problem.x_min {
                    l[r] = lo[ch] - free[i * n_y + ch];
                }
                if let Some(hi) = &problem.x_max {
                    u[r] = hi[ch] - free[i * n_y + ch];
                }
            }
        }
    }

    Ok(Qp { p, q: q_lin, a: a_con, l, u })
}

/// Receding-horizon controller with schedule iteration and warm starting.
pub struct Controller<M: PredictionModel> {
    pub model: M,
    pub problem: MpcProblem,
    pub reference: Reference,
    pub settings: SolverSettings,
    schedule: Option<Vec<DVector<f64>>>,
    warm: Option<(DVector<f64>, DVector<f64>)>,
    last_inputs: Option<Vec<DVector<f64>>>,
    consecutive_failures: usize,
}

/// Per-step diagnostics.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The input was held from the previous step because the QP failed.
    pub fallback: bool,
}

impl<M: PredictionModel> Controller<M> {
    pub fn new(model: M, problem: MpcProblem, reference: Reference) -> Self {
        Self {
            model,
            problem,
            reference,
            settings: SolverSettings::standard(),
            schedule: None,
            warm: None,
            last_inputs: None,
            consecutive_failures: 0,
        }
    }

    pub fn set_reference(&mut self, reference: Reference) {
        self.reference = reference;
    }

    /// The input plan from the most recent `step`, if any.
    pub fn last_plan(&self) -> Option<&[DVector<f64>]> {
        self.last_inputs.as_deref()
    }

    fn unstack(&self, u_stacked: &DVector<f64>) -> Vec<DVector<f64>> {
        let n_u = self.model.input_dim();
        (0..self.problem.horizon)
            .map(|i| u_stacked.rows(i * n_u, n_u).into_owned())
            .collect()
    }

    /// Compute the input to apply at the current state.
    pub fn step(&mut self, x: &DVector<f64>) -> Result<(DVector<f64>, StepInfo)> {
        let z0 = self.model.lift_state(x)?;
        let horizon = self.problem.horizon;
        let schedule = match &self.schedule {
            Some(s) => s.clone(),
            // first call: freeze the bilinear term at the current lifted state
            None => vec![z0.clone(); horizon],
        };
        let b_seq = self.model.input_matrices(&schedule);
        let qp = build_qp(
            self.model.a(),
            &b_seq,
            self.model.c(),
            &self.problem,
            &z0,
            &self.reference,
        )?;
        let warm = self.warm.as_ref().map(|(x0, y0)| (x0, y0));
        let solution: Result<QpSolution> = solve_qp(&qp, &self.settings, warm);

        let (inputs, info) = match solution {
            Ok(sol) if sol.converged => {
                self.consecutive_failures = 0;
                self.warm = Some((sol.x.clone(), sol.y.clone()));
                let inputs = self.unstack(&sol.x);
                (
                    inputs,
                    StepInfo {
                        objective: sol.objective,
                        iterations: sol.iterations,
                        converged: true,
                        fallback: false,
                    },
                )
            }
            _ => {
                self.consecutive_failures += 1;
                if self.consecutive_failures >= 2 {
                    return Err(Error::numerical(
                        "MPC aborted: the QP failed on two consecutive steps".to_string(),
                    ));
                }
                // hold the previous plan, shifted by one with the tail held
                let mut inputs = match &self.last_inputs {
                    Some(prev) => {
                        let mut v: Vec<_> = prev.iter().skip(1).cloned().collect();
                        v.push(prev.last().unwrap().clone());
                        v
                    }
                    None => vec![DVector::zeros(self.model.input_dim()); horizon],
                };
                clamp_inputs(&mut inputs, &self.problem);
                (
                    inputs,
                    StepInfo {
                        objective: f64::NAN,
                        iterations: 0,
                        converged: false,
                        fallback: true,
                    },
                )
            }
        };

        // refresh the schedule: simulate under the planned inputs, then shift
        // by one step for the next cycle with the last entry duplicated
        let lifted = self.model.lifted_trajectory(&z0, &inputs)?;
        let mut next_schedule: Vec<DVector<f64>> = lifted[1..horizon.min(lifted.len() - 1) + 1].to_vec();
        while next_schedule.len() < horizon {
            next_schedule.push(next_schedule.last().unwrap_or(&z0).clone());
        }
        self.schedule = Some(next_schedule);

        let u0 = inputs[0].clone();
        self.last_inputs = Some(inputs);
        Ok((u0, info))
    }
}

fn clamp_inputs(inputs: &mut [DVector<f64>], problem: &MpcProblem) {
    for u in inputs.iter_mut() {
        for ch in 0..u.len() {
            if let Some(lo) = &problem.u_min {
                u[ch] = u[ch].max(lo[ch]);
            }
            if let Some(hi) = &problem.u_max {
                u[ch] = u[ch].min(hi[ch]);
            }
        }
    }
}

/// Closed-loop record. `states` has one more entry than `inputs`.
#[derive(Debug, Clone)]
pub struct ClosedLoopLog {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub step_info: Vec<StepInfo>,
    /// Set when the loop stopped early (QP abort or plant divergence).
    pub failed: bool,
    pub failure_reason: Option<String>,
}

impl ClosedLoopLog {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("log always holds the initial state")
    }
}

/// Run the controller against the continuous-time plant with zero-order-hold
/// inputs. Stops early with the failure flag set instead of erroring, so
/// partial logs stay inspectable.
pub fn closed_loop<M: PredictionModel>(
    controller: &mut Controller<M>,
    ode: &ControlAffineOde,
    x0: &DVector<f64>,
    duration: f64,
    cfg: &SimConfig,
    mut reference_schedule: Option<&mut dyn FnMut(f64) -> Reference>,
) -> Result<ClosedLoopLog> {
    if !(duration > 0.0) {
        return Err(Error::input("closed-loop duration must be positive".to_string()));
    }
    let steps = (duration / cfg.ts).round() as usize;
    let mut log = ClosedLoopLog {
        times: vec![0.0],
        states: vec![x0.clone()],
        inputs: Vec::with_capacity(steps),
        step_info: Vec::with_capacity(steps),
        failed: false,
        failure_reason: None,
    };
    let mut x = x0.clone();
    for k in 0..steps {
        let t = k as f64 * cfg.ts;
        if let Some(sched) = reference_schedule.as_mut() {
            controller.set_reference(sched(t));
        }
        let (u, info) = match controller.step(&x) {
            Ok(pair) => pair,
            Err(e) => {
                log.failed = true;
                log.failure_reason = Some(format!("controller: {e}"));
                return Ok(log);
            }
        };
        let plant = match simulate(ode, &x, std::slice::from_ref(&u), cfg) {
            Ok(traj) => traj,
            Err(e) => {
                log.failed = true;
                log.failure_reason = Some(format!("plant: {e}"));
                return Ok(log);
            }
        };
        x = plant[1].clone();
        log.inputs.push(u);
        log.step_info.push(info);
        log.states.push(x.clone());
        log.times.push((k + 1) as f64 * cfg.ts);
    }
    Ok(log)
}

/// Baseline: MPC on the Jacobian linearization of the plant about
/// `(x_eq, u = 0)`, discretized consistently with the RK4 integrator (exact
/// 4th-order series of the matrix exponential under zero-order hold).
pub fn lmpc_baseline(
    ode: &ControlAffineOde,
    x_eq: &DVector<f64>,
    ts: f64,
    problem: MpcProblem,
    reference: Reference,
) -> Result<Controller<LtiModel>> {
    let n_x = ode.n_x;
    let u0 = DVector::zeros(ode.n_u);
    let eps = 1e-6;
    let mut a_c = DMatrix::zeros(n_x, n_x);
    for j in 0..n_x {
        let mut hi = x_eq.clone();
        let mut lo = x_eq.clone();
        hi[j] += eps;
        lo[j] -= eps;
        let col = (ode.rhs(&hi, &u0) - ode.rhs(&lo, &u0)) / (2.0 * eps);
        a_c.column_mut(j).copy_from(&col);
    }
    let b_c = ode.input_matrix(x_eq);

    // RK4 of an LTI system under ZOH: A_d = sum_{k<=4} (ts A)^k / k!,
    // B_d = ts (I + ts A / 2 + ... ) B with matching truncation
    let h = ts;
    let eye = DMatrix::identity(n_x, n_x);
    let ha = &a_c * h;
    let ha2 = &ha * &ha;
    let ha3 = &ha2 * &ha;
    let ha4 = &ha3 * &ha;
    let a_d = &eye + &ha + &ha2 / 2.0 + &ha3 / 6.0 + &ha4 / 24.0;
    let b_d = (&eye * h + &a_c * (h * h / 2.0) + &a_c * &a_c * (h * h * h / 6.0)
        + &a_c * &a_c * &a_c * (h * h * h * h / 24.0))
        * &b_c;
    let model = LtiModel {
        a_d,
        b_d,
        c: DMatrix::identity(n_x, n_x),
    };
    Ok(Controller::new(model, problem, reference))
}
