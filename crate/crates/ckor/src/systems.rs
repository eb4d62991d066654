//! Reference nonlinear benchmark systems, RK4 integration with zero-order-hold
//! inputs, and snapshot data generation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::SnapshotDataset;
use crate::{Error, Result};

const DIVERGENCE_LIMIT: f64 = 1e6;

type DriftFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type InputMapFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Control-affine ODE `xdot = f(x) + g(x) u`.
pub struct ControlAffineOde {
    pub n_x: usize,
    pub n_u: usize,
    drift: Box<DriftFn>,
    input_map: Box<InputMapFn>,
}

impl ControlAffineOde {
    pub fn new(
        n_x: usize,
        n_u: usize,
        drift: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        input_map: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n_x,
            n_u,
            drift: Box::new(drift),
            input_map: Box::new(input_map),
        }
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(x)
    }

    pub fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.input_map)(x)
    }

    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.drift(x) + self.input_matrix(x) * u
    }
}

///// Controlled damped Duffing oscillator:
/// `xdot = [x2; x1 - x1^3 - 0.5 x2] + [0; 2 + sin(x1)] u`.
pub fn duffing() -> ControlAffineOde {
    ControlAffineOde::new(
        2,
        1,
        |x| DVector::from_vec(vec![x[1], x[0] - x[0].powi(3) - 0.5 * x[1]]),
        |x| DMatrix::from_column_slice(2, 1, &[0.0, 2.0 + x[0].sin()]),
    )
}

/// Van der Pol oscillator with linearly uncontrollable origin:
/// `xdot = [x2; -x1 - 0.5 x2 (1 - x1^2)] + [0; x1] u`.
pub fn van_der_pol() -> ControlAffineOde {
    ControlAffineOde::new(
        2,
        1,
        |x| DVector::from_vec(vec![x[1], -x[0] - 0.5 * x[1] * (1.0 - x[0] * x[0])]),
        |x| DMatrix::from_column_slice(2, 1, &[0.0, x[0]]),
    )
}

/// Sampling and integration settings.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Sample period in seconds.
    pub ts: f64,
    /// RK4 substeps per sample interval.
    pub substeps: usize,
    /// Declared per-channel input bounds; exceeding them warns, never errors.
    pub input_bounds: Option<Vec<(f64, f64)>>,
}

impl SimConfig {
    pub fn new(ts: f64) -> Self {
        Self {
            ts,
            substeps: 1,
            input_bounds: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0) {
            return Err(Error::input(format!("sample period must be positive, got {}", self.ts)));
        }
        if self.substeps == 0 {
            return Err(Error::input("substeps must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// One classical 4-stage Runge-Kutta update with the input frozen over the step.
pub fn rk4_step(
    ode: &ControlAffineOde,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    if !(h > 0.0) {
        return Err(Error::input(format!("step size must be positive, got {h}")));
    }
    let k1 = ode.rhs(x, u);
    let k2 = ode.rhs(&(x + &k1 * (h / 2.0)), u);
    let k3 = ode.rhs(&(x + &k2 * (h / 2.0)), u);
    let k4 = ode.rhs(&(x + &k3 * h), u);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Simulation {
            step: 0,
            message: "RK4 step produced a non-finite state".to_string(),
        });
    }
    Ok(next)
}

/// Simulate under a zero-order-hold input sequence; returns states at the
/// sample instants (`inputs.len() + 1` of them).
pub fn simulate(
    ode: &ControlAffineOde,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
    cfg: &SimConfig,
) -> Result<Vec<DVector<f64>>> {
    cfg.validate()?;
    if let Some(bounds) = &cfg.input_bounds {
        let exceeded = inputs.iter().any(|u| {
            u.iter()
                .zip(bounds)
                .any(|(v, (lo, hi))| *v < *lo || *v > *hi)
        });
        if exceeded {
            eprintln!("warning: input sequence exceeds declared bounds");
        }
    }
    let h = cfg.ts / cfg.substeps as f64;
    let mut trajectory = Vec::with_capacity(inputs.len() + 1);
    trajectory.push(x0.clone());
    let mut x = x0.clone();
    for (k, u) in inputs.iter().enumerate() {
        for _ in 0..cfg.substeps {
            x = rk4_step(ode, &x, u, h).map_err(|e| match e {
                Error::Simulation { message, .. } => Error::Simulation { step: k, message },
                other => other,
            })?;
        }
        if x.amax() > DIVERGENCE_LIMIT {
            return Err(Error::Simulation {
                step: k,
                message: format!("state diverged (max abs {:.3e})", x.amax()),
            });
        }
        trajectory.push(x.clone());
    }
    Ok(trajectory)
}

/// Initial-condition layouts for data generation.
#[derive(Debug, Clone)]
pub enum InitialConditions {
    /// Cartesian grid with `points_per_dim` samples per dimension, spanning
    /// `[-limit, limit]` in each dimension.
    Grid { points_per_dim: usize, limits: Vec<f64> },
    /// `count` draws uniform in `[-limit, limit]` per dimension.
    Random { count: usize, limits: Vec<f64> },
}

impl InitialConditions {
    /// Expand this specification into concrete initial states. Random
    /// specifications draw from `rng`; grids ignore it.
    pub fn materialize(&self, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        match self {
            InitialConditions::Grid { points_per_dim, limits } => {
                let p = *points_per_dim;
                let dims = limits.len();
                let total = p.pow(dims as u32);
                (0..total)
                    .map(|mut idx| {
                        let mut coords = Vec::with_capacity(dims);
                        for &limit in limits {
                            let i = idx % p;
                            idx /= p;
                            let v = if p == 1 {
                                0.0
                            } else {
                                -limit + 2.0 * limit * i as f64 / (p - 1) as f64
                            };
                            coords.push(v);
                        }
                        DVector::from_vec(coords)
                    })
                    .collect()
            }
            InitialConditions::Random { count, limits } => (0..*count)
                .map(|_| {
                    DVector::from_iterator(
                        limits.len(),
                        limits.iter().map(|&l| rng.random_range(-l..=l)),
                    )
                })
                .collect(),
        }
    }
}

/// Input excitation laws for data generation.
pub enum InputLaw<'a> {
    /// Independent uniform draws per step and channel.
    UniformRandom { lo: f64, hi: f64 },
    /// `u_k = amplitude * sin(2 pi freq_hz * k * ts)` on every channel.
    Sine { amplitude: f64, freq_hz: f64 },
    /// Explicit per-step signal, reused for every trajectory.
    Signal(&'a [DVector<f64>]),
    /// State feedback plus optional uniform exploration noise.
    Feedback {
        law: &'a (dyn Fn(&DVector<f64>) -> DVector<f64> + Sync),
        noise: Option<(f64, f64)>,
    },
}

impl InputLaw<'_> {
    fn input_at(
        &self,
        k: usize,
        x: &DVector<f64>,
        n_u: usize,
        ts: f64,
        rng: &mut ChaCha8Rng,
    ) -> DVector<f64> {
        match self {
            InputLaw::UniformRandom { lo, hi } => {
                DVector::from_fn(n_u, |_, _| rng.random_range(*lo..*hi))
            }
            InputLaw::Sine { amplitude, freq_hz } => {
                let v = amplitude * (2.0 * std::f64::consts::PI * freq_hz * k as f64 * ts).sin();
                DVector::from_element(n_u, v)
            }
            InputLaw::Signal(seq) => seq[k % seq.len()].clone(),
            InputLaw::Feedback { law, noise } => {
                let mut u = law(x);
                if let Some((lo, hi)) = noise {
                    for v in u.iter_mut() {
                        *v += rng.random_range(*lo..*hi);
                    }
                }
                u
            }
        }
    }
}

/// Generate snapshot triples `(x_k, u_k, x_{k+1})` over a family of
/// trajectories. Each trajectory is deterministic from `(seed, index)`;
/// segment lengths are recorded.
pub fn generate_snapshots(
    ode: &ControlAffineOde,
    ics: &InitialConditions,
    law: &InputLaw,
    steps_per_trajectory: usize,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SnapshotDataset> {
    cfg.validate()?;
    if steps_per_trajectory == 0 {
        return Err(Error::input("trajectories need at least one step".to_string()));
    }
    let mut ic_rng = ChaCha8Rng::seed_from_u64(seed);
    ic_rng.set_stream(u64::MAX);
    let initial_states = ics.materialize(&mut ic_rng);
    if initial_states.is_empty() {
        return Err(Error::input("no initial conditions specified".to_string()));
    }

    let results: Vec<Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)>> =
        crate::map_indexed(initial_states.len(), |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let mut states = Vec::with_capacity(steps_per_trajectory + 1);
            let mut inputs = Vec::with_capacity(steps_per_trajectory);
            let mut x = initial_states[t].clone();
            states.push(x.clone());
            let h = cfg.ts / cfg.substeps as f64;
            for k in 0..steps_per_trajectory {
                let u = law.input_at(k, &x, ode.n_u, cfg.ts, &mut rng);
                for _ in 0..cfg.substeps {
                    x = rk4_step(ode, &x, &u, h).map_err(|e| match e {
                        Error::Simulation { message, .. } => Error::Simulation {
                            step: k,
                            message: format!("trajectory {t}: {message}"),
                        },
                        other => other,
                    })?;
                }
                if x.amax() > DIVERGENCE_LIMIT {
                    return Err(Error::Simulation {
                        step: k,
                        message: format!("trajectory {t} diverged (max abs {:.3e})", x.amax()),
                    });
                }
                inputs.push(u);
                states.push(x.clone());
            }
            Ok((states, inputs))
        });

    let n = initial_states.len() * steps_per_trajectory;
    let mut x = DMatrix::zeros(n, ode.n_x);
    let mut u = DMatrix::zeros(n, ode.n_u);
    let mut x_plus = DMatrix::zeros(n, ode.n_x);
    let mut segments = Vec::with_capacity(initial_states.len());
    let mut row = 0;
    for result in results {
        let (states, inputs) = result?;
        for k in 0..inputs.len() {
            x.row_mut(row).copy_from(&states[k].transpose());
            u.row_mut(row).copy_from(&inputs[k].transpose());
            x_plus.row_mut(row).copy_from(&states[k + 1].transpose());
            row += 1;
        }
        segments.push(inputs.len());
    }
    SnapshotDataset::new(x, u, x_plus, Some(segments))
}
