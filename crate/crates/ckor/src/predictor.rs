//! Multi-step prediction: the lifted rollout recursion, the explicit bilinear
//! realization with control channels, and LPV input matrices along a
//! scheduling sequence.

use nalgebra::{DMatrix, DVector};

use crate::estimator::{BedmdcModel, CkorModel, ReducedModel};
use crate::kernel::{CompositeControlKernel, KernelSpec};
use crate::{Error, Result};

/// Lifted-state magnitude beyond which a rollout is declared diverged.
pub const ROLLOUT_DIVERGENCE_LIMIT: f64 = 1e12;

/// Result of a multi-step rollout. Row `k` of `outputs` is the prediction for
/// step `k + 1`, i.e. it is aligned with the plant state `x_{k+1}`.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub outputs: DMatrix<f64>,
    /// Final lifted state (useful for warm-started continuation).
    pub z_final: DVector<f64>,
}

fn check_lifted(z: &DVector<f64>, step: usize) -> Result<()> {
    let worst = z.amax();
    if !worst.is_finite() || worst > ROLLOUT_DIVERGENCE_LIMIT {
        return Err(Error::Prediction {
            step,
            message: format!("lifted state magnitude {worst:e} exceeds {ROLLOUT_DIVERGENCE_LIMIT:e}"),
        });
    }
    Ok(())
}

impl CkorModel {
    /// Roll the model forward for `inputs.len()` steps from `x0`.
    ///
    /// The first lifted state is `z(x0, u_0)`, so its readout already predicts
    /// `x_1`; the remaining inputs drive the lifted recursion
    /// `z_{k+1} = (1 + k_U(u_k)) .* (A z_k)`.
    pub fn rollout(&self, x0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Rollout> {
        if inputs.is_empty() {
            return Err(Error::input("rollout needs at least one input".to_string()));
        }
        let n_u = self.u_anchors.ncols();
        for (k, u) in inputs.iter().enumerate() {
            if u.len() != n_u {
                return Err(Error::input(format!(
                    "input {k} has dimension {}, model expects {n_u}",
                    u.len()
                )));
            }
        }
        let kernel = self.kernel();
        let mut z = kernel.lift(x0.as_slice(), inputs[0].as_slice(), &self.x_anchors, &self.u_anchors)?;
        check_lifted(&z, 0)?;
        let horizon = inputs.len();
        let n_y = self.c.nrows();
        let mut outputs = DMatrix::zeros(horizon, n_y);
        outputs.row_mut(0).copy_from(&(&self.c * &z).transpose());
        for k in 1..horizon {
            z = advance_lifted(&self.a, &kernel, &self.u_anchors, &z, &inputs[k])?;
            check_lifted(&z, k)?;
            outputs.row_mut(k).copy_from(&(&self.c * &z).transpose());
        }
        Ok(Rollout { outputs, z_final: z })
    }
}

/// One lifted step `z_+ = (1 + k_U(u)) .* (A z)` for any control kernel.
fn advance_lifted(
    a: &DMatrix<f64>,
    kernel: &CompositeControlKernel,
    u_anchors: &DMatrix<f64>,
    z: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let ku = kernel.control_kernel.vector(u.as_slice(), u_anchors)?;
    let mut next = a * z;
    for i in 0..next.len() {
        next[i] *= 1.0 + ku[i];
    }
    Ok(next)
}

/// Explicit bilinear realization `z_+ = A z + sum_i u_i B_i z`, `y = C z`,
/// shared by the full, sketched, and POD-reduced models. This is the form the
/// MPC layer consumes.
#[derive(Debug, Clone)]
pub struct BilinearModel {
    pub a: DMatrix<f64>,
    pub channels: Vec<DMatrix<f64>>,
    pub c: DMatrix<f64>,
    lifting: Lifting,
}

#[derive(Debug, Clone)]
struct Lifting {
    state_kernel: KernelSpec,
    x_anchors: DMatrix<f64>,
    /// Optional POD projection, N x r.
    projection: Option<DMatrix<f64>>,
}

impl BilinearModel {
    pub fn lifted_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.channels.len()
    }

    /// Lift a plant state: `z(x, 0)` projected if the model is reduced. With
    /// the linear control kernel the `u`-dependence of the lifting is exactly
    /// the channel term, so `u = 0` is the canonical lift.
    pub fn lift_state(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let z = self
            .lifting
            .state_kernel
            .vector(x.as_slice(), &self.lifting.x_anchors)?;
        Ok(match &self.lifting.projection {
            Some(v_r) => v_r.transpose() * z,
            None => z,
        })
    }

    /// LPV input matrix at one scheduling point: `B(p) = [B_1 p | ... | B_m p]`.
    pub fn input_matrix(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let n = self.lifted_dim();
        let mut b = DMatrix::zeros(n, self.input_dim());
        for (i, ch) in self.channels.iter().enumerate() {
            b.column_mut(i).copy_from(&(ch * p));
        }
        b
    }

    /// One bilinear step.
    pub fn step(&self, z: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut next = &self.a * z;
        for (i, ch) in self.channels.iter().enumerate() {
            next += (ch * z) * u[i];
        }
        next
    }

    /// Lifted trajectory `z_0 .. z_{H}` under the given inputs.
    pub fn simulate_lifted(&self, z0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let mut traj = Vec::with_capacity(inputs.len() + 1);
        traj.push(z0.clone());
        for (k, u) in inputs.iter().enumerate() {
            let next = self.step(traj.last().unwrap(), u);
            check_lifted(&next, k + 1)?;
            traj.push(next);
        }
        Ok(traj)
    }

}

impl CkorModel {
    /// Extract the bilinear realization (linear control kernel only).
    pub fn bilinear(&self) -> Result<BilinearModel> {
        let channels = self.control_channels()?;
        Ok(BilinearModel {
            a: self.a.clone(),
            channels,
            c: self.c.clone(),
            lifting: Lifting {
                state_kernel: self.state_kernel.clone(),
                x_anchors: self.x_anchors.clone(),
                projection: None,
            },
        })
    }
}

impl ReducedModel {
    pub fn bilinear(&self) -> BilinearModel {
        BilinearModel {
            a: self.a_r.clone(),
            channels: self.b_r.clone(),
            c: self.c_r.clone(),
            lifting: Lifting {
                state_kernel: self.state_kernel.clone(),
                x_anchors: self.x_anchors.clone(),
                projection: Some(self.v_r.clone()),
            },
        }
    }

    /// Reduced-space rollout with the usual alignment (row `k` predicts
    /// `x_{k+1}`). The first lifted state projects the composite lift
    /// `z(x0, u_0)`; later steps use the reduced bilinear recursion.
    pub fn rollout(&self, x0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Rollout> {
        if inputs.is_empty() {
            return Err(Error::input("rollout needs at least one input".to_string()));
        }
        let kernel = CompositeControlKernel::new(self.state_kernel.clone(), self.control_kernel.clone());
        let z_full = kernel.lift(x0.as_slice(), inputs[0].as_slice(), &self.x_anchors, &self.u_anchors)?;
        let mut z = self.v_r.transpose() * z_full;
        check_lifted(&z, 0)?;
        let horizon = inputs.len();
        let n_y = self.c_r.nrows();
        let mut outputs = DMatrix::zeros(horizon, n_y);
        outputs.row_mut(0).copy_from(&(&self.c_r * &z).transpose());
        for k in 1..horizon {
            let mut next = &self.a_r * &z;
            for (i, b) in self.b_r.iter().enumerate() {
                next += (b * &z) * inputs[k][i];
            }
            z = next;
            check_lifted(&z, k)?;
            outputs.row_mut(k).copy_from(&(&self.c_r * &z).transpose());
        }
        Ok(Rollout { outputs, z_final: z })
    }
}

impl BedmdcModel {
    /// Dictionary-space rollout: `psi_{k+1} = W [psi_k; u_k (x) psi_k]`,
    /// `y_{k+1} = C psi_{k+1}`; same alignment as the kernel models.
    pub fn rollout(&self, x0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Rollout> {
        if inputs.is_empty() {
            return Err(Error::input("rollout needs at least one input".to_string()));
        }
        let m = self.lifted_dim();
        let mut psi = self.state_kernel.vector(x0.as_slice(), &self.centers)?;
        let horizon = inputs.len();
        let n_y = self.c.nrows();
        let mut outputs = DMatrix::zeros(horizon, n_y);
        let mut phi = DVector::zeros(m * (self.n_u + 1));
        for (k, u) in inputs.iter().enumerate() {
            if u.len() != self.n_u {
                return Err(Error::input(format!(
                    "input {k} has dimension {}, model expects {}",
                    u.len(),
                    self.n_u
                )));
            }
            phi.rows_mut(0, m).copy_from(&psi);
            for ch in 0..self.n_u {
                for j in 0..m {
                    phi[(ch + 1) * m + j] = u[ch] * psi[j];
                }
            }
            psi = &self.operator * &phi;
            check_lifted(&psi, k + 1)?;
            outputs.row_mut(k).copy_from(&(&self.c * &psi).transpose());
        }
        Ok(Rollout { outputs, z_final: psi })
    }
}
