//! Model fitting: full cKOR, Nystrom-sketched Ny-cKOR, the bilinear EDMD
//! baseline, and POD reduction of the lifted dynamics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::{InducingSet, SnapshotDataset};
use crate::kernel::{CompositeControlKernel, KernelSpec};
use crate::numerics::{self, DEFAULT_PINV_RTOL};
use crate::{Error, Result};

/// Observable selector for the readout regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observable {
    /// `y = id`: the readout reconstructs the full state.
    FullState,
    /// A subset of state coordinates (zero-based).
    Coordinates(Vec<usize>),
}

impl Observable {
    /// Evaluate the observable on each row of `states`.
    pub fn values(&self, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Observable::FullState => Ok(states.clone()),
            Observable::Coordinates(idx) => {
                for &j in idx {
                    if j >= states.ncols() {
                        return Err(Error::input(format!(
                            "observable coordinate {j} out of range for state dimension {}",
                            states.ncols()
                        )));
                    }
                }
                Ok(DMatrix::from_fn(states.nrows(), idx.len(), |i, k| {
                    states[(i, idx[k])]
                }))
            }
        }
    }
}

/// Whether a model was fitted on all data or on a Nystrom sketch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelFlavor {
    Full,
    Nystrom,
}

/// Reusable form of the fit-time regression solve, so new observables can be
/// read out without refitting (the transition matrix is unaffected).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReadoutSolve {
    /// Lower Cholesky factor of `K_Z + n gamma I` (full cKOR).
    CholeskyFactor(DMatrix<f64>),
    /// Explicit solve matrix (Ny-cKOR's regularized sketched solve).
    Explicit(DMatrix<f64>),
}

impl ReadoutSolve {
    /// Apply the stored solve to anchor-evaluated observable values.
    pub fn solve(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            ReadoutSolve::CholeskyFactor(l) => {
                let mut w = y.clone();
                l.solve_lower_triangular_mut(&mut w);
                l.transpose().solve_upper_triangular_mut(&mut w);
                w
            }
            ReadoutSolve::Explicit(m) => m * y,
        }
    }

    /// Number of observable-value rows the solve expects (one per
    /// successor anchor).
    pub fn input_rows(&self) -> usize {
        match self {
            ReadoutSolve::CholeskyFactor(l) => l.nrows(),
            ReadoutSolve::Explicit(m) => m.ncols(),
        }
    }
}

/// Fitted finite-dimensional predictor with kernel lifting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkorModel {
    pub state_kernel: KernelSpec,
    pub control_kernel: KernelSpec,
    pub gamma: f64,
    pub flavor: ModelFlavor,
    /// Lifting anchors (training points for Full, inducing points for Nystrom).
    pub x_anchors: DMatrix<f64>,
    pub u_anchors: DMatrix<f64>,
    /// Successor anchors; new observables are evaluated here for readout.
    pub x_plus_anchors: DMatrix<f64>,
    /// Transition matrix, N x N.
    pub a: DMatrix<f64>,
    /// Readout, n_y x N.
    pub c: DMatrix<f64>,
    pub observable: Observable,
    pub readout_solve: ReadoutSolve,
}

impl CkorModel {
    pub fn lifted_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn kernel(&self) -> CompositeControlKernel {
        CompositeControlKernel::new(self.state_kernel.clone(), self.control_kernel.clone())
    }

    /// Bilinear control channels `B_i = diag(U e_i) A` (linear control kernel only).
    pub fn control_channels(&self) -> Result<Vec<DMatrix<f64>>> {
        if self.control_kernel != KernelSpec::Linear {
            return Err(Error::Unsupported(
                "explicit control channels require the linear control kernel".to_string(),
            ));
        }
        let n = self.lifted_dim();
        Ok((0..self.u_anchors.ncols())
            .map(|i| {
                let mut b = self.a.clone();
                for row in 0..n {
                    let w = self.u_anchors[(row, i)];
                    b.row_mut(row).scale_mut(w);
                }
                b
            })
            .collect())
    }

    /// Swap in a new observable through the stored fit-time solve; the
    /// transition matrix is reused as-is.
    ///
    /// `y_at_successor_anchors` holds the observable evaluated on the rows of
    /// `x_plus_anchors` (N x n_y).
    pub fn with_observable_values(&self, y_at_successor_anchors: &DMatrix<f64>) -> Result<CkorModel> {
        if y_at_successor_anchors.nrows() != self.readout_solve.input_rows() {
            return Err(Error::input(format!(
                "observable values have {} rows, expected {}",
                y_at_successor_anchors.nrows(),
                self.readout_solve.input_rows()
            )));
        }
        let mut model = self.clone();
        model.c = self.readout_solve.solve(y_at_successor_anchors).transpose();
        Ok(model)
    }
}

/// Fit the full cKOR estimator on every snapshot.
pub fn fit_ckor(
    ds: &SnapshotDataset,
    state_kernel: KernelSpec,
    control_kernel: KernelSpec,
    gamma: f64,
    observable: Observable,
) -> Result<CkorModel> {
    if !(gamma > 0.0) {
        return Err(Error::input(format!("gamma must be positive, got {gamma}")));
    }
    let n = ds.len();
    let kernel = CompositeControlKernel::new(state_kernel.clone(), control_kernel.clone());
    let k_z = kernel.gram_self(&ds.x, &ds.u)?;
    let k_plus = state_kernel.gram(&ds.x_plus, &ds.x)?;
    let y_plus = observable.values(&ds.x_plus)?;
    let n_y = y_plus.ncols();

    // one factorization for both right-hand sides [K_+ | Y_+]
    let chol = numerics::ridge_factorize(&k_z, n as f64 * gamma)?;
    let mut rhs = DMatrix::zeros(n, n + n_y);
    rhs.view_mut((0, 0), (n, n)).copy_from(&k_plus);
    rhs.view_mut((0, n), (n, n_y)).copy_from(&y_plus);
    let solved = chol.solve(&rhs);
    let a = solved.view((0, 0), (n, n)).transpose();
    let c = solved.view((0, n), (n, n_y)).transpose();

    Ok(CkorModel {
        state_kernel,
        control_kernel,
        gamma,
        flavor: ModelFlavor::Full,
        x_anchors: ds.x.clone(),
        u_anchors: ds.u.clone(),
        x_plus_anchors: ds.x_plus.clone(),
        a,
        c,
        observable,
        readout_solve: ReadoutSolve::CholeskyFactor(chol.l()),
    })
}

/// Fit the Nystrom-sketched estimator on `m` inducing points.
pub fn fit_ny_ckor(
    ds: &SnapshotDataset,
    inducing: &InducingSet,
    state_kernel: KernelSpec,
    control_kernel: KernelSpec,
    gamma: f64,
    observable: Observable,
) -> Result<CkorModel> {
    fit_ny_ckor_with_rtol(
        ds,
        inducing,
        state_kernel,
        control_kernel,
        gamma,
        observable,
        DEFAULT_PINV_RTOL,
    )
}

/// [`fit_ny_ckor`] with an explicit pseudoinverse truncation tolerance.
///
/// The sketched normal equations invert two anchor Grams whose spectra decay
/// quickly for smooth kernels; raising `pinv_rtol` truncates the noisy tail
/// and acts as an extra regularizer for long-horizon stability.
pub fn fit_ny_ckor_with_rtol(
    ds: &SnapshotDataset,
    inducing: &InducingSet,
    state_kernel: KernelSpec,
    control_kernel: KernelSpec,
    gamma: f64,
    observable: Observable,
    pinv_rtol: f64,
) -> Result<CkorModel> {
    if !(gamma > 0.0) {
        return Err(Error::input(format!("gamma must be positive, got {gamma}")));
    }
    if inducing.is_empty() {
        return Err(Error::input("inducing set is empty".to_string()));
    }
    let n = ds.len() as f64;
    let kernel = CompositeControlKernel::new(state_kernel.clone(), control_kernel.clone());

    let k_ztilde = kernel.gram_self(&inducing.x, &inducing.u)?;
    let k_z_cross = kernel.gram(&ds.x, &ds.u, &inducing.x, &inducing.u)?; // n x m
    // successor-to-anchor Gram: the Nystrom analogue of K_+ in the full fit,
    // regressed on every snapshot rather than the inducing subset only
    let k_plus_hat = state_kernel.gram(&ds.x_plus, &inducing.x)?; // n x m

    let h = k_z_cross.transpose() * &k_z_cross + &k_ztilde * (n * gamma);
    let solve = numerics::pinv(&h, pinv_rtol)? * k_z_cross.transpose(); // m x n

    let a = (&solve * &k_plus_hat).transpose();
    let y_plus = observable.values(&ds.x_plus)?;
    let c = (&solve * &y_plus).transpose();

    Ok(CkorModel {
        state_kernel,
        control_kernel,
        gamma,
        flavor: ModelFlavor::Nystrom,
        x_anchors: inducing.x.clone(),
        u_anchors: inducing.u.clone(),
        x_plus_anchors: ds.x_plus.clone(),
        a,
        c,
        observable,
        readout_solve: ReadoutSolve::Explicit(solve),
    })
}

/// Bilinear EDMD baseline over the dictionary `psi(x) = [k_X(x, c_j)]_j` and
/// explicit regressors `psi(x) (x) [1; u]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BedmdcModel {
    pub state_kernel: KernelSpec,
    pub centers: DMatrix<f64>,
    pub n_u: usize,
    /// Stacked operator, n_z x n_z (n_u + 1).
    pub operator: DMatrix<f64>,
    /// Readout, n_y x n_z.
    pub c: DMatrix<f64>,
    pub gamma: f64,
    pub observable: Observable,
}

impl BedmdcModel {
    pub fn lifted_dim(&self) -> usize {
        self.operator.nrows()
    }
}

/// Fit the bEDMDc baseline with the given dictionary centers.
pub fn fit_bedmdc(
    ds: &SnapshotDataset,
    centers: &InducingSet,
    state_kernel: KernelSpec,
    gamma: f64,
    observable: Observable,
) -> Result<BedmdcModel> {
    if !(gamma > 0.0) {
        return Err(Error::input(format!("gamma must be positive, got {gamma}")));
    }
    let n = ds.len();
    let m = centers.len();
    let n_u = ds.input_dim();
    let width = m * (n_u + 1);

    let psi = state_kernel.gram(&ds.x, &centers.x)?; // n x m
    let psi_plus = state_kernel.gram(&ds.x_plus, &centers.x)?; // n x m

    // regressors psi tensor [1; u]: blocks [psi, u_1 .* psi, ..., u_nu .* psi]
    let mut phi = DMatrix::zeros(n, width);
    phi.view_mut((0, 0), (n, m)).copy_from(&psi);
    for ch in 0..n_u {
        for i in 0..n {
            let w = ds.u[(i, ch)];
            for j in 0..m {
                phi[(i, (ch + 1) * m + j)] = w * psi[(i, j)];
            }
        }
    }

    let mut gram = phi.transpose() * &phi;
    // mirror to remove round-off asymmetry before the SPD solve
    for i in 0..width {
        for j in (i + 1)..width {
            let v = 0.5 * (gram[(i, j)] + gram[(j, i)]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let rhs = phi.transpose() * &psi_plus;
    let weights = numerics::ridge_solve(&gram, &rhs, n as f64 * gamma)?;
    let operator = weights.transpose(); // m x m(n_u+1)

    // readout regression on the training states
    let y = observable.values(&ds.x)?;
    let mut psi_gram = psi.transpose() * &psi;
    for i in 0..m {
        for j in (i + 1)..m {
            let v = 0.5 * (psi_gram[(i, j)] + psi_gram[(j, i)]);
            psi_gram[(i, j)] = v;
            psi_gram[(j, i)] = v;
        }
    }
    let c = numerics::ridge_solve(&psi_gram, &(psi.transpose() * &y), n as f64 * gamma)?
        .transpose();

    Ok(BedmdcModel {
        state_kernel,
        centers: centers.x.clone(),
        n_u,
        operator,
        c,
        gamma,
        observable,
    })
}

/// POD truncation target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PodCriterion {
    /// Smallest rank whose cumulative squared-singular-value energy reaches
    /// this percentage.
    Energy(f64),
    /// Fixed rank.
    Rank(usize),
}

/// POD-projected bilinear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub state_kernel: KernelSpec,
    pub control_kernel: KernelSpec,
    /// POD modes of the anchor self-Gram, N x r.
    pub v_r: DMatrix<f64>,
    pub a_r: DMatrix<f64>,
    pub b_r: Vec<DMatrix<f64>>,
    pub c_r: DMatrix<f64>,
    pub x_anchors: DMatrix<f64>,
    pub u_anchors: DMatrix<f64>,
    pub parent_flavor: ModelFlavor,
}

impl ReducedModel {
    pub fn rank(&self) -> usize {
        self.v_r.ncols()
    }
}

/// Project a fitted model onto its dominant POD modes: the truncated SVD of
/// the anchor self-Gram supplies `V_r`, and the bilinear matrices are
/// projected as `V_r^T A V_r`, `V_r^T B_i V_r`, `C V_r`.
pub fn pod_reduce(model: &CkorModel, criterion: PodCriterion) -> Result<ReducedModel> {
    let channels = model.control_channels()?; // also checks linear control kernel
    let k_anchor = model.kernel().gram_self(&model.x_anchors, &model.u_anchors)?;
    let tsvd = match criterion {
        PodCriterion::Energy(tau) => numerics::truncated_svd(&k_anchor, tau)?,
        PodCriterion::Rank(r) => {
            if r == 0 || r > model.lifted_dim() {
                return Err(Error::input(format!(
                    "reduction rank must lie in 1..={}, got {r}",
                    model.lifted_dim()
                )));
            }
            let full = numerics::truncated_svd(&k_anchor, 100.0)?;
            let r = r.min(full.rank());
            crate::numerics::TruncatedSvd {
                basis: full.basis.columns(0, r).into_owned(),
                singular_values: full.singular_values.rows(0, r).into_owned(),
                energy_fraction: full.energy_fraction,
            }
        }
    };
    let v_r = tsvd.basis;
    let a_r = v_r.transpose() * &model.a * &v_r;
    let b_r = channels
        .iter()
        .map(|b| v_r.transpose() * b * &v_r)
        .collect();
    let c_r = &model.c * &v_r;
    Ok(ReducedModel {
        state_kernel: model.state_kernel.clone(),
        control_kernel: model.control_kernel.clone(),
        v_r,
        a_r,
        b_r,
        c_r,
        x_anchors: model.x_anchors.clone(),
        u_anchors: model.u_anchors.clone(),
        parent_flavor: model.flavor,
    })
}

/// On-disk model container. JSON with shortest round-trip float encoding, so
/// a reloaded model reproduces predictions bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub model: ModelKind,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ModelKind {
    Ckor(CkorModel),
    Reduced(ReducedModel),
    Bedmdc(BedmdcModel),
}

pub fn save_model(model: &ModelKind, path: impl AsRef<Path>) -> Result<()> {
    if let Some(dir) = path.as_ref().parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    let text = serde_json::to_string(&file)
        .map_err(|e| Error::numerical(format!("model serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelKind> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("model file: {e}"),
    })?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::input(format!(
            "unsupported model format version {}",
            file.format_version
        )));
    }
    Ok(file.model)
}

/// Lifting vector used by every cKOR-family model: `z(x, u)` against the
/// stored anchors.
pub fn lift(model: &CkorModel, x: &[f64], u: &[f64]) -> Result<DVector<f64>> {
    model
        .kernel()
        .lift(x, u, &model.x_anchors, &model.u_anchors)
}
