//! Scalar kernels, Gram matrices and the control-affine composite kernel
//! `k_Z(z, z') = k_X(x, x') * (1 + k_U(u, u'))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{map_indexed, Error, Result};

/// Declarative description of a scalar kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `exp(-||a - b||^2 / bandwidth)`.
    Gaussian { bandwidth: f64 },
    /// `<a, b>`.
    Linear,
    /// Gaussian base augmented with a linear component:
    /// `exp(-||a - b||^2 / bandwidth) + <a, b>`.
    GaussianPlusLinear { bandwidth: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { bandwidth } | KernelSpec::GaussianPlusLinear { bandwidth } => {
                if !(*bandwidth > 0.0) {
                    return Err(Error::input(format!(
                        "kernel bandwidth must be positive, got {bandwidth}"
                    )));
                }
            }
            KernelSpec::Linear => {}
        }
        Ok(())
    }

    /// Evaluate `k(a, b)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::input(format!(
                "kernel arguments have mismatched dimensions {} and {}",
                a.len(),
                b.len()
            )));
        }
        self.validate()?;
        Ok(self.eval_unchecked(a, b))
    }

    #[inline]
    fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::Gaussian { bandwidth } => gaussian(a, b, *bandwidth),
            KernelSpec::Linear => dot(a, b),
            KernelSpec::GaussianPlusLinear { bandwidth } => gaussian(a, b, *bandwidth) + dot(a, b),
        }
    }

    /// Gram matrix between the rows of `a` and the rows of `b`.
    pub fn gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.ncols() != b.ncols() {
            return Err(Error::input(format!(
                "gram operands have mismatched column dimensions {} and {}",
                a.ncols(),
                b.ncols()
            )));
        }
        self.validate()?;
        let (n, m) = (a.nrows(), b.nrows());
        let rows: Vec<Vec<f64>> = map_indexed(n, |i| {
            let ri = a.row(i);
            let ri = ri.transpose();
            (0..m)
                .map(|j| {
                    let rj = b.row(j).transpose();
                    self.eval_unchecked(ri.as_slice(), rj.as_slice())
                })
                .collect()
        });
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }

    /// Self-Gram of the rows of `a`, exactly symmetric by construction
    /// (upper triangle computed once and mirrored).
    pub fn gram_self(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.validate()?;
        let n = a.nrows();
        let rows: Vec<Vec<f64>> = map_indexed(n, |i| {
            let ri = a.row(i).transpose();
            (i..n)
                .map(|j| {
                    let rj = a.row(j).transpose();
                    self.eval_unchecked(ri.as_slice(), rj.as_slice())
                })
                .collect()
        });
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rows[i][j - i];
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// Vector of kernel evaluations of `x` against the rows of `anchors`.
    pub fn vector(&self, x: &[f64], anchors: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.len() != anchors.ncols() {
            return Err(Error::input(format!(
                "kernel vector argument has dimension {}, anchors have {}",
                x.len(),
                anchors.ncols()
            )));
        }
        self.validate()?;
        Ok(DVector::from_fn(anchors.nrows(), |i, _| {
            self.eval_unchecked(x, anchors.row(i).transpose().as_slice())
        }))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn gaussian(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sq / bandwidth).exp()
}

/// Product kernel over state-input pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeControlKernel {
    pub state_kernel: KernelSpec,
    pub control_kernel: KernelSpec,
}

impl CompositeControlKernel {
    pub fn new(state_kernel: KernelSpec, control_kernel: KernelSpec) -> Self {
        Self {
            state_kernel,
            control_kernel,
        }
    }

    /// `K_Z = K_X (x, x') .* (1 + K_U(u, u'))` between row-paired (X, U) and (X', U').
    pub fn gram(
        &self,
        x: &DMatrix<f64>,
        u: &DMatrix<f64>,
        xp: &DMatrix<f64>,
        up: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        if x.nrows() != u.nrows() || xp.nrows() != up.nrows() {
            return Err(Error::input(
                "state and input matrices must have matching row counts".to_string(),
            ));
        }
        let kx = self.state_kernel.gram(x, xp)?;
        let ku = self.control_kernel.gram(u, up)?;
        Ok(hadamard_one_plus(&kx, &ku))
    }

    /// Symmetric self-Gram of the paired rows of (x, u).
    pub fn gram_self(&self, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != u.nrows() {
            return Err(Error::input(
                "state and input matrices must have matching row counts".to_string(),
            ));
        }
        let kx = self.state_kernel.gram_self(x)?;
        let ku = self.control_kernel.gram_self(u)?;
        Ok(hadamard_one_plus(&kx, &ku))
    }

    /// Lifting vector `z(x, u) = k_X(x) .* (1 + k_U(u))` against anchor rows.
    pub fn lift(
        &self,
        x: &[f64],
        u: &[f64],
        x_anchors: &DMatrix<f64>,
        u_anchors: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        let kx = self.state_kernel.vector(x, x_anchors)?;
        let ku = self.control_kernel.vector(u, u_anchors)?;
        Ok(kx.component_mul(&ku.add_scalar(1.0)))
    }
}

fn hadamard_one_plus(kx: &DMatrix<f64>, ku: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(kx.nrows(), kx.ncols(), |i, j| {
        kx[(i, j)] * (1.0 + ku[(i, j)])
    })
}
