//! Kernel-based control Koopman operator learning.
//!
//! Learns finite-dimensional bilinear/LPV predictors of nonlinear control
//! systems from snapshot data via kernel ridge regression over a
//! control-affine product kernel (cKOR), with a Nystrom-sketched variant
//! (Ny-cKOR), a bilinear EDMD baseline, POD-based model reduction, and an
//! iterated LPV model predictive controller built on the learned models.
//!
//! Data-parallel inner loops (Gram assembly, batch rollouts, sweeps) run on
//! rayon when the default `parallel` feature is enabled; disabling it yields
//! a fully sequential build with identical results.

pub mod data;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod mpc;
pub mod numerics;
pub mod predictor;
pub mod qp;
pub mod systems;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Roll a fitted model out from many initial states under a shared input
/// sequence; one rollout per initial state, parallel when enabled.
pub fn batch_rollout(
    model: &estimator::CkorModel,
    starts: &[nalgebra::DVector<f64>],
    inputs: &[nalgebra::DVector<f64>],
) -> Vec<Result<predictor::Rollout>> {
    map_indexed(starts.len(), |i| model.rollout(&starts[i], inputs))
}

/// Map a function over `0..n`, collecting results in index order.
///
/// Runs on the rayon pool with the `parallel` feature, sequentially otherwise.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
