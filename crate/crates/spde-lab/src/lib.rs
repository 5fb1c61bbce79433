//! Numerical laboratory for a semi-linear stochastic heat equation on an
//! interval, driven by space-time white noise, in the small-diffusivity
//! regime.
//!
//! The crate simulates the equation
//!
//! ```text
//! dX_t = -nu (-Laplace)^(alpha/2) X_t dt + theta f(X_t) dt + sigma(y) dW_t
//! ```
//!
//! with Dirichlet boundary conditions on `(0, l)` by a spectral
//! semi-implicit Euler scheme, and estimates the reaction intensity
//! `theta` from one observed trajectory in four ways: a whole-domain
//! regression estimator, its restriction to a space-time window, a
//! pointwise (nonparametric) variant for spatially or temporally varying
//! intensities, and a per-eigenmode drift estimator for the linear case.
//! A seeded, scheduling-independent Monte-Carlo harness measures bias,
//! variance, interval coverage and the convergence rate of the MSE as the
//! diffusivity `nu` shrinks, and a mesh checker flags grid spacings too
//! coarse for the asymptotic theory to apply.
//!
//! Modules, bottom up:
//!
//! * [`grid`], [`spectral`]: discretization, eigenpairs, sine transforms,
//!   the semigroup and its integrated squared norm `phi`;
//! * [`model`], [`reaction`], [`simulate`]: the equation, its reaction
//!   terms, and the solver;
//! * [`estimate`], [`mesh`], [`stats`]: the estimator suite with
//!   confidence intervals, mesh admissibility, normal-law utilities;
//! * [`mc`], [`io`], [`config`]: the experiment harness, persistence and
//!   the JSON configuration layer behind the `spde-lab` binary.

// Numeric-code idioms used deliberately: minimax coefficients are written at
// full published precision, `!(x > 0.0)`-style guards reject NaNs, and the
// few offset-indexed loops over nodal slices read better than zipped
// iterators.
#![allow(
    clippy::excessive_precision,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod config;
pub mod error;
pub mod estimate;
pub mod grid;
pub mod io;
pub mod mc;
pub mod mesh;
pub mod model;
pub mod reaction;
pub mod simulate;
pub mod spectral;
pub mod stats;

pub use config::{load_config, RunConfig};
pub use error::{Error, Result};
pub use estimate::{
    confidence_interval, default_mode_count, estimate_global, estimate_localized,
    estimate_nonparametric, estimate_spectral, optimal_bandwidths, ou_mle, BandwidthPolicy,
    Bandwidths, EstimateResult, KnownPhysics, NonparamSpec, PointEstimate, Window,
};
pub use grid::{GridField, GridSpec};
pub use io::{read_trajectory, write_trajectory};
pub use mc::{
    coverage_and_normality, derive_seed, fit_rate, run_mc, run_mc_with_workers, EstimatorChoice,
    McConfig, McResult, NuAggregates, NuResult, RateFit, RunOutcome, RunRecord,
};
pub use mesh::{check_mesh, check_mesh_spacings, MeshPolicy, MeshReport, MeshStatus};
pub use model::{ModelSpec, SigmaSpec, Theta};
pub use reaction::ReactionFn;
pub use simulate::{
    forward_semigroup, sample_noise_increment, simulate, simulate_with, step, ForwardPolicy,
    SimOptions, Trajectory,
};
pub use spectral::{
    apply_semigroup, eigen, from_spectral, green_kernel, phi, to_spectral, DomainSpec,
    SpectralField,
};
pub use stats::{ks_distance_to_normal, normal_cdf, normal_quantile};
