//! Kernel-space analysis of finite and infinite Bayesian deep linear networks.
//!
//! The crate works with Gram matrices rather than weights wherever possible:
//! Monte Carlo evidence for a two-layer toy model, prior covariance
//! recursions for the stochastic kernel, posterior kernel paths, Gaussian
//! process sum-kernel fitting, and kernel comparison metrics.

pub mod error;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod posterior;
pub mod prior;
pub mod seed;
pub mod stats;
pub mod sumkernel;
pub mod toy;

pub use error::{KernelError, Result};
pub use kernel::{
    eigen_spectrum, factorize, geodesic_power, gram_kernel, validate_psd, CholeskyFactor, KernelMatrix,
    PsdReport, SpectralDecomposition,
};
pub use metrics::{gp_score, kernel_correlation, metric_report, one_hot, spectrum_slope, subspace_variance_fraction, MetricReport};
pub use posterior::{
    langevin_kernel_path, langevin_simulate, map_kernel_path, objective_and_residual, solve_t_ratio,
    wishart_mode_correction_check, KernelPath, PathMethod, SdeConfig, SdeResult, WidthProfile,
};
pub use prior::{
    fc_cov_recursion, sample_finite_network_kernels, spatial_cov_recursion, ArchitectureSpec, KernelCovariance4,
    KernelSampleStats, NetworkKind, RecursionMode,
};
pub use seed::{rng_for, seed_stream, SeedLabel};
pub use sumkernel::{gradient_and_fisher, log_marginal, natural_gradient_fit, FitOptions, FitReport, SumKernelModel};
pub use toy::{closed_form_infinite_evidence, generate_toy_dataset, mc_log_evidence, InputModifier, ToyConfig, ToyDataset};
