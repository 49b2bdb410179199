//! Prior distribution of the stochastic kernel in deep linear networks.
//!
//! Analytic recursions for the mean and covariance of the top-layer kernel
//! (fully connected, convolutional and locally connected), and a finite
//! network sampler to check them against.

mod fc;
mod input;
mod sampler;
mod spatial;

pub use fc::{fc_cov_layers, fc_cov_recursion, KernelCovariance4};
pub use input::{make_input_state, InputState};
pub use sampler::{
    sample_finite_network_kernels, sample_finite_network_kernels_capped, sample_lcn_weight_space, KernelSampleStats,
    SamplerInput, DEFAULT_MEMORY_CAP,
};
pub use spatial::{spatial_cov_recursion, spatial_cov_recursion_capped, SpatialKernelState, SpatialRecursion};

use serde::{Deserialize, Serialize};

use crate::error::{KernelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Fc,
    Cnn,
    Lcn,
}

impl NetworkKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NetworkKind::Fc => "fc",
            NetworkKind::Cnn => "cnn",
            NetworkKind::Lcn => "lcn",
        }
    }
}

/// Whether recursions keep the terms that are second order in `1/N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecursionMode {
    Exact,
    Approximate,
}

pub fn default_displacements() -> Vec<i64> {
    vec![-1, 0, 1]
}

/// Network architecture for the prior computations.
///
/// `widths` holds `N_1 … N_{L+1}`, so its length is the depth. For the
/// spatial kinds the first `L` layers are convolutions over `displacements`
/// (circular wrap) and the last one reads out the whole image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub kind: NetworkKind,
    pub widths: Vec<usize>,
    #[serde(default = "one")]
    pub spatial_size: usize,
    #[serde(default = "default_displacements")]
    pub displacements: Vec<i64>,
    #[serde(default = "one")]
    pub input_channels: usize,
    #[serde(default = "yes")]
    pub final_layer_full_image: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl ArchitectureSpec {
    pub fn fc(widths: Vec<usize>) -> Self {
        Self {
            kind: NetworkKind::Fc,
            widths,
            spatial_size: 1,
            displacements: vec![0],
            input_channels: 1,
            final_layer_full_image: true,
        }
    }

    /// Spatial network with `depth` layers of uniform width `n` and the default filter.
    pub fn spatial(kind: NetworkKind, depth: usize, n: usize, s: usize, input_channels: usize) -> Self {
        Self {
            kind,
            widths: vec![n; depth],
            spatial_size: s,
            displacements: default_displacements(),
            input_channels,
            final_layer_full_image: true,
        }
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    /// Displacements reduced modulo `S`, in the configured order.
    pub fn wrapped_displacements(&self) -> Vec<usize> {
        let s = self.spatial_size as i64;
        self.displacements.iter().map(|d| d.rem_euclid(s) as usize).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.iter().any(|&n| n == 0) {
            return Err(KernelError::InvalidSpec("all widths must be at least 1".into()));
        }
        if self.spatial_size == 0 || self.input_channels == 0 {
            return Err(KernelError::InvalidSpec("spatial size and input channels must be at least 1".into()));
        }
        if self.displacements.is_empty() {
            return Err(KernelError::InvalidSpec("displacement set must be non-empty".into()));
        }
        match self.kind {
            NetworkKind::Fc if self.spatial_size != 1 => {
                Err(KernelError::InvalidSpec("fully connected networks use spatial size 1".into()))
            }
            NetworkKind::Cnn | NetworkKind::Lcn if !self.final_layer_full_image => Err(KernelError::InvalidSpec(
                "only a full-image readout layer is supported for spatial networks".into(),
            )),
            _ => Ok(()),
        }
    }
}
