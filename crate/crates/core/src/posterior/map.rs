use super::{prepare_endpoints, KernelPath, PathMethod, WidthProfile};
use crate::error::{KernelError, Result};
use crate::kernel::{geodesic_power, KernelMatrix};

/// MAP kernels: a geodesic from `K₀` to `K_{L+1}`, rescaled per layer by the
/// ratio of the geometric mean widths after and up to that layer.
pub fn map_kernel_path(k0: &KernelMatrix, k_out: &KernelMatrix, profile: &WidthProfile) -> Result<KernelPath> {
    let (k0, k_out, diagnostics) = prepare_endpoints(k0, k_out)?;
    let depth = profile.widths().len();
    let total = depth as f64;
    let mut kernels = Vec::with_capacity(depth + 1);
    kernels.push(k0.clone());
    for layer in 1..depth {
        let l = layer as f64;
        let ratio = profile.geo_mean_after(layer) / profile.geo_mean_upto(layer);
        let scale = ratio.powf(l * (total - l) / total);
        if !scale.is_finite() {
            return Err(KernelError::Instability(format!("width scale factor overflowed at layer {layer}")));
        }
        kernels.push(geodesic_power(&k0, &k_out, l / total)?.scaled(scale));
    }
    kernels.push(k_out);
    Ok(KernelPath { kernels, method: PathMethod::Map, diagnostics })
}
