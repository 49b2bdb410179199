//! Positive-semidefinite kernel matrices and the linear algebra built on them.
//!
//! Every other module talks in terms of [`KernelMatrix`]: Gram matrices of
//! activations, activities and covariances across datapoints (or across
//! spatial locations of a single datapoint). Tolerances here are always
//! relative to the largest eigenvalue, because kernels routinely span several
//! orders of magnitude.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{KernelError, Result};
use crate::io::format_f64;

/// Relative symmetry tolerance accepted by [`KernelMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative PSD tolerance used when none is supplied.
pub const DEFAULT_PSD_TOL: f64 = 1e-10;

/// Jitter ladder (multiples of `trace / P`) tried before declaring a kernel singular.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

/// A symmetric P×P kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
}

impl KernelMatrix {
    /// Wraps a square, finite, symmetric matrix.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(KernelError::invalid(format!(
                "kernel must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::invalid("kernel has non-finite entries"));
        }
        let n = entries.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                    return Err(KernelError::invalid(format!(
                        "kernel is not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    /// Symmetrizes `m` as `(m + mᵀ)/2` before wrapping it.
    pub fn from_symmetrized(m: DMatrix<f64>) -> Result<Self> {
        let sym = (&m + m.transpose()) * 0.5;
        Self::new(sym)
    }

    pub fn from_row_slice(size: usize, data: &[f64]) -> Result<Self> {
        if data.len() != size * size {
            return Err(KernelError::invalid(format!(
                "expected {} entries for a {size}x{size} kernel, got {}",
                size * size,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(size, size, data))
    }

    pub fn identity(size: usize) -> Self {
        Self { entries: DMatrix::identity(size, size) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.amax()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { entries: &self.entries * factor }
    }

    /// `K + jitter·I`.
    pub fn with_jitter(&self, jitter: f64) -> Self {
        let mut entries = self.entries.clone();
        for i in 0..entries.nrows() {
            entries[(i, i)] += jitter;
        }
        Self { entries }
    }

    pub fn validate(&self, tol: f64) -> PsdReport {
        validate_psd(&self.entries, tol)
    }

    /// Upper-triangle CSV export with header `i,j,value`.
    pub fn to_csv(&self) -> String {
        let n = self.size();
        let mut out = String::from("i,j,value\n");
        for i in 0..n {
            for j in i..n {
                out.push_str(&format!("{i},{j},{}\n", format_f64(self.entries[(i, j)])));
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelJson {
    size: usize,
    entries: Vec<f64>,
}

impl Serialize for KernelMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.size();
        let entries = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|ij| self.entries[ij]);
        KernelJson { size: n, entries: entries.collect() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KernelMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = KernelJson::deserialize(deserializer)?;
        KernelMatrix::from_row_slice(raw.size, &raw.entries).map_err(serde::de::Error::custom)
    }
}

/// Outcome of [`validate_psd`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsdReport {
    pub pass: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub asymmetry: f64,
}

/// Checks symmetry and the sign of the spectrum, both relative to the scale of `k`.
pub fn validate_psd(k: &DMatrix<f64>, tol: f64) -> PsdReport {
    let asymmetry = (k - k.transpose()).amax();
    let sym = (k + k.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min_eigenvalue = eig.eigenvalues.min();
    let max_eigenvalue = eig.eigenvalues.max();
    let scale = max_eigenvalue.abs().max(k.amax());
    let symmetric = asymmetry <= tol * k.amax().max(1.0);
    let pass = k.iter().all(|v| v.is_finite()) && symmetric && min_eigenvalue >= -tol * scale;
    PsdReport { pass, min_eigenvalue, max_eigenvalue, asymmetry }
}

/// `(1/n)·F·Fᵀ` for a P×m feature matrix.
pub fn gram_kernel(features: &DMatrix<f64>, n: usize) -> Result<KernelMatrix> {
    if n == 0 {
        return Err(KernelError::invalid("normalizer n must be at least 1"));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(KernelError::invalid("features contain non-finite entries"));
    }
    let mut g = features * features.transpose();
    g /= n as f64;
    // The product is symmetric up to round-off; make it exact.
    let g = (&g + g.transpose()) * 0.5;
    KernelMatrix::new(g)
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        map_spectrum(self, |v| v)
    }
}

pub fn eigen_spectrum(k: &KernelMatrix) -> SpectralDecomposition {
    let eig = SymmetricEigen::new(k.entries().clone());
    let n = k.size();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SpectralDecomposition { eigenvalues, eigenvectors }
}

/// `U f(Λ) Uᵀ`, symmetrized.
pub(crate) fn map_spectrum(spec: &SpectralDecomposition, mut f: impl FnMut(f64) -> f64) -> DMatrix<f64> {
    let u = &spec.eigenvectors;
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= f(spec.eigenvalues[j]);
    }
    let m = scaled * u.transpose();
    (&m + m.transpose()) * 0.5
}

/// Upper-triangular `U` with `UᵀU = J + jitter·I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub upper: DMatrix<f64>,
    /// Absolute jitter that was added to the diagonal.
    pub jitter: f64,
}

impl CholeskyFactor {
    pub fn lower(&self) -> DMatrix<f64> {
        self.upper.transpose()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.upper.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `(UᵀU) x = b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let lower = self.lower();
        let y = lower
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.upper
            .solve_upper_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.upper.nrows();
        let inv = self.solve(&DMatrix::identity(n, n));
        (&inv + inv.transpose()) * 0.5
    }
}

/// Cholesky factorization with jitter escalation.
///
/// Tries `jitter` first, then every rung of [`JITTER_LADDER`] (scaled by
/// `trace/P`) that is larger, failing once `1e-6·trace/P` does not help.
pub fn factorize(j: &KernelMatrix, jitter: f64) -> Result<CholeskyFactor> {
    let p = j.size();
    if p == 0 {
        return Err(KernelError::invalid("cannot factorize an empty kernel"));
    }
    let scale = (j.trace() / p as f64).abs().max(f64::MIN_POSITIVE);
    let mut attempts = vec![jitter];
    attempts.extend(JITTER_LADDER.iter().map(|r| r * scale).filter(|&a| a > jitter));
    for a in attempts {
        let m = j.with_jitter(a).into_inner();
        if let Some(chol) = m.cholesky() {
            let lower = chol.l();
            // Pivots at round-off level mean the matrix is numerically singular.
            let floor = 1e-14 * scale;
            if lower.diagonal().iter().all(|d| d.is_finite() && d * d > floor) {
                return Ok(CholeskyFactor { upper: lower.transpose(), jitter: a });
            }
        }
    }
    Err(KernelError::singular(format!(
        "cholesky failed for a {p}x{p} kernel even with jitter {:.3e}",
        JITTER_LADDER[JITTER_LADDER.len() - 1] * scale
    )))
}

/// Returns `K + jitter·I` with the smallest ladder jitter that makes `K`
/// strictly positive definite (min eigenvalue above `1e-14·max`).
pub fn ensure_positive_definite(k: &KernelMatrix) -> Result<(KernelMatrix, f64)> {
    let p = k.size();
    if p == 0 || !(k.trace() > 0.0) {
        return Err(KernelError::singular("kernel has non-positive trace"));
    }
    let scale = k.trace() / p as f64;
    for rung in JITTER_LADDER {
        let jitter = rung * scale;
        let candidate = if jitter == 0.0 { k.clone() } else { k.with_jitter(jitter) };
        let spec = eigen_spectrum(&candidate);
        let max = spec.eigenvalues[0];
        let min = spec.eigenvalues[p - 1];
        if max > 0.0 && min > 1e-14 * max {
            return Ok((candidate, jitter));
        }
    }
    Err(KernelError::singular(format!("{p}x{p} kernel is not positive definite after jitter")))
}

/// Symmetric square root and inverse square root of a strictly PD kernel.
pub(crate) fn sqrt_and_inv_sqrt(k: &KernelMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let spec = eigen_spectrum(k);
    (map_spectrum(&spec, f64::sqrt), map_spectrum(&spec, |v| 1.0 / v.sqrt()))
}

/// Geodesic interpolation `(K1 K0⁻¹)^α K0` between two kernels.
///
/// Evaluated as `K0^{1/2} (K0^{-1/2} K1 K0^{-1/2})^α K0^{1/2}`, which is real,
/// symmetric and PSD for any PSD `K1`. `K0` is jitter-rescued if needed.
pub fn geodesic_power(k0: &KernelMatrix, k1: &KernelMatrix, alpha: f64) -> Result<KernelMatrix> {
    if k0.size() != k1.size() {
        return Err(KernelError::invalid(format!(
            "kernel sizes differ: {} vs {}",
            k0.size(),
            k1.size()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(KernelError::invalid(format!("alpha must lie in [0,1], got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(k0.clone());
    }
    let (k0, _) = ensure_positive_definite(k0)?;
    let (half, inv_half) = sqrt_and_inv_sqrt(&k0);
    let pencil = KernelMatrix::from_symmetrized(&inv_half * k1.entries() * &inv_half)?;
    let spec = eigen_spectrum(&pencil);
    let powered = map_spectrum(&spec, |v| v.max(0.0).powf(alpha));
    KernelMatrix::from_symmetrized(&half * powered * &half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn kernel(size: usize, rows: &[f64]) -> KernelMatrix {
        KernelMatrix::from_row_slice(size, rows).unwrap()
    }

    fn random_psd(rng: &mut ChaCha8Rng, p: usize, m: usize) -> KernelMatrix {
        let f = DMatrix::from_fn(p, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        gram_kernel(&f, m).unwrap()
    }

    #[test]
    fn gram_of_orthogonal_rows_is_identity() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        assert_eq!(gram_kernel(&f, 2).unwrap(), KernelMatrix::identity(2));
    }

    #[test]
    fn gram_of_equal_one_hots() {
        let mut f = DMatrix::zeros(2, 10);
        f[(0, 3)] = 1.0;
        f[(1, 3)] = 1.0;
        let k = gram_kernel(&f, 10).unwrap();
        assert_eq!(k, kernel(2, &[0.1, 0.1, 0.1, 0.1]));
    }

    #[test]
    fn gram_of_zero_and_bad_inputs() {
        let k = gram_kernel(&DMatrix::zeros(3, 4), 7).unwrap();
        assert_eq!(k.max_abs(), 0.0);
        let mut f = DMatrix::zeros(2, 2);
        f[(0, 1)] = f64::NAN;
        assert!(matches!(gram_kernel(&f, 1), Err(KernelError::InvalidInput(_))));
        assert!(gram_kernel(&DMatrix::zeros(2, 2), 0).is_err());
    }

    #[test]
    fn rejects_asymmetric_and_non_square() {
        assert!(KernelMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(KernelMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn psd_validation_examples() {
        let bad = validate_psd(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 1e-10);
        assert!(!bad.pass);
        assert_relative_eq!(bad.min_eigenvalue, -1.0, epsilon = 1e-12);

        let id = validate_psd(&DMatrix::identity(3, 3), 1e-10);
        assert!(id.pass);
        assert_relative_eq!(id.min_eigenvalue, 1.0, epsilon = 1e-12);

        let near = validate_psd(&DMatrix::from_row_slice(2, 2, &[1.0, 0.999, 0.999, 1.0]), 1e-10);
        assert!(near.pass);
        assert_relative_eq!(near.min_eigenvalue, 0.001, epsilon = 1e-12);

        let skew = validate_psd(&DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]), 1e-10);
        assert!(!skew.pass);
        assert_relative_eq!(skew.asymmetry, 0.1);
    }

    #[test]
    fn factorize_examples() {
        let f = factorize(&KernelMatrix::from_diagonal(&[4.0, 9.0]).unwrap(), 0.0).unwrap();
        assert_eq!(f.upper, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert_eq!(f.jitter, 0.0);

        let f = factorize(&KernelMatrix::identity(4), 0.0).unwrap();
        assert_eq!(f.upper, DMatrix::identity(4, 4));
    }

    #[test]
    fn factorize_reconstructs_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_psd(&mut rng, 6, 12);
        let f = factorize(&k, 0.0).unwrap();
        let err = (f.upper.transpose() * &f.upper - k.entries()).amax();
        assert!(err <= 1e-10 * k.max_abs(), "reconstruction error {err}");
    }

    #[test]
    fn factorize_escalates_jitter_for_rank_deficient_kernel() {
        // One-hot output kernel over 4 points with 2 classes has rank 2.
        let y = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let k = gram_kernel(&y, 2).unwrap();
        let f = factorize(&k, 0.0).unwrap();
        assert!(f.jitter > 0.0);
        let recon = f.upper.transpose() * &f.upper;
        let target = k.with_jitter(f.jitter);
        assert!((recon - target.entries()).amax() <= 1e-8 * k.max_abs());
    }

    #[test]
    fn factorize_gives_up_on_negative_definite() {
        let k = KernelMatrix::from_diagonal(&[1.0, -5.0]).unwrap();
        assert!(matches!(factorize(&k, 0.0), Err(KernelError::SingularKernel(_))));
    }

    #[test]
    fn geodesic_scalar_geometric_mean() {
        let k0 = KernelMatrix::identity(3).scaled(2.0);
        let k1 = KernelMatrix::identity(3).scaled(8.0);
        let mid = geodesic_power(&k0, &k1, 0.5).unwrap();
        assert!((mid.entries() - DMatrix::identity(3, 3) * 4.0).amax() < 1e-12);
    }

    #[test]
    fn geodesic_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k0 = random_psd(&mut rng, 4, 9);
        let k1 = random_psd(&mut rng, 4, 9);
        assert_eq!(geodesic_power(&k0, &k1, 0.0).unwrap(), k0);
        let end = geodesic_power(&k0, &k1, 1.0).unwrap();
        assert!((end.entries() - k1.entries()).amax() <= 1e-10 * k1.max_abs());
    }

    /// Brute-force oracle: diagonalize the non-symmetric product `K1 K0⁻¹`
    /// through its similarity to the pencil, then apply the power.
    fn nonsymmetric_power_oracle(k0: &DMatrix<f64>, k1: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
        // K1 K0⁻¹ = K0^{1/2} M K0^{-1/2}; its eigenvectors are K0^{1/2} v for
        // eigenvectors v of M. Build those via a Cholesky-based pencil instead of
        // the symmetric square root so the route is independent.
        let l = k0.clone().cholesky().unwrap().l();
        let l_inv = l.clone().try_inverse().unwrap();
        let c = &l_inv * k1 * l_inv.transpose();
        let eig = SymmetricEigen::new((&c + c.transpose()) * 0.5);
        let vecs = &l * &eig.eigenvectors; // right eigenvectors of K1 K0⁻¹
        let vecs_inv = vecs.clone().try_inverse().unwrap();
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).powf(alpha)));
        (vecs * d * vecs_inv) * k0
    }

    #[test]
    fn geodesic_matches_nonsymmetric_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let k0 = random_psd(&mut rng, 3, 6);
            let k1 = random_psd(&mut rng, 3, 6);
            let ours = geodesic_power(&k0, &k1, 1.0 / 3.0).unwrap();
            let oracle = nonsymmetric_power_oracle(k0.entries(), k1.entries(), 1.0 / 3.0);
            let err = (ours.entries() - &oracle).amax();
            assert!(err <= 1e-9 * oracle.amax(), "err {err}");
        }
    }

    #[test]
    fn geodesic_composes_for_commuting_pairs() {
        let k0 = KernelMatrix::from_diagonal(&[1.0, 2.0, 0.5]).unwrap();
        let k1 = KernelMatrix::from_diagonal(&[3.0, 0.25, 7.0]).unwrap();
        let (a, b) = (0.6, 0.5);
        let first = geodesic_power(&k0, &k1, a).unwrap();
        let composed = geodesic_power(&k0, &first, b).unwrap();
        let direct = geodesic_power(&k0, &k1, a * b).unwrap();
        assert!((composed.entries() - direct.entries()).amax() < 1e-12);
    }

    #[test]
    fn geodesic_rejects_singular_k0() {
        let k0 = KernelMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        let k1 = KernelMatrix::identity(2);
        assert!(matches!(geodesic_power(&k0, &k1, 0.5), Err(KernelError::SingularKernel(_))));
    }

    #[test]
    fn spectrum_examples() {
        let s = eigen_spectrum(&kernel(2, &[2.0, 1.0, 1.0, 2.0]));
        assert_relative_eq!(s.eigenvalues[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.eigenvalues[1], 1.0, epsilon = 1e-12);
        let s = eigen_spectrum(&KernelMatrix::identity(5));
        assert!(s.eigenvalues.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn spectrum_matches_quadratic_formula_for_two_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let k = random_psd(&mut rng, 2, 5);
            let (a, b, d) = (k.entries()[(0, 0)], k.entries()[(0, 1)], k.entries()[(1, 1)]);
            let mean = 0.5 * (a + d);
            let disc = (0.25 * (a - d).powi(2) + b * b).sqrt();
            let s = eigen_spectrum(&k);
            assert_relative_eq!(s.eigenvalues[0], mean + disc, epsilon = 1e-12, max_relative = 1e-12);
            assert_relative_eq!(s.eigenvalues[1], mean - disc, epsilon = 1e-12, max_relative = 1e-10);
        }
    }

    #[test]
    fn json_and_csv_layout() {
        let k = kernel(2, &[1.0, 0.5, 0.5, 2.0]);
        let json = serde_json::to_value(&k).unwrap();
        assert_eq!(json["size"], 2);
        assert_eq!(json["entries"], serde_json::json!([1.0, 0.5, 0.5, 2.0]));
        let back: KernelMatrix = serde_json::from_value(json).unwrap();
        assert_eq!(back, k);
        let csv = k.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "i,j,value");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("0,1,5.0000000000000000e-1"));
        assert!(serde_json::from_str::<KernelMatrix>(r#"{"size":2,"entries":[1,2,3]}"#).is_err());
    }

    fn psd_pair() -> impl Strategy<Value = (KernelMatrix, KernelMatrix, f64)> {
        (2usize..=6, any::<u64>(), prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0])).prop_map(
            |(p, seed, alpha)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let k0 = random_psd(&mut rng, p, p + 3);
                let m1 = rng.random_range(1..=p + 2);
                let k1 = random_psd(&mut rng, p, m1);
                (k0, k1, alpha)
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn geodesic_output_is_symmetric_psd((k0, k1, alpha) in psd_pair()) {
            let out = geodesic_power(&k0, &k1, alpha).unwrap();
            let report = out.validate(1e-9);
            prop_assert!(report.pass, "{report:?}");
        }

        #[test]
        fn gram_rank_bounded_by_columns(p in 2usize..7, m in 1usize..5, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = random_psd(&mut rng, p, m);
            let spec = eigen_spectrum(&k);
            let tol = 1e-10 * spec.eigenvalues[0];
            let rank = spec.eigenvalues.iter().filter(|&&v| v > tol).count();
            prop_assert!(rank <= p.min(m));
        }

        #[test]
        fn spectral_reconstruction(p in 1usize..8, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = random_psd(&mut rng, p, p + 1);
            let spec = eigen_spectrum(&k);
            let recon = spec.reconstruct();
            prop_assert!((recon - k.entries()).amax() <= 1e-8 * k.max_abs());
            let ortho = spec.eigenvectors.transpose() * &spec.eigenvectors - DMatrix::identity(p, p);
            prop_assert!(ortho.amax() <= 1e-10);
            prop_assert!(spec.eigenvalues.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
