//! Kernel evaluation and `1/n`-scaled Gram assembly.
//!
//! The convention throughout this crate is that Gram matrices carry the `1/n`
//! sample scaling *internally*: `K = n⁻¹[k(x_i, x_j)]`. Every downstream
//! formula (risk identities, generalized eigenproblems, bounds) assumes this
//! scaling, which keeps the matrix expressions literally equal to their
//! operator counterparts (`K = ŜŜ*` for the `1/√n`-scaled sampling operator
//! `Ŝ`) and eliminates a pervasive class of scaling bugs.
//!
//! Cross-Gram matrices follow the same convention with the scaling taken from
//! the ROW count: `cross_gram(spec, X, Y) = n⁻¹[k(x_i, y_j)]` for `X` with `n`
//! rows, so that `Ŝφ(x) = √n · column` holds for out-of-sample columns.

use faer::{Mat, MatRef};
use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;
use crate::{Result, RrrError};

/// Kernel family. `Linear` is the Euclidean inner product (its feature map is
/// the identity, so primal formulations apply); `Gaussian` is
/// `exp(−‖x−x'‖²/(2ℓ²))`; `Matern12` is the Matérn kernel with smoothness
/// `ν = 1/2`, i.e. the exponential kernel `exp(−‖x−x'‖/ℓ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Linear,
    Gaussian,
    Matern12,
}

/// Declarative kernel choice. The length-scale must be positive for the
/// distance-based families and is ignored for `Linear`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Length-scale `ℓ`; ignored for `Linear` (kept at 1 by the constructor).
    #[serde(default = "default_lengthscale")]
    pub lengthscale: f64,
}

fn default_lengthscale() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self { family: KernelFamily::Linear, lengthscale: 1.0 }
    }

    pub fn gaussian(lengthscale: f64) -> Self {
        Self { family: KernelFamily::Gaussian, lengthscale }
    }

    pub fn matern12(lengthscale: f64) -> Self {
        Self { family: KernelFamily::Matern12, lengthscale }
    }

    /// Validates the family/length-scale combination.
    pub fn validate(&self) -> Result<()> {
        match self.family {
            KernelFamily::Linear => Ok(()),
            KernelFamily::Gaussian | KernelFamily::Matern12 => {
                if self.lengthscale > 0.0 && self.lengthscale.is_finite() {
                    Ok(())
                } else {
                    Err(RrrError::InvalidInput(format!(
                        "lengthscale must be positive and finite, got {}",
                        self.lengthscale
                    )))
                }
            }
        }
    }
}

/// Squared Euclidean distance between two equal-length slices, clamped at 0
/// so that roundoff can never produce a negative radicand.
fn dist_sq_slices(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let d = a - b;
        acc += d * d;
    }
    acc.max(0.0)
}

fn dot_slices(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

fn eval_from_parts(spec: &KernelSpec, dot: f64, dist_sq: f64) -> f64 {
    match spec.family {
        KernelFamily::Linear => dot,
        KernelFamily::Gaussian => (-dist_sq / (2.0 * spec.lengthscale * spec.lengthscale)).exp(),
        KernelFamily::Matern12 => (-dist_sq.max(0.0).sqrt() / spec.lengthscale).exp(),
    }
}

/// Evaluates `k(x, x')` for a single pair of points.
///
/// Errors on dimension mismatch or an invalid spec. Symmetric in its
/// arguments; the distance-based families satisfy `k(x, x) = 1` and
/// `0 < k(x, x') ≤ 1`.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(RrrError::InvalidInput(format!(
            "kernel arguments have mismatched dimensions {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(match spec.family {
        KernelFamily::Linear => dot_slices(x, y),
        _ => eval_from_parts(spec, 0.0, dist_sq_slices(x, y)),
    })
}

/// Squared distance between row `i` of `a` and row `j` of `b`.
fn row_dist_sq(a: MatRef<'_, f64>, i: usize, b: MatRef<'_, f64>, j: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..a.ncols() {
        let d = a[(i, c)] - b[(j, c)];
        acc += d * d;
    }
    acc.max(0.0)
}

/// Assembles the `1/n`-scaled Gram matrix `(1/n)[k(x_i, x_j)]` over the rows
/// of `x`. The result is exactly symmetric: the linear family is computed as
/// `(1/n)XXᵀ` and symmetrized as `(A + Aᵀ)/2`, the distance families are
/// assembled on the upper triangle and mirrored.
pub fn gram(spec: &KernelSpec, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    spec.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(RrrError::InvalidInput("gram of an empty sample".into()));
    }
    let scale = 1.0 / n as f64;
    match spec.family {
        KernelFamily::Linear => {
            let raw = x * x.transpose();
            let mut g = Mat::zeros(n, n);
            for j in 0..n {
                for i in 0..n {
                    g[(i, j)] = 0.5 * scale * (raw[(i, j)] + raw[(j, i)]);
                }
            }
            Ok(g)
        }
        _ => {
            let mut g = Mat::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = scale * eval_from_parts(spec, 0.0, row_dist_sq(x, i, x, j));
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
            Ok(g)
        }
    }
}

/// Assembles the cross-Gram `(1/n)[k(x_i, y_j)]` between the rows of `x`
/// (`n` of them — the scaling count) and the rows of `y`.
pub fn cross_gram(spec: &KernelSpec, x: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Result<Mat<f64>> {
    spec.validate()?;
    if x.ncols() != y.ncols() {
        return Err(RrrError::InvalidInput(format!(
            "cross_gram inputs have mismatched feature dimensions {} vs {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let (n, m) = (x.nrows(), y.nrows());
    if n == 0 || m == 0 {
        return Err(RrrError::InvalidInput("cross_gram of an empty sample".into()));
    }
    let scale = 1.0 / n as f64;
    let mut g = Mat::zeros(n, m);
    match spec.family {
        KernelFamily::Linear => {
            let raw = x * y.transpose();
            for j in 0..m {
                for i in 0..n {
                    g[(i, j)] = scale * raw[(i, j)];
                }
            }
        }
        _ => {
            for j in 0..m {
                for i in 0..n {
                    g[(i, j)] = scale * eval_from_parts(spec, 0.0, row_dist_sq(x, i, y, j));
                }
            }
        }
    }
    Ok(g)
}

/// Empirical quantiles of the pairwise Euclidean distance distribution over a
/// seeded subsample of the rows of `x` — the standard length-scale heuristic
/// (take e.g. the median, or a small set of quantiles, as candidate `ℓ`).
///
/// The subsample of `sample_size` rows is drawn without replacement from the
/// seeded generator, all `sample_size·(sample_size−1)/2` distances are formed
/// exhaustively, and quantiles are computed by linear interpolation between
/// order statistics. Deterministic given `seed`.
pub fn lengthscale_quantiles(
    x: MatRef<'_, f64>,
    sample_size: usize,
    quantiles: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let n = x.nrows();
    if sample_size < 2 {
        return Err(RrrError::InvalidInput(format!(
            "sample_size must be at least 2, got {sample_size}"
        )));
    }
    if sample_size > n {
        return Err(RrrError::InvalidInput(format!(
            "sample_size {sample_size} exceeds the number of rows {n}"
        )));
    }
    for &q in quantiles {
        if !(q > 0.0 && q < 1.0) {
            return Err(RrrError::InvalidInput(format!(
                "quantiles must lie strictly inside (0, 1), got {q}"
            )));
        }
    }
    let mut rng = rng_from_seed(seed);
    let mut idx: Vec<usize> = sample_indices(&mut rng, n, sample_size).into_vec();
    idx.sort_unstable();

    let mut dists = Vec::with_capacity(sample_size * (sample_size - 1) / 2);
    for a in 0..sample_size {
        for b in (a + 1)..sample_size {
            dists.push(row_dist_sq(x, idx[a], x, idx[b]).sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    Ok(quantiles.iter().map(|&q| interp_quantile(&dists, q)).collect())
}

/// Linear interpolation between order statistics: for `m` sorted values the
/// `q`-quantile sits at fractional index `h = (m−1)q`.
fn interp_quantile(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    debug_assert!(m >= 1);
    let h = (m - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < m {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[m - 1]
    }
}

/// The `1/n`-scaled kernel matrices of a paired sample: `K` over inputs, `L`
/// over outputs, and optionally the cross-Gram `Kxy = (1/n)[k(x_i, y_j)]`
/// (meaningful only when input and output kernels coincide, e.g. for
/// dynamical systems where both are states in the same space).
#[derive(Debug, Clone)]
pub struct GramBundle {
    pub k: Mat<f64>,
    pub l: Mat<f64>,
    pub kxy: Option<Mat<f64>>,
    pub n: usize,
}

impl GramBundle {
    /// Builds the bundle from data matrices (rows are samples).
    ///
    /// With `with_cross`, the input and output kernel specs must be identical
    /// and the cross-Gram is assembled too.
    pub fn from_data(
        x: MatRef<'_, f64>,
        y: MatRef<'_, f64>,
        kernel_x: &KernelSpec,
        kernel_y: &KernelSpec,
        with_cross: bool,
    ) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(RrrError::InvalidInput(format!(
                "paired sample with {} inputs but {} outputs",
                x.nrows(),
                y.nrows()
            )));
        }
        let k = gram(kernel_x, x)?;
        let l = gram(kernel_y, y)?;
        let kxy = if with_cross {
            if kernel_x != kernel_y {
                return Err(RrrError::InvalidInput(
                    "cross-Gram requires identical input and output kernels".into(),
                ));
            }
            Some(cross_gram(kernel_x, x, y)?)
        } else {
            None
        };
        Ok(Self { k, l, kxy, n: x.nrows() })
    }

    /// Wraps precomputed `1/n`-scaled matrices, validating shapes and
    /// symmetry (within `1e−12 · max-entry`).
    pub fn from_matrices(k: Mat<f64>, l: Mat<f64>, kxy: Option<Mat<f64>>) -> Result<Self> {
        let n = k.nrows();
        if k.ncols() != n || l.nrows() != n || l.ncols() != n {
            return Err(RrrError::InvalidInput(format!(
                "Gram matrices must be square and matched: K is {}×{}, L is {}×{}",
                k.nrows(),
                k.ncols(),
                l.nrows(),
                l.ncols()
            )));
        }
        if let Some(c) = &kxy {
            if c.nrows() != n || c.ncols() != n {
                return Err(RrrError::InvalidInput(format!(
                    "cross-Gram must be {n}×{n}, got {}×{}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }
        for (name, m) in [("K", &k), ("L", &l)] {
            let tol = 1e-12 * m.norm_max().max(1e-300);
            for i in 0..n {
                for j in (i + 1)..n {
                    if (m[(i, j)] - m[(j, i)]).abs() > tol {
                        return Err(RrrError::InvalidInput(format!(
                            "{name} is not symmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(Self { k, l, kxy, n })
    }

    /// `tr(L)` — the output energy `(1/n)Σ_i ℓ(y_i, y_i)`, which is the risk
    /// of the zero estimator.
    pub fn trace_l(&self) -> f64 {
        (0..self.n).map(|i| self.l[(i, i)]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal_mat;
    use proptest::prelude::*;

    fn mat_from_rows(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn linear_kernel_on_orthogonal_vectors_is_zero() {
        let k = eval_kernel(&KernelSpec::linear(), &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(k, 0.0);
    }

    #[test]
    fn matern_at_zero_distance_is_one() {
        let x = [0.3, -1.2, 4.0];
        let k = eval_kernel(&KernelSpec::matern12(2.0), &x, &x).unwrap();
        assert_eq!(k, 1.0);
    }

    #[test]
    fn matern_at_unit_distance_is_exp_minus_one() {
        let k = eval_kernel(&KernelSpec::matern12(1.0), &[0.0], &[1.0]).unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn eval_kernel_rejects_dimension_mismatch() {
        let err = eval_kernel(&KernelSpec::linear(), &[1.0], &[1.0, 2.0]);
        assert!(matches!(err, Err(RrrError::InvalidInput(_))));
    }

    #[test]
    fn kernel_spec_rejects_bad_lengthscale() {
        assert!(KernelSpec::gaussian(0.0).validate().is_err());
        assert!(KernelSpec::matern12(-1.0).validate().is_err());
        assert!(KernelSpec::linear().validate().is_ok());
    }

    #[test]
    fn gram_of_orthonormal_inputs_is_scaled_identity() {
        let x = mat_from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let g = gram(&KernelSpec::linear(), x.as_ref()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 0.5 } else { 0.0 };
                assert!((g[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gram_single_point_matern_is_unit() {
        let x = mat_from_rows(&[&[3.0, 4.0]]);
        let g = gram(&KernelSpec::matern12(0.7), x.as_ref()).unwrap();
        assert_eq!(g.nrows(), 1);
        assert_eq!(g[(0, 0)], 1.0);
    }

    #[test]
    fn gram_rejects_empty_input() {
        let x = Mat::<f64>::zeros(0, 3);
        assert!(matches!(
            gram(&KernelSpec::linear(), x.as_ref()),
            Err(RrrError::InvalidInput(_))
        ));
    }

    #[test]
    fn linear_gram_matches_entrywise_loop() {
        let x = standard_normal_mat(5, 3, 11);
        let g = gram(&KernelSpec::linear(), x.as_ref()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let mut dot = 0.0;
                for c in 0..3 {
                    dot += x[(i, c)] * x[(j, c)];
                }
                assert!((g[(i, j)] - dot / 5.0).abs() < 1e-14, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn cross_gram_of_x_with_itself_equals_gram() {
        let x = standard_normal_mat(6, 2, 3);
        for spec in [KernelSpec::linear(), KernelSpec::gaussian(1.3), KernelSpec::matern12(0.4)] {
            let g = gram(&spec, x.as_ref()).unwrap();
            let c = cross_gram(&spec, x.as_ref(), x.as_ref()).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    assert_eq!(g[(i, j)], c[(i, j)], "family {:?} entry ({i},{j})", spec.family);
                }
            }
        }
    }

    #[test]
    fn cross_gram_scaling_uses_row_count() {
        // n = 1 row in X: scaling is 1/1 regardless of Y's row count.
        let x = mat_from_rows(&[&[1.0, 0.0]]);
        let y = mat_from_rows(&[&[2.0, 0.0]]);
        let c = cross_gram(&KernelSpec::linear(), x.as_ref(), y.as_ref()).unwrap();
        assert_eq!(c[(0, 0)], 2.0);
    }

    #[test]
    fn cross_gram_matches_entrywise_loop() {
        let x = standard_normal_mat(4, 2, 21);
        let y = standard_normal_mat(3, 2, 22);
        let c = cross_gram(&KernelSpec::matern12(0.9), x.as_ref(), y.as_ref()).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let mut d2 = 0.0;
                for k in 0..2 {
                    d2 += (x[(i, k)] - y[(j, k)]).powi(2);
                }
                let expect = (-d2.sqrt() / 0.9).exp() / 4.0;
                assert!((c[(i, j)] - expect).abs() < 1e-14, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn quantiles_of_identical_points_are_zero() {
        let x = mat_from_rows(&[&[1.0, 2.0], &[1.0, 2.0]]);
        let q = lengthscale_quantiles(x.as_ref(), 2, &[0.25, 0.5, 0.9], 0).unwrap();
        assert!(q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quantile_of_single_distance_is_that_distance() {
        let x = mat_from_rows(&[&[0.0], &[1.0]]);
        let q = lengthscale_quantiles(x.as_ref(), 2, &[0.5], 123).unwrap();
        assert_eq!(q, vec![1.0]);
    }

    #[test]
    fn median_matches_exhaustive_oracle() {
        let n = 100;
        let x = standard_normal_mat(n, 10, 77);
        // sample_size = n makes the seeded subsample the whole set, so the
        // oracle is the exhaustive O(n²) pairwise computation.
        let got = lengthscale_quantiles(x.as_ref(), n, &[0.5], 5).unwrap()[0];

        let mut dists = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let mut d2 = 0.0;
                for c in 0..10 {
                    d2 += (x[(i, c)] - x[(j, c)]).powi(2);
                }
                dists.push(d2.sqrt());
            }
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = dists.len();
        let h = (m - 1) as f64 * 0.5;
        let lo = h.floor() as usize;
        let expect = dists[lo] + (h - lo as f64) * (dists[lo + 1] - dists[lo]);
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn quantiles_validate_inputs() {
        let x = standard_normal_mat(5, 2, 0);
        assert!(lengthscale_quantiles(x.as_ref(), 1, &[0.5], 0).is_err());
        assert!(lengthscale_quantiles(x.as_ref(), 6, &[0.5], 0).is_err());
        assert!(lengthscale_quantiles(x.as_ref(), 3, &[0.0], 0).is_err());
        assert!(lengthscale_quantiles(x.as_ref(), 3, &[1.0], 0).is_err());
    }

    #[test]
    fn quantiles_are_deterministic_given_seed() {
        let x = standard_normal_mat(50, 4, 9);
        let a = lengthscale_quantiles(x.as_ref(), 20, &[0.05, 0.5, 0.95], 42).unwrap();
        let b = lengthscale_quantiles(x.as_ref(), 20, &[0.05, 0.5, 0.95], 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bundle_requires_matching_kernels_for_cross() {
        let x = standard_normal_mat(4, 1, 1);
        let y = standard_normal_mat(4, 1, 2);
        let err = GramBundle::from_data(
            x.as_ref(),
            y.as_ref(),
            &KernelSpec::matern12(1.0),
            &KernelSpec::linear(),
            true,
        );
        assert!(matches!(err, Err(RrrError::InvalidInput(_))));
    }

    #[test]
    fn bundle_from_matrices_rejects_asymmetry() {
        let mut k = Mat::<f64>::identity(3, 3);
        k[(0, 1)] = 1e-3;
        let l = Mat::<f64>::identity(3, 3);
        assert!(GramBundle::from_matrices(k, l, None).is_err());
    }

    #[test]
    fn trace_l_is_unit_for_distance_kernels() {
        let y = standard_normal_mat(8, 2, 5);
        let g = GramBundle::from_data(
            y.as_ref(),
            y.as_ref(),
            &KernelSpec::gaussian(1.0),
            &KernelSpec::gaussian(1.0),
            false,
        )
        .unwrap();
        // diagonal entries are each 1/n, so the trace is exactly 1 up to roundoff
        assert!((g.trace_l() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gram_is_symmetric_psd_and_unit_diagonal(
            seed in 0u64..1000,
            n in 1usize..30,
            d in 1usize..4,
            family in 0usize..3,
        ) {
            let spec = match family {
                0 => KernelSpec::linear(),
                1 => KernelSpec::gaussian(0.8),
                _ => KernelSpec::matern12(1.5),
            };
            let x = standard_normal_mat(n, d, seed);
            let g = gram(&spec, x.as_ref()).unwrap();

            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(g[(i, j)], g[(j, i)]);
                }
                if spec.family != KernelFamily::Linear {
                    prop_assert!((g[(i, i)] - 1.0 / n as f64).abs() < 1e-15);
                }
            }

            // PSD up to roundoff: smallest eigenvalue ≥ −1e−10.
            let eigs = faer::linalg::solvers::SelfAdjointEigen::new(g.as_ref(), faer::Side::Lower)
                .expect("eigendecomposition of a Gram matrix");
            let s = eigs.S().column_vector();
            let min_eig = (0..n).map(|i| s[i]).fold(f64::INFINITY, f64::min);
            prop_assert!(min_eig >= -1e-10, "min eigenvalue {}", min_eig);
        }
    }
}
