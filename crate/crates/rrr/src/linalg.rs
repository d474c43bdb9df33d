//! Dense linear-algebra building blocks: Gaussian sketches, regularized
//! Cholesky solves, rank-revealing QR, whitened symmetric generalized
//! eigenproblems, truncated SVD, and a dense nonsymmetric eigensolver with a
//! deterministic ordering/phase convention.
//!
//! Everything here is deterministic: randomness enters only through
//! [`SketchSpec::seed`], and eigen/singular vectors are post-processed with a
//! fixed sign (or phase) convention so repeated runs are bitwise identical.

use faer::linalg::solvers::{ColPivQr, Eigen, Llt, SelfAdjointEigen, Solve, Svd};
use faer::{Mat, MatRef, Side};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::rng::standard_normal_mat;
use crate::{Result, RrrError};

/// Complex scalar used for nonsymmetric spectra.
pub type C64 = Complex<f64>;

/// Law of the random test matrix Ω used by the randomized range finder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchDistribution {
    /// Ω has i.i.d. standard normal entries.
    Isotropic,
    /// Columns of Ω are drawn from `N(0, L)` where `L` is the output Gram
    /// matrix, i.e. Ω = F·G for a factor `L = FFᵀ` and standard normal G.
    Correlated,
}

/// Parameters of a randomized sketch: target rank, oversampling, number of
/// power iterations, test-matrix law, and the seed that makes the draw
/// reproducible. The sketch width is `rank + oversampling`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchSpec {
    pub rank: usize,
    pub oversampling: usize,
    pub power: usize,
    pub distribution: SketchDistribution,
    pub seed: u64,
}

impl SketchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rank < 1 {
            return Err(RrrError::InvalidInput("sketch rank must be at least 1".into()));
        }
        if self.oversampling < 2 {
            return Err(RrrError::InvalidInput("oversampling must be at least 2".into()));
        }
        if self.power < 1 {
            return Err(RrrError::InvalidInput(
                "at least one power iteration is required".into(),
            ));
        }
        Ok(())
    }

    /// Number of sketch columns, `rank + oversampling`.
    pub fn width(&self) -> usize {
        self.rank + self.oversampling
    }
}

/// Non-increasing singular values of an operator, with energy helpers. Values
/// beyond the stored length are treated as exact zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSpectrum {
    values: Vec<f64>,
}

impl SingularSpectrum {
    /// Sorts the values in non-increasing order; rejects negatives and
    /// non-finite entries.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(RrrError::InvalidInput(
                "singular values must be finite and non-negative".into(),
            ));
        }
        values.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `σ_i` with 0-based `i`; zero past the end.
    pub fn value(&self, i: usize) -> f64 {
        self.values.get(i).copied().unwrap_or(0.0)
    }

    /// `Σ_{i<r} σ_i²`.
    pub fn head_energy(&self, r: usize) -> f64 {
        self.values.iter().take(r).map(|v| v * v).sum()
    }

    /// `Σ_{i≥r} σ_i²` (0-based: the energy outside the leading `r` values).
    pub fn tail_energy(&self, r: usize) -> f64 {
        self.values.iter().skip(r).map(|v| v * v).sum()
    }

    /// Number of values strictly above `cutoff`.
    pub fn effective_rank(&self, cutoff: f64) -> usize {
        self.values.iter().filter(|v| **v > cutoff).count()
    }
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Deterministic sign convention: each column is negated if its
/// largest-magnitude entry (first such index on ties) is negative.
pub(crate) fn fix_column_signs(m: &mut Mat<f64>) {
    for j in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..m.nrows() {
            let a = m[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m.nrows() > 0 && m[(best, j)] < 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Cholesky factorization of `A + γI` for symmetric PSD `A` and `γ > 0`,
/// reusable across many right-hand sides. No jitter is applied beyond `γ`
/// itself: the shift is what makes the matrix definite.
pub struct CovCholesky {
    llt: Llt<f64>,
    n: usize,
    gamma: f64,
}

impl CovCholesky {
    pub fn new(a: MatRef<'_, f64>, gamma: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(RrrError::InvalidInput(format!(
                "matrix must be square, got {}×{}",
                n,
                a.ncols()
            )));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(RrrError::InvalidInput(format!(
                "regularization must be positive and finite, got {gamma}"
            )));
        }
        let mut shifted = a.to_owned();
        for i in 0..n {
            shifted[(i, i)] += gamma;
        }
        let llt = Llt::new(shifted.as_ref(), Side::Lower).map_err(|_| {
            RrrError::Numerical(format!(
                "Cholesky of the γ-shifted matrix failed (n = {n}, γ = {gamma})"
            ))
        })?;
        Ok(Self { llt, n, gamma })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Solves `(A + γI) X = B`.
    pub fn solve_mat(&self, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if b.nrows() != self.n {
            return Err(RrrError::InvalidInput(format!(
                "right-hand side has {} rows, expected {}",
                b.nrows(),
                self.n
            )));
        }
        Ok(self.llt.solve(b))
    }

    pub fn solve_in_place(&self, b: &mut Mat<f64>) -> Result<()> {
        if b.nrows() != self.n {
            return Err(RrrError::InvalidInput(format!(
                "right-hand side has {} rows, expected {}",
                b.nrows(),
                self.n
            )));
        }
        self.llt.solve_in_place(b.as_mut());
        Ok(())
    }
}

/// One-shot `(A + γI) X = B` solve; see [`CovCholesky`] for the reusable
/// form. For well-conditioned shifts (`(λ_max(A) + γ)/γ ≲ 1e12`) the residual
/// satisfies `‖(A + γI)X − B‖ ≤ 1e−8 ‖B‖`.
pub fn chol_solve(a: MatRef<'_, f64>, gamma: f64, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    CovCholesky::new(a, gamma)?.solve_mat(b)
}

/// Cholesky-like factor `F` with `L ≈ FFᵀ` for a symmetric PSD `L` that may
/// be numerically singular; escalating diagonal jitter starting at
/// `1e−12·tr(L)/n` and growing tenfold up to `1e−6·tr(L)/n`.
pub fn psd_cholesky_factor(l: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = l.nrows();
    if l.ncols() != n || n == 0 {
        return Err(RrrError::InvalidInput("factor of a non-square or empty matrix".into()));
    }
    let trace: f64 = (0..n).map(|i| l[(i, i)]).sum();
    if !(trace > 0.0) {
        return Err(RrrError::Numerical(
            "PSD factorization needs a positive trace".into(),
        ));
    }
    if let Ok(f) = Llt::new(l, Side::Lower) {
        return Ok(f.L().to_owned());
    }
    let unit = trace / n as f64;
    let mut jitter = 1e-12 * unit;
    let max_jitter = 1e-6 * unit;
    while jitter <= max_jitter * (1.0 + 1e-9) {
        let mut shifted = l.to_owned();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Ok(f) = Llt::new(shifted.as_ref(), Side::Lower) {
            return Ok(f.L().to_owned());
        }
        jitter *= 10.0;
    }
    Err(RrrError::Numerical(format!(
        "matrix is not PSD within jitter budget (n = {n}, max jitter = {max_jitter:.3e})"
    )))
}

/// Draws the `n × (rank + oversampling)` random test matrix described by
/// `spec`. The correlated law needs the output Gram matrix `l`; the isotropic
/// law ignores it. Deterministic in `spec.seed`.
pub fn gaussian_sketch(
    n: usize,
    spec: &SketchSpec,
    l: Option<MatRef<'_, f64>>,
) -> Result<Mat<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(RrrError::InvalidInput("sketch of an empty sample".into()));
    }
    let width = spec.width();
    let g = standard_normal_mat(n, width, spec.seed);
    match spec.distribution {
        SketchDistribution::Isotropic => Ok(g),
        SketchDistribution::Correlated => {
            let l = l.ok_or_else(|| {
                RrrError::InvalidInput(
                    "correlated sketch requires the output Gram matrix".into(),
                )
            })?;
            if l.nrows() != n || l.ncols() != n {
                return Err(RrrError::InvalidInput(format!(
                    "output Gram must be {n}×{n}, got {}×{}",
                    l.nrows(),
                    l.ncols()
                )));
            }
            let f = psd_cholesky_factor(l)?;
            Ok(&f * &g)
        }
    }
}

/// Like [`gaussian_sketch`], but the correlated law reuses a precomputed
/// factor `F` with `L = F·Fᵀ` (e.g. from [`psd_cholesky_factor`]), skipping
/// the per-draw factorization. Sweeps that draw hundreds of sketches against
/// one fixed dataset should factor once and call this.
pub fn gaussian_sketch_with_factor(
    n: usize,
    spec: &SketchSpec,
    l_factor: Option<MatRef<'_, f64>>,
) -> Result<Mat<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(RrrError::InvalidInput("sketch of an empty sample".into()));
    }
    let g = standard_normal_mat(n, spec.width(), spec.seed);
    match spec.distribution {
        SketchDistribution::Isotropic => Ok(g),
        SketchDistribution::Correlated => {
            let f = l_factor.ok_or_else(|| {
                RrrError::InvalidInput(
                    "correlated sketch requires a factor of the output Gram matrix".into(),
                )
            })?;
            if f.nrows() != n {
                return Err(RrrError::InvalidInput(format!(
                    "Gram factor must have {n} rows, got {}",
                    f.nrows()
                )));
            }
            Ok(f * g.as_ref())
        }
    }
}

/// Rank-revealing economy QR: an orthonormal basis of the numerical column
/// space of `m`. Uses column-pivoted QR and keeps the leading columns whose
/// `|R_ii|` exceeds `max(nrows, ncols)·ε·|R_00|`; a zero matrix yields zero
/// columns.
pub fn qr_econ(m: MatRef<'_, f64>) -> Mat<f64> {
    let (n, k) = (m.nrows(), m.ncols());
    if n == 0 || k == 0 {
        return Mat::zeros(n, 0);
    }
    let qr = ColPivQr::new(m);
    let r = qr.thin_R();
    let lead = r[(0, 0)].abs();
    let tol = n.max(k) as f64 * f64::EPSILON * lead;
    let kmax = n.min(k);
    let mut keep = 0usize;
    // column pivoting makes |R_ii| non-increasing, so the first failure ends
    // the numerical rank
    for i in 0..kmax {
        if r[(i, i)].abs() > tol {
            keep += 1;
        } else {
            break;
        }
    }
    let q = qr.compute_thin_Q();
    q.as_ref().subcols(0, keep).to_owned()
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in non-increasing
/// order with sign-fixed eigenvector columns.
pub fn sym_eig(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(RrrError::InvalidInput("sym_eig of a non-square matrix".into()));
    }
    let e = SelfAdjointEigen::new(a, Side::Lower)
        .map_err(|_| RrrError::Numerical("symmetric eigendecomposition failed".into()))?;
    let s = e.S().column_vector();
    let u = e.U();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).expect("finite eigenvalues"));
    let vals: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
    let mut vecs = Mat::from_fn(n, n, |i, j| u[(i, idx[j])]);
    fix_column_signs(&mut vecs);
    Ok((vals, vecs))
}

/// Symmetric generalized eigenproblem `F₁ q = λ F₀ q` restricted to the range
/// of the PSD matrix `F₀`, returning the top `rank` pairs (fewer if the
/// numerical rank of `F₀` is smaller).
///
/// The problem is whitened by `W = F₀^{†/2}` computed from the
/// eigendecomposition of `F₀` with relative cutoff `dim·ε·λ_max(F₀)`, so the
/// returned vectors automatically satisfy `qᵀ F₀ q = 1`; the reduced matrix
/// `Wᵀ F₁ W` is symmetrized before its eigendecomposition. Directions in the
/// null space of `F₀` are discarded (infinite/indeterminate generalized
/// eigenvalues), matching the pseudo-inverse reading of the problem.
pub fn sym_gep(
    f1: MatRef<'_, f64>,
    f0: MatRef<'_, f64>,
    rank: usize,
) -> Result<(Vec<f64>, Mat<f64>)> {
    let m = f0.nrows();
    if f0.ncols() != m || f1.nrows() != m || f1.ncols() != m {
        return Err(RrrError::InvalidInput(format!(
            "sym_gep needs square matched matrices, got F1 {}×{} and F0 {}×{}",
            f1.nrows(),
            f1.ncols(),
            f0.nrows(),
            f0.ncols()
        )));
    }
    if rank == 0 {
        return Err(RrrError::InvalidInput("sym_gep with rank 0".into()));
    }
    let (s0, u0) = sym_eig(f0)?;
    let lam_max = s0.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = m as f64 * f64::EPSILON * lam_max;
    let kept: Vec<usize> = (0..m).filter(|&i| s0[i] > cutoff).collect();
    if kept.is_empty() {
        return Ok((Vec::new(), Mat::zeros(m, 0)));
    }
    let f = kept.len();
    let w = Mat::from_fn(m, f, |i, j| u0[(i, kept[j])] / s0[kept[j]].sqrt());
    let t_raw = w.transpose() * f1 * &w;
    let t = symmetrize(t_raw.as_ref());
    let (tv, tu) = sym_eig(t.as_ref())?;
    let r_eff = rank.min(f);
    let mut q = &w * tu.as_ref().subcols(0, r_eff);
    fix_column_signs(&mut q);
    Ok((tv[..r_eff].to_vec(), q))
}

/// Rank-`r` truncated SVD `M ≈ U diag(S) Vᵀ`, singular values non-increasing,
/// sign-fixed `U` columns (with `V` flipped consistently).
pub fn truncated_svd(m: MatRef<'_, f64>, rank: usize) -> Result<(Mat<f64>, Vec<f64>, Mat<f64>)> {
    if rank == 0 {
        return Err(RrrError::InvalidInput("truncated_svd with rank 0".into()));
    }
    let svd = Svd::new_thin(m).map_err(|_| RrrError::Numerical("SVD failed to converge".into()))?;
    let kmax = m.nrows().min(m.ncols());
    let k = rank.min(kmax);
    let s = svd.S().column_vector();
    let mut idx: Vec<usize> = (0..kmax).collect();
    idx.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).expect("finite singular values"));
    let vals: Vec<f64> = idx.iter().take(k).map(|&i| s[i]).collect();
    let fu = svd.U();
    let fv = svd.V();
    let mut u = Mat::from_fn(m.nrows(), k, |i, j| fu[(i, idx[j])]);
    let mut v = Mat::from_fn(m.ncols(), k, |i, j| fv[(i, idx[j])]);
    for j in 0..k {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..u.nrows() {
            let a = u[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if u[(best, j)] < 0.0 {
            for i in 0..u.nrows() {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..v.nrows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
    Ok((u, vals, v))
}

/// Dense eigendecomposition of a real square matrix with complex spectrum.
///
/// Eigenpairs are sorted by (|λ| descending, Re λ descending, Im λ
/// ascending); each eigenvector has unit norm with its largest-modulus entry
/// (first such index on ties) rotated to the positive real axis, making the
/// output deterministic. Conjugate pairs are both present.
pub fn dense_nonsym_eig(a: MatRef<'_, f64>) -> Result<(Vec<C64>, Mat<C64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(RrrError::InvalidInput("eigendecomposition of a non-square matrix".into()));
    }
    let e = Eigen::new_from_real(a)
        .map_err(|_| RrrError::Numerical("nonsymmetric eigendecomposition failed".into()))?;
    let s = e.S().column_vector();
    let u = e.U();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (s[i], s[j]);
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    let vals: Vec<C64> = idx.iter().map(|&i| s[i]).collect();
    let mut vecs = Mat::from_fn(n, n, |i, j| u[(i, idx[j])]);
    for j in 0..n {
        let mut norm_sq = 0.0f64;
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..n {
            let m = vecs[(i, j)].norm_sqr();
            norm_sq += m;
            if m > best_abs {
                best_abs = m;
                best = i;
            }
        }
        let norm = norm_sq.sqrt();
        if norm == 0.0 {
            continue;
        }
        let pivot = vecs[(best, j)];
        let phase = if pivot.norm() == 0.0 { C64::new(1.0, 0.0) } else { pivot.conj() / pivot.norm() };
        let scale = phase / norm;
        for i in 0..n {
            vecs[(i, j)] *= scale;
        }
    }
    Ok((vals, vecs))
}
