//! Reduced-rank regression estimators.
//!
//! Four fitting procedures: exact primal and exact dual solvers for the
//! regularized rank-constrained least-squares problem, plus their randomized
//! sketch-based counterparts (primal for explicit finite feature maps, dual
//! for Gram-matrix data). The randomized fits take the random test matrix Ω
//! as an argument — drawing it (see [`crate::linalg::gaussian_sketch`]) is
//! the caller's business, which keeps every fit a deterministic function of
//! its inputs.
//!
//! Conventions: feature matrices have one sample per row; Gram matrices
//! carry the `1/n` scaling of [`crate::kernels`]. The dual estimator's
//! coefficient matrices satisfy `Ur = K·Vr` and `VrᵀK K_γ Vr = I_r`.

use std::path::Path;
use std::sync::Arc;

use faer::{Mat, MatRef, Scale};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::kernels::{cross_gram, GramBundle, KernelFamily, KernelSpec};
use crate::linalg::{
    psd_cholesky_factor, qr_econ, sym_eig, sym_gep, symmetrize, CovCholesky, SketchSpec, C64,
};
use crate::rng::{derive_seed, standard_normal_mat};
use crate::{Result, RrrError};

/// Above this sample count the exact dual fit switches from dense
/// factorizations to verified blocked subspace iteration.
pub(crate) const DENSE_DUAL_MAX: usize = 2048;

const DUAL_ITER_MAX_SWEEPS: usize = 300;

/// Output-side data for the primal fits: explicit features when the output
/// space is finite-dimensional, or the `1/n`-scaled output Gram matrix.
///
/// With the Gram variant the estimator is fitted against an implicit
/// isometric representation of the outputs (a Cholesky-like factor of `L`
/// scaled by `√n`), so risks and subspaces are exact but predictions live in
/// that surrogate coordinate system.
#[derive(Debug, Clone, Copy)]
pub enum PrimalTarget<'a> {
    Features(MatRef<'a, f64>),
    Gram(MatRef<'a, f64>),
}

/// Fitted primal estimator: the induced operator is `Ĝ = Cxyᵀ·Vr·Vrᵀ`
/// (output features per row: `ŷ(x) = Ĝx`).
#[derive(Debug, Clone)]
pub struct PrimalEstimator {
    /// `d_H × r` basis; for exact fits the columns satisfy `VrᵀĈ_γVr = I_r`.
    pub vr: Mat<f64>,
    /// `d_H × d_G` cross-covariance `(1/n)SxᵀSy`.
    pub cxy: Mat<f64>,
    pub gamma: f64,
    pub rank: usize,
    /// Squared singular values `σ_i²` attached to the returned basis (exact
    /// generalized eigenvalues, or sketch Ritz values for randomized fits).
    pub sigma_sq: Vec<f64>,
}

/// Fitted dual estimator: the induced operator is `Ĝ = Ẑ*·Ur·Vrᵀ·Ŝ`, with
/// the `1/√n`-scaled sampling operators of the training set.
#[derive(Debug, Clone)]
pub struct DualEstimator {
    /// `n × r`, equals `K·Vr`.
    pub ur: Mat<f64>,
    /// `n × r`, normalized so `VrᵀK K_γ Vr = I_r`.
    pub vr: Mat<f64>,
    pub gamma: f64,
    pub rank: usize,
    /// Squared singular values as in [`PrimalEstimator::sigma_sq`].
    pub sigma_sq: Vec<f64>,
    pub kernel_x: Option<KernelSpec>,
    pub kernel_y: Option<KernelSpec>,
    train_x: Option<Arc<Mat<f64>>>,
    train_x_hash: Option<String>,
    train_y_hash: Option<String>,
}

/// Spectrum of the fitted operator restricted to its rank-`r` range:
/// eigenvalues of `M_r = Vrᵀ·Kxy·Ur` with eigenfunction coefficients in the
/// training-output expansion (`h_i = Σ_j coeffs[(j,i)]·ℓ(y_j, ·)/√n`).
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Sorted by descending modulus; conjugate pairs both present.
    pub eigenvalues: Vec<C64>,
    /// `n × r` complex coefficients, `Ur·W` for the eigenvector matrix `W`.
    pub right_coeffs: Mat<C64>,
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(RrrError::InvalidInput(format!(
            "regularization must be positive and finite, got {gamma}"
        )))
    }
}

fn validate_rank(rank: usize) -> Result<()> {
    if rank >= 1 {
        Ok(())
    } else {
        Err(RrrError::InvalidInput("rank must be at least 1".into()))
    }
}

/// SHA-256 of a matrix (dims + column-major f64 little-endian payload), hex.
pub fn matrix_hash(m: MatRef<'_, f64>) -> String {
    let mut h = Sha256::new();
    h.update((m.nrows() as u64).to_le_bytes());
    h.update((m.ncols() as u64).to_le_bytes());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            h.update(m[(i, j)].to_le_bytes());
        }
    }
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn complexify(m: MatRef<'_, f64>) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| C64::new(m[(i, j)], 0.0))
}

/// Builds `Cxy = (1/n)SxᵀSy`, materializing surrogate output features from a
/// factor of `L` when only the Gram matrix is available.
pub(crate) fn primal_cross_cov(sx: MatRef<'_, f64>, target: PrimalTarget<'_>) -> Result<Mat<f64>> {
    let n = sx.nrows();
    if n == 0 || sx.ncols() == 0 {
        return Err(RrrError::InvalidInput("empty feature matrix".into()));
    }
    match target {
        PrimalTarget::Features(sy) => {
            if sy.nrows() != n {
                return Err(RrrError::InvalidInput(format!(
                    "paired sample with {} inputs but {} outputs",
                    n,
                    sy.nrows()
                )));
            }
            Ok((sx.transpose() * sy) * Scale(1.0 / n as f64))
        }
        PrimalTarget::Gram(l) => {
            if l.nrows() != n || l.ncols() != n {
                return Err(RrrError::InvalidInput(format!(
                    "output Gram must be {n}×{n}, got {}×{}",
                    l.nrows(),
                    l.ncols()
                )));
            }
            // surrogate features √n·F with L = FFᵀ give (1/n)Sxᵀ(√n F)
            let f = psd_cholesky_factor(l)?;
            Ok((sx.transpose() * &f) * Scale(1.0 / (n as f64).sqrt()))
        }
    }
}

/// Shared error taxonomy for the sketched GEPs: an empty pencil means the
/// power iteration collapsed; a short one means the requested rank exceeds
/// what the sketch revealed.
fn sketched_gep(f1: Mat<f64>, f0: Mat<f64>, rank: usize) -> Result<(Vec<f64>, Mat<f64>)> {
    let (vals, q) = sym_gep(f1.as_ref(), f0.as_ref(), rank)?;
    if vals.is_empty() {
        return Err(RrrError::Numerical(
            "power-iteration collapse: the reduced Gram F0 is numerically zero".into(),
        ));
    }
    if vals.len() < rank {
        return Err(RrrError::InvalidInput(format!(
            "requested rank {rank} exceeds the rank {} revealed by the sketch",
            vals.len()
        )));
    }
    Ok((vals.iter().map(|v| v.max(0.0)).collect(), q))
}

/// Exact primal fit: the top-`rank` generalized eigenvectors of
/// `(Ĉ_XYĈ_XY*, Ĉ_X + γ)` with the `⟨h, Ĉ_γh⟩ = 1` normalization.
pub fn fit_primal_exact(
    sx: MatRef<'_, f64>,
    target: PrimalTarget<'_>,
    gamma: f64,
    rank: usize,
) -> Result<PrimalEstimator> {
    validate_gamma(gamma)?;
    validate_rank(rank)?;
    let (n, d) = (sx.nrows(), sx.ncols());
    let cxy = primal_cross_cov(sx, target)?;
    let c = symmetrize(((sx.transpose() * sx) * Scale(1.0 / n as f64)).as_ref());
    let mut c_gamma = c;
    for i in 0..d {
        c_gamma[(i, i)] += gamma;
    }
    let nmat = symmetrize((&cxy * cxy.transpose()).as_ref());
    let (vals, vr) = sym_gep(nmat.as_ref(), c_gamma.as_ref(), rank)?;
    let cutoff = d as f64 * f64::EPSILON * vals.first().copied().unwrap_or(0.0).max(0.0);
    let available = vals.iter().take_while(|v| **v > cutoff).count();
    if available < rank {
        return Err(RrrError::InvalidInput(format!(
            "requested rank {rank} exceeds the numerical rank {available} of the cross-covariance"
        )));
    }
    Ok(PrimalEstimator {
        vr,
        cxy,
        gamma,
        rank,
        sigma_sq: vals.iter().map(|v| v.max(0.0)).collect(),
    })
}

/// Randomized primal fit: range finder with `power` iterations of
/// `N·C_γ^{-1}` applied to Ω, then the sketched generalized eigenproblem
/// `(ΨᵀNΨ, ΨᵀΩ)` on the final solve `C_γΨ = Ω`.
pub fn fit_primal_r4(
    sx: MatRef<'_, f64>,
    target: PrimalTarget<'_>,
    gamma: f64,
    sketch: &SketchSpec,
    omega: MatRef<'_, f64>,
) -> Result<PrimalEstimator> {
    validate_gamma(gamma)?;
    sketch.validate()?;
    let (n, d) = (sx.nrows(), sx.ncols());
    if omega.nrows() != d || omega.ncols() != sketch.width() {
        return Err(RrrError::InvalidInput(format!(
            "sketch matrix must be {d}×{}, got {}×{}",
            sketch.width(),
            omega.nrows(),
            omega.ncols()
        )));
    }
    let cxy = primal_cross_cov(sx, target)?;
    let c = symmetrize(((sx.transpose() * sx) * Scale(1.0 / n as f64)).as_ref());
    let solver = CovCholesky::new(c.as_ref(), gamma)?;
    let nmul = |m: MatRef<'_, f64>| -> Mat<f64> { &cxy * (cxy.transpose() * m) };

    let mut om = omega.to_owned();
    for _ in 0..sketch.power {
        let psi = solver.solve_mat(om.as_ref())?;
        om = nmul(psi.as_ref());
        om = qr_econ(om.as_ref());
        if om.ncols() == 0 {
            return Err(RrrError::Numerical(
                "power-iteration collapse: the sketch died in the null space of the squared cross-covariance".into(),
            ));
        }
    }
    let psi = solver.solve_mat(om.as_ref())?;
    let f0 = symmetrize((psi.transpose() * &om).as_ref());
    let npsi = nmul(psi.as_ref());
    let f1 = symmetrize((psi.transpose() * &npsi).as_ref());
    let (sigma_sq, qq) = sketched_gep(f1, f0, sketch.rank)?;
    let vr = &psi * &qq;
    Ok(PrimalEstimator { vr, cxy, gamma, rank: sketch.rank, sigma_sq })
}

/// Exact dual fit on `1/n`-scaled Gram matrices; see
/// [`fit_dual_exact_with`] to reuse a `K_γ` factorization.
pub fn fit_dual_exact(g: &GramBundle, gamma: f64, rank: usize) -> Result<DualEstimator> {
    validate_gamma(gamma)?;
    let solver = CovCholesky::new(g.k.as_ref(), gamma)?;
    fit_dual_exact_with(g, &solver, rank)
}

/// Exact dual fit with a caller-supplied Cholesky of `K + γI`: solves the
/// generalized problem `LKv = σ²K_γv` with normalization `vᵀKK_γv = 1` and
/// sets `Ur = K·Vr`.
pub fn fit_dual_exact_with(
    g: &GramBundle,
    solver: &CovCholesky,
    rank: usize,
) -> Result<DualEstimator> {
    validate_rank(rank)?;
    let n = g.n;
    if solver.dim() != n {
        return Err(RrrError::InvalidInput(format!(
            "solver dimension {} does not match the Gram size {n}",
            solver.dim()
        )));
    }
    if n <= DENSE_DUAL_MAX {
        fit_dual_exact_dense(g.k.as_ref(), g.l.as_ref(), solver, rank)
    } else {
        fit_dual_exact_iterative(g.k.as_ref(), g.l.as_ref(), solver, rank)
    }
}

/// Dense path: the pencil `(LK, K_γ)` is similar to the symmetric PSD matrix
/// `A = L^{1/2}·K·K_γ^{-1}·L^{1/2}` (K and K_γ commute), whose eigenpairs
/// `(σ², u)` map back to generalized eigenvectors `v = K_γ^{-1}L^{1/2}u/σ`
/// that automatically satisfy `vᵀKK_γv = 1`.
fn fit_dual_exact_dense(
    k: MatRef<'_, f64>,
    l: MatRef<'_, f64>,
    solver: &CovCholesky,
    rank: usize,
) -> Result<DualEstimator> {
    let n = k.nrows();
    let (sl, ul) = sym_eig(l)?;
    let w = {
        let scaled = Mat::from_fn(n, n, |i, j| ul[(i, j)] * sl[j].max(0.0).sqrt());
        symmetrize((&scaled * ul.transpose()).as_ref())
    };
    let t = solver.solve_mat(w.as_ref())?;
    let kt = k * t.as_ref();
    let a = symmetrize((&w * &kt).as_ref());
    let (avals, avecs) = sym_eig(a.as_ref())?;
    let cutoff = n as f64 * f64::EPSILON * avals.first().copied().unwrap_or(0.0).max(0.0);
    let available = avals.iter().take_while(|v| **v > cutoff).count();
    if available < rank {
        return Err(RrrError::InvalidInput(format!(
            "requested rank {rank} exceeds the numerical rank {available} of L·K"
        )));
    }
    let sigma_sq: Vec<f64> = avals[..rank].to_vec();
    let mut vr = &t * avecs.as_ref().subcols(0, rank);
    for j in 0..rank {
        let inv = 1.0 / sigma_sq[j].sqrt();
        for i in 0..n {
            vr[(i, j)] *= inv;
        }
    }
    let ur = k * vr.as_ref();
    Ok(DualEstimator::bare(ur, vr, solver.gamma(), rank, sigma_sq))
}

/// Large-`n` path: blocked subspace iteration on `K_γ^{-1}LK` with
/// Rayleigh–Ritz extraction through the symmetric reduced pencil
/// `((KQ)ᵀL(KQ), QᵀKK_γQ)`; accepted only once the full-size pencil
/// residuals pass, with the dense path as fallback.
fn fit_dual_exact_iterative(
    k: MatRef<'_, f64>,
    l: MatRef<'_, f64>,
    solver: &CovCholesky,
    rank: usize,
) -> Result<DualEstimator> {
    let n = k.nrows();
    let gamma = solver.gamma();
    let block = (2 * rank + 2).max(12).min(n);
    let seed = derive_seed(&[0x6475_616c_6974_6572, n as u64, rank as u64, block as u64]);
    let mut basis = qr_econ(standard_normal_mat(n, block, seed).as_ref());
    let mut prev: Vec<f64> = Vec::new();
    for _sweep in 0..DUAL_ITER_MAX_SWEEPS {
        let kb = k * basis.as_ref();
        let mut z = l * &kb;
        solver.solve_in_place(&mut z)?;
        basis = qr_econ(z.as_ref());
        if basis.ncols() == 0 {
            return Err(RrrError::InvalidInput(format!(
                "requested rank {rank} exceeds the numerical rank of L·K"
            )));
        }
        let kb = k * basis.as_ref();
        let f0 = symmetrize(
            (kb.transpose() * &kb + (basis.transpose() * &kb) * Scale(gamma)).as_ref(),
        );
        let lkb = l * &kb;
        let f1 = symmetrize((kb.transpose() * &lkb).as_ref());
        let (theta, qq) = sym_gep(f1.as_ref(), f0.as_ref(), rank)?;
        if theta.len() < rank {
            prev.clear();
            continue;
        }
        // Ritz values settle long before the full-size residual is worth
        // computing; 1e-9 leaves headroom over their roundoff jitter.
        let stable = prev.len() == rank
            && theta
                .iter()
                .zip(&prev)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * theta[0].max(f64::MIN_POSITIVE));
        if stable {
            let vr = &basis * &qq;
            let kv = k * vr.as_ref();
            let lkv = l * &kv;
            let mut ok = true;
            for j in 0..rank {
                let mut res = 0.0f64;
                let mut scale = 0.0f64;
                for i in 0..n {
                    let kg = kv[(i, j)] + gamma * vr[(i, j)];
                    let r = lkv[(i, j)] - theta[j] * kg;
                    res += r * r;
                    scale += kg * kg;
                }
                // The residual of a converged pair floors near 1e-8·θ₀·‖K_γv‖
                // from forming L·K·v in finite precision, so the gate sits a
                // decade above that floor.
                if res.sqrt() > 1e-7 * theta[0] * scale.sqrt().max(f64::MIN_POSITIVE) {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Ok(DualEstimator::bare(kv, vr, gamma, rank, theta));
            }
        }
        prev = theta;
    }
    fit_dual_exact_dense(k, l, solver, rank)
}

/// Randomized dual fit; see [`fit_dual_r4_with`] to reuse a `K_γ` Cholesky
/// across many sketches of the same dataset.
pub fn fit_dual_r4(
    g: &GramBundle,
    gamma: f64,
    sketch: &SketchSpec,
    omega: MatRef<'_, f64>,
) -> Result<DualEstimator> {
    validate_gamma(gamma)?;
    let solver = CovCholesky::new(g.k.as_ref(), gamma)?;
    fit_dual_r4_with(g, &solver, sketch, omega)
}

/// Randomized dual fit: `power` rounds of `{solve K_γΨ = Ω; Ω ← L(Ω − γΨ);
/// orthonormalize}`, a final solve, the reduced pencil `F₀ = ΨᵀKΩ`,
/// `F₁ = ΨᵀK·L(Ω − γΨ)` (both symmetrized), then `Vr = ΨQ_r`, `Ur = K·Vr`.
pub fn fit_dual_r4_with(
    g: &GramBundle,
    solver: &CovCholesky,
    sketch: &SketchSpec,
    omega: MatRef<'_, f64>,
) -> Result<DualEstimator> {
    sketch.validate()?;
    let n = g.n;
    if solver.dim() != n {
        return Err(RrrError::InvalidInput(format!(
            "solver dimension {} does not match the Gram size {n}",
            solver.dim()
        )));
    }
    if omega.nrows() != n || omega.ncols() != sketch.width() {
        return Err(RrrError::InvalidInput(format!(
            "sketch matrix must be {n}×{}, got {}×{}",
            sketch.width(),
            omega.nrows(),
            omega.ncols()
        )));
    }
    let (k, l) = (g.k.as_ref(), g.l.as_ref());
    let gamma = solver.gamma();

    let mut om = omega.to_owned();
    for _ in 0..sketch.power {
        let psi = solver.solve_mat(om.as_ref())?;
        let scaled = &psi * Scale(gamma);
        let shifted = &om - &scaled;
        om = l * &shifted;
        om = qr_econ(om.as_ref());
        if om.ncols() == 0 {
            return Err(RrrError::Numerical(
                "power-iteration collapse: the sketch died in the null space of L·K".into(),
            ));
        }
    }
    let psi = solver.solve_mat(om.as_ref())?;
    let k_om = k * &om;
    let f0 = symmetrize((psi.transpose() * &k_om).as_ref());
    let scaled = &psi * Scale(gamma);
    let shifted = &om - &scaled;
    let l_shifted = l * &shifted;
    let k_l_shifted = k * &l_shifted;
    let f1 = symmetrize((psi.transpose() * &k_l_shifted).as_ref());
    let (sigma_sq, qq) = sketched_gep(f1, f0, sketch.rank)?;
    let vr = &psi * &qq;
    let ur = k * vr.as_ref();
    Ok(DualEstimator::bare(ur, vr, gamma, sketch.rank, sigma_sq))
}

impl PrimalEstimator {
    pub fn effective_rank(&self) -> usize {
        self.vr.ncols()
    }

    /// Materializes `Ĝ = Cxyᵀ·Vr·Vrᵀ` (`d_G × d_H`).
    pub fn coefficients(&self) -> Mat<f64> {
        let proj = &self.vr * self.vr.transpose();
        self.cxy.transpose() * &proj
    }

    /// Applies the operator to rows of `x`: returns `X·Ĝᵀ` (`m × d_G`).
    pub fn predict(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if x.ncols() != self.vr.nrows() {
            return Err(RrrError::InvalidInput(format!(
                "inputs have {} features, estimator expects {}",
                x.ncols(),
                self.vr.nrows()
            )));
        }
        let head = x * &self.vr;
        let tail = self.vr.transpose() * &self.cxy;
        Ok(&head * &tail)
    }

    pub fn to_json(&self) -> Result<String> {
        let payload = PrimalPayload {
            vr: MatJson::from_mat(self.vr.as_ref())?,
            cxy: MatJson::from_mat(self.cxy.as_ref())?,
            gamma: self.gamma,
            rank: self.rank,
            sigma_sq: self.sigma_sq.clone(),
        };
        seal_container("primal", &payload)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let payload: PrimalPayload = open_container(s, "primal")?;
        Ok(Self {
            vr: payload.vr.into_mat()?,
            cxy: payload.cxy.into_mat()?,
            gamma: payload.gamma,
            rank: payload.rank,
            sigma_sq: payload.sigma_sq,
        })
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let s = self.to_json()?;
        std::fs::write(path, s).map_err(|e| RrrError::Serialization(e.to_string()))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let s =
            std::fs::read_to_string(path).map_err(|e| RrrError::Serialization(e.to_string()))?;
        Self::from_json(&s)
    }
}

impl DualEstimator {
    /// Assembles an estimator from explicit coefficient matrices (for
    /// synthetic estimators in tests and tooling; the fit functions are the
    /// normal construction path).
    pub fn from_parts(
        ur: Mat<f64>,
        vr: Mat<f64>,
        gamma: f64,
        rank: usize,
        sigma_sq: Vec<f64>,
    ) -> Result<Self> {
        validate_gamma(gamma)?;
        if ur.nrows() != vr.nrows() || ur.ncols() != vr.ncols() {
            return Err(RrrError::InvalidInput(format!(
                "Ur is {}×{} but Vr is {}×{}",
                ur.nrows(),
                ur.ncols(),
                vr.nrows(),
                vr.ncols()
            )));
        }
        Ok(Self::bare(ur, vr, gamma, rank, sigma_sq))
    }

    fn bare(ur: Mat<f64>, vr: Mat<f64>, gamma: f64, rank: usize, sigma_sq: Vec<f64>) -> Self {
        Self {
            ur,
            vr,
            gamma,
            rank,
            sigma_sq,
            kernel_x: None,
            kernel_y: None,
            train_x: None,
            train_x_hash: None,
            train_y_hash: None,
        }
    }

    pub fn effective_rank(&self) -> usize {
        self.vr.ncols()
    }

    pub fn n_train(&self) -> usize {
        self.vr.nrows()
    }

    /// Attaches the training inputs (shared, not copied) and the kernel specs
    /// needed by [`DualEstimator::predict`]; records the input hash for
    /// serialization.
    pub fn with_training_inputs(
        mut self,
        x: Arc<Mat<f64>>,
        kernel_x: KernelSpec,
        kernel_y: KernelSpec,
    ) -> Result<Self> {
        kernel_x.validate()?;
        kernel_y.validate()?;
        if x.nrows() != self.n_train() {
            return Err(RrrError::InvalidInput(format!(
                "training inputs have {} rows, estimator was fitted on {}",
                x.nrows(),
                self.n_train()
            )));
        }
        self.train_x_hash = Some(matrix_hash(x.as_ref().as_ref()));
        self.train_x = Some(x);
        self.kernel_x = Some(kernel_x);
        self.kernel_y = Some(kernel_y);
        Ok(self)
    }

    /// Records the hash of the training outputs so serialized containers can
    /// reference them.
    pub fn set_output_hash(&mut self, y: MatRef<'_, f64>) {
        self.train_y_hash = Some(matrix_hash(y));
    }

    /// Checks caller-held training outputs against the recorded hash.
    pub fn verify_training_outputs(&self, y: MatRef<'_, f64>) -> Result<()> {
        match &self.train_y_hash {
            None => Err(RrrError::InvalidInput(
                "estimator carries no training-output hash".into(),
            )),
            Some(h) if *h == matrix_hash(y) => Ok(()),
            Some(_) => Err(RrrError::InvalidInput(
                "training outputs do not match the recorded hash".into(),
            )),
        }
    }

    /// Re-attaches training inputs after [`DualEstimator::from_json`],
    /// verifying them against the stored hash.
    pub fn attach_training_inputs(&mut self, x: Arc<Mat<f64>>) -> Result<()> {
        let expected = self.train_x_hash.as_ref().ok_or_else(|| {
            RrrError::InvalidInput("container carries no training-input hash".into())
        })?;
        if *expected != matrix_hash(x.as_ref().as_ref()) {
            return Err(RrrError::InvalidInput(
                "training inputs do not match the recorded hash".into(),
            ));
        }
        if x.nrows() != self.n_train() {
            return Err(RrrError::InvalidInput(format!(
                "training inputs have {} rows, estimator was fitted on {}",
                x.nrows(),
                self.n_train()
            )));
        }
        self.train_x = Some(x);
        Ok(())
    }

    pub fn train_x_hash(&self) -> Option<&str> {
        self.train_x_hash.as_deref()
    }

    pub fn train_y_hash(&self) -> Option<&str> {
        self.train_y_hash.as_deref()
    }

    /// Predicts Euclidean outputs: `ŷ(x) = Ytrainᵀ·(Ur·Vrᵀ·κ̄_x)` with
    /// `κ̄_x = (1/n)[k(x_j, x)]_j`, one prediction per row of `x_new`.
    ///
    /// Needs the training inputs attached and a `Linear` output kernel (the
    /// identity feature map is what makes predictions live in output space).
    pub fn predict(&self, x_new: MatRef<'_, f64>, y_train: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let tx = self.train_x.as_ref().ok_or_else(|| {
            RrrError::InvalidInput("estimator has no training inputs attached".into())
        })?;
        let kx = self.kernel_x.as_ref().ok_or_else(|| {
            RrrError::InvalidInput("estimator has no input kernel attached".into())
        })?;
        let ky = self.kernel_y.as_ref().ok_or_else(|| {
            RrrError::InvalidInput("estimator has no output kernel attached".into())
        })?;
        if ky.family != KernelFamily::Linear {
            return Err(RrrError::Unsupported(
                "prediction requires a Linear output kernel".into(),
            ));
        }
        if y_train.nrows() != self.n_train() {
            return Err(RrrError::InvalidInput(format!(
                "training outputs have {} rows, estimator was fitted on {}",
                y_train.nrows(),
                self.n_train()
            )));
        }
        if x_new.ncols() != tx.ncols() {
            return Err(RrrError::InvalidInput(format!(
                "inputs have {} features, training data has {}",
                x_new.ncols(),
                tx.ncols()
            )));
        }
        let kbar = cross_gram(kx, tx.as_ref().as_ref(), x_new)?; // n × m
        let coeff = self.vr.transpose() * &kbar; // r × m
        let lifted = &self.ur * &coeff; // n × m
        let preds = y_train.transpose() * &lifted; // d × m
        Ok(preds.transpose().to_owned())
    }

    /// Eigen-decomposes the fitted operator on its range via the reduced
    /// matrix `M_r = Vrᵀ·Kxy·Ur`, where `Kxy = (1/n)[k(x_i, y_j)]` is the
    /// cross-Gram of the training pairs (input and output kernels must
    /// coincide for this to be meaningful).
    pub fn spectral(&self, kxy: MatRef<'_, f64>) -> Result<SpectralDecomposition> {
        let n = self.n_train();
        if kxy.nrows() != n || kxy.ncols() != n {
            return Err(RrrError::InvalidInput(format!(
                "cross-Gram must be {n}×{n}, got {}×{}",
                kxy.nrows(),
                kxy.ncols()
            )));
        }
        let m_r = self.vr.transpose() * kxy * &self.ur;
        let (eigenvalues, w) = crate::linalg::dense_nonsym_eig(m_r.as_ref())?;
        let right_coeffs = &complexify(self.ur.as_ref()) * &w;
        Ok(SpectralDecomposition { eigenvalues, right_coeffs })
    }

    pub fn to_json(&self) -> Result<String> {
        let payload = DualPayload {
            ur: MatJson::from_mat(self.ur.as_ref())?,
            vr: MatJson::from_mat(self.vr.as_ref())?,
            gamma: self.gamma,
            rank: self.rank,
            sigma_sq: self.sigma_sq.clone(),
            kernel_x: self.kernel_x,
            kernel_y: self.kernel_y,
            train_x_sha256: self.train_x_hash.clone(),
            train_y_sha256: self.train_y_hash.clone(),
        };
        seal_container("dual", &payload)
    }

    /// Loads an estimator without training inputs; call
    /// [`DualEstimator::attach_training_inputs`] before predicting.
    pub fn from_json(s: &str) -> Result<Self> {
        let payload: DualPayload = open_container(s, "dual")?;
        Ok(Self {
            ur: payload.ur.into_mat()?,
            vr: payload.vr.into_mat()?,
            gamma: payload.gamma,
            rank: payload.rank,
            sigma_sq: payload.sigma_sq,
            kernel_x: payload.kernel_x,
            kernel_y: payload.kernel_y,
            train_x: None,
            train_x_hash: payload.train_x_sha256,
            train_y_hash: payload.train_y_sha256,
        })
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let s = self.to_json()?;
        std::fs::write(path, s).map_err(|e| RrrError::Serialization(e.to_string()))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let s =
            std::fs::read_to_string(path).map_err(|e| RrrError::Serialization(e.to_string()))?;
        Self::from_json(&s)
    }
}

#[derive(Serialize, Deserialize)]
struct MatJson {
    nrows: usize,
    ncols: usize,
    /// Column-major entries; JSON round-trips f64 exactly via shortest
    /// representation, which is what makes save→load→predict bit-identical.
    data: Vec<f64>,
}

impl MatJson {
    fn from_mat(m: MatRef<'_, f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(RrrError::Serialization(
                        "matrix contains non-finite entries".into(),
                    ));
                }
                data.push(v);
            }
        }
        Ok(Self { nrows: m.nrows(), ncols: m.ncols(), data })
    }

    fn into_mat(self) -> Result<Mat<f64>> {
        if self.data.len() != self.nrows * self.ncols {
            return Err(RrrError::Serialization(format!(
                "matrix payload has {} entries for a {}×{} shape",
                self.data.len(),
                self.nrows,
                self.ncols
            )));
        }
        Ok(Mat::from_fn(self.nrows, self.ncols, |i, j| self.data[j * self.nrows + i]))
    }
}

#[derive(Serialize, Deserialize)]
struct PrimalPayload {
    vr: MatJson,
    cxy: MatJson,
    gamma: f64,
    rank: usize,
    sigma_sq: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DualPayload {
    ur: MatJson,
    vr: MatJson,
    gamma: f64,
    rank: usize,
    sigma_sq: Vec<f64>,
    kernel_x: Option<KernelSpec>,
    kernel_y: Option<KernelSpec>,
    train_x_sha256: Option<String>,
    train_y_sha256: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    kind: String,
    sha256: String,
    payload: serde_json::Value,
}

const CONTAINER_FORMAT: &str = "rrr-estimator";
const CONTAINER_VERSION: u32 = 1;

fn payload_hash(payload: &serde_json::Value) -> Result<String> {
    let canonical =
        serde_json::to_string(payload).map_err(|e| RrrError::Serialization(e.to_string()))?;
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

fn seal_container<T: Serialize>(kind: &str, payload: &T) -> Result<String> {
    let value =
        serde_json::to_value(payload).map_err(|e| RrrError::Serialization(e.to_string()))?;
    let sha256 = payload_hash(&value)?;
    let container = Container {
        format: CONTAINER_FORMAT.into(),
        version: CONTAINER_VERSION,
        kind: kind.into(),
        sha256,
        payload: value,
    };
    serde_json::to_string_pretty(&container).map_err(|e| RrrError::Serialization(e.to_string()))
}

fn open_container<T: for<'de> Deserialize<'de>>(s: &str, kind: &str) -> Result<T> {
    let container: Container =
        serde_json::from_str(s).map_err(|e| RrrError::Serialization(e.to_string()))?;
    if container.format != CONTAINER_FORMAT {
        return Err(RrrError::Serialization(format!(
            "unrecognized container format {:?}",
            container.format
        )));
    }
    if container.version != CONTAINER_VERSION {
        return Err(RrrError::Serialization(format!(
            "unsupported container version {}",
            container.version
        )));
    }
    if container.kind != kind {
        return Err(RrrError::Serialization(format!(
            "container holds a {:?} estimator, expected {kind:?}",
            container.kind
        )));
    }
    let recomputed = payload_hash(&container.payload)?;
    if recomputed != container.sha256 {
        return Err(RrrError::Serialization(
            "content hash mismatch: the container was corrupted or edited".into(),
        ));
    }
    serde_json::from_value(container.payload).map_err(|e| RrrError::Serialization(e.to_string()))
}
