//! Risk evaluation and expected-error bounds.
//!
//! Everything here is a pure function of Gram matrices (or explicit feature
//! matrices in the primal case): regularized/unregularized empirical risk of
//! a fitted estimator, the optimal attainable value at a given rank, the
//! singular spectrum of the whitened operator `B = K^{1/2}K_γ^{-1/2}L^{1/2}`
//! that controls everything, and the two closed-form expected-risk-gap
//! bounds for randomized sketches (one for `Ω ~ N(0, L)` columns, one for
//! isotropic `Ω ~ N(0, I)`).

use faer::{Mat, MatRef, Scale};
use serde::{Deserialize, Serialize};

use crate::estimators::{primal_cross_cov, DualEstimator, PrimalEstimator, PrimalTarget};
use crate::kernels::GramBundle;
use crate::linalg::{qr_econ, sym_eig, symmetrize, truncated_svd, SingularSpectrum};
use crate::{Result, RrrError};

/// Risk summary for one fitted estimator on its training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskReport {
    /// Unregularized empirical risk `(1/n)Σ‖ψ(y_i) − Ĝφ(x_i)‖²`.
    pub empirical_risk: f64,
    /// Empirical risk plus `γ‖Ĝ‖²_HS`.
    pub regularized_risk: f64,
    /// `tr(L) − Σ_{i≤r}σ_i²`, the best attainable regularized risk at rank r.
    pub optimal_regularized_risk: f64,
    /// `regularized_risk − optimal_regularized_risk`; `≥ −1e−8` always.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundTheorem {
    /// Sketches with covariance `L`.
    CorrelatedSketch,
    /// Standard Gaussian sketches.
    IsotropicSketch,
}

/// Evaluated expected-risk-gap bound `min{r·a_r/(r+a_r)·σ₁², b_r}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub a_r: f64,
    pub b_r: f64,
    pub bound: f64,
    pub theorem: BoundTheorem,
    pub rank: usize,
    pub oversampling: usize,
    pub power: usize,
    /// Largest eigenvalue of `L`; only used by the isotropic bound.
    pub norm_l: Option<f64>,
}

/// `uk·diag(f(λ_i⁺))·ukᵀ` for the eigendecomposition of a PSD matrix,
/// rejecting matrices that are indefinite beyond roundoff.
fn psd_spectral_map(m: MatRef<'_, f64>, f: impl Fn(f64) -> f64) -> Result<Mat<f64>> {
    let n = m.nrows();
    let (vals, vecs) = sym_eig(m)?;
    let top = vals.first().copied().unwrap_or(0.0);
    let floor = -1e-10 * top.abs().max(1e-30);
    if let Some(bottom) = vals.last() {
        if *bottom < floor {
            return Err(RrrError::Numerical(format!(
                "matrix is not PSD within tolerance: min eigenvalue {bottom:e}"
            )));
        }
    }
    let scaled = Mat::from_fn(n, n, |i, j| vecs[(i, j)] * f(vals[j].max(0.0)));
    Ok(symmetrize((&scaled * vecs.transpose()).as_ref()))
}

/// `K^{1/2}(K + γ)^{-1/2}` — K and its shift share eigenvectors, so this is
/// a single spectral map.
fn k_whitener(k: MatRef<'_, f64>, gamma: f64) -> Result<Mat<f64>> {
    psd_spectral_map(k, |l| (l / (l + gamma)).sqrt())
}

/// The whitened operator `B = K^{1/2}K_γ^{-1/2}L^{1/2}` whose singular
/// values σ_i determine optimal risks and bound values.
pub fn whitened_operator(g: &GramBundle, gamma: f64) -> Result<Mat<f64>> {
    validate_gamma(gamma)?;
    let wk = k_whitener(g.k.as_ref(), gamma)?;
    let lhalf = psd_spectral_map(g.l.as_ref(), f64::sqrt)?;
    Ok(&wk * &lhalf)
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

/// Full singular spectrum of the whitened operator for Gram-matrix data.
pub fn singular_spectrum(g: &GramBundle, gamma: f64) -> Result<SingularSpectrum> {
    let b = whitened_operator(g, gamma)?;
    let (_, svals, _) = truncated_svd(b.as_ref(), g.n)?;
    SingularSpectrum::new(svals)
}

/// Full singular spectrum of `Ĉ_γ^{-1/2}Ĉ_XY` for explicit features — the
/// same values as [`singular_spectrum`] on the corresponding Grams, at
/// `O(d³)` instead of `O(n³)` cost.
pub fn singular_spectrum_primal(
    sx: MatRef<'_, f64>,
    target: PrimalTarget<'_>,
    gamma: f64,
) -> Result<SingularSpectrum> {
    validate_gamma(gamma)?;
    let (n, d) = (sx.nrows(), sx.ncols());
    if n == 0 || d == 0 {
        return Err(RrrError::InvalidInput("empty feature matrix".into()));
    }
    let cxy = primal_cross_cov(sx, target)?;
    let c = symmetrize(((sx.transpose() * sx) * Scale(1.0 / n as f64)).as_ref());
    let mut c_gamma = c;
    for i in 0..d {
        c_gamma[(i, i)] += gamma;
    }
    let inv_half = psd_spectral_map(c_gamma.as_ref(), |l| 1.0 / l.sqrt())?;
    let b = &inv_half * &cxy;
    let (_, svals, _) = truncated_svd(b.as_ref(), d.min(cxy.ncols()))?;
    SingularSpectrum::new(svals)
}

/// Best attainable regularized risk at rank `r`: `tr(L) − Σ_{i≤r}σ_i²`.
pub fn optimal_risk(g: &GramBundle, gamma: f64, rank: usize) -> Result<f64> {
    if rank > g.n {
        return Err(RrrError::InvalidInput(format!(
            "rank {rank} exceeds the sample count {}",
            g.n
        )));
    }
    let spectrum = singular_spectrum(g, gamma)?;
    Ok(g.trace_l() - spectrum.head_energy(rank))
}

/// Same value computed from a precomputed spectrum (for tight loops that
/// factor a dataset once).
pub fn optimal_risk_from_spectrum(trace_l: f64, spectrum: &SingularSpectrum, rank: usize) -> f64 {
    trace_l - spectrum.head_energy(rank)
}

/// Empirical (optionally regularized) risk of a dual estimator, evaluated
/// purely from Gram matrices:
/// `tr(L) − 2tr(PᵀQ) + tr(PᵀP·A₀) [+ γ·tr(VrᵀP·A₀)]` with `P = K·Vr`,
/// `Q = L·Ur`, `A₀ = UrᵀL Ur`.
pub fn empirical_risk_dual(
    est: &DualEstimator,
    g: &GramBundle,
    include_regularizer: bool,
) -> Result<f64> {
    if est.n_train() != g.n {
        return Err(RrrError::InvalidInput(format!(
            "estimator was fitted on {} samples, Gram matrices hold {}",
            est.n_train(),
            g.n
        )));
    }
    let p = &g.k * &est.vr;
    let q = &g.l * &est.ur;
    let a0 = est.ur.transpose() * &q;
    let cross = frob_inner(p.as_ref(), q.as_ref());
    let pp_a0 = trace_of_product((p.transpose() * &p).as_ref(), a0.as_ref());
    let mut risk = g.trace_l() - 2.0 * cross + pp_a0;
    if include_regularizer {
        let vp_a0 = trace_of_product((est.vr.transpose() * &p).as_ref(), a0.as_ref());
        risk += est.gamma * vp_a0;
    }
    Ok(risk)
}

/// Empirical (optionally regularized) risk of a primal estimator, computed
/// directly as `(1/n)‖Sy − SxĜᵀ‖² [+ γ‖Ĝ‖²]` and cross-checked against the
/// whitened decomposition
/// `tr(Ĉ_Y) − ‖Ĉ_YXĈ_γ^{-1/2}‖² + ‖ĜĈ_γ^{1/2} − Ĉ_YXĈ_γ^{-1/2}‖²`;
/// disagreement is a numerical error (it signals an implementation bug, not
/// bad data).
pub fn empirical_risk_primal(
    est: &PrimalEstimator,
    sx: MatRef<'_, f64>,
    sy: MatRef<'_, f64>,
    include_regularizer: bool,
) -> Result<f64> {
    let (n, d) = (sx.nrows(), sx.ncols());
    if sy.nrows() != n {
        return Err(RrrError::InvalidInput(format!(
            "paired sample with {n} inputs but {} outputs",
            sy.nrows()
        )));
    }
    if est.vr.nrows() != d {
        return Err(RrrError::InvalidInput(format!(
            "estimator expects {} features, data has {d}",
            est.vr.nrows()
        )));
    }
    let ghat = est.coefficients(); // d_G × d_H
    let nf = n as f64;
    let fitted = sx * ghat.transpose();
    let resid = sy.to_owned() - fitted;
    let direct_reg = resid.norm_l2().powi(2) / nf + est.gamma * ghat.norm_l2().powi(2);

    let tr_cy = sy.norm_l2().powi(2) / nf;
    let c = symmetrize(((sx.transpose() * sx) * Scale(1.0 / nf)).as_ref());
    let mut c_gamma = c;
    for i in 0..d {
        c_gamma[(i, i)] += est.gamma;
    }
    let half = psd_spectral_map(c_gamma.as_ref(), f64::sqrt)?;
    let inv_half = psd_spectral_map(c_gamma.as_ref(), |l| 1.0 / l.sqrt())?;
    let cyx = (sy.transpose() * sx) * Scale(1.0 / nf);
    let whitened_cross = &cyx * &inv_half;
    let misfit = &ghat * &half - &whitened_cross;
    let decomposed = tr_cy - whitened_cross.norm_l2().powi(2) + misfit.norm_l2().powi(2);

    let scale = direct_reg.abs().max(tr_cy).max(f64::MIN_POSITIVE);
    if (direct_reg - decomposed).abs() > 1e-8 * scale {
        return Err(RrrError::Numerical(format!(
            "risk decomposition mismatch: direct {direct_reg:e} vs decomposed {decomposed:e}"
        )));
    }
    Ok(if include_regularizer {
        direct_reg
    } else {
        direct_reg - est.gamma * ghat.norm_l2().powi(2)
    })
}

/// Assembles a [`RiskReport`] for a dual estimator from a precomputed
/// spectrum of the same `(G, γ)`.
pub fn dual_risk_report(
    est: &DualEstimator,
    g: &GramBundle,
    spectrum: &SingularSpectrum,
) -> Result<RiskReport> {
    let regularized = empirical_risk_dual(est, g, true)?;
    let empirical = empirical_risk_dual(est, g, false)?;
    let optimal = optimal_risk_from_spectrum(g.trace_l(), spectrum, est.rank);
    Ok(RiskReport {
        empirical_risk: empirical,
        regularized_risk: regularized,
        optimal_regularized_risk: optimal,
        gap: regularized - optimal,
    })
}

/// Assembles a [`RiskReport`] for a primal estimator (spectrum from
/// [`singular_spectrum_primal`] or the Gram route — they agree).
pub fn primal_risk_report(
    est: &PrimalEstimator,
    sx: MatRef<'_, f64>,
    sy: MatRef<'_, f64>,
    spectrum: &SingularSpectrum,
) -> Result<RiskReport> {
    let regularized = empirical_risk_primal(est, sx, sy, true)?;
    let empirical = empirical_risk_primal(est, sx, sy, false)?;
    let tr_cy = sy.norm_l2().powi(2) / sx.nrows() as f64;
    let optimal = optimal_risk_from_spectrum(tr_cy, spectrum, est.rank);
    Ok(RiskReport {
        empirical_risk: empirical,
        regularized_risk: regularized,
        optimal_regularized_risk: optimal,
        gap: regularized - optimal,
    })
}

/// Largest eigenvalue of a symmetric PSD matrix (the `‖L‖` input of the
/// isotropic bound).
pub fn sym_operator_norm(m: MatRef<'_, f64>) -> Result<f64> {
    let (vals, _) = sym_eig(m)?;
    Ok(vals.first().copied().unwrap_or(0.0).max(0.0))
}

/// Spectrum entries below `len·ε·σ₁` are treated as exact zeros in the
/// ratio sums; returns the cleaned values.
fn effective_values(sigma: &SingularSpectrum) -> Vec<f64> {
    let vals = sigma.values();
    let top = vals.first().copied().unwrap_or(0.0);
    let cutoff = vals.len() as f64 * f64::EPSILON * top;
    vals.iter().map(|&v| if v <= cutoff { 0.0 } else { v }).collect()
}

fn validate_bound_inputs(rank: usize, oversampling: usize, power: usize) -> Result<()> {
    if rank < 1 {
        return Err(RrrError::InvalidInput("rank must be at least 1".into()));
    }
    if oversampling < 2 {
        return Err(RrrError::InvalidInput(
            "the bounds require oversampling ≥ 2 (the formulas divide by s − 1)".into(),
        ));
    }
    if power < 1 {
        return Err(RrrError::InvalidInput("power must be at least 1".into()));
    }
    Ok(())
}

fn combined_bound(a_r: f64, b_r: f64, rank: usize, sigma1_sq: f64) -> f64 {
    let first = if a_r > 0.0 { rank as f64 * a_r / (rank as f64 + a_r) * sigma1_sq } else { 0.0 };
    first.min(b_r)
}

/// Expected-risk-gap bound for sketches whose columns are drawn with
/// covariance `L`:
/// `a_r = (1/(s−1))·[Σ_{i>r}(σ_i/σ_{r+1})^{4p+2}]·[Σ_{i≤r}(σ_{r+1}/σ_i)^{4p+2}]`,
/// `b_r = (σ_{r+1}²/(s−1))·[Σ_{i>r}(σ_i/σ_{r+1})^{4p+2}]·[Σ_{i≤r}(σ_{r+1}/σ_i)^{4p}]`.
pub fn bound_thm_correlated(
    sigma: &SingularSpectrum,
    rank: usize,
    oversampling: usize,
    power: usize,
) -> Result<BoundReport> {
    validate_bound_inputs(rank, oversampling, power)?;
    let vals = effective_values(sigma);
    let positive = vals.iter().take_while(|v| **v > 0.0).count();
    if positive < rank {
        return Err(RrrError::InvalidInput(format!(
            "σ_{rank} is numerically zero (spectrum has rank {positive}): the bound's rank condition fails"
        )));
    }
    let report = |a_r: f64, b_r: f64| BoundReport {
        a_r,
        b_r,
        bound: combined_bound(a_r, b_r, rank, vals[0] * vals[0]),
        theorem: BoundTheorem::CorrelatedSketch,
        rank,
        oversampling,
        power,
        norm_l: None,
    };
    let tail_ref = vals.get(rank).copied().unwrap_or(0.0); // σ_{r+1}
    if tail_ref == 0.0 {
        return Ok(report(0.0, 0.0));
    }
    let e = 4 * power as i32 + 2;
    let s1 = (oversampling - 1) as f64;
    let tail: f64 = vals[rank..].iter().map(|v| (v / tail_ref).powi(e)).sum();
    let head_a: f64 = vals[..rank].iter().map(|v| (tail_ref / v).powi(e)).sum();
    let head_b: f64 = vals[..rank].iter().map(|v| (tail_ref / v).powi(e - 2)).sum();
    let a_r = tail * head_a / s1;
    let b_r = tail_ref * tail_ref * tail * head_b / s1;
    Ok(report(a_r, b_r))
}

/// Expected-risk-gap bound for isotropic Gaussian sketches:
/// `a_r = (‖L‖/σ_r²)·[Σ_{i>r}(σ_i/σ_r)^{4p}]·[1 + (1/(s−1))Σ_{i≤r}(σ_r/σ_i)^{4p+2}]`,
/// `b_r = ‖L‖·[Σ_{i>r}(σ_i/σ_r)^{4p}]·[σ₁²/σ_r² + (1/(s−1))Σ_{i≤r}(σ_r/σ_i)^{4p}]`.
pub fn bound_thm_isotropic(
    sigma: &SingularSpectrum,
    norm_l: f64,
    rank: usize,
    oversampling: usize,
    power: usize,
) -> Result<BoundReport> {
    validate_bound_inputs(rank, oversampling, power)?;
    if !(norm_l >= 0.0 && norm_l.is_finite()) {
        return Err(RrrError::InvalidInput(format!(
            "‖L‖ must be a finite non-negative number, got {norm_l}"
        )));
    }
    let vals = effective_values(sigma);
    let positive = vals.iter().take_while(|v| **v > 0.0).count();
    if positive < rank {
        return Err(RrrError::InvalidInput(format!(
            "σ_{rank} is numerically zero (spectrum has rank {positive}): the bound's rank condition fails"
        )));
    }
    let sig_r = vals[rank - 1];
    let e = 4 * power as i32;
    let s1 = (oversampling - 1) as f64;
    let tail: f64 = vals.get(rank..).map_or(0.0, |t| {
        t.iter().map(|v| (v / sig_r).powi(e)).sum()
    });
    let head_a: f64 = vals[..rank].iter().map(|v| (sig_r / v).powi(e + 2)).sum();
    let head_b: f64 = vals[..rank].iter().map(|v| (sig_r / v).powi(e)).sum();
    let sig1_sq = vals[0] * vals[0];
    let sig_r_sq = sig_r * sig_r;
    let a_r = (norm_l / sig_r_sq) * tail * (1.0 + head_a / s1);
    let b_r = norm_l * tail * (sig1_sq / sig_r_sq + head_b / s1);
    Ok(BoundReport {
        a_r,
        b_r,
        bound: combined_bound(a_r, b_r, rank, sig1_sq),
        theorem: BoundTheorem::IsotropicSketch,
        rank,
        oversampling,
        power,
        norm_l: Some(norm_l),
    })
}

/// Per-draw risk-gap certificate: `‖(I − P_M)⟦B⟧_r‖²_F` where
/// `M = (BBᵀ)^p·K^{1/2}K_γ^{-1/2}·Ω` spans the whitened image of the sketch
/// subspace the randomized dual fit searches over. The realized regularized
/// risk gap of that fit never exceeds this quantity (up to roundoff).
pub fn projection_gap_certificate(
    g: &GramBundle,
    gamma: f64,
    rank: usize,
    power: usize,
    omega: MatRef<'_, f64>,
) -> Result<f64> {
    validate_gamma(gamma)?;
    if omega.nrows() != g.n {
        return Err(RrrError::InvalidInput(format!(
            "sketch has {} rows, Gram matrices hold {}",
            omega.nrows(),
            g.n
        )));
    }
    let wk = k_whitener(g.k.as_ref(), gamma)?;
    let lhalf = psd_spectral_map(g.l.as_ref(), f64::sqrt)?;
    let b = &wk * &lhalf;
    let bbt = &b * b.transpose();
    let mut m = &wk * omega;
    for _ in 0..power {
        m = &bbt * &m;
    }
    let q = qr_econ(m.as_ref());
    let (ub, svals, vb) = truncated_svd(b.as_ref(), rank)?;
    let scaled = Mat::from_fn(ub.nrows(), svals.len(), |i, j| ub[(i, j)] * svals[j]);
    let b_r = &scaled * vb.transpose();
    let projected = &q * (q.transpose() * &b_r);
    let resid = &b_r - &projected;
    Ok(resid.norm_l2().powi(2))
}

fn frob_inner(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)] * b[(i, j)];
        }
    }
    acc
}

/// tr(A·B) without forming the product.
fn trace_of_product(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}
