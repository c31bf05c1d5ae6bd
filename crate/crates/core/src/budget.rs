//! Privacy budget arithmetic.
//!
//! Pure bookkeeping, no randomness except [`sample_symmetric_gaussian`]: the
//! Gaussian-mechanism noise calibration, the per-level split used by the
//! tree-aggregated covariance release, the per-refresh split used by the
//! private estimator, and the two composition rules (basic summation and the
//! √(2k·ln(1/δ̃))-style advanced bound) that justify those splits. The run
//! reports produced by the harness echo [`total_budget`] so consumers can see
//! the end-to-end (ε, δ) of a configuration at a glance.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMat;

/// An (ε, δ) differential-privacy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub eps: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::invalid(format!("eps must be positive, got {eps}")));
        }
        if !(delta.is_finite() && delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(PrivacyBudget { eps, delta })
    }
}

/// ⌈log₂ T⌉ computed in integer arithmetic (exact at powers of two).
pub(crate) fn ceil_log2(t: u64) -> u32 {
    debug_assert!(t >= 2);
    64 - (t - 1).leading_zeros()
}

/// Noise scale σ of the Gaussian mechanism for a sensitivity-1 query:
/// σ² = 2·ln(1.25/δ)/ε².
pub fn gaussian_sigma(budget: PrivacyBudget) -> Result<f64> {
    PrivacyBudget::new(budget.eps, budget.delta)?;
    Ok((2.0 * (1.25 / budget.delta).ln()).sqrt() / budget.eps)
}

/// Largest per-slot budget whose k-fold advanced composition stays within
/// (ε, δ): δ′ = δ/(2k) per slot (leaving the slack δ̃ = δ/2), and ε′ solved
/// from √(2k·ln(2/δ))·ε′ + k·ε′·(eᵉ′ − 1) = ε by bisection.
///
/// This is the exact inverse of [`advanced_total`], so the composed total
/// lands on (ε, δ) rather than strictly inside it. The frequently quoted
/// closed-form split ε′ = ε/(2·√(2k·ln(1/δ′))) halves the first-order term
/// so that "total ≤ ε" is provable by inspection, but the second-order
/// k·ε′·(eᵉ′ − 1) term it leaves room for is two orders of magnitude smaller
/// than the discarded half; inverting the bound numerically buys back a
/// factor ≈ 2 of noise scale at identical privacy.
fn advanced_inverse(eps: f64, delta: f64, k: u32) -> Result<PrivacyBudget> {
    PrivacyBudget::new(eps, delta)?;
    debug_assert!(k >= 1);
    let kf = f64::from(k);
    let c1 = (2.0 * kf * (2.0 / delta).ln()).sqrt();
    let total = |x: f64| c1 * x + kf * x * x.exp_m1();
    // total is strictly increasing with total(0) = 0 < ε ≤ total(ε/c1).
    let (mut lo, mut hi) = (0.0, eps / c1);
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if total(mid) <= eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    PrivacyBudget::new(lo, delta / (2.0 * kf))
}

/// Per-level budget for a tree-aggregated release over `horizon` periods.
///
/// One observation touches exactly one node per level, so with
/// m = ⌈log₂ horizon⌉ levels an observation is seen by m node releases;
/// the per-node budget is the exact m-fold composition inverse of (ε, δ).
pub fn cov_inner_split(eps: f64, delta: f64, horizon: u64) -> Result<PrivacyBudget> {
    if horizon < 2 {
        return Err(Error::invalid(format!(
            "horizon must be at least 2, got {horizon}"
        )));
    }
    advanced_inverse(eps, delta, ceil_log2(horizon))
}

/// Per-refresh budget when the estimator may be called up to `d_inf` times:
/// the exact d_inf-fold composition inverse of (ε, δ).
pub fn mle_split(eps: f64, delta: f64, d_inf: u32) -> Result<PrivacyBudget> {
    if d_inf == 0 {
        return Err(Error::invalid("d_inf must be positive"));
    }
    advanced_inverse(eps, delta, d_inf)
}

/// Advanced composition of k mechanisms that are each (ε, δ)-private:
/// total ε = √(2k·ln(1/δ̃))·ε + k·ε·(eᵉ − 1), total δ = k·δ + δ̃.
pub fn advanced_total(
    per_call: PrivacyBudget,
    k: u32,
    delta_tilde: f64,
) -> Result<PrivacyBudget> {
    PrivacyBudget::new(per_call.eps, per_call.delta)?;
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if !(delta_tilde.is_finite() && delta_tilde > 0.0 && delta_tilde < 1.0) {
        return Err(Error::invalid("delta_tilde must lie in (0, 1)"));
    }
    let kf = f64::from(k);
    let eps = (2.0 * kf * (1.0 / delta_tilde).ln()).sqrt() * per_call.eps
        + kf * per_call.eps * (per_call.eps.exp_m1());
    PrivacyBudget::new(eps, kf * per_call.delta + delta_tilde)
}

/// Basic composition of the two pipeline stages: budgets add.
pub fn total_budget(cov: PrivacyBudget, mle: PrivacyBudget) -> Result<PrivacyBudget> {
    PrivacyBudget::new(cov.eps + mle.eps, cov.delta + mle.delta)
}

/// Noise scale ν of the objective-perturbation vector for gradient bound b1:
/// ν² = b1²·(8·ln(2/δ) + 4·ε)/ε².
pub fn objective_nu(b1: f64, eps: f64, delta: f64) -> Result<f64> {
    PrivacyBudget::new(eps, delta)?;
    if !(b1.is_finite() && b1 > 0.0) {
        return Err(Error::invalid(format!("b1 must be positive, got {b1}")));
    }
    let nu2 = b1 * b1 * (8.0 * (2.0 / delta).ln() + 4.0 * eps) / (eps * eps);
    Ok(nu2.sqrt())
}

/// Draws a symmetric matrix whose upper-triangle entries (diagonal included)
/// are i.i.d. N(0, σ²), mirrored below the diagonal. σ = 0 yields the zero
/// matrix without consuming randomness.
pub fn sample_symmetric_gaussian<R: Rng + ?Sized>(
    d: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<SymMat> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let mut w = SymMat::zeros(d);
    if sigma == 0.0 {
        return Ok(w);
    }
    for i in 0..d {
        for j in i..d {
            let g: f64 = StandardNormal.sample(rng);
            w.set_sym(i, j, sigma * g);
        }
    }
    Ok(w)
}
