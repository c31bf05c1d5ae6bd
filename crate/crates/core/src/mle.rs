//! Objective-perturbed constrained maximum-likelihood estimation.
//!
//! The estimator returns
//!
//! ```text
//!   θ̂ = argmin_{‖θ‖₂ ≤ radius}  Σ_t nll(φ_t, y_t, θ) + ρ̄/2·‖θ‖² + wᵀθ
//! ```
//!
//! where w ~ N(0, ν²·I_d) is drawn once per call with ν from
//! [`crate::budget::objective_nu`], and ρ̄ = [`effective_rho`] enforces the
//! minimum curvature the privacy argument needs (ρ ← max{ρ, 2·B₂/ε}).
//! Everything downstream of the data — the pricing policy in particular —
//! sees only θ̂, never the samples.
//!
//! The objective is ρ̄-strongly convex and smooth, so the solver is a damped
//! Newton iteration (the Hessian is d-by-d with d in the single digits, so
//! factorizations are free next to the data passes). If the unconstrained
//! minimizer leaves the radius-2 ball, the exact constrained solution is
//! recovered by a monotone multiplier search: ‖θ̂(ρ̄ + λ)‖ decreases in λ, so
//! a bracketed secant/bisection search on λ pins ‖θ̂‖ = radius. Both paths are
//! deterministic given (data, w, configuration) and stop at gradient norm
//! ≤ 1e-8·max(1, n).

use std::cell::Cell;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::glm::{GlmKind, GlmSpec};
use crate::linalg::{dot, norm2, SymMat};

/// Gradient-norm stopping rule: ≤ `SOLVER_TOL_SCALE`·max(1, n).
pub const SOLVER_TOL_SCALE: f64 = 1e-8;
/// Newton iteration cap per solve.
const NEWTON_CAP: u64 = 100;
/// Armijo sufficient-decrease constant for the backtracking line search.
const ARMIJO_C: f64 = 1e-4;

/// Append-only store of the raw interaction history (φ_t, y_t).
///
/// The only way to see the samples is [`History::samples`], which counts its
/// invocations; the count lets tests assert that the pricing path performs
/// zero raw-data reads (only the estimator, via its releaser role, touches
/// the store).
#[derive(Debug, Default)]
pub struct History {
    d: usize,
    phis: Vec<f64>,
    ys: Vec<f64>,
    reads: Cell<u64>,
}

impl History {
    pub fn new(d: usize) -> Self {
        History { d, phis: Vec::new(), ys: Vec::new(), reads: Cell::new(0) }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn push(&mut self, phi: &[f64], y: f64) -> Result<()> {
        if phi.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: phi.len() });
        }
        self.phis.extend_from_slice(phi);
        self.ys.push(y);
        Ok(())
    }

    /// Borrows the raw samples, bumping the read counter.
    pub fn samples(&self) -> SampleView<'_> {
        self.reads.set(self.reads.get() + 1);
        SampleView { d: self.d, phis: &self.phis, ys: &self.ys }
    }

    /// How many times the raw samples have been borrowed.
    pub fn read_count(&self) -> u64 {
        self.reads.get()
    }
}

/// A borrowed view of n samples: features flattened row-major (n·d) plus the
/// n responses.
#[derive(Debug, Clone, Copy)]
pub struct SampleView<'a> {
    d: usize,
    phis: &'a [f64],
    ys: &'a [f64],
}

impl<'a> SampleView<'a> {
    pub fn from_parts(d: usize, phis: &'a [f64], ys: &'a [f64]) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if phis.len() != ys.len() * d {
            return Err(Error::DimensionMismatch { expected: ys.len() * d, got: phis.len() });
        }
        Ok(SampleView { d, phis, ys })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn phi(&self, t: usize) -> &[f64] {
        &self.phis[t * self.d..(t + 1) * self.d]
    }

    #[inline]
    pub fn y(&self, t: usize) -> f64 {
        self.ys[t]
    }
}

/// One estimation request. `eps`/`delta` are the per-call budget (already
/// split across refreshes by the caller); `rho` is the requested ridge
/// weight before the privacy floor.
#[derive(Debug, Clone, Copy)]
pub struct MleRequest<'a> {
    pub data: SampleView<'a>,
    pub glm: &'a GlmSpec,
    pub rho: f64,
    pub eps: f64,
    pub delta: f64,
    pub radius: f64,
}

impl<'a> MleRequest<'a> {
    pub fn new(
        data: SampleView<'a>,
        glm: &'a GlmSpec,
        rho: f64,
        eps: f64,
        delta: f64,
    ) -> Self {
        MleRequest { data, glm, rho, eps, delta, radius: 2.0 }
    }

    fn validate(&self) -> Result<()> {
        self.glm.validate()?;
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::invalid(format!("rho must be nonnegative, got {}", self.rho)));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::invalid("radius must be positive"));
        }
        Ok(())
    }
}

/// A fitted parameter with solver diagnostics.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub theta: Vec<f64>,
    /// Norm of the perturbed-objective gradient at θ̂ for interior solutions;
    /// norm of the constrained stationarity residual ∇F + λθ̂ on the boundary.
    pub grad_norm: f64,
    pub newton_steps: u64,
    pub on_boundary: bool,
    /// Ridge weight actually used (after the privacy floor).
    pub rho_used: f64,
    /// Objective-perturbation noise scale of this call (0 when noise-free).
    pub nu: f64,
}

/// The curvature floor of objective perturbation: max{ρ, 2·B₂/ε}.
pub fn effective_rho(rho: f64, glm: &GlmSpec, eps: f64) -> Result<f64> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::invalid(format!("rho must be nonnegative, got {rho}")));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    Ok(rho.max(2.0 * glm.b2() / eps))
}

/// Private fit: applies the curvature floor, draws w ~ N(0, ν²·I) once, and
/// solves the perturbed constrained problem.
pub fn fit<R: Rng + ?Sized>(req: &MleRequest<'_>, rng: &mut R) -> Result<MleFit> {
    req.validate()?;
    let rho_eff = effective_rho(req.rho, req.glm, req.eps)?;
    if rho_eff > req.rho {
        log::debug!(
            "objective-perturbation curvature floor binds: rho {} -> {} (eps {})",
            req.rho,
            rho_eff,
            req.eps
        );
    }
    let nu = crate::budget::objective_nu(req.glm.b1(), req.eps, req.delta)?;
    let w: Vec<f64> = (0..req.data.dim()).map(|_| {
        let g: f64 = StandardNormal.sample(rng);
        nu * g
    }).collect();
    let mut fitted = fit_perturbed(req, rho_eff, &w)?;
    fitted.nu = nu;
    Ok(fitted)
}

/// Noise-free fit: no curvature floor, no perturbation vector. This is what
/// the non-private and input-perturbation variants run — the entire noise
/// calibration is removed, not just zeroed.
pub fn fit_noise_free(req: &MleRequest<'_>) -> Result<MleFit> {
    req.validate()?;
    if req.rho <= 0.0 {
        return Err(Error::invalid("noise-free fit requires rho > 0"));
    }
    let w = vec![0.0; req.data.dim()];
    fit_perturbed(req, req.rho, &w)
}

/// Deterministic core: solves the perturbed objective at an explicit ridge
/// weight and perturbation vector. Exposed so tests can pin w.
pub fn fit_perturbed(req: &MleRequest<'_>, rho_eff: f64, w: &[f64]) -> Result<MleFit> {
    req.validate()?;
    if !(rho_eff.is_finite() && rho_eff > 0.0) {
        return Err(Error::invalid(format!(
            "effective rho must be positive, got {rho_eff}"
        )));
    }
    if w.len() != req.data.dim() {
        return Err(Error::DimensionMismatch { expected: req.data.dim(), got: w.len() });
    }
    let obj = Objective { data: req.data, glm: req.glm, w };
    let d = req.data.dim();
    let tol = SOLVER_TOL_SCALE * 1.0_f64.max(req.data.len() as f64);

    // Unconstrained minimizer of the ρ̄-regularized objective.
    let mut theta = vec![0.0; d];
    let mut steps = newton_solve(&obj, rho_eff, &mut theta, tol)?;
    let r = norm2(&theta);
    if r <= req.radius {
        let mut g = vec![0.0; d];
        obj.gradient(rho_eff, &theta, &mut g);
        return Ok(MleFit {
            theta,
            grad_norm: norm2(&g),
            newton_steps: steps,
            on_boundary: false,
            rho_used: rho_eff,
            nu: 0.0,
        });
    }

    // Boundary case: find λ > 0 with ‖θ̂(ρ̄ + λ)‖ = radius. The norm is
    // continuous and strictly decreasing in λ, so bracket by doubling, then
    // close in with secant steps safeguarded by the bracket (each probe is a
    // warm-started Newton solve over the data, so probe count matters more
    // than asymptotics here).
    let r = req.radius;
    let mut lo = 0.0;
    let mut f_lo = norm2(&theta) - r; // > 0 at λ = 0
    let mut hi = rho_eff.max(1.0);
    let mut f_hi;
    loop {
        steps += newton_solve(&obj, rho_eff + hi, &mut theta, tol)?;
        f_hi = norm2(&theta) - r;
        if f_hi < 0.0 {
            break;
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::SolverFailure {
                iterations: steps,
                grad_norm: f64::NAN,
                last_iterate: theta,
            });
        }
    }
    let mut at_hi = true; // θ currently solves λ = hi (the feasible side)
    for iter in 0..100 {
        if -f_hi <= 1e-11 * r || hi - lo <= f64::EPSILON * hi {
            break;
        }
        // Secant proposal on ‖θ(λ)‖ − r, clamped strictly inside the
        // bracket. Every other probe bisects instead, so the bracket keeps
        // shrinking geometrically even when the secant creeps one-sided.
        let mut mid = if iter % 2 == 0 {
            lo + f_lo * (hi - lo) / (f_lo - f_hi)
        } else {
            0.5 * (lo + hi)
        };
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        if mid <= lo || mid >= hi {
            break; // bracket collapsed to adjacent floats
        }
        steps += newton_solve(&obj, rho_eff + mid, &mut theta, tol)?;
        let f_mid = norm2(&theta) - r;
        if f_mid >= 0.0 {
            lo = mid;
            f_lo = f_mid;
            at_hi = false;
        } else {
            hi = mid;
            f_hi = f_mid;
            at_hi = true;
        }
    }
    // Land on the feasible side and report the KKT residual ∇F + λθ.
    if !at_hi {
        steps += newton_solve(&obj, rho_eff + hi, &mut theta, tol)?;
    }
    let mut g = vec![0.0; d];
    obj.gradient(rho_eff, &theta, &mut g);
    let residual: f64 = (0..d)
        .map(|i| {
            let r = g[i] + hi * theta[i];
            r * r
        })
        .sum::<f64>()
        .sqrt();
    Ok(MleFit {
        theta,
        grad_norm: residual,
        newton_steps: steps,
        on_boundary: true,
        rho_used: rho_eff,
        nu: 0.0,
    })
}

/// Closed-form reference for the Gaussian family (ζ = 1):
/// θ̂ = (Σ φφᵀ + ρI)⁻¹·(Σ yφ − w/ζ). Used to validate [`fit`].
pub fn ridge_gaussian_oracle(
    data: SampleView<'_>,
    zeta: f64,
    rho: f64,
    w: &[f64],
) -> Result<Vec<f64>> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid("rho must be positive"));
    }
    if !(zeta.is_finite() && zeta > 0.0) {
        return Err(Error::invalid("zeta must be positive"));
    }
    let d = data.dim();
    if w.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: w.len() });
    }
    let mut gram = SymMat::scaled_identity(d, rho);
    let mut rhs = vec![0.0; d];
    for t in 0..data.len() {
        let phi = data.phi(t);
        gram.add_outer(phi, 1.0);
        for i in 0..d {
            rhs[i] += data.y(t) * phi[i];
        }
    }
    for i in 0..d {
        rhs[i] -= w[i] / zeta;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::invalid("ridge system is not positive definite")
    })?;
    Ok(chol.solve(&rhs))
}

/// The data + ridge + linear-tilt objective, evaluated in fused passes.
struct Objective<'a> {
    data: SampleView<'a>,
    glm: &'a GlmSpec,
    w: &'a [f64],
}

impl Objective<'_> {
    /// F(θ) = Σ nll + ρ̄/2·‖θ‖² + wᵀθ.
    fn value(&self, rho: f64, theta: &[f64]) -> f64 {
        let zeta = self.glm.zeta;
        let mut acc = 0.0;
        for t in 0..self.data.len() {
            let z = zeta * dot(self.data.phi(t), theta);
            let m = match self.glm.kind {
                GlmKind::Gaussian => 0.5 * z * z,
                GlmKind::Logistic => glm_softplus(z),
            };
            acc += m - self.data.y(t) * z;
        }
        acc + 0.5 * rho * dot(theta, theta) + dot(self.w, theta)
    }

    /// Gradient only.
    fn gradient(&self, rho: f64, theta: &[f64], g: &mut [f64]) {
        let zeta = self.glm.zeta;
        let d = self.data.dim();
        for i in 0..d {
            g[i] = rho * theta[i] + self.w[i];
        }
        for t in 0..self.data.len() {
            let phi = self.data.phi(t);
            let z = zeta * dot(phi, theta);
            let mean = match self.glm.kind {
                GlmKind::Gaussian => z,
                GlmKind::Logistic => glm_sigmoid(z),
            };
            let c = zeta * (mean - self.data.y(t));
            for i in 0..d {
                g[i] += c * phi[i];
            }
        }
    }

    /// Value, gradient and Hessian in one data pass.
    fn value_grad_hess(
        &self,
        rho: f64,
        theta: &[f64],
        g: &mut [f64],
        h: &mut SymMat,
    ) -> f64 {
        let zeta = self.glm.zeta;
        let d = self.data.dim();
        let mut f = 0.5 * rho * dot(theta, theta) + dot(self.w, theta);
        for i in 0..d {
            g[i] = rho * theta[i] + self.w[i];
        }
        h.fill_zero();
        h.add_scaled_identity(rho);
        for t in 0..self.data.len() {
            let phi = self.data.phi(t);
            let y = self.data.y(t);
            let z = zeta * dot(phi, theta);
            let (m, mean, curv) = match self.glm.kind {
                GlmKind::Gaussian => (0.5 * z * z, z, 1.0),
                GlmKind::Logistic => {
                    let s = glm_sigmoid(z);
                    (glm_softplus(z), s, s * (1.0 - s))
                }
            };
            f += m - y * z;
            let c = zeta * (mean - y);
            for i in 0..d {
                g[i] += c * phi[i];
            }
            h.add_outer(phi, zeta * zeta * curv);
        }
        f
    }
}

#[inline]
fn glm_sigmoid(z: f64) -> f64 {
    crate::glm::sigmoid(z)
}

#[inline]
fn glm_softplus(z: f64) -> f64 {
    crate::glm::softplus(z)
}

/// Damped Newton from the current iterate (warm start) at ridge weight
/// `rho`. Returns the iteration count; errors with the last iterate if the
/// cap is hit.
fn newton_solve(obj: &Objective<'_>, rho: f64, theta: &mut Vec<f64>, tol: f64) -> Result<u64> {
    let d = theta.len();
    let mut g = vec![0.0; d];
    let mut h = SymMat::zeros(d);
    let mut dir = vec![0.0; d];
    let mut trial = vec![0.0; d];
    for iter in 0..NEWTON_CAP {
        let f = obj.value_grad_hess(rho, theta, &mut g, &mut h);
        let gn = norm2(&g);
        if !gn.is_finite() {
            return Err(Error::SolverFailure {
                iterations: iter,
                grad_norm: gn,
                last_iterate: theta.clone(),
            });
        }
        if gn <= tol {
            return Ok(iter);
        }
        // Hessian ⪰ ρI > 0: Cholesky cannot fail for finite inputs.
        let chol = h.cholesky().ok_or_else(|| Error::SolverFailure {
            iterations: iter,
            grad_norm: gn,
            last_iterate: theta.clone(),
        })?;
        let step = chol.solve(&g);
        let mut slope = 0.0;
        for i in 0..d {
            dir[i] = -step[i];
            slope += g[i] * dir[i];
        }
        // Inside the quadratic-convergence region the objective is too flat
        // for a sufficient-decrease test to resolve in floats, so take the
        // full step there. The region test uses the Newton decrement
        // δ² = gᵀH⁻¹g: both loss families satisfy
        // |F‴[u,u,u]| ≤ ζ‖u‖·F″[u,u] (‖φ‖ ≤ 1), so full steps contract
        // once ζ·δ is a small constant.
        let zeta_sq = (obj.glm.zeta * obj.glm.zeta).max(1.0);
        let mut t = 1.0;
        if -slope > 0.0625 / zeta_sq {
            for _ in 0..60 {
                for i in 0..d {
                    trial[i] = theta[i] + t * dir[i];
                }
                if obj.value(rho, &trial) <= f + ARMIJO_C * t * slope {
                    break;
                }
                t *= 0.5;
            }
        }
        for i in 0..d {
            theta[i] += t * dir[i];
        }
    }
    let mut gfin = vec![0.0; d];
    obj.gradient(rho, theta, &mut gfin);
    let gn = norm2(&gfin);
    if gn <= tol {
        return Ok(NEWTON_CAP);
    }
    Err(Error::SolverFailure {
        iterations: NEWTON_CAP,
        grad_norm: gn,
        last_iterate: theta.clone(),
    })
}
