//! The pricing policy: exploration, determinant-triggered refreshes of the
//! private estimate, and upper-confidence-bound price selection.
//!
//! Each period the policy sees only the context x_n plus the two privatized
//! releases — the running covariance release Σₙᵖ from [`crate::covariance`]
//! and the current estimate θ̂ᵖ from [`crate::mle`] — never the raw history.
//! Periods 1..=T₀ post uniform random prices. Afterwards the policy forms
//! Λₙᵖ = Σₙᵖ + ρI and refreshes (θ̂ᵖ, Λᵖ) by a fresh estimator call when the
//! released determinant has more than doubled since the last refresh, up to
//! a lifetime cap of `d_inf` calls; each call spends the per-refresh slice
//! of (ε₂, δ₂) computed by [`crate::budget::mle_split`]. Prices maximize
//!
//! ```text
//!   min{ 1, p·f(ζ·φ(x,p)ᵀθ̂ᵖ) + γ·√(φ(x,p)ᵀ(Λᵖ)⁻¹φ(x,p)) }
//! ```
//!
//! over an equispaced grid on [0, 1], ties broken toward the larger price.
//! A configuration switch moves the cap inside the price factor
//! (p·min{1, f + γ·bonus}), the form the regret analysis bounds; the two
//! coincide whenever the cap is slack.
//!
//! Since φ(x, p) = a + p·b is affine in price, the scan over the grid needs
//! only the scalars α = ζaᵀθ̂, β = ζbᵀθ̂ and the quadratic
//! q(p) = φᵀ(Λᵖ)⁻¹φ; the logistic mean is advanced across the grid by one
//! multiply per point (exp(α+β(p−h)) = exp(α+βp)·exp(−βh)), and (Λᵖ)⁻¹ is
//! cached between refreshes, so a period costs O(d²) plus the grid scan.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::budget::{self, PrivacyBudget};
use crate::covariance::TreeState;
use crate::error::{Error, Result};
use crate::glm::{GlmKind, GlmSpec};
use crate::linalg::{dot, SymMat};
use crate::market::FeatureMap;
use crate::mle::{self, History, MleRequest};

/// Which optimistic revenue index the grid search maximizes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UcbObjective {
    /// min{1, p·f(z) + γ·bonus}: the cap applies to the whole index.
    #[default]
    RevenueCap,
    /// p·min{1, f(z) + γ·bonus}: the cap applies to the estimated purchase
    /// probability, which is then scaled by price.
    PriceScaledCap,
}

/// Static policy parameters for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Feature dimension.
    pub d: usize,
    /// Horizon T.
    pub horizon: u64,
    /// Covariance-release budget (spent by the tree, recorded here so the
    /// presets can size ρ).
    pub eps1: f64,
    pub delta1: f64,
    /// Estimator budget, split across at most `d_inf` refreshes.
    pub eps2: f64,
    pub delta2: f64,
    /// Pure-exploration periods T₀.
    pub t0: u64,
    /// Lifetime cap on estimator calls.
    pub d_inf: u32,
    /// Regularization ρ added to the covariance release.
    pub rho: f64,
    /// Confidence width γ.
    pub gamma: f64,
    /// Number of equispaced candidate prices in [0, 1].
    pub price_grid: usize,
    pub ucb: UcbObjective,
    /// When false, estimator refreshes run noise-free (no perturbation, no
    /// curvature floor). The covariance side is controlled by the σ used to
    /// build the tree.
    pub dp_noise: bool,
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if self.horizon < 2 {
            return Err(Error::invalid("horizon must be at least 2"));
        }
        PrivacyBudget::new(self.eps1, self.delta1)?;
        PrivacyBudget::new(self.eps2, self.delta2)?;
        if !(self.rho.is_finite() && self.rho >= 1.0) {
            return Err(Error::invalid(format!("rho must be ≥ 1, got {}", self.rho)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid(format!("gamma must be ≥ 0, got {}", self.gamma)));
        }
        if self.price_grid < 2 {
            return Err(Error::invalid("price grid needs at least two points"));
        }
        if self.d_inf == 0 {
            return Err(Error::invalid("estimator call cap must be positive"));
        }
        Ok(())
    }

    /// Per-refresh budget slice of (ε₂, δ₂) across `d_inf` calls.
    pub fn per_refresh_budget(&self) -> Result<PrivacyBudget> {
        budget::mle_split(self.eps2, self.delta2, self.d_inf)
    }
}

/// Mutable per-trial policy state.
#[derive(Debug, Clone)]
pub struct PolicyState {
    /// Λᵖ of the last refresh (ρI before the first).
    pub lambda_p: SymMat,
    /// Cached log det Λᵖ.
    pub logdet_p: f64,
    /// Current estimate θ̂ᵖ (0 before the first refresh).
    pub theta_p: Vec<f64>,
    /// Estimator calls so far.
    pub d_mle: u32,
    /// Periods seen so far (the period number n of the last `step`).
    pub period: u64,
    /// Periods at which refreshes fired.
    pub refresh_periods: Vec<u64>,
    inv_lambda: SymMat,
    per_call: PrivacyBudget,
    // Scratch for the per-period hot path.
    lam_n: SymMat,
    a: Vec<f64>,
    b: Vec<f64>,
}

/// The two randomness sources the policy consumes, kept separate so paired
/// runs stay aligned: exploration prices never draw from the estimator's
/// noise stream and vice versa.
#[derive(Debug)]
pub struct PolicyRngs<R> {
    pub explore: R,
    pub mle: R,
}

impl PolicyState {
    pub fn new(cfg: &PolicyConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d;
        Ok(PolicyState {
            lambda_p: SymMat::scaled_identity(d, cfg.rho),
            logdet_p: d as f64 * cfg.rho.ln(),
            theta_p: vec![0.0; d],
            d_mle: 0,
            period: 0,
            refresh_periods: Vec::new(),
            inv_lambda: SymMat::scaled_identity(d, 1.0 / cfg.rho),
            per_call: cfg.per_refresh_budget()?,
            lam_n: SymMat::zeros(d),
            a: vec![0.0; d],
            b: vec![0.0; d],
        })
    }

    /// State with an explicit estimate and matrix (for evaluating the price
    /// rule at a chosen operating point, and for tests).
    pub fn with_estimate(cfg: &PolicyConfig, theta: Vec<f64>, lambda: SymMat) -> Result<Self> {
        let mut state = PolicyState::new(cfg)?;
        if theta.len() != cfg.d || lambda.dim() != cfg.d {
            return Err(Error::DimensionMismatch { expected: cfg.d, got: theta.len().min(lambda.dim()) });
        }
        let chol = lambda
            .cholesky()
            .ok_or_else(|| Error::invalid("lambda must be positive definite"))?;
        state.logdet_p = chol.logdet();
        state.inv_lambda = chol.inverse();
        state.lambda_p = lambda;
        state.theta_p = theta;
        Ok(state)
    }

    /// Cached (Λᵖ)⁻¹.
    pub fn inv_lambda(&self) -> &SymMat {
        &self.inv_lambda
    }
}

/// Refresh trigger: the released determinant must have strictly more than
/// doubled since the last refresh, and the call cap must not be exhausted.
pub fn should_refresh(logdet_n: f64, state: &PolicyState, cfg: &PolicyConfig) -> bool {
    logdet_n > std::f64::consts::LN_2 + state.logdet_p && state.d_mle < cfg.d_inf
}

/// The optimistic revenue index of one candidate price:
/// min{1, p·f(ζφᵀθ̂ᵖ) + γ·√(φᵀ(Λᵖ)⁻¹φ)}.
pub fn ucb_value(
    p: f64,
    x: &[f64],
    state: &PolicyState,
    glm: &GlmSpec,
    gamma: f64,
    map: FeatureMap,
) -> Result<f64> {
    let d = state.lambda_p.dim();
    let mut phi = vec![0.0; d];
    map.write_feature(x, p, &mut phi)?;
    let mean = crate::glm::link_mean(glm, glm.zeta * dot(&phi, &state.theta_p))?;
    let bonus = gamma * state.inv_lambda.quad_form(&phi).max(0.0).sqrt();
    Ok((p * mean + bonus).min(1.0))
}

/// Grid argmax of the configured index; ties break toward the largest
/// price.
pub fn choose_price(
    x: &[f64],
    state: &PolicyState,
    cfg: &PolicyConfig,
    glm: &GlmSpec,
    map: FeatureMap,
) -> Result<f64> {
    let d = state.lambda_p.dim();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let line = ucb_line(x, state, glm, map, &mut a, &mut b)?;
    Ok(argmax_price(glm.kind, cfg.ucb, cfg.gamma, cfg.price_grid, &line))
}

/// One policy period: exploration price during the first T₀ periods, then
/// query → (maybe) refresh → UCB price. The caller ingests the period's
/// outcome into the tree and history afterwards.
pub fn step<R: Rng>(
    x: &[f64],
    state: &mut PolicyState,
    cov: &TreeState,
    cfg: &PolicyConfig,
    glm: &GlmSpec,
    history: &History,
    rngs: &mut PolicyRngs<R>,
) -> Result<f64> {
    state.period += 1;
    if state.period <= cfg.t0 {
        return Ok(rngs.explore.random::<f64>());
    }

    // Λₙᵖ = Σₙᵖ + ρI from the covariance release.
    state.lam_n.copy_from(cov.query());
    state.lam_n.add_scaled_identity(cfg.rho);
    if state.d_mle < cfg.d_inf {
        // Released noise can make Λₙᵖ indefinite early on; treat its
        // determinant as −∞ (no refresh) until it turns definite.
        if let Some(chol) = state.lam_n.cholesky() {
            let logdet_n = chol.logdet();
            if should_refresh(logdet_n, state, cfg) {
                let req = MleRequest {
                    data: history.samples(),
                    glm,
                    rho: cfg.rho,
                    eps: state.per_call.eps,
                    delta: state.per_call.delta,
                    radius: 2.0,
                };
                let fitted = if cfg.dp_noise {
                    mle::fit(&req, &mut rngs.mle)?
                } else {
                    mle::fit_noise_free(&req)?
                };
                state.theta_p.copy_from_slice(&fitted.theta);
                state.lambda_p.copy_from(&state.lam_n);
                state.logdet_p = logdet_n;
                state.inv_lambda = chol.inverse();
                state.d_mle += 1;
                state.refresh_periods.push(state.period);
            }
        }
    }

    let (mut a, mut b) = (std::mem::take(&mut state.a), std::mem::take(&mut state.b));
    let line = ucb_line(x, state, glm, map_of(cfg, x)?, &mut a, &mut b)?;
    state.a = a;
    state.b = b;
    Ok(argmax_price(glm.kind, cfg.ucb, cfg.gamma, cfg.price_grid, &line))
}

/// The policy's feature map. Fixed to the scaled-concatenation map; kept as
/// a function so a second map slots in beside the config.
fn map_of(cfg: &PolicyConfig, x: &[f64]) -> Result<FeatureMap> {
    let map = FeatureMap::ScaledConcat;
    if map.dim(x.len()) != cfg.d {
        return Err(Error::DimensionMismatch { expected: cfg.d, got: x.len() + 1 });
    }
    Ok(map)
}

/// Scalars describing the index and bonus along the price axis:
/// z(p) = α + β·p and q(p) = q0 + q1·p + q2·p² = φ(x,p)ᵀ(Λᵖ)⁻¹φ(x,p).
struct UcbLine {
    alpha: f64,
    beta: f64,
    q0: f64,
    q1: f64,
    q2: f64,
}

fn ucb_line(
    x: &[f64],
    state: &PolicyState,
    glm: &GlmSpec,
    map: FeatureMap,
    a: &mut [f64],
    b: &mut [f64],
) -> Result<UcbLine> {
    map.write_affine(x, a, b)?;
    let inv = &state.inv_lambda;
    Ok(UcbLine {
        alpha: glm.zeta * dot(a, &state.theta_p),
        beta: glm.zeta * dot(b, &state.theta_p),
        q0: inv.quad_form(a),
        q1: 2.0 * inv.bilinear(a, b),
        q2: inv.quad_form(b),
    })
}

/// Descending scan over the price grid. Strict improvement on a descending
/// scan keeps the largest price among exact ties; once the running best
/// reaches the ceiling no smaller price can win, so the scan stops early.
fn argmax_price(
    kind: GlmKind,
    ucb: UcbObjective,
    gamma: f64,
    grid: usize,
    line: &UcbLine,
) -> f64 {
    let h = 1.0 / (grid - 1) as f64;
    let mut best_i = grid - 1;
    let mut best_val = f64::NEG_INFINITY;
    let estep = (-line.beta * h).exp();
    let mut e = (line.alpha + line.beta).exp();
    for i in (0..grid).rev() {
        let p = i as f64 * h;
        let mean = match kind {
            GlmKind::Gaussian => line.alpha + line.beta * p,
            GlmKind::Logistic => {
                if !e.is_finite() {
                    e = (line.alpha + line.beta * p).exp();
                }
                if e.is_infinite() {
                    1.0
                } else {
                    e / (1.0 + e)
                }
            }
        };
        let bonus = gamma * (line.q0 + p * (line.q1 + p * line.q2)).max(0.0).sqrt();
        let val = match ucb {
            UcbObjective::RevenueCap => (p * mean + bonus).min(1.0),
            UcbObjective::PriceScaledCap => p * (mean + bonus).min(1.0),
        };
        if val > best_val {
            best_val = val;
            best_i = i;
            // Largest value any remaining (smaller) price can reach.
            let ceiling = match ucb {
                UcbObjective::RevenueCap => 1.0,
                UcbObjective::PriceScaledCap => p - h,
            };
            if val >= ceiling {
                break;
            }
        }
        e *= estep;
    }
    best_i as f64 / (grid - 1) as f64
}

/// Benchmark-scenario parameters: T₀ = 10, ρ = 10, γ = 1,
/// D∞ = ⌈d·log₂ T⌉, 1001 candidate prices.
pub fn benchmark_params(
    d: usize,
    horizon: u64,
    eps1: f64,
    delta1: f64,
    eps2: f64,
    delta2: f64,
) -> Result<PolicyConfig> {
    if horizon < 2 {
        return Err(Error::invalid("horizon must be at least 2"));
    }
    let d_inf = (d as f64 * (horizon as f64).log2()).ceil() as u32;
    let cfg = PolicyConfig {
        d,
        horizon,
        eps1,
        delta1,
        eps2,
        delta2,
        t0: 10,
        d_inf,
        rho: 10.0,
        gamma: 1.0,
        price_grid: 1001,
        ucb: UcbObjective::RevenueCap,
        dp_noise: true,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Shared across both theory presets: D∞ = ⌈d·log₁.₅ T⌉ and
/// ρ = max{ε₁⁻¹·d^1.5·ln⁵T, 5ν√(5d·lnT), 2 + 48·s²G²K·d·lnT}, with ν the
/// perturbation scale of one refresh under the split (ε₂, δ₂) budget.
fn theory_rho_dinf(
    d: usize,
    horizon: u64,
    eps1: f64,
    eps2: f64,
    delta2: f64,
    glm: &GlmSpec,
) -> Result<(f64, u32, f64)> {
    if horizon < 2 {
        return Err(Error::invalid("horizon must be at least 2"));
    }
    let df = d as f64;
    let ln_t = (horizon as f64).ln();
    let d_inf = (df * ln_t / 1.5_f64.ln()).ceil() as u32;
    let per_call = budget::mle_split(eps2, delta2, d_inf)?;
    let nu = budget::objective_nu(glm.b1(), per_call.eps, per_call.delta)?;
    let s = glm.s_const;
    let g = glm.g_const;
    let k = glm.k_const;
    let rho = (df.powf(1.5) * ln_t.powi(5) / eps1)
        .max(5.0 * nu * (5.0 * df * ln_t).sqrt())
        .max(2.0 + 48.0 * s * s * g * g * k * df * ln_t);
    Ok((rho, d_inf, nu))
}

/// Parameters under which the pricing regret admits the
/// O(γ·√(dT·lnT)) guarantee without an exploration phase: T₀ = 0 and
/// γ = K[(√3·sK + √5·Gν)·√(d·lnT) + (2G+3)·√ρ].
pub fn theorem1_params(
    d: usize,
    horizon: u64,
    eps1: f64,
    delta1: f64,
    eps2: f64,
    delta2: f64,
    glm: &GlmSpec,
) -> Result<PolicyConfig> {
    let (rho, d_inf, nu) = theory_rho_dinf(d, horizon, eps1, eps2, delta2, glm)?;
    let df = d as f64;
    let ln_t = (horizon as f64).ln();
    let s = glm.s_const;
    let g = glm.g_const;
    let k = glm.k_const;
    let gamma = k
        * ((3.0_f64.sqrt() * s * k + 5.0_f64.sqrt() * g * nu) * (df * ln_t).sqrt()
            + (2.0 * g + 3.0) * rho.sqrt());
    let cfg = PolicyConfig {
        d,
        horizon,
        eps1,
        delta1,
        eps2,
        delta2,
        t0: 0,
        d_inf,
        rho,
        gamma,
        price_grid: 1001,
        ucb: UcbObjective::RevenueCap,
        dp_noise: true,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Parameters with an initial exploration phase and the smaller width
/// γ = 4sK²·√(d·lnT); T₀ = ⌈32·[(2G+3)ρ/√(5d·lnT) + νG]²·ln²(dT)⌉.
pub fn theorem2_params(
    d: usize,
    horizon: u64,
    eps1: f64,
    delta1: f64,
    eps2: f64,
    delta2: f64,
    glm: &GlmSpec,
) -> Result<PolicyConfig> {
    let (rho, d_inf, nu) = theory_rho_dinf(d, horizon, eps1, eps2, delta2, glm)?;
    let df = d as f64;
    let ln_t = (horizon as f64).ln();
    let s = glm.s_const;
    let g = glm.g_const;
    let k = glm.k_const;
    let gamma = 4.0 * s * k * k * (df * ln_t).sqrt();
    let base = (2.0 * g + 3.0) * rho / (5.0 * df * ln_t).sqrt() + nu * g;
    let ln_dt = (df * horizon as f64).ln();
    let t0 = (32.0 * base * base * ln_dt * ln_dt).ceil() as u64;
    let cfg = PolicyConfig {
        d,
        horizon,
        eps1,
        delta1,
        eps2,
        delta2,
        t0,
        d_inf,
        rho,
        gamma,
        price_grid: 1001,
        ucb: UcbObjective::RevenueCap,
        dp_noise: true,
    };
    cfg.validate()?;
    Ok(cfg)
}
