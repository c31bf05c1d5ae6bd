//! Shared test fixtures: a deliberately simple projected-gradient reference
//! solver for the constrained fit, plus random-instance generators. The
//! reference solver shares no code with the production Newton path, so
//! agreement between the two is evidence, not tautology.
#![allow(dead_code)] // each test binary pulls in the subset it needs

use dp_pricer_core::glm::{self, GlmKind, GlmSpec};
use dp_pricer_core::linalg;
use dp_pricer_core::mle::SampleView;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Owned sample batch; `view()` borrows it as the estimator input.
pub struct Instance {
    pub d: usize,
    pub phis: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Instance {
    pub fn view(&self) -> SampleView<'_> {
        SampleView::from_parts(self.d, &self.phis, &self.ys).unwrap()
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }
}

/// Random instance with ‖φ_t‖ ≤ 1 and responses drawn from the model at a
/// random parameter with ‖θ*‖ ≤ 1.
pub fn random_instance<R: Rng>(glm: &GlmSpec, d: usize, n: usize, rng: &mut R) -> Instance {
    let mut theta_star = vec![0.0; d];
    for v in theta_star.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let norm = linalg::norm2(&theta_star);
    if norm > 1.0 {
        for v in theta_star.iter_mut() {
            *v /= norm;
        }
    }
    let mut phis = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n);
    let mut phi = vec![0.0; d];
    for _ in 0..n {
        let mut norm_sq = 0.0_f64;
        for v in phi.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
            norm_sq += *v * *v;
        }
        let scale = 1.0 / norm_sq.sqrt().max(1.0);
        for v in phi.iter_mut() {
            *v *= scale;
        }
        let y = glm::sample_demand(glm, linalg::dot(&phi, &theta_star), rng).unwrap();
        phis.extend_from_slice(&phi);
        ys.push(y);
    }
    Instance { d, phis, ys }
}

pub fn test_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Value of the perturbed objective Σ_t nll(θ; φ_t, y_t) + ρ/2·‖θ‖² + wᵀθ.
pub fn objective_value(
    data: SampleView<'_>,
    glm: &GlmSpec,
    rho: f64,
    w: &[f64],
    theta: &[f64],
) -> f64 {
    let mut f = 0.0;
    for t in 0..data.len() {
        f += glm::nll(glm, data.phi(t), data.y(t), theta).unwrap();
    }
    f + 0.5 * rho * linalg::dot(theta, theta) + linalg::dot(w, theta)
}

/// Gradient of the perturbed objective, written into `out`.
pub fn objective_grad(
    data: SampleView<'_>,
    glm: &GlmSpec,
    rho: f64,
    w: &[f64],
    theta: &[f64],
    out: &mut [f64],
) {
    let d = data.dim();
    let mut g = vec![0.0; d];
    for (o, (ti, wi)) in out.iter_mut().zip(theta.iter().zip(w)) {
        *o = rho * ti + wi;
    }
    for t in 0..data.len() {
        glm::nll_grad(glm, data.phi(t), data.y(t), theta, &mut g).unwrap();
        for (o, gi) in out.iter_mut().zip(&g) {
            *o += gi;
        }
    }
}

/// Projected gradient descent on the perturbed objective over ‖θ‖ ≤ radius:
/// fixed step 1/L with L = n·(max curvature) + ρ, iterated until the step
/// moves less than 1e-10. Slow and dependable.
pub fn pgd_solve(
    data: SampleView<'_>,
    glm: &GlmSpec,
    rho: f64,
    w: &[f64],
    radius: f64,
) -> Vec<f64> {
    let d = data.dim();
    let curv = match glm.kind {
        GlmKind::Logistic => glm.zeta * glm.zeta / 4.0,
        GlmKind::Gaussian => glm.zeta * glm.zeta,
    };
    let l = data.len() as f64 * curv + rho;
    let step = 1.0 / l;
    let mut theta = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut next = vec![0.0; d];
    for _ in 0..2_000_000u64 {
        objective_grad(data, glm, rho, w, &theta, &mut grad);
        for i in 0..d {
            next[i] = theta[i] - step * grad[i];
        }
        let norm = linalg::norm2(&next);
        if norm > radius {
            let s = radius / norm;
            for v in next.iter_mut() {
                *v *= s;
            }
        }
        let moved: f64 = theta
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        theta.copy_from_slice(&next);
        if moved <= 1e-10 {
            break;
        }
    }
    theta
}
