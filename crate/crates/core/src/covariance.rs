//! Tree-aggregated private release of a streaming feature covariance.
//!
//! The stream φ₁, φ₂, … of feature vectors is summarized by prefix Gram sums
//! Σₙ = Σ_{t≤n} φₜφₜᵀ. Releasing every prefix with independent noise would
//! cost a budget linear in the horizon; instead each prefix is assembled from
//! at most m = ⌈log₂ T⌉ dyadic partial sums, each perturbed once with a
//! symmetric Gaussian matrix when it is (re)written. A release therefore
//! carries at most m noise matrices, and each stream element touches at most
//! m nodes, which is what the per-level budget split in
//! [`crate::budget::cov_inner_split`] accounts for.
//!
//! Protocol per ingest n (1-based): with ℓ = [`lsb`]`(n)`, the level-ℓ clean
//! node becomes φₙφₙᵀ plus the clean nodes below it, the nodes below are
//! zeroed (clean and noisy alike), the level-ℓ noisy node is rewritten as the
//! fresh clean value plus one new noise draw, and the released matrix is the
//! sum of the noisy nodes selected by the binary digits of n. Noise is drawn
//! only on node rewrite — queries never resample.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::budget::{cov_inner_split, gaussian_sigma, sample_symmetric_gaussian};
use crate::error::{Error, Result};
use crate::linalg::SymMat;

/// Index of the lowest set bit of n (the dyadic level retired by ingest n).
pub fn lsb(n: u64) -> Result<u32> {
    if n == 0 {
        return Err(Error::invalid("lsb is undefined at 0"));
    }
    Ok(n.trailing_zeros())
}

/// State of one tree-aggregated covariance release.
///
/// Serializable so long-running experiments can checkpoint; the RNG is
/// supplied per call and is not part of the state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeState {
    d: usize,
    horizon: u64,
    levels: u32,
    sigma: f64,
    clean: Vec<SymMat>,
    noisy: Vec<SymMat>,
    n_seen: u64,
    release: SymMat,
    noise_draws: u64,
    scratch: SymMat,
}

impl TreeState {
    /// A release schedule for a horizon-T interaction with per-node noise σ.
    /// σ = 0 gives the exact prefix sums (used by the noise-free variants).
    pub fn new(d: usize, horizon: u64, sigma: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if horizon < 2 {
            return Err(Error::invalid(format!(
                "horizon must be at least 2, got {horizon}"
            )));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
        }
        let levels = crate::budget::ceil_log2(horizon);
        Ok(TreeState {
            d,
            horizon,
            levels,
            sigma,
            clean: (0..levels).map(|_| SymMat::zeros(d)).collect(),
            noisy: (0..levels).map(|_| SymMat::zeros(d)).collect(),
            n_seen: 0,
            release: SymMat::zeros(d),
            noise_draws: 0,
            scratch: SymMat::zeros(d),
        })
    }

    /// Calibrates σ from a total (ε, δ) budget via the per-level split and
    /// the Gaussian mechanism.
    pub fn with_budget(d: usize, horizon: u64, eps: f64, delta: f64) -> Result<Self> {
        let per_level = cov_inner_split(eps, delta, horizon)?;
        TreeState::new(d, horizon, gaussian_sigma(per_level)?)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn n_seen(&self) -> u64 {
        self.n_seen
    }

    #[inline]
    pub fn levels(&self) -> u32 {
        self.levels
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Total noise matrices drawn so far (one per node rewrite).
    #[inline]
    pub fn noise_draws(&self) -> u64 {
        self.noise_draws
    }

    /// Clean partial sum at a level (diagnostics / tests).
    pub fn clean_level(&self, level: u32) -> Option<&SymMat> {
        self.clean.get(level as usize)
    }

    /// Noisy partial sum at a level (diagnostics / tests).
    pub fn noisy_level(&self, level: u32) -> Option<&SymMat> {
        self.noisy.get(level as usize)
    }

    /// Feeds the next feature vector and refreshes the released matrix.
    ///
    /// A horizon-T protocol serves queries at periods 2..=T from ingests
    /// 1..=T−1; the T-th ingest is rejected as exhausted.
    pub fn ingest<R: Rng + ?Sized>(&mut self, phi: &[f64], rng: &mut R) -> Result<()> {
        if phi.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: phi.len() });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature vector must be finite"));
        }
        if self.n_seen + 1 >= self.horizon {
            return Err(Error::ProtocolExhausted {
                horizon: self.horizon,
                max_ingests: self.horizon - 1,
            });
        }
        let n = self.n_seen + 1;
        let level = lsb(n)? as usize;
        debug_assert!(level < self.levels as usize);

        // New level-ℓ partial sum: φφᵀ plus everything it retires.
        self.scratch.fill_zero();
        self.scratch.add_outer(phi, 1.0);
        for j in 0..level {
            self.scratch.add_in(&self.clean[j]);
            self.clean[j].fill_zero();
            self.noisy[j].fill_zero();
        }
        self.clean[level].copy_from(&self.scratch);

        // One fresh noise draw per rewrite; queries never resample.
        self.noisy[level].copy_from(&self.scratch);
        if self.sigma > 0.0 {
            let w = sample_symmetric_gaussian(self.d, self.sigma, rng)?;
            self.noisy[level].add_in(&w);
            self.noise_draws += 1;
        }

        // Release for prefix n: noisy nodes on n's binary decomposition.
        self.release.fill_zero();
        for bit in 0..self.levels {
            if n & (1 << bit) != 0 {
                self.release.add_in(&self.noisy[bit as usize]);
            }
        }
        self.n_seen = n;
        Ok(())
    }

    /// The released prefix-covariance matrix for everything ingested so far.
    /// Before the first ingest this is the zero matrix; between ingests it is
    /// constant (idempotent, resample-free).
    #[inline]
    pub fn query(&self) -> &SymMat {
        &self.release
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_prefix(stream: &[Vec<f64>], upto: usize, d: usize) -> SymMat {
        let mut m = SymMat::zeros(d);
        for phi in &stream[..upto] {
            m.add_outer(phi, 1.0);
        }
        m
    }

    #[test]
    fn lsb_matches_binary_decomposition() {
        assert_eq!(lsb(1).unwrap(), 0);
        assert_eq!(lsb(2).unwrap(), 1);
        assert_eq!(lsb(12).unwrap(), 2);
        assert_eq!(lsb(1024).unwrap(), 10);
        assert!(lsb(0).is_err());
    }

    #[test]
    fn noise_free_release_equals_exact_prefix_sum() {
        let d = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stream: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = crate::linalg::norm2(&v);
                if n > 1.0 {
                    v.iter_mut().for_each(|x| *x /= n);
                }
                v
            })
            .collect();
        let mut tree = TreeState::new(d, 4096, 0.0).unwrap();
        assert_eq!(tree.query(), &SymMat::zeros(d), "pre-ingest release is zero");
        for (i, phi) in stream.iter().enumerate() {
            tree.ingest(phi, &mut rng).unwrap();
            let exact = brute_prefix(&stream, i + 1, d);
            let mut diff = tree.query().clone();
            diff.sub_in(&exact);
            assert!(
                diff.max_abs() < 1e-9 * (1.0 + exact.max_abs()),
                "period {}: released prefix deviates",
                i + 1
            );
        }
    }

    #[test]
    fn repeated_unit_vector_releases_counting_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tree = TreeState::new(2, 16, 0.0).unwrap();
        let e1 = [1.0, 0.0];
        for n in 1..=3 {
            tree.ingest(&e1, &mut rng).unwrap();
            assert_eq!(tree.query().get(0, 0), n as f64);
            assert_eq!(tree.query().get(0, 1), 0.0);
        }
    }

    #[test]
    fn query_is_idempotent_between_ingests() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tree = TreeState::new(2, 64, 3.0).unwrap();
        tree.ingest(&[0.5, -0.2], &mut rng).unwrap();
        let a = tree.query().clone();
        let b = tree.query().clone();
        assert_eq!(a, b);
        tree.ingest(&[0.1, 0.9], &mut rng).unwrap();
        assert_eq!(tree.query(), tree.query());
    }

    #[test]
    fn release_error_decomposes_into_at_most_m_noise_nodes() {
        // With σ > 0, release − exact prefix must equal the sum of the
        // (noisy − clean) node gaps along n's binary decomposition: at most
        // popcount(n) ≤ m independent noise matrices.
        let d = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut tree = TreeState::new(d, 256, 1.0).unwrap();
        let stream: Vec<Vec<f64>> = (0..255)
            .map(|_| vec![rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7)])
            .collect();
        for (i, phi) in stream.iter().enumerate() {
            tree.ingest(phi, &mut rng).unwrap();
            let n = (i + 1) as u64;
            let exact = brute_prefix(&stream, i + 1, d);
            let mut err = tree.query().clone();
            err.sub_in(&exact);
            let mut node_gap_sum = SymMat::zeros(d);
            let mut nodes = 0;
            for bit in 0..tree.levels() {
                if n & (1 << bit) != 0 {
                    let mut gap = tree.noisy_level(bit).unwrap().clone();
                    gap.sub_in(tree.clean_level(bit).unwrap());
                    node_gap_sum.add_in(&gap);
                    nodes += 1;
                }
            }
            err.sub_in(&node_gap_sum);
            assert!(err.max_abs() < 1e-9, "period {n}: unexplained release error");
            assert!(nodes <= tree.levels(), "more noise nodes than levels");
        }
        // One noise draw per rewrite: exactly one per ingest in this protocol.
        assert_eq!(tree.noise_draws(), 255);
    }

    #[test]
    fn released_noise_stays_within_utility_envelope() {
        // Median over seeded runs of maxₙ ‖released − exact‖_op stays under
        // 3·m·σ·√d for d = 2, T = 256 at (ε, δ) = (1, 1e-4).
        let d = 2;
        let t = 256u64;
        let per_level = cov_inner_split(1.0, 1e-4, t).unwrap();
        let sigma = gaussian_sigma(per_level).unwrap();
        let m = crate::budget::ceil_log2(t);
        let mut maxima = Vec::new();
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tree = TreeState::new(d, t, sigma).unwrap();
            let mut exact = SymMat::zeros(d);
            let mut worst = 0.0_f64;
            for _ in 1..t {
                let phi = [rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7)];
                tree.ingest(&phi, &mut rng).unwrap();
                exact.add_outer(&phi, 1.0);
                let mut err = tree.query().clone();
                err.sub_in(&exact);
                worst = worst.max(err.op_norm());
            }
            maxima.push(worst);
        }
        maxima.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = maxima[50];
        let bound = 3.0 * f64::from(m) * sigma * (d as f64).sqrt();
        assert!(median <= bound, "median {median} exceeds bound {bound}");
    }

    #[test]
    fn ingest_count_is_capped_at_horizon_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tree = TreeState::new(1, 4, 0.0).unwrap();
        for _ in 0..3 {
            tree.ingest(&[1.0], &mut rng).unwrap();
        }
        match tree.ingest(&[1.0], &mut rng) {
            Err(Error::ProtocolExhausted { horizon: 4, max_ingests: 3 }) => {}
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(TreeState::new(0, 16, 0.0).is_err());
        assert!(TreeState::new(2, 1, 0.0).is_err());
        assert!(TreeState::new(2, 16, -1.0).is_err());
        let mut tree = TreeState::new(2, 16, 0.0).unwrap();
        assert!(tree.ingest(&[1.0], &mut rng).is_err());
        assert!(tree.ingest(&[f64::NAN, 0.0], &mut rng).is_err());
    }

    #[test]
    fn budget_constructor_matches_manual_calibration() {
        let tree = TreeState::with_budget(2, 1024, 1.0, 0.01).unwrap();
        let per = cov_inner_split(1.0, 0.01, 1024).unwrap();
        assert_eq!(tree.sigma(), gaussian_sigma(per).unwrap());
        assert_eq!(tree.levels(), 10);
    }
}
