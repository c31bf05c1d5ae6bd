//! Structural guarantees of the pricing path.
//!
//! The pricing decision is a function of the current context and the
//! *released* artifacts only (θ̂ᵖ and Λᵖ): `choose_price` does not take the
//! purchase history at all, and `step` hands the history to the estimator
//! exclusively inside a refresh. The instrumented history counts every
//! borrow of its raw samples, so a full run certifies the count equals the
//! number of refreshes — zero reads by the per-period price optimizer.
//!
//! The second half validates the refresh schedule against exact determinant
//! arithmetic reconstructed from first principles (no tree, no release):
//! refreshes fire exactly when the exact determinant has more than doubled,
//! so consecutive refresh determinants grow ≥ 1.5× and the total count
//! stays within the log₁.₅ budget even with the call cap disabled.

use dp_pricer_core::covariance::TreeState;
use dp_pricer_core::glm::GlmSpec;
use dp_pricer_core::harness::{self, ExperimentConfig, Stream, Variant};
use dp_pricer_core::linalg::SymMat;
use dp_pricer_core::market::{FeatureMap, MarketConfig};
use dp_pricer_core::mle::History;
use dp_pricer_core::policy::{self, PolicyRngs, PolicyState};

/// The price rule never touches raw samples: a populated history records
/// zero reads while prices are computed, and a full policy run records
/// exactly one read per refresh.
#[test]
fn price_path_reads_no_raw_history() {
    let glm = GlmSpec::logistic_with_zeta(4.0).unwrap();
    let cfg = policy::benchmark_params(2, 4096, 1.0, 1e-8, 1.0, 1e-8).unwrap();

    // A populated history and a policy state with a nontrivial estimate.
    let mut history = History::new(2);
    for t in 0..50 {
        let p = t as f64 / 50.0;
        history.push(&[0.3, -p / 2.0_f64.sqrt()], f64::from(t % 2 == 0)).unwrap();
    }
    let lambda = SymMat::scaled_identity(2, 25.0);
    let state = PolicyState::with_estimate(&cfg, vec![0.4, 0.5], lambda).unwrap();

    // `choose_price(x, state, cfg, glm, map)` has no history parameter:
    // the signature itself is the API-level guarantee. Exercise it anyway
    // and confirm the instrumented counter stays at zero.
    assert_eq!(history.read_count(), 0);
    for i in 0..200 {
        let x = [-1.0 + 2.0 * (i as f64) / 199.0];
        let price =
            policy::choose_price(&x, &state, &cfg, &glm, FeatureMap::ScaledConcat).unwrap();
        assert!((0.0..=1.0).contains(&price));
    }
    assert_eq!(
        history.read_count(),
        0,
        "price optimization must not read raw samples"
    );

    // Full run: raw samples are handed out once per refresh, never else.
    let market = MarketConfig::benchmark(2).unwrap();
    let mut env = harness::stream_rng(11, Stream::Environment);
    let mut rngs = PolicyRngs {
        explore: harness::stream_rng(11, Stream::Exploration),
        mle: harness::stream_rng(11, Stream::MleNoise),
    };
    let mut cov_rng = harness::stream_rng(11, Stream::CovNoise);
    let mut state = PolicyState::new(&cfg).unwrap();
    let mut tree = TreeState::with_budget(2, 4096, cfg.eps1, cfg.delta1).unwrap();
    let mut run_history = History::new(2);
    let mut x = [0.0];
    let mut phi = [0.0; 2];
    for n in 1..=4096u64 {
        market.sample_customer(&mut env, &mut x).unwrap();
        let price = policy::step(
            &x,
            &mut state,
            &tree,
            &cfg,
            &market.glm,
            &run_history,
            &mut rngs,
        )
        .unwrap();
        let (y, _) = market.demand_and_surplus(&x, price, &mut env).unwrap();
        if n < 4096 {
            market.map.write_feature(&x, price, &mut phi).unwrap();
            tree.ingest(&phi, &mut cov_rng).unwrap();
            run_history.push(&phi, y).unwrap();
        }
    }
    assert_eq!(
        run_history.read_count(),
        u64::from(state.d_mle),
        "history reads must equal refreshes"
    );
    assert_eq!(state.d_mle as usize, state.refresh_periods.len());
}

/// The harness-level variant of the same property: the per-trial summary's
/// instrumented read counter equals its refresh count for every variant
/// that prices through the policy.
#[test]
fn harness_trials_certify_refresh_only_reads() {
    for variant in [Variant::Dp, Variant::Nonprivate, Variant::InputPerturb { eps: 0.5 }] {
        let cfg = ExperimentConfig {
            horizon: 1500,
            trials: 1,
            eps1: 0.5,
            eps2: 0.5,
            delta1: 1e-7,
            delta2: 1e-7,
            variant,
            ..ExperimentConfig::default()
        };
        let (_, summary) = harness::run_trial(&cfg, 0).unwrap();
        assert!(summary.mle_calls > 0, "{variant:?}: no refresh in 1500 periods");
        assert_eq!(summary.history_reads, u64::from(summary.mle_calls), "{variant:?}");
    }
}

/// Noise-free refresh soundness, reconstructed without the tree: with the
/// call cap left slack, every refresh coincides with exact-determinant
/// growth ≥ 1.5× (the trigger demands > 2×) and the count stays within
/// ⌈d·log₁.₅ T⌉.
#[test]
fn refresh_schedule_matches_exact_determinant_growth() {
    let horizon: u64 = 2000;
    let d = 2;
    let cap = (d as f64 * (horizon as f64).ln() / 1.5_f64.ln()).ceil() as u32; // 38
    let market = MarketConfig::benchmark(d).unwrap();
    let mut cfg = policy::benchmark_params(d, horizon, 1.0, 1e-8, 1.0, 1e-8).unwrap();
    cfg.d_inf = 10_000; // let the determinant trigger alone drive the count
    cfg.dp_noise = false;

    for trial in 0..20u64 {
        let mut env = harness::stream_rng(trial, Stream::Environment);
        let mut rngs = PolicyRngs {
            explore: harness::stream_rng(trial, Stream::Exploration),
            mle: harness::stream_rng(trial, Stream::MleNoise),
        };
        let mut cov_rng = harness::stream_rng(trial, Stream::CovNoise);
        let mut state = PolicyState::new(&cfg).unwrap();
        let mut tree = TreeState::new(d, horizon, 0.0).unwrap();
        let mut history = History::new(d);
        let mut x = [0.0];
        let mut phi = [0.0; 2];
        let mut ingested: Vec<[f64; 2]> = Vec::with_capacity(horizon as usize);
        for n in 1..=horizon {
            market.sample_customer(&mut env, &mut x).unwrap();
            let price = policy::step(
                &x,
                &mut state,
                &tree,
                &cfg,
                &market.glm,
                &history,
                &mut rngs,
            )
            .unwrap();
            let (y, _) = market.demand_and_surplus(&x, price, &mut env).unwrap();
            if n < horizon {
                market.map.write_feature(&x, price, &mut phi).unwrap();
                tree.ingest(&phi, &mut cov_rng).unwrap();
                history.push(&phi, y).unwrap();
                ingested.push(phi);
            }
        }

        assert!(
            state.d_mle <= cap,
            "trial {trial}: {} refreshes exceed the log₁.₅ budget {cap}",
            state.d_mle
        );
        assert!(state.d_mle >= 3, "trial {trial}: trigger never fired enough");

        // Rebuild Λ at each refresh by direct summation and check growth.
        let mut lambda = SymMat::scaled_identity(d, cfg.rho);
        let mut prev_logdet = lambda.cholesky().unwrap().logdet();
        let mut upto = 0usize;
        for &period in &state.refresh_periods {
            // A refresh at period n saw ingests 1..=n−1.
            let want = (period - 1) as usize;
            while upto < want {
                lambda.add_outer(&ingested[upto], 1.0);
                upto += 1;
            }
            let logdet = lambda.cholesky().unwrap().logdet();
            assert!(
                logdet - prev_logdet >= 1.5_f64.ln() - 1e-12,
                "trial {trial}, refresh at {period}: exact determinant grew \
                 only {:.4}×",
                (logdet - prev_logdet).exp()
            );
            prev_logdet = logdet;
        }
    }
}
