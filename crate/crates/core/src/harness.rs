//! Seeded Monte-Carlo experiment driver: runs the pricing policy (or a
//! baseline) against the synthetic market over many independent trials and
//! aggregates regret and surplus.
//!
//! Four run variants share one episode loop:
//!
//! * `dp` — the private policy: noisy covariance release plus perturbed
//!   estimator refreshes under the configured (ε₁, δ₁) and (ε₂, δ₂).
//! * `nonprivate` — identical machinery with every noise scale forced to 0.
//! * `input_perturb(ε)` — the local-noise baseline: the policy runs
//!   noise-free but only ever sees anonymized records — contexts with
//!   i.i.d. Laplace(0, 1/ε) noise per coordinate and purchase bits passed
//!   through ε-randomized response. Demand, regret and surplus are still
//!   realized from the true context.
//! * `random_price` — i.i.d. U[0,1] prices, no learning at all.
//!
//! Seed discipline: trial i derives its seed as `base_seed + i`, and every
//! stochastic draw inside a trial flows from one of five named substreams
//! (environment, exploration, covariance noise, estimator noise, feature
//! noise), each its own generator seeded from the trial seed. Turning one
//! noise source off therefore never shifts another source's draws, so
//! variant comparisons at a common seed are variance-paired: the dp,
//! nonprivate, and random-price runs of trial i face bit-identical customer
//! sequences.
//!
//! Aggregation reports the exact arithmetic mean along with median and
//! sample standard deviation of the per-trial averages, plus a downsampled
//! mean cumulative-regret curve (≤ 512 checkpoints) for plotting. Outputs
//! are a tidy per-period CSV of one trial and a JSON summary embedding the
//! config echo, per-trial records, aggregate statistics, and the realized
//! privacy budget.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{self, PrivacyBudget};
use crate::covariance::TreeState;
use crate::error::{Error, Result};
use crate::market::{self, MarketConfig, RegretTrace};
use crate::mle::History;
use crate::policy::{self, PolicyConfig, PolicyRngs, PolicyState, UcbObjective};

/// Which pricing mechanism a run exercises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Private policy: noisy covariance release + perturbed refreshes.
    Dp,
    /// Same policy with all noise scales forced to 0.
    Nonprivate,
    /// Noise-free policy fed anonymized records: contexts carry
    /// Laplace(0, 1/ε) noise and the stored purchase bit goes through
    /// ε-randomized response.
    InputPerturb { eps: f64 },
    /// i.i.d. U[0,1] prices; no learning.
    RandomPrice,
}

impl Default for Variant {
    fn default() -> Self {
        Variant::Dp
    }
}

/// Named parameter presets for the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Benchmark settings: T₀ = 10, ρ = 10, γ = 1, D∞ = ⌈d·log₂T⌉.
    #[default]
    Section8,
    /// Theory settings without exploration phase (large ρ and γ).
    Theorem1,
    /// Theory settings with exploration phase and the smaller γ.
    Theorem2,
}

/// Full description of one experiment: market, policy preset, privacy
/// budgets, variant, trial count, and seeding.
///
/// All fields have defaults, so a JSON config may specify only what it
/// overrides. The horizon serializes as `"T"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Horizon T (periods per trial).
    #[serde(rename = "T")]
    pub horizon: u64,
    /// Feature dimension d; contexts live in dimension d − 1.
    pub d: usize,
    /// Number of independent trials.
    pub trials: u32,
    /// Trial i runs with seed `base_seed + i`.
    pub base_seed: u64,
    pub preset: Preset,
    /// Covariance-release budget.
    pub eps1: f64,
    pub delta1: f64,
    /// Estimator budget.
    pub eps2: f64,
    pub delta2: f64,
    pub variant: Variant,
    /// Number of candidate prices in [0, 1].
    pub price_grid: usize,
    /// Dense-grid resolution of the regret oracle.
    pub oracle_grid: usize,
    /// Worker threads for trial parallelism; 0 = library default.
    pub jobs: usize,
    pub ucb: UcbObjective,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            horizon: 100_000,
            d: 2,
            trials: 20,
            base_seed: 7,
            preset: Preset::Section8,
            eps1: 1.0,
            delta1: 1e-10,
            eps2: 1.0,
            delta2: 1e-10,
            variant: Variant::Dp,
            price_grid: 1001,
            oracle_grid: market::DEFAULT_ORACLE_GRID,
            jobs: 0,
            ucb: UcbObjective::RevenueCap,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::invalid("horizon must be at least 2"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("need at least one trial"));
        }
        if let Variant::InputPerturb { eps } = self.variant {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::invalid(format!(
                    "input-perturbation eps must be positive, got {eps}"
                )));
            }
        }
        self.market()?;
        if !matches!(self.variant, Variant::RandomPrice) {
            self.policy()?;
        }
        Ok(())
    }

    /// The synthetic market this experiment prices against.
    pub fn market(&self) -> Result<MarketConfig> {
        let mut market = MarketConfig::benchmark(self.d)?;
        if self.oracle_grid < 2 {
            return Err(Error::invalid("oracle grid needs at least two points"));
        }
        market.oracle_grid = self.oracle_grid;
        Ok(market)
    }

    /// The policy parameters: preset values with this config's price grid
    /// and index shape, estimator noise enabled only for the dp variant.
    pub fn policy(&self) -> Result<PolicyConfig> {
        // One source of truth for the family: the theory presets derive
        // ρ/γ/T₀ from the same model the market samples from.
        let glm = self.market()?.glm;
        let mut cfg = match self.preset {
            Preset::Section8 => policy::benchmark_params(
                self.d,
                self.horizon,
                self.eps1,
                self.delta1,
                self.eps2,
                self.delta2,
            )?,
            Preset::Theorem1 => policy::theorem1_params(
                self.d,
                self.horizon,
                self.eps1,
                self.delta1,
                self.eps2,
                self.delta2,
                &glm,
            )?,
            Preset::Theorem2 => policy::theorem2_params(
                self.d,
                self.horizon,
                self.eps1,
                self.delta1,
                self.eps2,
                self.delta2,
                &glm,
            )?,
        };
        cfg.price_grid = self.price_grid;
        cfg.ucb = self.ucb;
        cfg.dp_noise = matches!(self.variant, Variant::Dp);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Realized privacy budget of one run, echoed into the summary JSON.
///
/// Only the dp variant spends budget through the covariance/estimator
/// pipeline; the other variants report zeros here (the input-perturbation
/// baseline's per-period local guarantee is a different currency and is
/// not folded into this report).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub eps1: f64,
    pub delta1: f64,
    pub eps2: f64,
    pub delta2: f64,
    /// ε₁ + ε₂ (basic composition of the two stages).
    pub eps_total: f64,
    /// δ₁ + δ₂.
    pub delta_total: f64,
}

fn budget_report(cfg: &ExperimentConfig) -> Result<BudgetReport> {
    if !matches!(cfg.variant, Variant::Dp) {
        return Ok(BudgetReport::default());
    }
    let cov = PrivacyBudget::new(cfg.eps1, cfg.delta1)?;
    let mle = PrivacyBudget::new(cfg.eps2, cfg.delta2)?;
    let total = budget::total_budget(cov, mle)?;
    Ok(BudgetReport {
        eps1: cov.eps,
        delta1: cov.delta,
        eps2: mle.eps,
        delta2: mle.delta,
        eps_total: total.eps,
        delta_total: total.delta,
    })
}

/// Per-trial outcome record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: u32,
    pub seed: u64,
    pub cum_regret: f64,
    /// Exactly `cum_regret / T` (one division, no re-summation).
    pub avg_regret: f64,
    pub avg_surplus: f64,
    /// Estimator refreshes performed.
    pub mle_calls: u32,
    /// Periods at which refreshes fired.
    pub refresh_periods: Vec<u64>,
    /// Times the raw purchase history was handed out (to the estimator);
    /// stays equal to `mle_calls` because nothing else may touch it.
    pub history_reads: u64,
    pub budget: BudgetReport,
}

/// Mean / median / sample standard deviation of one per-trial statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Arithmetic mean, computed as one sum over trials divided by the
    /// trial count.
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single trial.
    pub stddev: f64,
}

impl Aggregate {
    pub fn from_values(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "aggregate of an empty sample");
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        let stddev = if values.len() > 1 {
            let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Aggregate { mean, median, stddev }
    }
}

/// One point of the downsampled mean cumulative-regret curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub period: u64,
    /// Cumulative regret at `period`, averaged over trials.
    pub mean_cum_regret: f64,
}

/// Aggregate outcome of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialSummary>,
    /// Aggregate of per-trial average regret.
    pub regret: Aggregate,
    /// Aggregate of per-trial average surplus.
    pub surplus: Aggregate,
    pub budget: BudgetReport,
    /// Mean cumulative regret at ≤ 512 checkpoints up to T.
    pub curve: Vec<CurvePoint>,
}

/// The five independent randomness streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Customer contexts, demand draws, surplus shocks.
    Environment,
    /// Exploration-phase prices (and the random-price baseline's prices).
    Exploration,
    /// Gaussian noise of the covariance release.
    CovNoise,
    /// Objective-perturbation vectors of estimator refreshes.
    MleNoise,
    /// Laplace noise of the input-perturbation baseline.
    FeatureNoise,
}

/// splitmix64 step: the standard 64-bit mix used to spread one seed into
/// decorrelated stream seeds.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one named stream within a trial: the k-th splitmix64 output of
/// the trial seed, k being the stream's position.
pub fn stream_seed(trial_seed: u64, stream: Stream) -> u64 {
    let mut state = trial_seed;
    let mut out = 0;
    for _ in 0..=stream as usize {
        out = splitmix64(&mut state);
    }
    out
}

/// Generator for one named stream of a trial.
pub fn stream_rng(trial_seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(trial_seed, stream))
}

/// Runs trial `trial` of the experiment: T periods of sample context →
/// price → realize demand → record regret and surplus. Deterministic given
/// `(cfg.base_seed, trial)`; errors carry the trial index.
pub fn run_trial(cfg: &ExperimentConfig, trial: u32) -> Result<(RegretTrace, TrialSummary)> {
    run_trial_inner(cfg, trial)
        .map_err(|source| Error::Trial { trial, source: Box::new(source) })
}

fn run_trial_inner(cfg: &ExperimentConfig, trial: u32) -> Result<(RegretTrace, TrialSummary)> {
    cfg.validate()?;
    let market = cfg.market()?;
    let seed = cfg.base_seed.wrapping_add(u64::from(trial));
    let horizon = cfg.horizon;
    let budget = budget_report(cfg)?;

    let mut env = stream_rng(seed, Stream::Environment);
    let mut explore = stream_rng(seed, Stream::Exploration);

    let context_dim = market.context_dim();
    let mut trace = RegretTrace::with_capacity(context_dim, horizon as usize);
    let mut x = vec![0.0; context_dim];

    if matches!(cfg.variant, Variant::RandomPrice) {
        for _ in 0..horizon {
            market.sample_customer(&mut env, &mut x)?;
            let price: f64 = explore.random();
            let (demand, surplus) = market.demand_and_surplus(&x, price, &mut env)?;
            let regret = market.instant_regret(&x, price)?;
            trace.push(&x, price, demand, regret, surplus);
        }
        let summary = summarize(trial, seed, &trace, horizon, 0, Vec::new(), 0, budget);
        return Ok((trace, summary));
    }

    let policy_cfg = cfg.policy()?;
    let mut state = PolicyState::new(&policy_cfg)?;
    let mut tree = match cfg.variant {
        Variant::Dp => TreeState::with_budget(cfg.d, horizon, cfg.eps1, cfg.delta1)?,
        _ => TreeState::new(cfg.d, horizon, 0.0)?,
    };
    let mut history = History::new(cfg.d);
    let mut rngs = PolicyRngs { explore, mle: stream_rng(seed, Stream::MleNoise) };
    let mut cov_rng = stream_rng(seed, Stream::CovNoise);
    let mut feature_rng = stream_rng(seed, Stream::FeatureNoise);

    let perturb_eps = match cfg.variant {
        Variant::InputPerturb { eps } => Some(eps),
        _ => None,
    };
    let mut x_noisy = vec![0.0; context_dim];
    let mut phi = vec![0.0; cfg.d];

    for n in 1..=horizon {
        market.sample_customer(&mut env, &mut x)?;
        // The policy sees the true context except under input perturbation,
        // where it only ever sees the noisy copy.
        let x_alg: &[f64] = match perturb_eps {
            Some(eps) => {
                market::input_perturb_into(&x, eps, &mut feature_rng, &mut x_noisy)?;
                &x_noisy
            }
            None => &x,
        };
        let price =
            policy::step(x_alg, &mut state, &tree, &policy_cfg, &market.glm, &history, &mut rngs)?;
        // Demand and surplus are realized from the true context.
        let (demand, surplus) = market.demand_and_surplus(&x, price, &mut env)?;
        let regret = market.instant_regret(&x, price)?;
        // Under input perturbation the stored record is anonymized end to
        // end: the purchase bit goes through randomized response at the same
        // ε as the features, since a clear-text response would leak through
        // every later estimate.
        let y_alg = match perturb_eps {
            Some(eps) => market::randomize_response(demand, eps, &mut feature_rng)?,
            None => demand,
        };
        // The release schedule serves periods 2..=T from ingests 1..=T−1,
        // so the final period's outcome is never fed back.
        if n < horizon {
            market.map.write_feature(x_alg, price, &mut phi)?;
            tree.ingest(&phi, &mut cov_rng)?;
            history.push(&phi, y_alg)?;
        }
        trace.push(&x, price, demand, regret, surplus);
    }

    let summary = summarize(
        trial,
        seed,
        &trace,
        horizon,
        state.d_mle,
        state.refresh_periods.clone(),
        history.read_count(),
        budget,
    );
    Ok((trace, summary))
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    trial: u32,
    seed: u64,
    trace: &RegretTrace,
    horizon: u64,
    mle_calls: u32,
    refresh_periods: Vec<u64>,
    history_reads: u64,
    budget: BudgetReport,
) -> TrialSummary {
    let cum_regret = trace.total_regret();
    TrialSummary {
        trial,
        seed,
        cum_regret,
        avg_regret: cum_regret / horizon as f64,
        avg_surplus: trace.total_surplus() / horizon as f64,
        mle_calls,
        refresh_periods,
        history_reads,
        budget,
    }
}

/// Periods at which the mean cumulative-regret curve is sampled: ≤ 512
/// strictly increasing checkpoints ending at T.
fn curve_checkpoints(horizon: u64) -> Vec<u64> {
    let points = horizon.min(512);
    (1..=points).map(|k| k * horizon / points).collect()
}

/// Cumulative regret of one trace at each checkpoint.
fn sample_curve(trace: &RegretTrace, checkpoints: &[u64]) -> Vec<f64> {
    checkpoints.iter().map(|&p| trace.cum_regret[p as usize - 1]).collect()
}

/// Runs `cfg.trials` trials with seeds `base_seed + i` and aggregates.
///
/// Trials execute in parallel (up to `cfg.jobs` workers; 0 = library
/// default) and are joined in trial-index order, so the report does not
/// depend on scheduling. Returns the report plus trial 0's full trace for
/// per-period output.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, RegretTrace)> {
    cfg.validate()?;
    let checkpoints = curve_checkpoints(cfg.horizon);
    let run_one = |trial: u32| -> Result<(TrialSummary, Vec<f64>, Option<RegretTrace>)> {
        let (trace, summary) = run_trial(cfg, trial)?;
        let curve = sample_curve(&trace, &checkpoints);
        // Only trial 0's full trace is kept; the rest reduce to summaries
        // and curve samples before joining.
        Ok((summary, curve, (trial == 0).then_some(trace)))
    };

    let results: Vec<(TrialSummary, Vec<f64>, Option<RegretTrace>)> = if cfg.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
        pool.install(|| (0..cfg.trials).into_par_iter().map(run_one).collect::<Result<_>>())?
    } else {
        (0..cfg.trials).into_par_iter().map(run_one).collect::<Result<_>>()?
    };

    let mut trials = Vec::with_capacity(results.len());
    let mut curve_sums = vec![0.0; checkpoints.len()];
    let mut first_trace = None;
    for (summary, curve, trace) in results {
        for (sum, v) in curve_sums.iter_mut().zip(&curve) {
            *sum += v;
        }
        trials.push(summary);
        if let Some(t) = trace {
            first_trace = Some(t);
        }
    }
    let first_trace = first_trace.expect("trial 0 always runs");

    let n = f64::from(cfg.trials);
    let curve = checkpoints
        .iter()
        .zip(&curve_sums)
        .map(|(&period, &sum)| CurvePoint { period, mean_cum_regret: sum / n })
        .collect();
    let avg_regrets: Vec<f64> = trials.iter().map(|t| t.avg_regret).collect();
    let avg_surpluses: Vec<f64> = trials.iter().map(|t| t.avg_surplus).collect();
    let report = ExperimentReport {
        config: cfg.clone(),
        regret: Aggregate::from_values(&avg_regrets),
        surplus: Aggregate::from_values(&avg_surpluses),
        budget: budget_report(cfg)?,
        trials,
        curve,
    };
    Ok((report, first_trace))
}

/// Writes one trace as tidy CSV: `period,x0,…,price,demand,instant_regret,
/// cum_regret,surplus`, one row per period, periods 1-based. Values print
/// in Rust's shortest round-trip form, so re-emitting the same trace is
/// byte-identical.
pub fn emit_csv(trace: &RegretTrace, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    let mut line = String::from("period");
    for j in 0..trace.context_dim {
        let _ = write!(line, ",x{j}");
    }
    line.push_str(",price,demand,instant_regret,cum_regret,surplus");
    writeln!(out, "{line}").map_err(io_err)?;
    for t in 0..trace.len() {
        line.clear();
        let _ = write!(line, "{}", t + 1);
        for v in trace.context(t) {
            let _ = write!(line, ",{v}");
        }
        let _ = write!(
            line,
            ",{},{},{},{},{}",
            trace.price[t],
            trace.demand[t],
            trace.instant_regret[t],
            trace.cum_regret[t],
            trace.surplus[t]
        );
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Writes the experiment report as pretty-printed JSON.
pub fn emit_summary(report: &ExperimentReport, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut out, report)
        .map_err(|e| io_err(std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    writeln!(out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            horizon: 400,
            trials: 3,
            eps1: 0.5,
            eps2: 0.5,
            delta1: 1e-6,
            delta2: 1e-6,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn stream_seeds_are_distinct() {
        let streams = [
            Stream::Environment,
            Stream::Exploration,
            Stream::CovNoise,
            Stream::MleNoise,
            Stream::FeatureNoise,
        ];
        let mut seeds: Vec<u64> = streams.iter().map(|&s| stream_seed(7, s)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), streams.len());
        // And stable: same trial seed, same stream, same value.
        assert_eq!(stream_seed(7, Stream::CovNoise), stream_seed(7, Stream::CovNoise));
        assert_ne!(stream_seed(7, Stream::CovNoise), stream_seed(8, Stream::CovNoise));
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = small_cfg();
        let (trace_a, summary_a) = run_trial(&cfg, 1).unwrap();
        let (trace_b, summary_b) = run_trial(&cfg, 1).unwrap();
        assert_eq!(trace_a.price, trace_b.price);
        assert_eq!(trace_a.x, trace_b.x);
        assert_eq!(trace_a.cum_regret, trace_b.cum_regret);
        assert_eq!(summary_a, summary_b);
        // A different trial index gives a different run.
        let (trace_c, _) = run_trial(&cfg, 2).unwrap();
        assert_ne!(trace_a.price, trace_c.price);
    }

    #[test]
    fn variants_face_the_same_customers() {
        let dp = small_cfg();
        let nonprivate = ExperimentConfig { variant: Variant::Nonprivate, ..small_cfg() };
        let random = ExperimentConfig { variant: Variant::RandomPrice, ..small_cfg() };
        let perturbed =
            ExperimentConfig { variant: Variant::InputPerturb { eps: 0.5 }, ..small_cfg() };
        let (t_dp, _) = run_trial(&dp, 0).unwrap();
        let (t_np, s_np) = run_trial(&nonprivate, 0).unwrap();
        let (t_rp, s_rp) = run_trial(&random, 0).unwrap();
        let (t_ip, s_ip) = run_trial(&perturbed, 0).unwrap();
        // Identical context sequences: the environment stream is insulated
        // from every noise switch.
        assert_eq!(t_dp.x, t_np.x);
        assert_eq!(t_dp.x, t_rp.x);
        assert_eq!(t_dp.x, t_ip.x);
        // But the pricing differs across mechanisms.
        assert_ne!(t_dp.price, t_np.price);
        assert_ne!(t_np.price, t_rp.price);
        assert_ne!(t_np.price, t_ip.price);
        // Non-dp budgets report zeros.
        assert_eq!(s_np.budget, BudgetReport::default());
        assert_eq!(s_rp.budget, BudgetReport::default());
        assert_eq!(s_ip.budget, BudgetReport::default());
    }

    #[test]
    fn random_prices_are_the_raw_exploration_stream() {
        let cfg = ExperimentConfig { variant: Variant::RandomPrice, ..small_cfg() };
        let (trace, summary) = run_trial(&cfg, 4).unwrap();
        let mut explore = stream_rng(cfg.base_seed + 4, Stream::Exploration);
        let expected: Vec<f64> = (0..cfg.horizon).map(|_| explore.random()).collect();
        assert_eq!(trace.price, expected);
        assert_eq!(summary.mle_calls, 0);
        assert_eq!(summary.history_reads, 0);
        assert!(summary.refresh_periods.is_empty());
    }

    #[test]
    fn summary_ratios_are_single_divisions() {
        let (trace, summary) = run_trial(&small_cfg(), 0).unwrap();
        let t = small_cfg().horizon as f64;
        assert_eq!(summary.cum_regret, trace.total_regret());
        assert_eq!(summary.avg_regret, summary.cum_regret / t);
        assert_eq!(summary.avg_surplus, trace.total_surplus() / t);
        assert_eq!(summary.mle_calls as usize, summary.refresh_periods.len());
        assert_eq!(summary.history_reads, u64::from(summary.mle_calls));
    }

    #[test]
    fn dp_budget_totals_compose_the_two_stages() {
        let (_, summary) = run_trial(&small_cfg(), 0).unwrap();
        assert_eq!(summary.budget.eps1, 0.5);
        assert_eq!(summary.budget.eps2, 0.5);
        assert_eq!(summary.budget.eps_total, 1.0);
        assert_eq!(summary.budget.delta_total, 2e-6);
    }

    #[test]
    fn aggregate_statistics_are_exact() {
        let agg = Aggregate::from_values(&[3.0, 1.0, 2.0, 10.0]);
        assert_eq!(agg.mean, 4.0);
        assert_eq!(agg.median, 2.5);
        // Sample variance of {1,2,3,10} around 4 is (9+4+1+36)/3.
        assert_eq!(agg.stddev, (50.0_f64 / 3.0).sqrt());
        let single = Aggregate::from_values(&[5.0]);
        assert_eq!((single.mean, single.median, single.stddev), (5.0, 5.0, 0.0));
        let odd = Aggregate::from_values(&[9.0, 1.0, 5.0]);
        assert_eq!(odd.median, 5.0);
    }

    #[test]
    fn experiment_aggregates_match_per_trial_summaries() {
        let cfg = small_cfg();
        let (report, trace0) = run_experiment(&cfg).unwrap();
        assert_eq!(report.trials.len(), 3);
        let mean: f64 =
            report.trials.iter().map(|t| t.avg_regret).sum::<f64>() / 3.0;
        assert_eq!(report.regret.mean, mean);
        // Trial 0's trace is returned, matching a direct run.
        let (direct, summary0) = run_trial(&cfg, 0).unwrap();
        assert_eq!(trace0.price, direct.price);
        assert_eq!(report.trials[0], summary0);
        // Seeds are base_seed + i.
        for (i, t) in report.trials.iter().enumerate() {
            assert_eq!(t.seed, cfg.base_seed + i as u64);
        }
        // Curve checkpoints end at T and average the per-trial curves.
        assert_eq!(report.curve.len(), 400);
        assert_eq!(report.curve.last().unwrap().period, cfg.horizon);
        let last = report.curve.last().unwrap().mean_cum_regret;
        let expect: f64 =
            report.trials.iter().map(|t| t.cum_regret).sum::<f64>() / 3.0;
        assert!((last - expect).abs() < 1e-12);
    }

    #[test]
    fn curve_checkpoints_are_increasing_and_end_at_horizon() {
        for t in [2u64, 3, 511, 512, 513, 100_000] {
            let cp = curve_checkpoints(t);
            assert_eq!(cp.len() as u64, t.min(512));
            assert_eq!(*cp.last().unwrap(), t);
            assert!(cp[0] >= 1);
            assert!(cp.windows(2).all(|w| w[0] < w[1]), "t={t}");
        }
    }

    #[test]
    fn csv_emission_is_stable_and_headers_only_when_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("a.csv");
        let path_b = dir.path().join("b.csv");
        let cfg = ExperimentConfig { horizon: 50, ..small_cfg() };
        let (trace, _) = run_trial(&cfg, 0).unwrap();
        emit_csv(&trace, &path_a).unwrap();
        emit_csv(&trace, &path_b).unwrap();
        let bytes_a = std::fs::read(&path_a).unwrap();
        let bytes_b = std::fs::read(&path_b).unwrap();
        assert_eq!(bytes_a, bytes_b);
        let text = String::from_utf8(bytes_a).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "period,x0,price,demand,instant_regret,cum_regret,surplus"
        );
        assert_eq!(lines.count(), 50);
        // Empty trace → header only.
        let empty = RegretTrace::with_capacity(2, 0);
        let path_e = dir.path().join("e.csv");
        emit_csv(&empty, &path_e).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path_e).unwrap(),
            "period,x0,x1,price,demand,instant_regret,cum_regret,surplus\n"
        );
    }

    #[test]
    fn summary_json_round_trips_and_echoes_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.json");
        let cfg = ExperimentConfig { horizon: 120, trials: 2, ..small_cfg() };
        let (report, _) = run_experiment(&cfg).unwrap();
        emit_summary(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed: ExperimentReport = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, report);
        assert_eq!(parsed.config, cfg);
        // The horizon serializes under the key "T".
        assert!(text.contains("\"T\": 120"));
        assert!(text.contains("\"variant\": \"dp\""));
    }

    #[test]
    fn config_json_defaults_and_variant_spelling() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"T": 5000, "variant": {"input_perturb": {"eps": 0.25}}, "preset": "theorem2"}"#,
        )
        .unwrap();
        assert_eq!(cfg.horizon, 5000);
        assert_eq!(cfg.variant, Variant::InputPerturb { eps: 0.25 });
        assert_eq!(cfg.preset, Preset::Theorem2);
        let round = serde_json::to_string(&Variant::RandomPrice).unwrap();
        assert_eq!(round, "\"random_price\"");
    }

    #[test]
    fn invalid_configs_are_rejected_with_trial_context() {
        let bad = ExperimentConfig { horizon: 1, ..ExperimentConfig::default() };
        let err = run_trial(&bad, 3).unwrap_err();
        assert!(matches!(err, Error::Trial { trial: 3, .. }));
        assert!(err.to_string().starts_with("trial 3:"));
        let bad = ExperimentConfig { d: 1, ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { trials: 0, ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            variant: Variant::InputPerturb { eps: 0.0 },
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn nonprivate_runs_are_noise_free() {
        // With all noise off, a nonprivate trial's refreshes must be
        // reproducible from the policy config alone: rerunning yields the
        // same schedule, and the estimator stream is never touched (its
        // draws do not alter the run).
        let cfg = ExperimentConfig { variant: Variant::Nonprivate, ..small_cfg() };
        let (t1, s1) = run_trial(&cfg, 0).unwrap();
        let (t2, s2) = run_trial(&cfg, 0).unwrap();
        assert_eq!(t1.price, t2.price);
        assert_eq!(s1.refresh_periods, s2.refresh_periods);
        assert!(s1.mle_calls > 0, "expected at least one refresh in 400 periods");
    }
}
