//! End-to-end estimators: the analytic upper bound on the diffusion constant,
//! its Monte Carlo counterpart on the thinned process, the coupling sweep with
//! its log-log slope, and a birth–death Metropolis–Hastings chain over marked
//! configurations for the full finite-horizon diffusion constant.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{sigma2_disjoint, GaussianWorkspace};
use crate::kernels::{self, NuMeasure};
use crate::model::{MemoryDensity, ModelParams};
use crate::pointprocess::{sample_thinned_with, Interval, MarkedConfig, ThinnedIntensity};

/// A point estimate with its standard error and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub value: f64,
    pub stderr: f64,
    pub replicates: usize,
    pub seed: u64,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl EstimateResult {
    pub fn new(value: f64, stderr: f64, replicates: usize, seed: u64, method: &str) -> Self {
        let mut meta = BTreeMap::new();
        meta.insert("method".to_owned(), serde_json::Value::from(method));
        Self { value, stderr, replicates, seed, meta }
    }

    pub fn insert_meta<V: Serialize>(&mut self, key: &str, value: V) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.meta.insert(key.to_owned(), v);
    }

    /// `|a - b| <= k · sqrt(se_a² + se_b²)`.
    pub fn agrees_with(&self, other: &EstimateResult, k: f64) -> bool {
        (self.value - other.value).abs() <= k * self.stderr.hypot(other.stderr)
    }
}

/// Independent stream `index` of the ChaCha generator seeded with `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Batch-means estimate for a correlated series.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches.max(1);
    if size == 0 {
        return mean_and_stderr(xs);
    }
    let means: Vec<f64> = xs.chunks_exact(size).take(batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let (_, se) = mean_and_stderr(&means);
    (mean, se)
}

fn check_bound_inputs(params: &ModelParams, mark: f64) -> Result<()> {
    if !(params.epsilon > 0.0) {
        return Err(invalid("the upper bound needs epsilon > 0"));
    }
    if !(mark > 0.0 && mark.is_finite()) {
        return Err(invalid(format!("C must be positive, got {mark}")));
    }
    Ok(())
}

/// `1 / (1 + α ε p_ε(C) ∫_1^2 r g(r) dr) + 1 / (C² + 1)`.
pub fn theoretical_bound(params: &ModelParams, g: &MemoryDensity, mark: f64) -> Result<f64> {
    check_bound_inputs(params, mark)?;
    let p = kernels::p_eps(mark, params)?;
    let moment = g.partial_moment(1.0, 2.0)?;
    Ok(1.0 / (1.0 + params.alpha * params.epsilon * p * moment) + 1.0 / (mark * mark + 1.0))
}

/// `C = α^{1/(2+d)}`.
pub fn optimal_c(params: &ModelParams) -> f64 {
    params.alpha.powf(1.0 / (2.0 + params.dim()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpperBoundOptions {
    /// Also evaluate the exact functional on the whole marked configuration.
    pub full_config: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundEstimate {
    /// Mean of the closed form on the renewal skeleton.
    pub skeleton: EstimateResult,
    /// Mean dormant fraction of the skeleton.
    pub skeleton_dormant: EstimateResult,
    /// Mean of the exact functional on the full thinned configuration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full: Option<EstimateResult>,
}

/// Skeleton value, skeleton dormant fraction, full-configuration value.
type ReplicateOutcome = (f64, f64, Option<f64>);

/// Monte Carlo estimate of `E[σ²_T]` for the thinned, `C`-marked process.
///
/// Replicate `k` uses stream `k` of `seed`; results are reduced in replicate order.
pub fn upper_bound_mc(
    params: &ModelParams,
    g: &MemoryDensity,
    mark: f64,
    replicates: usize,
    seed: u64,
    options: UpperBoundOptions,
) -> Result<UpperBoundEstimate> {
    check_bound_inputs(params, mark)?;
    if replicates < 10 {
        return Err(invalid(format!("need at least 10 replicates, got {replicates}")));
    }
    let horizon = params.horizon;
    let intensity = ThinnedIntensity::new(params, g, mark)?;
    let per_rep: Vec<ReplicateOutcome> = (0..replicates)
        .into_par_iter()
        .map(|k| -> Result<ReplicateOutcome> {
            let mut rng = stream_rng(seed, k as u64);
            let zeta = sample_thinned_with(&intensity, g, horizon, &mut rng);
            let skeleton = zeta.renewal_skeleton();
            let s = sigma2_disjoint(skeleton.config(), skeleton.marks(), horizon)?;
            let dormant = skeleton.config().dormant_time(horizon) / horizon;
            let full = if options.full_config {
                Some(GaussianWorkspace::from_marked(&zeta, horizon)?.sigma2())
            } else {
                None
            };
            Ok((s, dormant, full))
        })
        .collect::<Result<Vec<_>>>()?;

    let annotate = |r: &mut EstimateResult| {
        r.insert_meta("alpha", params.alpha);
        r.insert_meta("T", horizon);
        r.insert_meta("C", mark);
        r.insert_meta("epsilon", params.epsilon);
        r.insert_meta("gamma", params.gamma);
        r.insert_meta("d", params.d);
    };
    let column = |f: &dyn Fn(&ReplicateOutcome) -> f64| per_rep.iter().map(f).collect::<Vec<_>>();

    let (m, se) = mean_and_stderr(&column(&|r| r.0));
    let mut skeleton = EstimateResult::new(m, se, replicates, seed, "thinned-skeleton");
    annotate(&mut skeleton);
    let (m, se) = mean_and_stderr(&column(&|r| r.1));
    let mut skeleton_dormant = EstimateResult::new(m, se, replicates, seed, "thinned-skeleton-dormant");
    annotate(&mut skeleton_dormant);
    let full = if options.full_config {
        let (m, se) = mean_and_stderr(&column(&|r| r.2.unwrap_or(f64::NAN)));
        let mut r = EstimateResult::new(m, se, replicates, seed, "thinned-full");
        annotate(&mut r);
        Some(r)
    } else {
        None
    };
    Ok(UpperBoundEstimate { skeleton, skeleton_dormant, full })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub bound: f64,
    pub mc: Option<f64>,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln bound` against `ln α` over all rows.
    pub slope: f64,
    /// `-2 / (2 + d)`.
    pub expected_slope: f64,
    pub seed: u64,
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Bound (and optionally Monte Carlo) at `C = α^{1/(2+d)}` for each `α`.
///
/// With `replicates == 0` only the analytic column is computed.
pub fn alpha_sweep(
    template: &ModelParams,
    g: &MemoryDensity,
    alphas: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<SweepTable> {
    if alphas.len() < 3 {
        return Err(invalid(format!("sweep needs at least 3 alphas, got {}", alphas.len())));
    }
    if alphas.windows(2).any(|w| !(w[1] > w[0])) || alphas[0] <= 0.0 {
        return Err(invalid("alphas must be positive and strictly increasing"));
    }
    let mut rows = Vec::with_capacity(alphas.len());
    for (k, &alpha) in alphas.iter().enumerate() {
        let params = template.with_alpha(alpha);
        let c = optimal_c(&params);
        let bound = theoretical_bound(&params, g, c)?;
        let (mc, stderr) = if replicates > 0 {
            let est = upper_bound_mc(&params, g, c, replicates, seed.wrapping_add(k as u64), UpperBoundOptions::default())?;
            (Some(est.skeleton.value), Some(est.skeleton.stderr))
        } else {
            (None, None)
        };
        rows.push(SweepRow { alpha, c, bound, mc, stderr });
    }
    let lx: Vec<f64> = rows.iter().map(|r| r.alpha.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.bound.ln()).collect();
    Ok(SweepTable {
        slope: ls_slope(&lx, &ly),
        expected_slope: -2.0 / (2.0 + template.dim()),
        rows,
        seed,
    })
}

/// Settings of the birth–death Metropolis–Hastings chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub steps: usize,
    pub p_birth: f64,
    pub p_death: f64,
    pub p_mark: f64,
    pub p_shift: f64,
    /// Standard deviation of the log-scale mark walk.
    pub mark_scale: f64,
    /// Standard deviation of the endpoint walk of the shift move.
    pub shift_scale: f64,
    pub batches: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self::with_steps(200_000)
    }
}

impl McmcConfig {
    /// Default moves with a 20% burn-in.
    pub fn with_steps(steps: usize) -> Self {
        Self {
            burn_in: steps / 5,
            steps,
            p_birth: 0.3,
            p_death: 0.3,
            p_mark: 0.25,
            p_shift: 0.15,
            mark_scale: 0.5,
            shift_scale: 0.5,
            batches: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [self.p_birth, self.p_death, self.p_mark, self.p_shift];
        if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("move probabilities must be nonnegative and sum to 1, got {probs:?}")));
        }
        if self.steps <= self.burn_in {
            return Err(invalid(format!("steps ({}) must exceed burn-in ({})", self.steps, self.burn_in)));
        }
        if self.batches < 2 || self.steps - self.burn_in < self.batches {
            return Err(invalid("need at least two batches and one sample per batch"));
        }
        if !(self.mark_scale > 0.0 && self.shift_scale > 0.0) {
            return Err(invalid("proposal scales must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub diffusion: EstimateResult,
    pub dormant_fraction: EstimateResult,
    pub mean_size: f64,
    /// Accepted / proposed for birth, death, mark and shift moves.
    pub acceptance: [f64; 4],
}

struct ChainState {
    config: MarkedConfig,
    log_phi: f64,
    sigma2: f64,
}

fn evaluate(config: MarkedConfig, horizon: f64, d: u32) -> Result<ChainState> {
    if config.is_empty() {
        return Ok(ChainState { config, log_phi: 0.0, sigma2: 1.0 });
    }
    let ws = GaussianWorkspace::from_marked(&config, horizon)?;
    Ok(ChainState { log_phi: -0.5 * f64::from(d) * ws.log_det(), sigma2: ws.sigma2(), config })
}

fn half_cauchy_density(u: f64) -> f64 {
    2.0 / (PI * (1.0 + u * u))
}

fn replace(config: &MarkedConfig, i: usize, new: Option<(Interval, f64)>) -> Result<MarkedConfig> {
    let mut pairs: Vec<(Interval, f64)> = config.iter().map(|(iv, u)| (*iv, u)).collect();
    match new {
        Some(p) if i < pairs.len() => pairs[i] = p,
        Some(p) => pairs.push(p),
        None => {
            pairs.remove(i);
        }
    }
    MarkedConfig::from_pairs(pairs)
}

fn check_ratio(ratio: f64, kind: &str) -> Result<f64> {
    if ratio.is_nan() || ratio < 0.0 {
        return Err(Error::Mcmc(format!("{kind} acceptance ratio is {ratio}")));
    }
    Ok(ratio)
}

/// Runs one chain targeting `∏ α g(τ_i) ρ(u_i) · φ(ξ,u)` relative to the unit
/// Poisson process on `{0 <= s < t <= T} × [0, ∞)`, and averages `σ²_T(ξ,u)` and
/// the dormant fraction over the post-burn-in states.
pub fn run_chain(params: &ModelParams, g: &MemoryDensity, cfg: &McmcConfig, seed: u64) -> Result<ChainSummary> {
    cfg.validate()?;
    if params.epsilon != 0.0 {
        return Err(invalid("the mark chain needs epsilon = 0"));
    }
    if !(params.alpha >= 0.0 && params.alpha.is_finite()) {
        return Err(invalid(format!("alpha must be finite and >= 0, got {}", params.alpha)));
    }
    let horizon = params.horizon;
    let d = params.d;
    let nu = NuMeasure::of(params);
    // μ(△_T) = α ∫_0^T G(r) dr = α (T G(T) - ∫_0^T r g)
    let total_mass = params.alpha * (horizon * g.cdf(horizon) - g.partial_moment(0.0, horizon)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = evaluate(MarkedConfig::default(), horizon, d)?;
    let mut proposed = [0usize; 4];
    let mut accepted = [0usize; 4];
    let keep = cfg.steps - cfg.burn_in;
    let mut sigma_trace = Vec::with_capacity(keep);
    let mut dormant_trace = Vec::with_capacity(keep);
    let mut size_sum = 0.0;
    let mut dormant_cache: Option<f64> = None;

    for step in 0..cfg.steps {
        let pick: f64 = rng.random();
        let n = state.config.len();
        let mut proposal: Option<(usize, MarkedConfig, f64)> = None;
        if pick < cfg.p_birth {
            proposed[0] += 1;
            if total_mass > 0.0 {
                let (s, t) = propose_interval(g, horizon, &mut rng)?;
                let u = (0.5 * PI * rng.random::<f64>()).tan();
                if u > 0.0 && u.is_finite() {
                    let next = replace(&state.config, n, Some((Interval { s, t }, u)))?;
                    let log_factor = (total_mass * nu.density(u) / half_cauchy_density(u)).ln()
                        + (cfg.p_death / (cfg.p_birth * (n as f64 + 1.0))).ln();
                    proposal = Some((0, next, log_factor));
                }
            }
        } else if pick < cfg.p_birth + cfg.p_death {
            proposed[1] += 1;
            if n > 0 {
                let i = rng.random_range(0..n);
                let u = state.config.marks()[i];
                let next = replace(&state.config, i, None)?;
                let log_factor = (half_cauchy_density(u) / (total_mass * nu.density(u))).ln()
                    + (n as f64 * cfg.p_birth / cfg.p_death).ln();
                proposal = Some((1, next, log_factor));
            }
        } else if pick < cfg.p_birth + cfg.p_death + cfg.p_mark {
            proposed[2] += 1;
            if n > 0 {
                let i = rng.random_range(0..n);
                let (iv, u) = (state.config.config().intervals()[i], state.config.marks()[i]);
                let z: f64 = StandardNormal.sample(&mut rng);
                let v = u * (cfg.mark_scale * z).exp();
                if v > 0.0 && v.is_finite() {
                    let next = replace(&state.config, i, Some((iv, v)))?;
                    // log-scale walk: Jacobian v/u on top of ρ(v)/ρ(u) = (v/u)^{γ-1}
                    proposal = Some((2, next, params.gamma * (v / u).ln()));
                }
            }
        } else {
            proposed[3] += 1;
            if n > 0 {
                let i = rng.random_range(0..n);
                let (iv, u) = (state.config.config().intervals()[i], state.config.marks()[i]);
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                let (s, t) = (iv.s + cfg.shift_scale * z1, iv.t + cfg.shift_scale * z2);
                if 0.0 <= s && s < t && t <= horizon {
                    let next = replace(&state.config, i, Some((Interval { s, t }, u)))?;
                    let log_factor = (g.pdf(t - s) / g.pdf(iv.len())).ln();
                    proposal = Some((3, next, log_factor));
                }
            }
        }

        if let Some((kind, next, log_factor)) = proposal {
            let candidate = evaluate(next, horizon, d)?;
            let ratio = check_ratio((log_factor + candidate.log_phi - state.log_phi).exp(), ["birth", "death", "mark", "shift"][kind])?;
            if ratio >= 1.0 || rng.random::<f64>() < ratio {
                accepted[kind] += 1;
                state = candidate;
                dormant_cache = None;
            }
        }

        if step >= cfg.burn_in {
            let dormant = *dormant_cache.get_or_insert_with(|| state.config.config().dormant_time(horizon) / horizon);
            sigma_trace.push(state.sigma2);
            dormant_trace.push(dormant);
            size_sum += state.config.len() as f64;
        }
    }

    let annotate = |r: &mut EstimateResult| {
        r.insert_meta("alpha", params.alpha);
        r.insert_meta("T", horizon);
        r.insert_meta("gamma", params.gamma);
        r.insert_meta("d", d);
        r.insert_meta("steps", cfg.steps);
        r.insert_meta("burn_in", cfg.burn_in);
        r.insert_meta("batches", cfg.batches);
    };
    let (m, se) = batch_means(&sigma_trace, cfg.batches);
    let mut diffusion = EstimateResult::new(m, se, keep, seed, "birth-death-mcmc");
    annotate(&mut diffusion);
    let (m, se) = batch_means(&dormant_trace, cfg.batches);
    let mut dormant_fraction = EstimateResult::new(m, se, keep, seed, "birth-death-mcmc-dormant");
    annotate(&mut dormant_fraction);
    let rate = |k: usize| if proposed[k] == 0 { 0.0 } else { accepted[k] as f64 / proposed[k] as f64 };
    Ok(ChainSummary {
        diffusion,
        dormant_fraction,
        mean_size: size_sum / keep as f64,
        acceptance: [rate(0), rate(1), rate(2), rate(3)],
    })
}

/// Draws `(s, t)` from `μ_{α,T} / μ(△_T)`: `s` uniform on `[0, T]`, `t = s + τ` with
/// `τ ~ g`, retried until `t <= T`.
fn propose_interval<R: Rng + ?Sized>(g: &MemoryDensity, horizon: f64, rng: &mut R) -> Result<(f64, f64)> {
    for _ in 0..1_000_000 {
        let s = horizon * rng.random::<f64>();
        let t = s + g.sample(rng);
        if t <= horizon && t > s {
            return Ok((s, t));
        }
    }
    Err(Error::Mcmc("could not place an interval inside the horizon".into()))
}

/// Chain average of `σ²_T(ξ,u)`.
pub fn mcmc_diffusion(params: &ModelParams, g: &MemoryDensity, cfg: &McmcConfig, seed: u64) -> Result<EstimateResult> {
    Ok(run_chain(params, g, cfg, seed)?.diffusion)
}

/// Chain average of the dormant fraction `D_T(ξ) / T`.
pub fn dormant_fraction_mcmc(params: &ModelParams, g: &MemoryDensity, cfg: &McmcConfig, seed: u64) -> Result<EstimateResult> {
    Ok(run_chain(params, g, cfg, seed)?.dormant_fraction)
}

/// Independent chains in parallel, one stream-derived seed each, in chain order.
pub fn run_chains(
    params: &ModelParams,
    g: &MemoryDensity,
    cfg: &McmcConfig,
    seed: u64,
    chains: usize,
) -> Result<Vec<ChainSummary>> {
    (0..chains)
        .into_par_iter()
        .map(|k| {
            let chain_seed: u64 = stream_rng(seed, k as u64).random();
            run_chain(params, g, cfg, chain_seed)
        })
        .collect()
}
