//! Interval configurations, the M/G/∞ sampler of the interval Poisson
//! process, thinning and marking, and dormant/renewal statistics.

use std::io;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::de::Error as _;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::kernels;
use crate::model::{MemoryDensity, ModelParams};

/// A time interval `[s, t]` with `s < t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct Interval {
    pub s: f64,
    pub t: f64,
}

impl Interval {
    /// Panics unless `s < t` and both are finite.
    pub fn new(s: f64, t: f64) -> Self {
        Self::try_new(s, t).expect("invalid interval")
    }

    pub fn try_new(s: f64, t: f64) -> Result<Self> {
        if s.is_finite() && t.is_finite() && s < t {
            Ok(Self { s, t })
        } else {
            Err(invalid(format!("interval needs finite s < t, got ({s}, {t})")))
        }
    }

    pub fn len(&self) -> f64 {
        self.t - self.s
    }

    /// Length of the intersection with `[lo, hi]`.
    pub fn overlap_with(&self, lo: f64, hi: f64) -> f64 {
        (self.t.min(hi) - self.s.max(lo)).max(0.0)
    }

    pub fn overlap(&self, other: &Interval) -> f64 {
        self.overlap_with(other.s, other.t)
    }

    pub fn contains(&self, r: f64) -> bool {
        self.s <= r && r <= self.t
    }
}

impl TryFrom<(f64, f64)> for Interval {
    type Error = Error;
    fn try_from((s, t): (f64, f64)) -> Result<Self> {
        Interval::try_new(s, t)
    }
}

impl From<Interval> for (f64, f64) {
    fn from(iv: Interval) -> Self {
        (iv.s, iv.t)
    }
}

fn sort_key(a: &Interval, b: &Interval) -> std::cmp::Ordering {
    a.s.total_cmp(&b.s).then(a.t.total_cmp(&b.t))
}

/// A finite collection of intervals, kept sorted by `(s, t)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct IntervalConfig {
    intervals: Vec<Interval>,
}

impl<'de> Deserialize<'de> for IntervalConfig {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        Ok(Self::new(Vec::<Interval>::deserialize(de)?))
    }
}

impl IntervalConfig {
    /// Sorts by `(s, t)`; the sort is stable so exact ties keep insertion order.
    pub fn new(mut intervals: Vec<Interval>) -> Self {
        intervals.sort_by(sort_key);
        Self { intervals }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self::new(pairs.iter().map(|&(s, t)| Interval::new(s, t)).collect())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Interval> {
        self.intervals.iter()
    }

    pub fn lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.intervals.iter().map(Interval::len)
    }

    /// Number of intervals with `s <= r <= t`.
    pub fn count_covering(&self, r: f64) -> usize {
        self.intervals.iter().filter(|iv| iv.contains(r)).count()
    }

    /// Measure of `[0, horizon]` covered by at least one interval.
    pub fn active_time(&self, horizon: f64) -> f64 {
        // intervals are sorted by s, so one sweep merges the union
        let mut covered = 0.0;
        let mut current: Option<(f64, f64)> = None;
        for iv in &self.intervals {
            let (s, t) = (iv.s.max(0.0), iv.t.min(horizon));
            if s >= t {
                continue;
            }
            current = match current {
                Some((lo, hi)) if s <= hi => Some((lo, hi.max(t))),
                Some((lo, hi)) => {
                    covered += hi - lo;
                    Some((s, t))
                }
                None => Some((s, t)),
            };
        }
        if let Some((lo, hi)) = current {
            covered += hi - lo;
        }
        covered
    }

    /// Total length of the dormant periods in `[0, horizon]`.
    pub fn dormant_time(&self, horizon: f64) -> f64 {
        (horizon - self.active_time(horizon)).max(0.0)
    }

    /// Indices of the greedy renewal skeleton: the first interval, then
    /// repeatedly the first interval arriving strictly after the last departure.
    pub fn renewal_indices(&self) -> Vec<usize> {
        let mut picked = Vec::new();
        let mut last_departure = f64::NEG_INFINITY;
        for (j, iv) in self.intervals.iter().enumerate() {
            if iv.s > last_departure {
                picked.push(j);
                last_departure = iv.t;
            }
        }
        picked
    }

    pub fn renewal_skeleton(&self) -> IntervalConfig {
        IntervalConfig {
            intervals: self.renewal_indices().into_iter().map(|j| self.intervals[j]).collect(),
        }
    }

    /// True when no two intervals overlap in positive length.
    pub fn is_disjoint(&self) -> bool {
        self.intervals.windows(2).all(|w| w[1].s >= w[0].t)
    }

    pub fn to_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "t", "u"])?;
        for iv in &self.intervals {
            w.write_record([iv.s.to_string(), iv.t.to_string(), String::new()])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl<'a> IntoIterator for &'a IntervalConfig {
    type Item = &'a Interval;
    type IntoIter = std::slice::Iter<'a, Interval>;
    fn into_iter(self) -> Self::IntoIter {
        self.intervals.iter()
    }
}

/// Intervals with nonnegative marks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarkedConfig {
    config: IntervalConfig,
    marks: Vec<f64>,
}

impl MarkedConfig {
    /// `marks[i]` belongs to `config.intervals()[i]`.
    pub fn new(config: IntervalConfig, marks: Vec<f64>) -> Result<Self> {
        if config.len() != marks.len() {
            return Err(invalid(format!(
                "{} intervals but {} marks",
                config.len(),
                marks.len()
            )));
        }
        if let Some(u) = marks.iter().find(|u| !(u.is_finite() && **u >= 0.0)) {
            return Err(invalid(format!("marks must be finite and nonnegative, got {u}")));
        }
        Ok(Self { config, marks })
    }

    /// Builds from unsorted `(interval, mark)` pairs, sorting them together.
    pub fn from_pairs(mut pairs: Vec<(Interval, f64)>) -> Result<Self> {
        pairs.sort_by(|a, b| sort_key(&a.0, &b.0));
        let (intervals, marks): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        Self::new(IntervalConfig { intervals }, marks)
    }

    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        let pairs = triples
            .iter()
            .map(|&(s, t, u)| Interval::try_new(s, t).map(|iv| (iv, u)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(pairs)
    }

    pub fn config(&self) -> &IntervalConfig {
        &self.config
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Interval, f64)> + '_ {
        self.config.iter().zip(self.marks.iter().copied())
    }

    /// Drops the intervals whose mark is zero; they do not change the Gaussian weight.
    pub fn without_zero_marks(&self) -> MarkedConfig {
        let (intervals, marks) = self.iter().filter(|(_, u)| *u > 0.0).map(|(iv, u)| (*iv, u)).unzip();
        MarkedConfig { config: IntervalConfig { intervals }, marks }
    }

    pub fn renewal_skeleton(&self) -> MarkedConfig {
        let idx = self.config.renewal_indices();
        MarkedConfig {
            config: IntervalConfig { intervals: idx.iter().map(|&j| self.config.intervals[j]).collect() },
            marks: idx.iter().map(|&j| self.marks[j]).collect(),
        }
    }

    pub fn to_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "t", "u"])?;
        for (iv, u) in self.iter() {
            w.write_record([iv.s.to_string(), iv.t.to_string(), u.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_csv<R: io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut pairs = Vec::new();
        for rec in r.deserialize::<(f64, f64, f64)>() {
            let (s, t, u) = rec?;
            pairs.push((Interval::try_new(s, t)?, u));
        }
        Self::from_pairs(pairs)
    }
}

impl Serialize for MarkedConfig {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = ser.serialize_seq(Some(self.len()))?;
        for (iv, u) in self.iter() {
            seq.serialize_element(&(iv.s, iv.t, u))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for MarkedConfig {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let triples = Vec::<(f64, f64, f64)>::deserialize(de)?;
        MarkedConfig::from_triples(&triples).map_err(D::Error::custom)
    }
}

fn check_sampler_params(params: &ModelParams) -> Result<()> {
    if !(params.alpha.is_finite() && params.alpha >= 0.0) {
        return Err(invalid(format!("alpha must be finite and >= 0, got {}", params.alpha)));
    }
    if !(params.horizon.is_finite() && params.horizon > 0.0) {
        return Err(invalid(format!("horizon must be positive, got {}", params.horizon)));
    }
    Ok(())
}

/// Samples the interval Poisson process with intensity `α g(t-s) 1{0 <= s < t <= T}`
/// as the customers of an M/G/∞ queue that both arrive and depart before `T`.
pub fn sample_gamma<R: Rng + ?Sized>(params: &ModelParams, g: &MemoryDensity, rng: &mut R) -> Result<IntervalConfig> {
    check_sampler_params(params)?;
    let horizon = params.horizon;
    let mut intervals = Vec::new();
    if params.alpha == 0.0 {
        return Ok(IntervalConfig::empty());
    }
    let mut s = 0.0;
    loop {
        let gap: f64 = Exp1.sample(rng);
        s += gap / params.alpha;
        if s >= horizon {
            break;
        }
        let t = s + g.sample(rng);
        if t <= horizon && t > s {
            intervals.push(Interval { s, t });
        }
    }
    Ok(IntervalConfig::new(intervals))
}

/// Arrival rate and length band of the thinned, `C`-marked process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinnedIntensity {
    /// Intensity mass per unit time, `α ε p_ε(C) ∫_1^2 g`.
    pub rate: f64,
    /// Mean kept length, `∫_1^2 r g / ∫_1^2 g`.
    pub mean_length: f64,
    pub mark: f64,
}

impl ThinnedIntensity {
    pub fn new(params: &ModelParams, g: &MemoryDensity, mark: f64) -> Result<Self> {
        if !(params.epsilon > 0.0) {
            return Err(invalid("thinned process needs epsilon > 0 (intensity vanishes at epsilon = 0)"));
        }
        if !(mark > 0.0 && mark.is_finite()) {
            return Err(invalid(format!("mark C must be positive, got {mark}")));
        }
        let p = kernels::p_eps(mark, params)?;
        let band = g.mass(1.0, 2.0);
        let mean_length = if band > 0.0 { g.partial_moment(1.0, 2.0)? / band } else { 1.5 };
        Ok(Self { rate: params.alpha * params.epsilon * p * band, mean_length, mark })
    }

    /// Long-run dormant fraction of the renewal skeleton, `1 / (1 + rate · mean_length)`.
    pub fn renewal_dormant_fraction(&self) -> f64 {
        1.0 / (1.0 + self.rate * self.mean_length)
    }

    /// Long-run skeleton renewals per unit time, `1 / (1/rate + mean_length)`.
    pub fn renewal_rate(&self) -> f64 {
        if self.rate == 0.0 {
            0.0
        } else {
            1.0 / (1.0 / self.rate + self.mean_length)
        }
    }
}

/// Samples the Poisson process with intensity `α ε p_ε(C) g(t-s) 1{1 <= t-s <= 2}`
/// on `{0 < s < t < T}`, every interval carrying the mark `C`.
pub fn sample_thinned_marked<R: Rng + ?Sized>(
    params: &ModelParams,
    g: &MemoryDensity,
    mark: f64,
    rng: &mut R,
) -> Result<MarkedConfig> {
    check_sampler_params(params)?;
    let intensity = ThinnedIntensity::new(params, g, mark)?;
    Ok(sample_thinned_with(&intensity, g, params.horizon, rng))
}

/// Same as [`sample_thinned_marked`] with a precomputed intensity.
pub fn sample_thinned_with<R: Rng + ?Sized>(
    intensity: &ThinnedIntensity,
    g: &MemoryDensity,
    horizon: f64,
    rng: &mut R,
) -> MarkedConfig {
    let mut intervals = Vec::new();
    if intensity.rate > 0.0 {
        let mut s = 0.0;
        loop {
            let gap: f64 = Exp1.sample(rng);
            s += gap / intensity.rate;
            if s >= horizon {
                break;
            }
            let t = s + g.sample_between(1.0, 2.0, rng);
            if t < horizon {
                intervals.push(Interval { s, t });
            }
        }
    }
    let marks = vec![intensity.mark; intervals.len()];
    MarkedConfig { config: IntervalConfig::new(intervals), marks }
}

/// Marks each interval independently: `C` with probability `p_ε(C)` when its
/// length is at most 2, otherwise 0.
pub fn independent_marking<R: Rng + ?Sized>(
    xi: &IntervalConfig,
    params: &ModelParams,
    mark: f64,
    rng: &mut R,
) -> Result<MarkedConfig> {
    if !(mark > 0.0) {
        return Err(invalid(format!("mark C must be positive, got {mark}")));
    }
    let p = kernels::p_eps(mark, params)?;
    Ok(mark_with_probability(xi, p, mark, rng))
}

pub fn mark_with_probability<R: Rng + ?Sized>(xi: &IntervalConfig, p: f64, mark: f64, rng: &mut R) -> MarkedConfig {
    let marks = xi
        .iter()
        .map(|iv| {
            let hit = iv.len() <= 2.0 && rng.random::<f64>() < p;
            if hit {
                mark
            } else {
                0.0
            }
        })
        .collect();
    MarkedConfig { config: xi.clone(), marks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(pairs: &[(f64, f64)]) -> IntervalConfig {
        IntervalConfig::from_pairs(pairs)
    }

    #[test]
    fn covering_counts() {
        let xi = cfg(&[(1.0, 2.0), (1.5, 4.0)]);
        assert_eq!(xi.count_covering(1.7), 2);
        assert_eq!(IntervalConfig::empty().count_covering(3.0), 0);
        assert_eq!(cfg(&[(1.0, 2.0)]).count_covering(2.0), 1);
        assert_eq!(cfg(&[(1.0, 2.0)]).count_covering(1.0), 1);
    }

    #[test]
    fn dormant_examples() {
        assert_eq!(cfg(&[(1.0, 2.0), (1.5, 4.0)]).dormant_time(5.0), 2.0);
        assert_eq!(IntervalConfig::empty().dormant_time(5.0), 5.0);
        assert_eq!(cfg(&[(0.0, 5.0)]).dormant_time(5.0), 0.0);
        // parts beyond the horizon are ignored
        assert_eq!(cfg(&[(4.0, 9.0)]).dormant_time(5.0), 4.0);
    }

    #[test]
    fn skeleton_examples() {
        let xi = cfg(&[(1.0, 2.0), (1.5, 4.0), (5.0, 6.0)]);
        assert_eq!(xi.renewal_skeleton(), cfg(&[(1.0, 2.0), (5.0, 6.0)]));
        let disjoint = cfg(&[(0.0, 1.0), (2.0, 3.0), (3.5, 4.0)]);
        assert_eq!(disjoint.renewal_skeleton(), disjoint);
        assert_eq!(cfg(&[(0.0, 3.0), (1.0, 2.0), (2.5, 5.0)]).renewal_skeleton(), cfg(&[(0.0, 3.0)]));
        // arrival exactly at the departure is not strictly after it
        assert_eq!(cfg(&[(0.0, 1.0), (1.0, 2.0)]).renewal_skeleton(), cfg(&[(0.0, 1.0)]));
    }

    #[test]
    fn sorting_is_stable_on_ties() {
        let xi = IntervalConfig::new(vec![Interval::new(2.0, 3.0), Interval::new(1.0, 4.0), Interval::new(1.0, 2.0)]);
        assert_eq!(xi, cfg(&[(1.0, 2.0), (1.0, 4.0), (2.0, 3.0)]));
    }

    #[test]
    fn zero_alpha_gives_empty_config() {
        let params = ModelParams::frohlich(0.0, 0.0, 10.0);
        let xi = sample_gamma(&params, &MemoryDensity::exp1(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(xi.is_empty());
    }

    #[test]
    fn gamma_sampler_mean_count() {
        let params = ModelParams::frohlich(2.0, 0.0, 3.0);
        let g = MemoryDensity::exp1();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let reps = 20_000;
        let counts: Vec<f64> = (0..reps)
            .map(|_| {
                let xi = sample_gamma(&params, &g, &mut rng).unwrap();
                for iv in &xi {
                    assert!(0.0 <= iv.s && iv.s < iv.t && iv.t <= 3.0);
                }
                xi.len() as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let expected = 2.0 * (3.0 - 1.0 + (-3f64).exp());
        // Poisson: variance = mean
        let se = (expected / reps as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} expected {expected}");
    }

    #[test]
    fn thinned_needs_positive_epsilon() {
        let params = ModelParams::frohlich(10.0, 0.0, 10.0);
        let err = sample_thinned_marked(&params, &MemoryDensity::exp1(), 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn thinned_lengths_and_marks() {
        let params = ModelParams::frohlich(1000.0, 1.0, 200.0);
        let xi = sample_thinned_marked(&params, &MemoryDensity::exp1(), 1.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(!xi.is_empty());
        for (iv, u) in xi.iter() {
            assert!((1.0..=2.0).contains(&iv.len()));
            assert!(iv.s > 0.0 && iv.t < 200.0);
            assert_eq!(u, 1.0);
        }
    }

    #[test]
    fn thinned_vanishes_for_huge_marks() {
        let params = ModelParams::frohlich(100.0, 1.0, 100.0);
        let intensity = ThinnedIntensity::new(&params, &MemoryDensity::exp1(), 1e8).unwrap();
        assert!(intensity.rate < 1e-20);
        let xi = sample_thinned_with(&intensity, &MemoryDensity::exp1(), 100.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert!(xi.is_empty());
    }

    #[test]
    fn thinned_mean_count_matches_intensity_mass() {
        let params = ModelParams::frohlich(100.0, 1.0, 1000.0);
        let g = MemoryDensity::exp1();
        // independent oracle: midpoint double integral of the intensity over {0<s<t<T}
        let p = 2f64.powf(-0.5) / 5f64.powf(1.5) * (1.0 - 1.0 / (1.0 / std::f64::consts::PI.sqrt() + 1.0));
        let n = 20_000;
        let h = 1.0 / n as f64;
        let mut inner = 0.0;
        for k in 0..n {
            let tau = 1.0 + (k as f64 + 0.5) * h;
            inner += (-tau).exp() * (1000.0 - tau) * h;
        }
        let expected = 100.0 * p * inner;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let reps = 400;
        let mean = (0..reps)
            .map(|_| sample_thinned_marked(&params, &g, 1.0, &mut rng).unwrap().len() as f64)
            .sum::<f64>()
            / reps as f64;
        let se = (expected / reps as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} expected {expected}");
    }

    #[test]
    fn marking_respects_length_branch() {
        let params = ModelParams::frohlich(1.0, 0.0, 10.0);
        let long = cfg(&[(0.0, 2.5), (1.0, 4.0), (3.0, 9.0)]);
        let marked = independent_marking(&long, &params, 1.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert!(marked.marks().iter().all(|&u| u == 0.0));
        let short = cfg(&[(0.0, 1.0), (1.0, 2.0)]);
        let marked = mark_with_probability(&short, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(4));
        assert!(marked.marks().iter().all(|&u| u == 0.0));
    }

    #[test]
    fn marking_frequency() {
        let params = ModelParams::frohlich(1.0, 0.0, 10.0);
        let p = kernels::p_eps(1.0, &params).unwrap();
        let n = 100_000;
        let xi = IntervalConfig::new((0..n).map(|k| Interval::new(k as f64, k as f64 + 1.5)).collect());
        let marked = independent_marking(&xi, &params, 1.0, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let freq = marked.marks().iter().filter(|&&u| u == 1.0).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "freq {freq} vs {p}");
    }

    #[test]
    fn json_and_csv_formats() {
        let xi = cfg(&[(0.0, 1.5), (1.0, 2.0)]);
        assert_eq!(serde_json::to_string(&xi).unwrap(), "[[0.0,1.5],[1.0,2.0]]");
        let back: IntervalConfig = serde_json::from_str("[[1.0,2.0],[0.0,1.5]]").unwrap();
        assert_eq!(back, xi);
        assert!(serde_json::from_str::<IntervalConfig>("[[2.0,1.0]]").is_err());

        let marked = MarkedConfig::new(xi.clone(), vec![0.5, 0.0]).unwrap();
        assert_eq!(serde_json::to_string(&marked).unwrap(), "[[0.0,1.5,0.5],[1.0,2.0,0.0]]");
        let mut buf = Vec::new();
        marked.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s,t,u\n0,1.5,0.5\n"));
        assert_eq!(MarkedConfig::from_csv(text.as_bytes()).unwrap(), marked);
        assert!(MarkedConfig::new(xi, vec![1.0]).is_err());
    }

    fn arb_config() -> impl Strategy<Value = IntervalConfig> {
        prop::collection::vec((0.0..20.0f64, 0.01..6.0f64), 0..25)
            .prop_map(|v| IntervalConfig::new(v.into_iter().map(|(s, l)| Interval::new(s, s + l)).collect()))
    }

    proptest! {
        #[test]
        fn skeleton_is_disjoint_subsequence(xi in arb_config()) {
            let idx = xi.renewal_indices();
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            let sk = xi.renewal_skeleton();
            prop_assert!(sk.intervals().windows(2).all(|w| w[1].s > w[0].t));
            if !xi.is_empty() {
                prop_assert_eq!(idx[0], 0);
            }
        }

        #[test]
        fn dormant_plus_active_is_horizon(xi in arb_config(), horizon in 0.5..30.0f64) {
            let total = xi.dormant_time(horizon) + xi.active_time(horizon);
            prop_assert!((total - horizon).abs() <= 1e-9);
        }

        #[test]
        fn dormant_matches_fine_grid(xi in arb_config()) {
            let horizon = 25.0;
            let n = 50_000;
            let h = horizon / n as f64;
            let grid = (0..n).filter(|k| xi.count_covering((*k as f64 + 0.5) * h) == 0).count() as f64 * h;
            // every endpoint can misplace at most one cell
            let slack = 2.0 * h * (xi.len() as f64 + 1.0);
            prop_assert!((xi.dormant_time(horizon) - grid).abs() <= slack);
        }
    }

    #[test]
    fn renewal_rate_formula() {
        let params = ModelParams::frohlich(100.0, 1.0, 1.0);
        let it = ThinnedIntensity::new(&params, &MemoryDensity::exp1(), 1.0).unwrap();
        assert_relative_eq!(it.rate, 0.530_482_550_971_803_4, max_relative = 1e-8);
        assert_relative_eq!(it.mean_length, 1.418_023_293_130_673_6, max_relative = 1e-12);
        assert_relative_eq!(it.renewal_dormant_fraction(), 0.570_699_180_738_594_8, max_relative = 1e-8);
    }
}
