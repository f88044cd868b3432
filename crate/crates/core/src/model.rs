//! Model parameters and the memory density `g` of the pair interaction.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quad;

/// Parameters of the path measure with potential `1/|x|^γ + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Coupling constant.
    pub alpha: f64,
    /// Exponent of the potential, in `[1, 2)`.
    pub gamma: f64,
    /// Spatial dimension.
    pub d: u32,
    /// Constant shift of the potential.
    pub epsilon: f64,
    /// Time horizon.
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, gamma: f64, d: u32, epsilon: f64, horizon: f64) -> Self {
        Self { alpha, gamma, d, epsilon, horizon }
    }

    /// The Fröhlich case: `γ = 1`, `d = 3`.
    pub fn frohlich(alpha: f64, epsilon: f64, horizon: f64) -> Self {
        Self::new(alpha, 1.0, 3, epsilon, horizon)
    }

    pub fn dim(&self) -> f64 {
        f64::from(self.d)
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn with_horizon(self, horizon: f64) -> Self {
        Self { horizon, ..self }
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }

    /// Checks every parameter constraint and the density `g`.
    pub fn validate(&self, g: &MemoryDensity) -> ValidationReport {
        let mut report = ValidationReport::default();
        report.push(
            "alpha",
            self.alpha.is_finite() && self.alpha > 0.0,
            format!("alpha must be positive, got {}", self.alpha),
        );
        report.push(
            "gamma",
            (1.0..2.0).contains(&self.gamma),
            format!("gamma out of range [1, 2): {}", self.gamma),
        );
        report.push("d", self.d >= 2, format!("dimension must be at least 2, got {}", self.d));
        report.push(
            "gamma<d",
            self.gamma < self.dim(),
            format!("gamma {} must be below the dimension {}", self.gamma, self.d),
        );
        report.push(
            "epsilon",
            self.epsilon.is_finite() && self.epsilon >= 0.0,
            format!("epsilon must be nonnegative, got {}", self.epsilon),
        );
        report.push(
            "T",
            self.horizon.is_finite() && self.horizon > 0.0,
            format!("horizon T must be positive, got {}", self.horizon),
        );
        g.validate_into(&mut report);
        report
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(ValidationCheck { name, passed, detail });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Converts a failing report into an argument error naming the first violation.
    pub fn into_result(self) -> Result<()> {
        match self.failures().next() {
            None => Ok(()),
            Some(c) => Err(invalid(c.detail.clone())),
        }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied density given by its pdf, cdf, inverse cdf and first moment.
#[derive(Clone)]
pub struct CustomDensity {
    pub name: String,
    pdf: ScalarFn,
    cdf: ScalarFn,
    inverse_cdf: ScalarFn,
    mean: f64,
}

impl CustomDensity {
    pub fn new(
        name: impl Into<String>,
        pdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse_cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        mean: f64,
    ) -> Self {
        Self {
            name: name.into(),
            pdf: Arc::new(pdf),
            cdf: Arc::new(cdf),
            inverse_cdf: Arc::new(inverse_cdf),
            mean,
        }
    }
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("name", &self.name)
            .field("mean", &self.mean)
            .finish_non_exhaustive()
    }
}

/// Probability density of the interval lengths.
#[derive(Debug, Clone)]
pub enum MemoryDensity {
    Exponential { rate: f64 },
    Custom(CustomDensity),
}

const ABS_TOL: f64 = 1e-12;
const REL_TOL: f64 = 1e-10;

impl MemoryDensity {
    /// `g(t) = e^{-t}`, the Fröhlich memory kernel.
    pub fn exp1() -> Self {
        MemoryDensity::Exponential { rate: 1.0 }
    }

    pub fn pdf(&self, t: f64) -> f64 {
        match self {
            MemoryDensity::Exponential { rate } => {
                if t < 0.0 {
                    0.0
                } else {
                    rate * (-rate * t).exp()
                }
            }
            MemoryDensity::Custom(c) => (c.pdf)(t),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            MemoryDensity::Exponential { rate } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -(-rate * t).exp_m1()
                }
            }
            MemoryDensity::Custom(c) => (c.cdf)(t),
        }
    }

    pub fn inverse_cdf(&self, p: f64) -> f64 {
        match self {
            MemoryDensity::Exponential { rate } => -(-p).ln_1p() / rate,
            MemoryDensity::Custom(c) => (c.inverse_cdf)(p),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            MemoryDensity::Exponential { rate } => 1.0 / rate,
            MemoryDensity::Custom(c) => c.mean,
        }
    }

    /// Probability mass `∫_a^b g`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        match self {
            MemoryDensity::Exponential { rate } => {
                let a = a.max(0.0);
                if b <= a {
                    0.0
                } else {
                    (-rate * a).exp() - (-rate * b).exp()
                }
            }
            MemoryDensity::Custom(_) => self.cdf(b) - self.cdf(a),
        }
    }

    /// Partial first moment `∫_a^b r g(r) dr`; `b` may be infinite.
    pub fn partial_moment(&self, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0 && a <= b) {
            return Err(invalid(format!("partial moment needs 0 <= a <= b, got a={a}, b={b}")));
        }
        if a == b {
            return Ok(0.0);
        }
        Ok(match self {
            MemoryDensity::Exponential { rate } => {
                // antiderivative -(r + 1/λ) e^{-λ r}
                let tail = |r: f64| {
                    if r.is_infinite() {
                        0.0
                    } else {
                        (r + 1.0 / rate) * (-rate * r).exp()
                    }
                };
                tail(a) - tail(b)
            }
            MemoryDensity::Custom(_) => {
                quad::adaptive_to(|r| r * self.pdf(r), a, b, ABS_TOL, REL_TOL).value
            }
        })
    }

    /// Draws one length by inversion of the cdf.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.inverse_cdf(u)
    }

    /// Draws from `g` conditioned on `[lo, hi]`, again by inversion.
    pub fn sample_between<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let (plo, phi) = (self.cdf(lo), self.cdf(hi));
        self.inverse_cdf(plo + u * (phi - plo)).clamp(lo, hi)
    }

    fn validate_into(&self, report: &mut ValidationReport) {
        match self {
            MemoryDensity::Exponential { rate } => {
                let ok = rate.is_finite() && *rate > 0.0;
                report.push("g", ok, format!("exponential rate must be positive, got {rate}"));
                // (1+t) λ e^{-λt} is bounded for every λ > 0
                report.push("g:sup", ok, "sup (1+t) g(t) is infinite".into());
            }
            MemoryDensity::Custom(c) => {
                let total = quad::adaptive_to(|t| self.pdf(t), 0.0, f64::INFINITY, 1e-10, 1e-8);
                report.push(
                    "g:normalized",
                    (total.value - 1.0).abs() < 1e-6,
                    format!("density {} integrates to {}", c.name, total.value),
                );
                let m = quad::adaptive_to(|t| t * self.pdf(t), 0.0, f64::INFINITY, 1e-10, 1e-8);
                report.push(
                    "g:mean",
                    c.mean.is_finite() && (m.value - c.mean).abs() <= 1e-6 * c.mean.abs().max(1.0),
                    format!("first moment {} does not match declared mean {}", m.value, c.mean),
                );
                let mut sup = 0.0f64;
                let mut finite = true;
                for k in 0..=10_000 {
                    let t = k as f64 * 0.01;
                    let v = (1.0 + t) * self.pdf(t);
                    if !v.is_finite() || v < 0.0 {
                        finite = false;
                    }
                    sup = sup.max(v);
                }
                report.push(
                    "g:sup",
                    finite,
                    format!("(1+t) g(t) is not finite and nonnegative on the grid [0, 100] (sup {sup})"),
                );
            }
        }
    }
}

/// JSON form of the memory density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Exponential {
        #[serde(default = "unit_rate")]
        rate: f64,
    },
}

fn unit_rate() -> f64 {
    1.0
}

impl Default for DensitySpec {
    fn default() -> Self {
        DensitySpec::Exponential { rate: 1.0 }
    }
}

impl From<&DensitySpec> for MemoryDensity {
    fn from(spec: &DensitySpec) -> Self {
        match *spec {
            DensitySpec::Exponential { rate } => MemoryDensity::Exponential { rate },
        }
    }
}

/// Model configuration file: `{alpha, gamma, d, epsilon, T, g: {kind, ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub params: ModelParams,
    #[serde(default)]
    pub g: DensitySpec,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn density(&self) -> MemoryDensity {
        MemoryDensity::from(&self.g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fails_with(params: ModelParams, needle: &str) -> bool {
        let report = params.validate(&MemoryDensity::exp1());
        !report.passed() && report.failures().any(|c| c.detail.contains(needle))
    }

    #[test]
    fn frohlich_defaults_pass() {
        let report = ModelParams::new(1.0, 1.0, 3, 0.0, 10.0).validate(&MemoryDensity::exp1());
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn gamma_two_is_excluded() {
        assert!(fails_with(ModelParams::new(1.0, 2.0, 3, 0.0, 10.0), "gamma out of range"));
        assert!(fails_with(ModelParams::new(1.0, 0.5, 3, 0.0, 10.0), "gamma out of range"));
    }

    #[test]
    fn planar_case_passes() {
        let report = ModelParams::new(1.0, 1.5, 2, 0.0, 10.0).validate(&MemoryDensity::exp1());
        assert!(report.passed());
    }

    #[test]
    fn other_violations_are_reported() {
        assert!(fails_with(ModelParams::new(0.0, 1.0, 3, 0.0, 10.0), "alpha"));
        assert!(fails_with(ModelParams::new(1.0, 1.0, 1, 0.0, 10.0), "dimension"));
        assert!(fails_with(ModelParams::new(1.0, 1.0, 3, -1.0, 10.0), "epsilon"));
        assert!(fails_with(ModelParams::new(1.0, 1.0, 3, 0.0, 0.0), "horizon"));
        let err = ModelParams::new(1.0, 2.0, 3, 0.0, 1.0)
            .validate(&MemoryDensity::exp1())
            .into_result()
            .unwrap_err();
        assert!(err.to_string().contains("gamma out of range"));
    }

    #[test]
    fn partial_moment_closed_form() {
        let g = MemoryDensity::exp1();
        let e = std::f64::consts::E;
        let v = g.partial_moment(1.0, 2.0).unwrap();
        assert_relative_eq!(v, 2.0 / e - 3.0 / (e * e), max_relative = 1e-14);
        assert_relative_eq!(v, 0.329_753_032_633_046_6, max_relative = 1e-12);
        assert_eq!(g.partial_moment(1.5, 1.5).unwrap(), 0.0);
        assert_relative_eq!(g.partial_moment(0.0, f64::INFINITY).unwrap(), 1.0, max_relative = 1e-14);
        assert!(g.partial_moment(2.0, 1.0).is_err());
        assert!(g.partial_moment(-1.0, 1.0).is_err());
    }

    fn custom_exp() -> MemoryDensity {
        MemoryDensity::Custom(CustomDensity::new(
            "exp-custom",
            |t| if t < 0.0 { 0.0 } else { (-t).exp() },
            |t| if t < 0.0 { 0.0 } else { 1.0 - (-t).exp() },
            |p| -(1.0 - p).ln(),
            1.0,
        ))
    }

    #[test]
    fn custom_density_uses_quadrature() {
        let g = custom_exp();
        let exact = MemoryDensity::exp1();
        for (a, b) in [(1.0, 2.0), (0.0, 0.5), (3.0, f64::INFINITY), (0.0, f64::INFINITY)] {
            assert_relative_eq!(
                g.partial_moment(a, b).unwrap(),
                exact.partial_moment(a, b).unwrap(),
                max_relative = 1e-10
            );
        }
        assert!(ModelParams::frohlich(1.0, 0.0, 1.0).validate(&g).passed());
    }

    #[test]
    fn improper_custom_density_fails_validation() {
        let g = MemoryDensity::Custom(CustomDensity::new(
            "half-mass",
            |t| 0.5 * (-t).exp(),
            |t| 0.5 * (1.0 - (-t).exp()),
            |p| -(1.0 - 2.0 * p).ln(),
            0.5,
        ));
        let report = ModelParams::frohlich(1.0, 0.0, 1.0).validate(&g);
        assert!(report.failures().any(|c| c.name == "g:normalized"));
    }

    #[test]
    fn sampling_is_seeded_and_positive() {
        let g = MemoryDensity::exp1();
        let a = g.sample(&mut ChaCha8Rng::seed_from_u64(11));
        let b = g.sample(&mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
        assert!(a > 0.0);
    }

    #[test]
    fn sample_moments() {
        let g = MemoryDensity::exp1();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut in_band = 0usize;
        for _ in 0..n {
            let x = g.sample(&mut rng);
            sum += x;
            if (1.0..=2.0).contains(&x) {
                in_band += 1;
            }
        }
        let mean = sum / n as f64;
        // sd of Exp(1) is 1
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
        let p = (-1f64).exp() - (-2f64).exp();
        let frac = in_band as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((frac - p).abs() < 3.0 * se, "band fraction {frac} vs {p}");
    }

    #[test]
    fn truncated_sampling_stays_in_band() {
        let g = MemoryDensity::exp1();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = g.sample_between(1.0, 2.0, &mut rng);
            assert!((1.0..=2.0).contains(&x));
        }
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{"alpha": 2.0, "gamma": 1.0, "d": 3, "epsilon": 1.0, "T": 50.0, "g": {"kind": "exponential"}}"#;
        let cfg = ModelConfig::from_json(text).unwrap();
        assert_eq!(cfg.params, ModelParams::new(2.0, 1.0, 3, 1.0, 50.0));
        assert_eq!(cfg.g, DensitySpec::Exponential { rate: 1.0 });
        let back: ModelConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(ModelConfig::from_json(r#"{"alpha": 1.0}"#).is_err());
    }
}
