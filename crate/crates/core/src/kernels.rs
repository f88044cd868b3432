//! The mark measure `ν_ε`, the single-interval weight `h_ε`, the product
//! marking probability `p_ε(C)`, the configuration weight `F_ε`, and the
//! single-site conditionals of the mark kernel `κ_ε`.
//!
//! `ν_ε(du) = ρ(u) du + ε δ_0(du)` with `ρ(u) = 2^{(2-γ)/2} / Γ(γ/2) · u^{γ-1}`.
//! Integrals against `ρ` are split at a point `a`: on `[0, a]` the substitution
//! `u = a y^{2/γ}` absorbs the power `u^{γ-1}`, on `[a, ∞)` the substitution
//! `u = a y^{-m}` (with `m = 2/(d-γ)` by default) absorbs the `u^{-d}` decay
//! of `φ`. Both leave Gauss–Legendre integrands that are smooth up to weak
//! endpoint terms.

use nalgebra::DMatrix;
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{invalid, Error, Result};
use crate::gaussian::phi_from_overlap;
use crate::model::ModelParams;
use crate::pointprocess::IntervalConfig;
use crate::quad::GaussLegendre;

/// Largest configuration handled by the tensor quadratures.
pub const MAX_TENSOR_INTERVALS: usize = 3;

/// `ν_ε` for a given potential exponent and shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuMeasure {
    pub gamma: f64,
    pub epsilon: f64,
}

impl NuMeasure {
    pub fn new(gamma: f64, epsilon: f64) -> Self {
        Self { gamma, epsilon }
    }

    pub fn of(params: &ModelParams) -> Self {
        Self::new(params.gamma, params.epsilon)
    }

    /// `2^{(2-γ)/2} / Γ(γ/2)`.
    pub fn coefficient(&self) -> f64 {
        2f64.powf((2.0 - self.gamma) / 2.0) / gamma_fn(self.gamma / 2.0)
    }

    /// Lebesgue density of the continuous part.
    pub fn density(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else {
            self.coefficient() * u.powf(self.gamma - 1.0)
        }
    }

    /// The density is nondecreasing exactly when its exponent `γ - 1` is nonnegative.
    pub fn density_is_nondecreasing(&self) -> bool {
        self.gamma >= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub nodes_per_panel: usize,
    /// Panels on each side of the split.
    pub panels: usize,
    pub split: f64,
    /// Exponent `m` of the tail map `u = a y^{-m}`; `None` means `2/(d-γ)`.
    pub tail_exponent: Option<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_panel: 32,
            panels: 1,
            split: 1.0,
            tail_exponent: None,
            abs_tol: 1e-13,
            rel_tol: 1e-11,
        }
    }
}

impl QuadratureSpec {
    fn validate(&self) -> Result<()> {
        if self.nodes_per_panel == 0 || self.panels == 0 {
            return Err(invalid("quadrature needs at least one node and one panel"));
        }
        if !(self.split > 0.0) {
            return Err(invalid(format!("split point must be positive, got {}", self.split)));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(invalid("quadrature tolerances must be positive"));
        }
        Ok(())
    }

    fn tail_exponent_for(&self, gamma: f64, d: u32) -> f64 {
        self.tail_exponent.unwrap_or(2.0 / (f64::from(d) - gamma))
    }
}

/// Part of `[0, ∞)` a single mark is integrated over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarkRegion {
    All,
    /// `[0, c)`, including the atom at zero.
    Below(f64),
    /// `[c, ∞)`.
    AtLeast(f64),
}

/// Nodes and weights of `∫_region f dν_ε` (atom included as a node at `u = 0`).
#[derive(Debug, Clone)]
struct NuRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

fn head_rule(nu: &NuMeasure, a: f64, gl: &GaussLegendre, panels: usize, rule: &mut NuRule) {
    // u = a y^{2/γ}, ρ(u) du = c a^γ (2/γ) y dy
    let p = 2.0 / nu.gamma;
    let scale = nu.coefficient() * a.powf(nu.gamma) * p;
    let h = 1.0 / panels as f64;
    for k in 0..panels {
        let lo = h * k as f64;
        for (y, w) in gl.mapped(lo, lo + h) {
            rule.nodes.push(a * y.powf(p));
            rule.weights.push(scale * y * w);
        }
    }
}

fn tail_rule(nu: &NuMeasure, a: f64, m: f64, gl: &GaussLegendre, panels: usize, rule: &mut NuRule) {
    // u = a y^{-m}, ρ(u) du = c a^γ m y^{-mγ-1} dy
    let scale = nu.coefficient() * a.powf(nu.gamma) * m;
    let h = 1.0 / panels as f64;
    for k in 0..panels {
        let lo = h * k as f64;
        for (y, w) in gl.mapped(lo, lo + h) {
            rule.nodes.push(a * y.powf(-m));
            rule.weights.push(scale * y.powf(-m * nu.gamma - 1.0) * w);
        }
    }
}

fn nu_rule(nu: &NuMeasure, d: u32, region: MarkRegion, spec: &QuadratureSpec, gl: &GaussLegendre) -> NuRule {
    let mut rule = NuRule { nodes: Vec::new(), weights: Vec::new() };
    let m = spec.tail_exponent_for(nu.gamma, d);
    let with_atom = match region {
        MarkRegion::All => {
            head_rule(nu, spec.split, gl, spec.panels, &mut rule);
            tail_rule(nu, spec.split, m, gl, spec.panels, &mut rule);
            true
        }
        MarkRegion::Below(c) => {
            if c > 0.0 {
                head_rule(nu, c, gl, spec.panels, &mut rule);
            }
            c > 0.0
        }
        MarkRegion::AtLeast(c) => {
            if c >= spec.split {
                tail_rule(nu, c, m, gl, spec.panels, &mut rule);
                false
            } else if c > 0.0 {
                // [c, ∞) = [0, ∞) minus [0, c); a tail map from small c wastes its nodes
                head_rule(nu, spec.split, gl, spec.panels, &mut rule);
                tail_rule(nu, spec.split, m, gl, spec.panels, &mut rule);
                let start = rule.weights.len();
                head_rule(nu, c, gl, spec.panels, &mut rule);
                rule.weights[start..].iter_mut().for_each(|w| *w = -*w);
                false
            } else {
                head_rule(nu, spec.split, gl, spec.panels, &mut rule);
                tail_rule(nu, spec.split, m, gl, spec.panels, &mut rule);
                true
            }
        }
    };
    if with_atom && nu.epsilon > 0.0 {
        rule.nodes.push(0.0);
        rule.weights.push(nu.epsilon);
    }
    rule
}

/// `∫ f dν_ε` over one region, refining panels until two successive
/// estimates agree to the tolerances of `spec`.
fn integrate_nu_1d<F: Fn(f64) -> f64>(
    nu: &NuMeasure,
    d: u32,
    region: MarkRegion,
    spec: &QuadratureSpec,
    f: F,
) -> f64 {
    let gl = GaussLegendre::new(spec.nodes_per_panel);
    let eval = |panels: usize| {
        let s = QuadratureSpec { panels, ..*spec };
        let rule = nu_rule(nu, d, region, &s, &gl);
        rule.nodes.iter().zip(&rule.weights).map(|(u, w)| w * f(*u)).sum::<f64>()
    };
    let mut panels = spec.panels;
    let mut prev = eval(panels);
    while panels < 64 {
        panels *= 2;
        let next = eval(panels);
        if (next - prev).abs() <= spec.abs_tol.max(spec.rel_tol * next.abs()) {
            return next;
        }
        prev = next;
    }
    prev
}

fn check_exponents(params: &ModelParams) -> Result<()> {
    if !(1.0..2.0).contains(&params.gamma) || params.d < 2 {
        return Err(invalid(format!(
            "kernels need 1 <= gamma < 2 <= d, got gamma={}, d={}",
            params.gamma, params.d
        )));
    }
    Ok(())
}

/// `h_ε(t) = E_W[v_ε(X_t)] = ∫ ν_ε(du) (1 + u² t)^{-d/2}`, by quadrature.
pub fn h_eps(t: f64, params: &ModelParams) -> Result<f64> {
    h_eps_with(t, params, &QuadratureSpec::default())
}

pub fn h_eps_with(t: f64, params: &ModelParams, spec: &QuadratureSpec) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("h_eps needs t > 0, got {t}")));
    }
    check_exponents(params)?;
    spec.validate()?;
    let half_d = 0.5 * params.dim();
    let nu = NuMeasure::of(params);
    Ok(integrate_nu_1d(&nu, params.d, MarkRegion::All, spec, |u| (1.0 + u * u * t).powf(-half_d)))
}

/// `c_{γ,d}`, the constant in `h_0(t) = c_{γ,d} t^{-γ/2}`.
pub fn c_gamma_d(gamma: f64, d: u32) -> Result<f64> {
    h_eps(1.0, &ModelParams::new(1.0, gamma, d, 0.0, 1.0))
}

/// `p_ε(C) = 2^{-γ/2} (1 + 4C²)^{-d/2} (1 - ε / h_ε(2))`.
pub fn p_eps(mark: f64, params: &ModelParams) -> Result<f64> {
    if !(mark > 0.0) {
        return Err(invalid(format!("p_eps needs C > 0, got {mark}")));
    }
    let h2 = h_eps(2.0, params)?;
    let base = 2f64.powf(-params.gamma / 2.0) * (1.0 + 4.0 * mark * mark).powf(-0.5 * params.dim());
    Ok(base * (1.0 - params.epsilon / h2))
}

fn check_size(xi: &IntervalConfig) -> Result<()> {
    if xi.len() > MAX_TENSOR_INTERVALS {
        return Err(Error::UnsupportedSize { n: xi.len(), max: MAX_TENSOR_INTERVALS });
    }
    Ok(())
}

/// `∫_{R_1 × … × R_n} ν_ε^{⊗n}(du) φ(ξ,u)` by tensor quadrature.
pub fn tensor_phi_integral(
    xi: &IntervalConfig,
    regions: &[MarkRegion],
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_size(xi)?;
    check_exponents(params)?;
    spec.validate()?;
    if regions.len() != xi.len() {
        return Err(invalid(format!("{} regions for {} intervals", regions.len(), xi.len())));
    }
    if xi.is_empty() {
        return Ok(1.0);
    }
    let nu = NuMeasure::of(params);
    let gl = GaussLegendre::new(spec.nodes_per_panel);
    let rules: Vec<NuRule> = regions.iter().map(|r| nu_rule(&nu, params.d, *r, spec, &gl)).collect();
    let overlap: DMatrix<f64> = crate::gaussian::overlap_matrix(xi);
    let n = rules.len();
    let mut index = vec![0usize; n];
    let mut marks = vec![0.0; n];
    let mut total = 0.0;
    if rules.iter().any(|r| r.nodes.is_empty()) {
        return Ok(0.0);
    }
    loop {
        let mut w = 1.0;
        for (k, r) in rules.iter().enumerate() {
            marks[k] = r.nodes[index[k]];
            w *= r.weights[index[k]];
        }
        total += w * phi_from_overlap(&overlap, &marks, params.d);
        // odometer increment
        let mut k = 0;
        loop {
            index[k] += 1;
            if index[k] < rules[k].nodes.len() {
                break;
            }
            index[k] = 0;
            k += 1;
            if k == n {
                return Ok(total);
            }
        }
    }
}

/// `F_ε(ξ) = E_W[∏ v_ε(X_{s_i,t_i})] = ∫ ν_ε^{⊗n}(du) φ(ξ,u)`, for at most three intervals.
pub fn f_eps(xi: &IntervalConfig, params: &ModelParams, spec: &QuadratureSpec) -> Result<f64> {
    let regions = vec![MarkRegion::All; xi.len()];
    tensor_phi_integral(xi, &regions, params, spec)
}

/// Threshold event `χ_j` on a mark other than the conditioned one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threshold {
    /// No constraint (the interval is not in the conditioning set).
    Free,
    /// `u_j >= C`.
    High,
    /// `u_j < C`.
    Low,
}

/// `κ_ε(ξ, u_i >= C | χ_j = ω_j for j ≠ i)`, as a ratio of tensor quadratures.
pub fn kappa_conditional(
    xi: &IntervalConfig,
    i: usize,
    omega: &[Threshold],
    mark: f64,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_size(xi)?;
    if i >= xi.len() {
        return Err(invalid(format!("index {i} out of range for {} intervals", xi.len())));
    }
    if omega.len() != xi.len() {
        return Err(invalid(format!("pattern has {} entries for {} intervals", omega.len(), xi.len())));
    }
    if xi.intervals()[i].len() > 2.0 {
        return Err(Error::Precondition(format!("interval {i} is longer than 2")));
    }
    if !(mark > 0.0) {
        return Err(invalid(format!("C must be positive, got {mark}")));
    }
    let mut regions: Vec<MarkRegion> = omega
        .iter()
        .map(|w| match w {
            Threshold::Free => MarkRegion::All,
            Threshold::High => MarkRegion::AtLeast(mark),
            Threshold::Low => MarkRegion::Below(mark),
        })
        .collect();
    regions[i] = MarkRegion::AtLeast(mark);
    let num = tensor_phi_integral(xi, &regions, params, spec)?;
    regions[i] = MarkRegion::All;
    let den = tensor_phi_integral(xi, &regions, params, spec)?;
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::gamma::gamma;
    use std::f64::consts::PI;

    fn params(gamma: f64, d: u32, eps: f64) -> ModelParams {
        ModelParams::new(1.0, gamma, d, eps, 10.0)
    }

    // c_{γ,d} = 2^{-γ/2} Γ((d-γ)/2) / Γ(d/2), from the Beta integral
    fn c_closed(g: f64, d: u32) -> f64 {
        2f64.powf(-g / 2.0) * gamma((f64::from(d) - g) / 2.0) / gamma(f64::from(d) / 2.0)
    }

    #[test]
    fn coulomb_values() {
        let p = params(1.0, 3, 0.0);
        assert_relative_eq!(h_eps(1.0, &p).unwrap(), (2.0 / PI).sqrt(), max_relative = 1e-10);
        assert_relative_eq!(h_eps(2.0, &p).unwrap(), 1.0 / PI.sqrt(), max_relative = 1e-10);
        assert_relative_eq!(c_gamma_d(1.0, 3).unwrap(), 0.797_884_560_802_865_4, max_relative = 1e-10);
    }

    #[test]
    fn shift_adds_atom() {
        for (g, d) in [(1.0, 2), (1.5, 3), (1.25, 2)] {
            for t in [0.3, 1.0, 2.7] {
                let h0 = h_eps(t, &params(g, d, 0.0)).unwrap();
                let h1 = h_eps(t, &params(g, d, 1.0)).unwrap();
                assert_relative_eq!(h1, h0 + 1.0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn scaling_identity_and_closed_constant() {
        for (g, d) in [(1.0, 2), (1.0, 3), (1.5, 2), (1.5, 3), (1.2, 4), (1.9, 2)] {
            let c = c_gamma_d(g, d).unwrap();
            assert_relative_eq!(c, c_closed(g, d), max_relative = 1e-8);
            for t in [0.5, 1.0, 2.0, 4.0] {
                let h = h_eps(t, &params(g, d, 0.0)).unwrap();
                assert_relative_eq!(h * t.powf(g / 2.0), c, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn h_rejects_nonpositive_time() {
        assert!(h_eps(0.0, &params(1.0, 3, 0.0)).is_err());
        assert!(h_eps(-1.0, &params(1.0, 3, 0.0)).is_err());
    }

    #[test]
    fn p_eps_values() {
        let p0 = p_eps(1.0, &params(1.0, 3, 0.0)).unwrap();
        assert_relative_eq!(p0, 2f64.powf(-0.5) / 5f64.powf(1.5), max_relative = 1e-12);
        assert_relative_eq!(p0, 0.063_245_553_203_367_58, max_relative = 1e-10);
        let p1 = p_eps(1.0, &params(1.0, 3, 1.0)).unwrap();
        let h2 = 1.0 / PI.sqrt() + 1.0;
        assert_relative_eq!(p1, p0 * (1.0 - 1.0 / h2), max_relative = 1e-10);
        assert_relative_eq!(p1, 0.022_812_121_176_592_66, max_relative = 1e-9);
        assert!(p_eps(0.0, &params(1.0, 3, 0.0)).is_err());
        assert!(p_eps(1e9, &params(1.0, 3, 1.0)).unwrap() < 1e-27);
    }

    #[test]
    fn nu_density_properties() {
        let nu = NuMeasure::new(1.0, 0.0);
        assert_relative_eq!(nu.density(3.0), (2.0 / PI).sqrt(), max_relative = 1e-14);
        let nu = NuMeasure::new(1.5, 0.0);
        assert!(nu.density_is_nondecreasing());
        let grid: Vec<f64> = (1..200).map(|k| nu.density(k as f64 * 0.05)).collect();
        assert!(grid.windows(2).all(|w| w[1] >= w[0]));
        assert!(!NuMeasure::new(0.5, 0.0).density_is_nondecreasing());
    }

    #[test]
    fn f_eps_examples() {
        let spec = QuadratureSpec::default();
        let p = params(1.0, 3, 0.0);
        assert_eq!(f_eps(&IntervalConfig::empty(), &p, &spec).unwrap(), 1.0);
        let one = IntervalConfig::from_pairs(&[(0.0, 1.0)]);
        assert_relative_eq!(f_eps(&one, &p, &spec).unwrap(), (2.0 / PI).sqrt(), max_relative = 1e-6);
        let two = IntervalConfig::from_pairs(&[(0.0, 1.0), (2.0, 3.0)]);
        assert_relative_eq!(f_eps(&two, &p, &spec).unwrap(), 2.0 / PI, max_relative = 1e-6);
        let four = IntervalConfig::from_pairs(&[(0.0, 1.0), (2.0, 3.0), (4.0, 5.0), (6.0, 7.0)]);
        assert!(matches!(f_eps(&four, &p, &spec), Err(Error::UnsupportedSize { n: 4, max: 3 })));
    }

    #[test]
    fn f_eps_factorizes_for_disjoint_intervals() {
        let spec = QuadratureSpec::default();
        for (g, d, eps) in [(1.0, 3, 1.0), (1.5, 2, 0.0), (1.5, 3, 0.5)] {
            let p = params(g, d, eps);
            let xi = IntervalConfig::from_pairs(&[(0.0, 0.5), (1.0, 2.5), (3.0, 5.0)]);
            let prod: f64 = xi.lengths().map(|t| h_eps(t, &p).unwrap()).product();
            assert_relative_eq!(f_eps(&xi, &p, &spec).unwrap(), prod, max_relative = 1e-6);
        }
    }

    #[test]
    fn kappa_single_interval_closed_form() {
        let spec = QuadratureSpec::default();
        let xi = IntervalConfig::from_pairs(&[(0.0, 2.0)]);
        let p = params(1.0, 3, 0.0);
        let k = kappa_conditional(&xi, 0, &[Threshold::Free], 1.0, &p, &spec).unwrap();
        // antiderivative of (1+2u²)^{-3/2} is u/√(1+2u²)
        let exact = (2.0 / PI).sqrt() * (0.5f64.sqrt() - (1.0f64 / 3.0).sqrt()) * PI.sqrt();
        assert_relative_eq!(k, exact, max_relative = 1e-8);
        assert!((k - 0.18357).abs() < 1e-4);
        assert!(k >= p_eps(1.0, &p).unwrap());
        let tiny = kappa_conditional(&xi, 0, &[Threshold::Free], 1e-9, &p, &spec).unwrap();
        assert!((tiny - 1.0).abs() < 1e-6, "{tiny}");
    }

    #[test]
    fn kappa_two_overlapping_intervals() {
        let spec = QuadratureSpec::default();
        let xi = IntervalConfig::from_pairs(&[(0.0, 1.5), (0.75, 2.25)]);
        for eps in [0.0, 1.0] {
            let p = params(1.0, 3, eps);
            let pc = p_eps(1.0, &p).unwrap();
            for w in [Threshold::High, Threshold::Low] {
                let k = kappa_conditional(&xi, 0, &[Threshold::Free, w], 1.0, &p, &spec).unwrap();
                assert!(k >= pc && k < 1.0, "eps {eps} omega {w:?}: {k} vs {pc}");
            }
        }
    }

    #[test]
    fn kappa_preconditions() {
        let spec = QuadratureSpec::default();
        let p = params(1.0, 3, 0.0);
        let long = IntervalConfig::from_pairs(&[(0.0, 3.0)]);
        assert!(matches!(
            kappa_conditional(&long, 0, &[Threshold::Free], 1.0, &p, &spec),
            Err(Error::Precondition(_))
        ));
        let one = IntervalConfig::from_pairs(&[(0.0, 1.0)]);
        assert!(kappa_conditional(&one, 1, &[Threshold::Free], 1.0, &p, &spec).is_err());
    }
}
