//! Parametric survival-time kernels.
//!
//! Each family exposes the log survival function `ln Λ(s)`, the hazard
//! `λ(s) = -d ln Λ / ds`, the log density `ln f = ln λ + ln Λ` and a sampler
//! for the residual holding time beyond an elapsed clock value.
//!
//! Parametrizations:
//!
//! | family      | params         | `ln Λ(s)`                 |
//! |-------------|----------------|---------------------------|
//! | exponential | rate λ         | `-λ s`                    |
//! | weibull     | shape k, rate b| `-b s^k`                  |
//! | gamma       | shape α, rate β| `ln Q(α, β s)`            |
//! | rayleigh    | scale² σ²      | `-s² / (2σ²)`             |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::UniformSource;
use crate::special::{ln_gamma, ln_gamma_q};

/// Attempts of plain rejection before the Gamma sampler switches to inversion.
pub const GAMMA_REJECTION_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Exponential,
    Weibull,
    Gamma,
    Rayleigh,
}

impl Family {
    pub fn arity(self) -> usize {
        match self {
            Family::Exponential | Family::Rayleigh => 1,
            Family::Weibull | Family::Gamma => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Exponential => "exponential",
            Family::Weibull => "weibull",
            Family::Gamma => "gamma",
            Family::Rayleigh => "rayleigh",
        }
    }

    /// Names of the parameter roles, in parameter-vector order.
    pub fn roles(self) -> &'static [&'static str] {
        match self {
            Family::Exponential => &["rate"],
            Family::Weibull | Family::Gamma => &["shape", "rate"],
            Family::Rayleigh => &["scale_sq"],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" => Ok(Family::Exponential),
            "weibull" => Ok(Family::Weibull),
            "gamma" => Ok(Family::Gamma),
            "rayleigh" => Ok(Family::Rayleigh),
            other => Err(Error::InvalidParams(format!("unknown family '{other}'"))),
        }
    }
}

/// One survival-time distribution: a family tag and its strictly positive
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalParams {
    family: Family,
    values: [f64; 2],
}

impl SurvivalParams {
    pub fn new(family: Family, params: &[f64]) -> Result<Self> {
        if params.len() != family.arity() {
            return Err(Error::InvalidParams(format!(
                "{family} expects {} parameter(s), got {}",
                family.arity(),
                params.len()
            )));
        }
        if let Some(bad) = params.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidParams(format!(
                "{family} parameters must be finite and > 0, got {bad}"
            )));
        }
        let mut values = [0.0; 2];
        values[..params.len()].copy_from_slice(params);
        Ok(Self { family, values })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Family::Exponential, &[rate])
    }

    pub fn weibull(shape: f64, rate: f64) -> Result<Self> {
        Self::new(Family::Weibull, &[shape, rate])
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::new(Family::Gamma, &[shape, rate])
    }

    pub fn rayleigh(scale_sq: f64) -> Result<Self> {
        Self::new(Family::Rayleigh, &[scale_sq])
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.values[..self.family.arity()]
    }

    /// True when the family collapses to a memoryless exponential law.
    fn is_memoryless(&self) -> bool {
        match self.family {
            Family::Exponential => true,
            Family::Weibull | Family::Gamma => self.values[0] == 1.0,
            Family::Rayleigh => false,
        }
    }

    /// Rate of the exponential law this instance collapses to, if memoryless.
    fn memoryless_rate(&self) -> f64 {
        match self.family {
            Family::Exponential => self.values[0],
            _ => self.values[1],
        }
    }

    /// `ln Λ(s)`; assumes `s ≥ 0`.
    pub(crate) fn ln_survival_raw(&self, s: f64) -> f64 {
        if self.is_memoryless() {
            return -self.memoryless_rate() * s;
        }
        let [a, b] = self.values;
        match self.family {
            Family::Exponential => unreachable!(),
            Family::Weibull => -b * s.powf(a),
            Family::Gamma => ln_gamma_q(a, b * s),
            Family::Rayleigh => -s * s / (2.0 * a),
        }
    }

    /// Natural log of the survival function. Errors for negative `s`.
    pub fn log_survival(&self, s: f64) -> Result<f64> {
        check_nonnegative(s)?;
        Ok(self.ln_survival_raw(s))
    }

    pub fn survival(&self, s: f64) -> Result<f64> {
        self.log_survival(s).map(f64::exp)
    }

    /// Hazard (exit rate) at clock value `s`.
    pub fn hazard(&self, s: f64) -> Result<f64> {
        check_nonnegative(s)?;
        if self.is_memoryless() {
            return Ok(self.memoryless_rate());
        }
        let [a, b] = self.values;
        match self.family {
            Family::Exponential => unreachable!(),
            Family::Weibull => {
                if s == 0.0 {
                    return singular_at_zero(a, "weibull shape");
                }
                Ok(b * a * s.powf(a - 1.0))
            }
            Family::Gamma => {
                if s == 0.0 {
                    return singular_at_zero(a, "gamma shape");
                }
                Ok((gamma_ln_pdf(a, b, s) - ln_gamma_q(a, b * s)).exp())
            }
            Family::Rayleigh => Ok(s / a),
        }
    }

    /// Log density of the untruncated holding time at `s > 0`.
    pub fn log_density(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("density requires s > 0, got {s}")));
        }
        Ok(self.ln_density_raw(s))
    }

    /// `ln f(s)`; assumes `s > 0`.
    pub(crate) fn ln_density_raw(&self, s: f64) -> f64 {
        if self.is_memoryless() {
            let rate = self.memoryless_rate();
            return rate.ln() - rate * s;
        }
        let [a, b] = self.values;
        match self.family {
            Family::Exponential => unreachable!(),
            Family::Weibull => b.ln() + a.ln() + (a - 1.0) * s.ln() - b * s.powf(a),
            Family::Gamma => gamma_ln_pdf(a, b, s),
            Family::Rayleigh => s.ln() - a.ln() - s * s / (2.0 * a),
        }
    }

    /// Residual holding time `r > 0` beyond an elapsed clock `tau`, with
    /// `P(r > s) = Λ(tau + s) / Λ(tau)`.
    ///
    /// Exponential, Weibull and Rayleigh invert the conditional survival in
    /// closed form and consume exactly one uniform. Gamma rejects untruncated
    /// draws below `tau`; after [`GAMMA_REJECTION_CAP`] failures, or straight
    /// away when `Λ(tau)` is tiny, it inverts the conditional law by bisection.
    pub fn sample_truncated<U: UniformSource + ?Sized>(&self, tau: f64, src: &mut U) -> Result<f64> {
        check_nonnegative(tau)?;
        if self.is_memoryless() {
            let e = -src.next_uniform().ln();
            return Ok(e / self.memoryless_rate());
        }
        let [a, b] = self.values;
        let r = match self.family {
            Family::Exponential => unreachable!(),
            Family::Weibull => {
                let e = -src.next_uniform().ln();
                if tau == 0.0 {
                    (e / b).powf(1.0 / a)
                } else {
                    let x = (e.ln() - b.ln() - a * tau.ln()).exp();
                    if x.is_finite() && x < 1e200 {
                        tau * (x.ln_1p() / a).exp_m1()
                    } else {
                        (tau.powf(a) + e / b).powf(1.0 / a) - tau
                    }
                }
            }
            Family::Rayleigh => {
                let e = -src.next_uniform().ln();
                if tau == 0.0 {
                    (2.0 * a * e).sqrt()
                } else {
                    let x = 2.0 * a * e / (tau * tau);
                    if x.is_finite() && x < 1e200 {
                        tau * (0.5 * x.ln_1p()).exp_m1()
                    } else {
                        (tau * tau + 2.0 * a * e).sqrt() - tau
                    }
                }
            }
            Family::Gamma => {
                let ln_q_tau = ln_gamma_q(a, b * tau);
                if ln_q_tau > (1e-3f64).ln() {
                    for _ in 0..GAMMA_REJECTION_CAP {
                        let g = gamma_variate(a, src) / b;
                        if g > tau {
                            return Ok(g - tau);
                        }
                    }
                    log::debug!("gamma rejection cap hit at tau={tau}; inverting by bisection");
                }
                self.invert_conditional(tau, src.next_uniform().ln())
            }
        };
        Ok(r)
    }

    /// Solves `ln Λ(tau + s) - ln Λ(tau) = ln_u` for `s` by bisection.
    fn invert_conditional(&self, tau: f64, ln_u: f64) -> f64 {
        let base = self.ln_survival_raw(tau);
        let excess = |s: f64| self.ln_survival_raw(tau + s) - base - ln_u;
        let mut hi = 1.0 / self.memoryless_rate().max(f64::MIN_POSITIVE);
        let mut lo = 0.0;
        while excess(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return lo;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if excess(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        if s > 0.0 {
            s
        } else {
            hi
        }
    }
}

fn check_nonnegative(s: f64) -> Result<()> {
    if s >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("negative time argument {s}")))
    }
}

fn singular_at_zero(shape: f64, what: &str) -> Result<f64> {
    if shape < 1.0 {
        Err(Error::Domain(format!("hazard is singular at s = 0 for {what} {shape} < 1")))
    } else {
        Ok(0.0)
    }
}

fn gamma_ln_pdf(shape: f64, rate: f64, s: f64) -> f64 {
    shape * rate.ln() + (shape - 1.0) * s.ln() - rate * s - ln_gamma(shape)
}

fn standard_normal<U: UniformSource + ?Sized>(src: &mut U) -> f64 {
    let u1 = src.next_uniform();
    let u2 = src.next_uniform();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Unit-rate Gamma variate (Marsaglia–Tsang, with the `U^(1/α)` boost for α < 1).
fn gamma_variate<U: UniformSource + ?Sized>(shape: f64, src: &mut U) -> f64 {
    if shape < 1.0 {
        let g = gamma_variate(shape + 1.0, src);
        return g * src.next_uniform().powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(src);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = src.next_uniform();
        if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
            return d * v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, ReplayUniforms};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn log_survival_examples() {
        let w = SurvivalParams::weibull(1.0, 2.0).unwrap();
        assert_eq!(w.log_survival(0.5).unwrap(), -1.0);
        let r = SurvivalParams::rayleigh(1.0).unwrap();
        assert_eq!(r.log_survival(2.0).unwrap(), -2.0);
        // Γ(2, 1) / Γ(2) = 2 e^-1
        let g = SurvivalParams::gamma(2.0, 1.0).unwrap();
        assert!(close(g.log_survival(1.0).unwrap(), -0.306_852_819_440_054_7, 1e-13));
    }

    #[test]
    fn hazard_examples() {
        assert_eq!(SurvivalParams::weibull(2.0, 1.0).unwrap().hazard(3.0).unwrap(), 6.0);
        assert_eq!(SurvivalParams::rayleigh(2.0).unwrap().hazard(4.0).unwrap(), 2.0);
        let g = SurvivalParams::gamma(2.0, 1.0).unwrap();
        assert!(close(g.hazard(1.0).unwrap(), 0.5, 1e-13));
    }

    #[test]
    fn log_density_examples() {
        let e = SurvivalParams::exponential(2.0).unwrap();
        assert!(close(e.log_density(1.0).unwrap(), 2f64.ln() - 2.0, 1e-15));
        let w = SurvivalParams::weibull(2.0, 1.0).unwrap();
        assert!(close(w.log_density(1.0).unwrap(), 2f64.ln() - 1.0, 1e-15));
        let g = SurvivalParams::gamma(2.0, 1.0).unwrap();
        assert!(close(g.log_density(1.0).unwrap(), -1.0, 1e-14));
    }

    #[test]
    fn density_is_hazard_times_survival() {
        let cases = [
            SurvivalParams::exponential(0.7).unwrap(),
            SurvivalParams::weibull(3.0, 0.4).unwrap(),
            SurvivalParams::gamma(4.5, 2.0).unwrap(),
            SurvivalParams::gamma(0.6, 1.5).unwrap(),
            SurvivalParams::rayleigh(1.7).unwrap(),
        ];
        for p in cases {
            for &s in &[0.05, 0.4, 1.0, 2.5, 6.0] {
                let lhs = p.log_density(s).unwrap();
                let rhs = p.hazard(s).unwrap().ln() + p.log_survival(s).unwrap();
                assert!(close(lhs, rhs, 1e-12), "{p:?} s={s}");
            }
        }
    }

    #[test]
    fn memoryless_special_cases_are_bit_exact() {
        let e = SurvivalParams::exponential(1.3).unwrap();
        let w = SurvivalParams::weibull(1.0, 1.3).unwrap();
        let g = SurvivalParams::gamma(1.0, 1.3).unwrap();
        for &s in &[0.0, 0.1, 1.0, 7.5] {
            for other in [w, g] {
                assert_eq!(other.log_survival(s).unwrap().to_bits(), e.log_survival(s).unwrap().to_bits());
                assert_eq!(other.hazard(s).unwrap().to_bits(), e.hazard(s).unwrap().to_bits());
                if s > 0.0 {
                    assert_eq!(other.log_density(s).unwrap().to_bits(), e.log_density(s).unwrap().to_bits());
                }
            }
        }
    }

    #[test]
    fn domain_errors() {
        let w = SurvivalParams::weibull(0.5, 1.0).unwrap();
        assert!(matches!(w.hazard(0.0), Err(Error::Domain(_))));
        assert!(matches!(w.log_survival(-1.0), Err(Error::Domain(_))));
        assert!(matches!(w.log_density(0.0), Err(Error::Domain(_))));
        let g = SurvivalParams::gamma(0.5, 1.0).unwrap();
        assert!(matches!(g.hazard(0.0), Err(Error::Domain(_))));
        assert_eq!(SurvivalParams::gamma(2.0, 1.0).unwrap().hazard(0.0).unwrap(), 0.0);
        assert!(SurvivalParams::new(Family::Weibull, &[1.0]).is_err());
        assert!(SurvivalParams::weibull(0.0, 1.0).is_err());
        assert!(SurvivalParams::rayleigh(f64::NAN).is_err());
    }

    #[test]
    fn truncated_inverse_transform_examples() {
        let e = SurvivalParams::exponential(2.0).unwrap();
        let mut src = ReplayUniforms::new(vec![0.3, 0.3]);
        let a = e.sample_truncated(0.0, &mut src).unwrap();
        let b = e.sample_truncated(5.0, &mut src).unwrap();
        assert_eq!(a, b);
        assert!(close(a, -(0.3f64).ln() / 2.0, 1e-15));

        let w = SurvivalParams::weibull(2.0, 1.0).unwrap();
        let s = w.sample_truncated(1.0, &mut ReplayUniforms::new(vec![(-3.0f64).exp()])).unwrap();
        assert!(close(s, 1.0, 1e-14), "{s}");

        let r = SurvivalParams::rayleigh(1.0).unwrap();
        let s = r.sample_truncated(0.0, &mut ReplayUniforms::new(vec![(-2.0f64).exp()])).unwrap();
        assert!(close(s, 2.0, 1e-14), "{s}");
    }

    #[test]
    fn extreme_truncation_stays_finite() {
        let w = SurvivalParams::weibull(100.0, 50.0).unwrap();
        let mut rng = stream_rng(3, 0);
        let s = w.sample_truncated(1500.0, &mut rng).unwrap();
        assert!(s.is_finite() && s > 0.0);
        // Λ(τ) ≈ exp(-2e4): rejection is hopeless, inversion must take over.
        let g = SurvivalParams::gamma(3.0, 2.0).unwrap();
        let s = g.sample_truncated(10_000.0, &mut rng).unwrap();
        assert!(s.is_finite() && s > 0.0 && s < 10.0, "{s}");
    }

    #[test]
    fn gamma_bisection_inverts_conditional_survival() {
        let g = SurvivalParams::gamma(2.5, 0.8).unwrap();
        let (tau, u) = (20.0, 0.37f64);
        let s = g.invert_conditional(tau, u.ln());
        let ratio = g.log_survival(tau + s).unwrap() - g.log_survival(tau).unwrap();
        assert!((ratio - u.ln()).abs() < 1e-10);
    }
}
