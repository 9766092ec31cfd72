//! Parameter inference: conjugate Dirichlet updates for transition
//! probabilities, MAP estimation of survival parameters under a box prior,
//! exact inverse-Gamma updates for Rayleigh keys and a grid posterior used
//! as an independent check.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::{stats_log_likelihood, stats_log_likelihood_raw, KeyStats, StatKey, SuffStats};
use crate::optim::{self, LbfgsbOptions};
use crate::special::{d_ln_gamma_q_dx, digamma, ln_gamma, ln_gamma_q, log_sum_exp};
use crate::survival::{Family, SurvivalParams};

/// Dirichlet concentrations over target states, per key. The entry of the
/// source state itself is kept at zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DirichletPosterior {
    pub concentrations: BTreeMap<StatKey, Vec<f64>>,
}

/// Symmetric concentration vector for a node in `state`.
pub fn symmetric_concentration(cardinality: usize, state: usize, alpha: f64) -> Vec<f64> {
    (0..cardinality).map(|x| if x == state { 0.0 } else { alpha }).collect()
}

impl DirichletPosterior {
    /// Adds observed target counts. Keys absent from the prior start from a
    /// symmetric `default_alpha` concentration.
    pub fn update(&self, stats: &SuffStats, default_alpha: f64) -> DirichletPosterior {
        let mut out = self.clone();
        for (key, ks) in &stats.keys {
            let card = ks.target_counts.len();
            let conc = out
                .concentrations
                .entry(*key)
                .or_insert_with(|| symmetric_concentration(card, key.state, default_alpha));
            for (c, &n) in conc.iter_mut().zip(&ks.target_counts) {
                *c += n as f64;
            }
        }
        out
    }

    /// Posterior mean of θ for a key.
    pub fn predictive(&self, key: &StatKey) -> Option<Vec<f64>> {
        self.concentrations.get(key).map(|c| {
            let total: f64 = c.iter().sum();
            c.iter().map(|v| v / total).collect()
        })
    }
}

/// Log evidence of categorical target counts under a Dirichlet prior over
/// the targets other than `state`.
pub fn dirichlet_log_evidence(counts: &[u64], state: usize, alpha: f64) -> f64 {
    let mut prior_total = 0.0;
    let mut count_total = 0.0;
    if counts.len() <= 2 {
        // a single possible target carries no information
        return 0.0;
    }
    let mut acc = 0.0;
    for (x, &c) in counts.iter().enumerate() {
        if x == state {
            continue;
        }
        prior_total += alpha;
        count_total += c as f64;
        if c > 0 {
            acc += ln_gamma(alpha + c as f64) - ln_gamma(alpha);
        }
    }
    if count_total == 0.0 {
        return 0.0;
    }
    acc + ln_gamma(prior_total) - ln_gamma(prior_total + count_total)
}

/// Independent uniform prior on a box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxPrior {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxPrior {
    pub const DEFAULT_LOWER: f64 = 0.1;
    pub const DEFAULT_UPPER: f64 = 100.0;

    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidParams("box bounds must be nonempty and of equal length".into()));
        }
        for (&l, &u) in lower.iter().zip(&upper) {
            if !(l > 0.0 && l < u && u.is_finite()) {
                return Err(Error::InvalidParams(format!("invalid box bounds [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[lower, upper]` on every parameter of `family`.
    pub fn uniform(family: Family, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; family.arity()], vec![upper; family.arity()])
    }

    /// The `[0.1, 100]` box on every parameter.
    pub fn default_for(family: Family) -> Self {
        Self::uniform(family, Self::DEFAULT_LOWER, Self::DEFAULT_UPPER).expect("valid default box")
    }

    pub fn contains(&self, params: &[f64]) -> bool {
        params.len() == self.lower.len()
            && params.iter().zip(&self.lower).zip(&self.upper).all(|((&p, &l), &u)| p >= l && p <= u)
    }

    /// Normalized log density (constant inside the box).
    pub fn log_density(&self, params: &[f64]) -> f64 {
        if self.contains(params) {
            -self.lower.iter().zip(&self.upper).map(|(l, u)| (u - l).ln()).sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Deterministic interior starting points: for one dimension the geometric
    /// 1/5..4/5 points, otherwise every combination of the geometric 1/4 and
    /// 3/4 points of each axis.
    pub fn restart_points(&self) -> Vec<Vec<f64>> {
        let geo = |l: f64, u: f64, q: f64| (l.ln() * (1.0 - q) + u.ln() * q).exp();
        if self.lower.len() == 1 {
            return [0.2, 0.4, 0.6, 0.8].iter().map(|&q| vec![geo(self.lower[0], self.upper[0], q)]).collect();
        }
        let mut points = vec![Vec::new()];
        for (&l, &u) in self.lower.iter().zip(&self.upper) {
            let axis = [geo(l, u, 0.25), geo(l, u, 0.75)];
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&a| {
                        let mut q = p.clone();
                        q.push(a);
                        q
                    })
                })
                .collect();
        }
        points
    }
}

/// Inverse-Gamma distribution over the squared scale of a Rayleigh key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvGammaPosterior {
    pub shape: f64,
    pub scale: f64,
}

impl InvGammaPosterior {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
            return Err(Error::InvalidParams(format!("inverse-gamma needs shape, scale > 0, got ({shape}, {scale})")));
        }
        Ok(Self { shape, scale })
    }

    pub fn log_density(&self, v: f64) -> f64 {
        if !(v > 0.0) {
            return f64::NEG_INFINITY;
        }
        self.shape * self.scale.ln() - ln_gamma(self.shape) - (self.shape + 1.0) * v.ln() - self.scale / v
    }

    pub fn mode(&self) -> f64 {
        self.scale / (self.shape + 1.0)
    }
}

/// Exact posterior of a Rayleigh key: the shape grows by the number of full
/// transitions and the scale by half the squared-clock exposure
/// `Σ_full s² + Σ_censored s² - Σ_truncated s²`.
pub fn rayleigh_conjugate_update(prior: &InvGammaPosterior, stats: &KeyStats) -> InvGammaPosterior {
    InvGammaPosterior {
        shape: prior.shape + stats.full.len() as f64,
        scale: prior.scale + 0.5 * stats.exposure(|s| s * s),
    }
}

/// Closed-form log marginal likelihood of a Rayleigh key under an
/// inverse-Gamma prior.
pub fn rayleigh_log_marginal(prior: &InvGammaPosterior, stats: &KeyStats) -> f64 {
    if stats.is_empty() {
        return 0.0;
    }
    let post = rayleigh_conjugate_update(prior, stats);
    let ln_full: f64 = stats.full.iter().map(|s| s.ln()).sum();
    ln_full + prior.shape * prior.scale.ln() - ln_gamma(prior.shape) + ln_gamma(post.shape)
        - post.shape * post.scale.ln()
}

/// Closed-form log marginal likelihood of an exponential key under a
/// `Gamma(shape, rate)` prior on its rate.
pub fn exponential_log_marginal(shape: f64, rate: f64, stats: &KeyStats) -> f64 {
    if stats.is_empty() {
        return 0.0;
    }
    let n = stats.full.len() as f64;
    let exposure = stats.exposure(|s| s);
    shape * rate.ln() - ln_gamma(shape) + ln_gamma(shape + n) - (shape + n) * (rate + exposure).ln()
}

/// Prior over the survival parameters of one key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ParamPrior {
    Box(BoxPrior),
    /// Over σ² of a Rayleigh key.
    InverseGamma(InvGammaPosterior),
    /// Gamma(shape, rate) over the rate of an exponential key.
    GammaRate { shape: f64, rate: f64 },
}

impl ParamPrior {
    pub fn log_density(&self, params: &[f64]) -> f64 {
        match self {
            ParamPrior::Box(b) => b.log_density(params),
            ParamPrior::InverseGamma(ig) => match params {
                [v] => ig.log_density(*v),
                _ => f64::NEG_INFINITY,
            },
            ParamPrior::GammaRate { shape, rate } => match params {
                [l] if *l > 0.0 => shape * rate.ln() - ln_gamma(*shape) + (shape - 1.0) * l.ln() - rate * l,
                _ => f64::NEG_INFINITY,
            },
        }
    }

    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        match (self, params) {
            (ParamPrior::Box(_), _) => vec![0.0; params.len()],
            (ParamPrior::InverseGamma(ig), [v]) => vec![-(ig.shape + 1.0) / v + ig.scale / (v * v)],
            (ParamPrior::GammaRate { shape, rate }, [l]) => vec![(shape - 1.0) / l - rate],
            _ => vec![f64::NAN; params.len()],
        }
    }
}

/// Log posterior (up to the evidence) of survival parameters for one key.
/// `-inf` outside the prior support.
pub fn phi_log_posterior(stats: &KeyStats, family: Family, params: &[f64], prior: &ParamPrior) -> Result<f64> {
    let lp = prior.log_density(params);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    let p = SurvivalParams::new(family, params)?;
    Ok(stats_log_likelihood(stats, &p)? + lp)
}

/// Gradient of the survival log likelihood of one key with respect to the
/// parameter vector.
pub fn stats_log_likelihood_gradient(stats: &KeyStats, family: Family, params: &[f64]) -> Vec<f64> {
    let n = stats.full.len() as f64;
    let ln_full = || stats.full.iter().map(|s| s.ln()).sum::<f64>();
    match (family, params) {
        (Family::Exponential, &[rate]) => vec![n / rate - stats.exposure(|s| s)],
        (Family::Weibull, &[k, b]) => {
            let dk = n / k + ln_full() - b * stats.exposure(|s| if s > 0.0 { s.powf(k) * s.ln() } else { 0.0 });
            let db = n / b - stats.exposure(|s| s.powf(k));
            vec![dk, db]
        }
        (Family::Rayleigh, &[v]) => vec![-n / v + stats.exposure(|s| s * s) / (2.0 * v * v)],
        (Family::Gamma, &[a, b]) => {
            let h = 1e-6 * a.max(1.0);
            let d_alpha = |s: f64| (ln_gamma_q(a + h, b * s) - ln_gamma_q(a - h, b * s)) / (2.0 * h);
            let d_beta = |s: f64| if s > 0.0 { s * d_ln_gamma_q_dx(a, b * s) } else { 0.0 };
            let sum = |v: &[f64], g: &dyn Fn(f64) -> f64| v.iter().map(|&s| g(s)).sum::<f64>();
            let da = n * b.ln() + ln_full() - n * digamma(a) + sum(&stats.censored, &d_alpha)
                - sum(&stats.truncated, &d_alpha);
            let db = n * a / b - stats.full.iter().sum::<f64>() + sum(&stats.censored, &d_beta)
                - sum(&stats.truncated, &d_beta);
            vec![da, db]
        }
        _ => vec![f64::NAN; params.len()],
    }
}

/// Gradient of [`phi_log_posterior`].
pub fn phi_log_posterior_gradient(stats: &KeyStats, family: Family, params: &[f64], prior: &ParamPrior) -> Result<Vec<f64>> {
    SurvivalParams::new(family, params)?;
    let mut g = stats_log_likelihood_gradient(stats, family, params);
    for (gi, pi) in g.iter_mut().zip(prior.gradient(params)) {
        *gi += pi;
    }
    Ok(g)
}

/// Result of a MAP search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapEstimate {
    pub params: Vec<f64>,
    pub log_posterior: f64,
    pub converged: bool,
}

/// MAP estimate of the survival parameters of one key under a box prior,
/// by projected L-BFGS from `init` followed by the box's restart points.
pub fn map_estimate(stats: &KeyStats, family: Family, prior: &BoxPrior, init: &[f64]) -> Result<MapEstimate> {
    if stats.full.is_empty() && stats.censored.is_empty() {
        return Err(Error::InsufficientData("no full or censored clock samples".into()));
    }
    let p0 = SurvivalParams::new(family, init)?;
    stats_log_likelihood(stats, &p0)?;
    let log_prior = prior.log_density(init);
    // Per-observation scaling keeps the gradient tolerance meaningful for large samples.
    let scale = 1.0 / (stats.full.len() + stats.censored.len()) as f64;
    maximize(
        |x| {
            let p = SurvivalParams::new(family, x).expect("iterates stay inside a positive box");
            let f = stats_log_likelihood_raw(stats, &p) + log_prior;
            (f, stats_log_likelihood_gradient(stats, family, x))
        },
        prior,
        init,
        scale,
    )
}

/// Maximizes an arbitrary log posterior (value and gradient) over `prior`'s box.
pub fn map_estimate_with<F>(log_posterior: F, prior: &BoxPrior, init: &[f64]) -> Result<MapEstimate>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    maximize(log_posterior, prior, init, 1.0)
}

fn maximize<F>(log_posterior: F, prior: &BoxPrior, init: &[f64], scale: f64) -> Result<MapEstimate>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    if !prior.contains(init) {
        return Err(Error::InvalidParams(format!("initial point {init:?} outside the prior box")));
    }
    let negated = |x: &[f64]| {
        let (f, g) = log_posterior(x);
        let f = if f.is_nan() { f64::INFINITY } else { -f * scale };
        (f, g.into_iter().map(|v| -v * scale).collect())
    };
    let mut best: Option<optim::Minimum> = None;
    let starts = std::iter::once(init.to_vec()).chain(prior.restart_points());
    for start in starts {
        let m = optim::minimize(negated, &start, &prior.lower, &prior.upper, LbfgsbOptions::default());
        if m.value.is_finite() && best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.ok_or_else(|| Error::InsufficientData("log posterior is not finite anywhere tried".into()))?;
    Ok(MapEstimate {
        params: best.x,
        log_posterior: -best.value / scale,
        converged: best.status == optim::Status::Converged,
    })
}

/// Normalized posterior weights of `stats` on an explicit parameter grid.
pub fn grid_posterior(stats: &KeyStats, family: Family, grid: &[Vec<f64>], prior: &ParamPrior) -> Result<Vec<f64>> {
    let logs = grid
        .iter()
        .map(|p| phi_log_posterior(stats, family, p, prior))
        .collect::<Result<Vec<f64>>>()?;
    let z = log_sum_exp(&logs);
    if !z.is_finite() {
        return Err(Error::EmptyGrid);
    }
    Ok(logs.iter().map(|l| (l - z).exp()).collect())
}
