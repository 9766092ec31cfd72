//! Bayesian structure inference. The graph posterior factorizes over nodes,
//! so every node's parent set is scored independently by the marginal
//! likelihood of its survival and transition statistics.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::{node_stats, stats_log_likelihood_raw, KeyStats, StatKey};
use crate::model::{derive_windows, num_parent_states, NodeId, Trajectory, Window};
use crate::params::{dirichlet_log_evidence, exponential_log_marginal, rayleigh_log_marginal, BoxPrior, InvGammaPosterior, ParamPrior};
use crate::quadrature::{log_romberg, RombergOptions};
use crate::special::{ln_diff_exp, ln_gamma, ln_gamma_p, ln_gamma_q, log_sum_exp};
use crate::survival::{Family, SurvivalParams};

/// All subsets of the other nodes with at most `max_indegree` members, by
/// size and then lexicographically. `max_indegree` is capped at `num_nodes - 1`.
pub fn enumerate_parent_sets(num_nodes: usize, n: NodeId, max_indegree: usize) -> Vec<Vec<NodeId>> {
    let others: Vec<NodeId> = (0..num_nodes).filter(|&m| m != n).collect();
    let mut out = vec![Vec::new()];
    for size in 1..=max_indegree.min(others.len()) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&i| others[i]).collect());
            // advance to the next combination in lexicographic order
            let Some(pos) = (0..size).rev().find(|&p| idx[p] < others.len() - size + p) else {
                break;
            };
            idx[pos] += 1;
            for p in pos + 1..size {
                idx[p] = idx[p - 1] + 1;
            }
        }
    }
    out
}

/// How survival parameters are integrated out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalConfig {
    pub family: Family,
    pub prior: ParamPrior,
    /// Symmetric Dirichlet concentration per target state.
    pub dirichlet_alpha: f64,
    #[serde(skip)]
    pub romberg: RombergOptions,
}

impl MarginalConfig {
    /// `family` with the uniform `[0.1, 100]` box prior.
    pub fn augmented(family: Family) -> Self {
        Self {
            family,
            prior: ParamPrior::Box(BoxPrior::default_for(family)),
            dirichlet_alpha: 1.0,
            romberg: RombergOptions::default(),
        }
    }

    /// The classical CTBN score: exponential holding times with a conjugate
    /// Gamma prior on the rate, integrated in closed form. `Gamma(1, 0.01)`
    /// has nearly the density of the default box over `[0.1, 100]`, so both
    /// scores pay a comparable price per rate parameter.
    pub fn exponential_baseline() -> Self {
        Self {
            family: Family::Exponential,
            prior: ParamPrior::GammaRate { shape: 1.0, rate: 0.01 },
            dirichlet_alpha: 1.0,
            romberg: RombergOptions::default(),
        }
    }
}

/// Log marginal likelihood of the survival statistics of one key.
pub fn phi_log_marginal(stats: &KeyStats, key: StatKey, cfg: &MarginalConfig) -> Result<f64> {
    if stats.is_empty() {
        return Ok(0.0);
    }
    let fail = |levels| Error::Integration { key: key.to_string(), levels };
    match (&cfg.prior, cfg.family) {
        (ParamPrior::InverseGamma(ig), Family::Rayleigh) => Ok(rayleigh_log_marginal(ig, stats)),
        (ParamPrior::GammaRate { shape, rate }, Family::Exponential) => Ok(exponential_log_marginal(*shape, *rate, stats)),
        (ParamPrior::Box(b), Family::Weibull) => weibull_box_marginal(stats, b, cfg.romberg).map_err(fail),
        (ParamPrior::Box(b), Family::Gamma) => gamma_box_marginal(stats, b, cfg.romberg).map_err(fail),
        (ParamPrior::Box(b), family) => {
            let log_width = (b.upper[0] - b.lower[0]).ln();
            log_romberg(
                |t| {
                    let v = t.exp();
                    let p = SurvivalParams::new(family, &[v]).expect("positive parameter");
                    stats_log_likelihood_raw(stats, &p) + t - log_width
                },
                b.lower[0].ln(),
                b.upper[0].ln(),
                cfg.romberg,
            )
            .map_err(fail)
        }
        (prior, family) => Err(Error::Config(format!("prior {prior:?} is not supported for family {family}"))),
    }
}

/// Numerical counterpart of the closed-form Rayleigh marginal, integrating
/// over `ln σ²` in `[ln 1e-8, ln 1e8]`.
pub fn rayleigh_log_marginal_numeric(prior: &InvGammaPosterior, stats: &KeyStats, opts: RombergOptions) -> std::result::Result<f64, usize> {
    if stats.is_empty() {
        return Ok(0.0);
    }
    log_romberg(
        |t| {
            let v = t.exp();
            let p = SurvivalParams::rayleigh(v).expect("positive parameter");
            stats_log_likelihood_raw(stats, &p) + prior.log_density(v) + t
        },
        1e-8f64.ln(),
        1e8f64.ln(),
        opts,
    )
}

/// Weibull under a box prior. The rate integral has a closed form through
/// the regularized incomplete gamma function; Romberg runs over `ln k` only.
fn weibull_box_marginal(stats: &KeyStats, prior: &BoxPrior, opts: RombergOptions) -> std::result::Result<f64, usize> {
    let n = stats.full.len() as f64;
    let ln_full: f64 = stats.full.iter().map(|s| s.ln()).sum();
    let ln_pos: Vec<f64> = stats.full.iter().chain(&stats.censored).map(|s| s.ln()).collect();
    let ln_neg: Vec<f64> = stats.truncated.iter().map(|s| s.ln()).collect();
    let (kl, ku, bl, bu) = (prior.lower[0], prior.upper[0], prior.lower[1], prior.upper[1]);
    let log_norm = (ku - kl).ln() + (bu - bl).ln();
    let a = n + 1.0;
    // ∫ b^(a-1) db over the box, the limit of the rate integral as exposure → 0
    let ln_flat = ln_diff_exp(a * bu.ln(), a * bl.ln()) - a.ln();
    let integrand = |t: f64| {
        let k = t.exp();
        // exposure Σ s^k can underflow for large k, so it stays in logs
        let pos = log_sum_exp(&ln_pos.iter().map(|ls| k * ls).collect::<Vec<_>>());
        let ln_exposure = if ln_neg.is_empty() {
            pos
        } else {
            let neg = log_sum_exp(&ln_neg.iter().map(|ls| k * ls).collect::<Vec<_>>());
            if neg >= pos {
                return f64::NEG_INFINITY;
            }
            ln_diff_exp(pos, neg)
        };
        let ln_rate_integral = if ln_exposure + bu.ln() < -40.0 {
            ln_flat
        } else {
            let exposure = ln_exposure.exp();
            let (xl, xu) = (bl * exposure, bu * exposure);
            let ln_mass = if xl >= a {
                ln_diff_exp(ln_gamma_q(a, xl), ln_gamma_q(a, xu))
            } else {
                ln_diff_exp(ln_gamma_p(a, xu), ln_gamma_p(a, xl))
            };
            ln_gamma(a) - a * ln_exposure + ln_mass
        };
        n * t + (k - 1.0) * ln_full + ln_rate_integral + t - log_norm
    };
    log_romberg(integrand, kl.ln(), ku.ln(), opts)
}

/// Gamma under a box prior: nested Romberg over `ln α` and `ln β`.
fn gamma_box_marginal(stats: &KeyStats, prior: &BoxPrior, opts: RombergOptions) -> std::result::Result<f64, usize> {
    let n = stats.full.len() as f64;
    let ln_full: f64 = stats.full.iter().map(|s| s.ln()).sum();
    let sum_full: f64 = stats.full.iter().sum();
    let (al, au, bl, bu) = (prior.lower[0], prior.upper[0], prior.lower[1], prior.upper[1]);
    let log_norm = (au - al).ln() + (bu - bl).ln();
    let mut inner_failure = None;
    let outer = log_romberg(
        |ta| {
            let alpha = ta.exp();
            let fixed = (alpha - 1.0) * ln_full - n * ln_gamma(alpha);
            let inner = log_romberg(
                |tb| {
                    let beta = tb.exp();
                    let censored: f64 = stats.censored.iter().map(|&s| ln_gamma_q(alpha, beta * s)).sum();
                    let truncated: f64 = stats.truncated.iter().map(|&s| ln_gamma_q(alpha, beta * s)).sum();
                    n * alpha * tb - beta * sum_full + censored - truncated + tb
                },
                bl.ln(),
                bu.ln(),
                opts,
            );
            match inner {
                Ok(v) => fixed + v + ta - log_norm,
                Err(levels) => {
                    inner_failure.get_or_insert(levels);
                    f64::NEG_INFINITY
                }
            }
        },
        al.ln(),
        au.ln(),
        opts,
    );
    match inner_failure {
        Some(levels) => Err(levels),
        None => outer,
    }
}

/// Log marginal likelihood of node `n` with parent set `parents`, from
/// regime statistics merged over trajectories.
pub fn local_log_marginal_from_stats(stats: &[KeyStats], n: NodeId, parents: &[NodeId], cardinalities: &[usize], cfg: &MarginalConfig) -> Result<f64> {
    let u_count = num_parent_states(parents, cardinalities);
    let mut total = 0.0;
    for (row, ks) in stats.iter().enumerate() {
        if ks.is_empty() {
            continue;
        }
        let key = StatKey { node: n, state: row / u_count, parent_state: row % u_count };
        total += phi_log_marginal(ks, key, cfg)?;
        total += dirichlet_log_evidence(&ks.target_counts, key.state, cfg.dirichlet_alpha);
    }
    Ok(total)
}

/// Log marginal likelihood of the trajectories for node `n` under `parents`.
pub fn local_log_marginal(trajs: &[Trajectory], n: NodeId, parents: &[NodeId], cardinalities: &[usize], cfg: &MarginalConfig) -> Result<f64> {
    let mut acc = empty_stats(n, parents, cardinalities);
    for t in trajs {
        check_complete(t, cardinalities)?;
        merge_rows(&mut acc, &node_stats(&derive_windows(t)?, n, parents, cardinalities));
    }
    local_log_marginal_from_stats(&acc, n, parents, cardinalities, cfg)
}

fn empty_stats(n: NodeId, parents: &[NodeId], cardinalities: &[usize]) -> Vec<KeyStats> {
    vec![KeyStats::new(cardinalities[n]); cardinalities[n] * num_parent_states(parents, cardinalities)]
}

fn merge_rows(acc: &mut [KeyStats], rows: &[KeyStats]) {
    for (a, r) in acc.iter_mut().zip(rows) {
        a.merge(r);
    }
}

fn check_complete(t: &Trajectory, cardinalities: &[usize]) -> Result<()> {
    if t.num_nodes() != cardinalities.len() {
        return Err(Error::InvalidTrajectory(format!(
            "trajectory has {} nodes, expected {}",
            t.num_nodes(),
            cardinalities.len()
        )));
    }
    t.validate(Some(cardinalities))
}

/// Factorized prior over parent sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub enum GraphPrior {
    #[default]
    Uniform,
    /// `p(set) ∝ exp(-rho · |set|)`.
    EdgePenalty { rho: f64 },
}

impl GraphPrior {
    pub fn log_weight(&self, set: &[NodeId]) -> f64 {
        match self {
            GraphPrior::Uniform => 0.0,
            GraphPrior::EdgePenalty { rho } => -rho * set.len() as f64,
        }
    }
}

/// Posterior over parent sets of one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodePosterior {
    pub node: NodeId,
    pub sets: Vec<Vec<NodeId>>,
    pub log_marginals: Vec<f64>,
    /// Normalized log posterior weights.
    pub log_weights: Vec<f64>,
}

impl NodePosterior {
    fn new(node: NodeId, sets: Vec<Vec<NodeId>>, log_marginals: Vec<f64>, prior: GraphPrior) -> Self {
        let scores: Vec<f64> = sets.iter().zip(&log_marginals).map(|(s, m)| m + prior.log_weight(s)).collect();
        let z = log_sum_exp(&scores);
        let log_weights = scores.iter().map(|s| s - z).collect();
        Self { node, sets, log_marginals, log_weights }
    }

    /// The maximum a posteriori parent set (first one on ties).
    pub fn best(&self) -> &[NodeId] {
        let mut best = 0;
        for (i, w) in self.log_weights.iter().enumerate() {
            if *w > self.log_weights[best] {
                best = i;
            }
        }
        &self.sets[best]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParentSetPosterior {
    pub nodes: Vec<NodePosterior>,
}

impl ParentSetPosterior {
    /// Builds a posterior from per-node log marginals of the given candidates.
    pub fn from_marginals(candidates: Vec<Vec<Vec<NodeId>>>, marginals: Vec<Vec<f64>>, prior: GraphPrior) -> Self {
        let nodes = candidates
            .into_iter()
            .zip(marginals)
            .enumerate()
            .map(|(n, (sets, m))| NodePosterior::new(n, sets, m, prior))
            .collect();
        Self { nodes }
    }

    pub fn map_parents(&self) -> Vec<Vec<NodeId>> {
        self.nodes.iter().map(|p| p.best().to_vec()).collect()
    }
}

/// Posterior probability of every edge `m → n`, with a zero diagonal.
pub fn edge_marginals(p: &ParentSetPosterior) -> Vec<Vec<f64>> {
    let n_nodes = p.nodes.len();
    let mut out = vec![vec![0.0; n_nodes]; n_nodes];
    for np in &p.nodes {
        for (set, lw) in np.sets.iter().zip(&np.log_weights) {
            let w = lw.exp();
            for &m in set {
                out[m][np.node] += w;
            }
        }
    }
    for row in &mut out {
        for v in row.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    out
}

/// How evidence from a stream of trajectories is combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum EvidenceMode {
    /// Statistics are pooled and the parameters integrated once over all of
    /// them, so the result equals a batch fit on the concatenated evidence.
    #[default]
    Pooled,
    /// Every trajectory's parameters are integrated separately and the log
    /// marginals summed.
    PerTrajectory,
}

/// Settings of a structure search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureConfig {
    pub marginal: MarginalConfig,
    pub max_indegree: usize,
    pub graph_prior: GraphPrior,
    pub mode: EvidenceMode,
}

impl StructureConfig {
    pub fn new(marginal: MarginalConfig) -> Self {
        Self { marginal, max_indegree: 3, graph_prior: GraphPrior::Uniform, mode: EvidenceMode::Pooled }
    }
}

/// Incremental scorer holding per-candidate statistics.
#[derive(Debug, Clone)]
pub struct StructureScorer {
    cardinalities: Vec<usize>,
    cfg: StructureConfig,
    candidates: Vec<Vec<Vec<NodeId>>>,
    stats: Vec<Vec<Vec<KeyStats>>>,
    summed: Vec<Vec<f64>>,
    observed: usize,
}

impl StructureScorer {
    pub fn new(cardinalities: &[usize], cfg: StructureConfig) -> Self {
        let n_nodes = cardinalities.len();
        let candidates: Vec<Vec<Vec<NodeId>>> =
            (0..n_nodes).map(|n| enumerate_parent_sets(n_nodes, n, cfg.max_indegree)).collect();
        let stats = candidates
            .iter()
            .enumerate()
            .map(|(n, sets)| sets.iter().map(|s| empty_stats(n, s, cardinalities)).collect())
            .collect();
        let summed = candidates.iter().map(|sets| vec![0.0; sets.len()]).collect();
        Self { cardinalities: cardinalities.to_vec(), cfg, candidates, stats, summed, observed: 0 }
    }

    pub fn num_observed(&self) -> usize {
        self.observed
    }

    fn jobs(&self) -> Vec<(usize, usize)> {
        self.candidates
            .iter()
            .enumerate()
            .flat_map(|(n, sets)| (0..sets.len()).map(move |i| (n, i)))
            .collect()
    }

    pub fn add_trajectory(&mut self, traj: &Trajectory) -> Result<()> {
        check_complete(traj, &self.cardinalities)?;
        let windows: Vec<Window> = derive_windows(traj)?;
        let cards = &self.cardinalities;
        let fresh: Vec<Vec<KeyStats>> = self
            .jobs()
            .into_par_iter()
            .map(|(n, i)| node_stats(&windows, n, &self.candidates[n][i], cards))
            .collect();
        let jobs = self.jobs();
        match self.cfg.mode {
            EvidenceMode::Pooled => {
                for ((n, i), rows) in jobs.into_iter().zip(fresh) {
                    merge_rows(&mut self.stats[n][i], &rows);
                }
            }
            EvidenceMode::PerTrajectory => {
                let scores = jobs
                    .par_iter()
                    .zip(fresh.par_iter())
                    .map(|(&(n, i), rows)| local_log_marginal_from_stats(rows, n, &self.candidates[n][i], cards, &self.cfg.marginal))
                    .collect::<Result<Vec<f64>>>()?;
                for ((n, i), s) in jobs.into_iter().zip(scores) {
                    self.summed[n][i] += s;
                }
            }
        }
        self.observed += 1;
        Ok(())
    }

    /// Per-node log marginals of every candidate under the evidence so far.
    pub fn log_marginals(&self) -> Result<Vec<Vec<f64>>> {
        if self.cfg.mode == EvidenceMode::PerTrajectory {
            return Ok(self.summed.clone());
        }
        let jobs = self.jobs();
        let flat = jobs
            .par_iter()
            .map(|&(n, i)| local_log_marginal_from_stats(&self.stats[n][i], n, &self.candidates[n][i], &self.cardinalities, &self.cfg.marginal))
            .collect::<Result<Vec<f64>>>()?;
        let mut out: Vec<Vec<f64>> = self.candidates.iter().map(|s| Vec::with_capacity(s.len())).collect();
        for ((n, _), v) in jobs.into_iter().zip(flat) {
            out[n].push(v);
        }
        Ok(out)
    }

    pub fn posterior(&self) -> Result<ParentSetPosterior> {
        Ok(ParentSetPosterior::from_marginals(self.candidates.clone(), self.log_marginals()?, self.cfg.graph_prior))
    }
}

/// Parent-set posterior of every node given all trajectories.
pub fn graph_posterior(trajs: &[Trajectory], cardinalities: &[usize], cfg: &StructureConfig) -> Result<ParentSetPosterior> {
    let mut scorer = StructureScorer::new(cardinalities, cfg.clone());
    for t in trajs {
        scorer.add_trajectory(t)?;
    }
    scorer.posterior()
}

/// Posterior after each trajectory of the stream.
pub fn sequential_posterior_update(trajs: &[Trajectory], cardinalities: &[usize], cfg: &StructureConfig) -> Result<Vec<ParentSetPosterior>> {
    let mut scorer = StructureScorer::new(cardinalities, cfg.clone());
    let mut out = Vec::with_capacity(trajs.len());
    for t in trajs {
        scorer.add_trajectory(t)?;
        out.push(scorer.posterior()?);
    }
    Ok(out)
}

fn off_diagonal(scores: &[Vec<f64>], truth: &[Vec<u8>]) -> Result<(Vec<f64>, Vec<bool>)> {
    let n = truth.len();
    if scores.len() != n || scores.iter().any(|r| r.len() != n) || truth.iter().any(|r| r.len() != n) {
        return Err(Error::Config("score and truth matrices must be square and of equal size".into()));
    }
    let mut s = Vec::new();
    let mut l = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s.push(scores[i][j]);
                l.push(truth[i][j] != 0);
            }
        }
    }
    Ok((s, l))
}

fn check_labels(labels: &[bool]) -> Result<usize> {
    let pos = labels.iter().filter(|&&b| b).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateTruth(format!("{pos} positives among {} candidate edges", labels.len())));
    }
    Ok(pos)
}

/// Mann–Whitney AUROC with midranks for ties.
pub fn auroc_scores(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos = check_labels(labels)?;
    let neg = labels.len() - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// Average precision: area under the step-interpolated precision–recall
/// curve, with tied scores entering as one block.
pub fn aupr_scores(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos = check_labels(labels)? as f64;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut area) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let block_tp = order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        tp += block_tp;
        seen += (j - i + 1) as f64;
        area += block_tp / pos * (tp / seen);
        i = j + 1;
    }
    Ok(area)
}

/// AUROC of an edge-score matrix against a 0/1 adjacency, off-diagonal only.
pub fn auroc(scores: &[Vec<f64>], truth: &[Vec<u8>]) -> Result<f64> {
    let (s, l) = off_diagonal(scores, truth)?;
    auroc_scores(&s, &l)
}

/// AUPR of an edge-score matrix against a 0/1 adjacency, off-diagonal only.
pub fn aupr(scores: &[Vec<f64>], truth: &[Vec<u8>]) -> Result<f64> {
    let (s, l) = off_diagonal(scores, truth)?;
    aupr_scores(&s, &l)
}
