//! Synthetic studies: random models, parameter recovery, structure recovery
//! and the fixed-shape sweep. Every run is a pure function of its config.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, OrderStatistics};

use crate::error::{Error, Result};
use crate::likelihood::regime_stats;
use crate::model::{num_parent_states, ClockedState, Graph, NetworkModel, NodeId, Trajectory};
use crate::params::{map_estimate, BoxPrior, ParamPrior};
use crate::rng::stream_rng;
use crate::simulator::{gillespie_sample, gillespie_sample_events};
use crate::structure::{aupr, auroc, edge_marginals, GraphPrior, MarginalConfig, StructureConfig, StructureScorer};
use crate::survival::{Family, SurvivalParams};

fn default_num_nodes() -> usize {
    4
}
fn default_family() -> Family {
    Family::Weibull
}
fn default_max_indegree() -> usize {
    3
}
fn default_cardinality() -> usize {
    2
}
fn default_replicates() -> usize {
    50
}
fn default_sample_sizes() -> Vec<usize> {
    vec![10, 100, 1000]
}
fn default_graphs() -> usize {
    20
}
fn default_trajectories() -> usize {
    100
}
fn default_horizon() -> f64 {
    5.0
}
fn default_shapes() -> Vec<f64> {
    vec![1.0, 3.0, 5.0, 7.0, 9.0]
}
fn default_sweep_graphs() -> usize {
    10
}
fn default_sweep_trajectories() -> usize {
    50
}
fn default_box_lower() -> f64 {
    BoxPrior::DEFAULT_LOWER
}
fn default_box_upper() -> f64 {
    BoxPrior::DEFAULT_UPPER
}

/// Settings shared by all experiments. Only `seed` is required in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_num_nodes")]
    pub num_nodes: usize,
    #[serde(default = "default_family")]
    pub family: Family,
    /// Upper bound of the in-degree of generated graphs and of scored parent sets.
    #[serde(default = "default_max_indegree")]
    pub max_indegree: usize,
    #[serde(default = "default_cardinality")]
    pub cardinality: usize,
    /// Replicate trajectories in the parameter-recovery study.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Prefix lengths (in transitions) at which parameters are estimated.
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_graphs")]
    pub graphs: usize,
    /// Trajectories per graph in the structure study.
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    /// Observation length of every structure-study trajectory.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Trajectory counts after which the posterior is scored; all by default.
    #[serde(default)]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default = "default_shapes")]
    pub shapes: Vec<f64>,
    #[serde(default = "default_sweep_graphs")]
    pub sweep_graphs: usize,
    #[serde(default = "default_sweep_trajectories")]
    pub sweep_trajectories: usize,
    #[serde(default = "default_box_lower")]
    pub box_lower: f64,
    #[serde(default = "default_box_upper")]
    pub box_upper: f64,
    /// Per-edge log penalty of the graph prior; uniform prior when absent.
    #[serde(default)]
    pub edge_penalty: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults are valid")
    }

    /// The counts used in the original study.
    pub fn paper_scale(mut self) -> Self {
        self.replicates = 1000;
        self.sample_sizes = vec![100, 1000, 10_000];
        self.graphs = 500;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_nodes < 2 {
            return bad("num_nodes must be at least 2");
        }
        if self.cardinality < 2 {
            return bad("cardinality must be at least 2");
        }
        if self.replicates == 0 || self.graphs == 0 || self.trajectories == 0 || self.sweep_graphs == 0 || self.sweep_trajectories == 0 {
            return bad("counts must be positive");
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) || !self.sample_sizes.windows(2).all(|w| w[0] < w[1]) {
            return bad("sample_sizes must be positive and strictly increasing");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if self.shapes.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return bad("shapes must be positive");
        }
        if let Some(cp) = &self.checkpoints {
            if cp.is_empty() || cp.iter().any(|&c| c == 0 || c > self.trajectories.max(self.sweep_trajectories)) {
                return bad("checkpoints must lie in 1..=trajectories");
            }
        }
        if let Some(rho) = self.edge_penalty {
            if !(rho >= 0.0 && rho.is_finite()) {
                return bad("edge_penalty must be nonnegative");
            }
        }
        BoxPrior::uniform(self.family, self.box_lower, self.box_upper)?;
        Ok(())
    }

    fn box_prior(&self, family: Family) -> Result<BoxPrior> {
        BoxPrior::uniform(family, self.box_lower, self.box_upper)
    }

    fn graph_prior(&self) -> GraphPrior {
        self.edge_penalty.map_or(GraphPrior::Uniform, |rho| GraphPrior::EdgePenalty { rho })
    }

    fn checkpoints_for(&self, trajectories: usize) -> Vec<usize> {
        match &self.checkpoints {
            Some(cp) => cp.iter().copied().filter(|&c| c <= trajectories).collect(),
            None => (1..=trajectories).collect(),
        }
    }
}

/// Random graph: each node draws its in-degree uniformly from
/// `0..=max_indegree` and takes as parents the largest entries of a
/// symmetric Dirichlet(1) vector over the other nodes.
pub fn random_graph<R: Rng + ?Sized>(num_nodes: usize, max_indegree: usize, rng: &mut R) -> Result<Graph> {
    if num_nodes < 2 {
        return Err(Error::Config("random graphs need at least two nodes".into()));
    }
    let k = max_indegree.min(num_nodes - 1);
    let mut parent_sets = Vec::with_capacity(num_nodes);
    for n in 0..num_nodes {
        let degree = rng.random_range(0..=k);
        let others: Vec<NodeId> = (0..num_nodes).filter(|&m| m != n).collect();
        let draws: Vec<f64> = others.iter().map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        let mut order: Vec<usize> = (0..others.len()).collect();
        order.sort_by(|&a, &b| (draws[b] / total).total_cmp(&(draws[a] / total)).then(a.cmp(&b)));
        parent_sets.push(order[..degree].iter().map(|&i| others[i]).collect());
    }
    Graph::from_parent_sets(&parent_sets)
}

/// Shape and rate hyperpriors, as `(shape, rate)` of Gamma distributions.
pub fn hyperpriors(family: Family) -> Result<[(f64, f64); 2]> {
    match family {
        Family::Weibull => Ok([(8.0, 0.5), (5.0, 3.0)]),
        Family::Gamma => Ok([(40.0, 5.0), (25.0, 2.5)]),
        f => Err(Error::Config(format!("no parameter hyperprior for family {f}"))),
    }
}

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("valid hyperprior").sample(rng)
}

fn dirichlet_row<R: Rng + ?Sized>(card: usize, x: usize, rng: &mut R) -> Vec<f64> {
    if card == 2 {
        return NetworkModel::binary_theta_row(x);
    }
    let mut row: Vec<f64> = (0..card).map(|y| if y == x { 0.0 } else { Exp1.sample(rng) }).collect();
    let total: f64 = row.iter().sum();
    for v in &mut row {
        *v /= total;
    }
    // absorb rounding so the row sums to one
    let last = if x == card - 1 { card - 2 } else { card - 1 };
    let rest: f64 = row.iter().enumerate().filter(|(i, _)| *i != last).map(|(_, v)| v).sum();
    row[last] = 1.0 - rest;
    row
}

/// Random parameters for every key of `graph`; `fixed_shape` pins all shapes.
pub fn random_params<R: Rng + ?Sized>(
    family: Family,
    graph: &Graph,
    cardinalities: &[usize],
    fixed_shape: Option<f64>,
    rng: &mut R,
) -> Result<NetworkModel> {
    let [(s_shape, s_rate), (r_shape, r_rate)] = hyperpriors(family)?;
    let mut phi = Vec::with_capacity(graph.num_nodes());
    let mut theta = Vec::with_capacity(graph.num_nodes());
    for n in 0..graph.num_nodes() {
        let card = cardinalities[n];
        let rows = card * num_parent_states(graph.parents(n), cardinalities);
        let u_count = rows / card;
        let mut phi_n = Vec::with_capacity(rows);
        let mut theta_n = Vec::with_capacity(rows);
        for row in 0..rows {
            let shape = gamma_draw(s_shape, s_rate, rng);
            let rate = gamma_draw(r_shape, r_rate, rng);
            phi_n.push(SurvivalParams::new(family, &[fixed_shape.unwrap_or(shape), rate])?);
            theta_n.push(dirichlet_row(card, row / u_count, rng));
        }
        phi.push(phi_n);
        theta.push(theta_n);
    }
    NetworkModel::new(graph.clone(), cardinalities.to_vec(), phi, theta)
}

fn random_initial<R: Rng + ?Sized>(cardinalities: &[usize], rng: &mut R) -> ClockedState {
    ClockedState::fresh(cardinalities.iter().map(|&c| rng.random_range(0..c)).collect())
}

/// Empirical quantile (linear interpolation between order statistics).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    Data::new(values.to_vec()).quantile(q)
}

/// Spearman rank correlation and the one-sided p-value for a positive
/// association, from the t approximation.
pub fn spearman(x: &[f64], y: &[f64]) -> (f64, f64) {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
                j += 1;
            }
            for &k in &order[i..=j] {
                r[k] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mean).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - mean).powi(2)).sum();
    let rho = cov / (vx * vy).sqrt();
    if !rho.is_finite() || n < 3.0 {
        return (f64::NAN, f64::NAN);
    }
    let df = n - 2.0;
    let p = if rho >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        1.0 - StudentsT::new(0.0, 1.0, df).expect("df > 0").cdf(t)
    };
    (rho, p)
}

/// One MAP estimate of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub replicate: usize,
    pub size: usize,
    pub key: String,
    pub role: String,
    pub truth: f64,
    pub estimate: f64,
}

/// Squared-error quantiles over replicates for one (size, role).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseRow {
    pub size: usize,
    pub role: String,
    pub replicates: usize,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
}

/// Median relative error over replicates for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelErrorRow {
    pub size: usize,
    pub key: String,
    pub role: String,
    pub truth: f64,
    pub replicates: usize,
    pub median_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseReport {
    pub graph_edges: Vec<(NodeId, NodeId)>,
    pub rows: Vec<MseRow>,
    pub relative_errors: Vec<RelErrorRow>,
    pub estimates: Vec<EstimateRow>,
    pub skipped_keys: usize,
}

/// Parameter recovery: one random model, `replicates` long trajectories and
/// a MAP fit of every visited key on each prefix length.
pub fn mse_experiment(cfg: &ExperimentConfig) -> Result<MseReport> {
    cfg.validate()?;
    let family = cfg.family;
    let cards = vec![cfg.cardinality; cfg.num_nodes];
    let mut model_rng = stream_rng(cfg.seed, 0);
    let graph = random_graph(cfg.num_nodes, cfg.max_indegree, &mut model_rng)?;
    let model = random_params(family, &graph, &cards, None, &mut model_rng)?;
    let prior = cfg.box_prior(family)?;
    let init_params = vec![1.0; family.arity()];
    let max_size = *cfg.sample_sizes.last().expect("validated nonempty");

    let per_replicate = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<(Vec<EstimateRow>, usize)> {
            let mut rng = stream_rng(cfg.seed, 1 + r as u64);
            let init = random_initial(&cards, &mut rng);
            let traj = gillespie_sample_events(&model, &init, max_size, &mut rng)?;
            let mut rows = Vec::new();
            let mut skipped = 0;
            for &size in &cfg.sample_sizes {
                let stats = regime_stats(&traj.prefix(size), &graph, &cards)?;
                for (key, ks) in &stats.keys {
                    if ks.full.is_empty() {
                        log::warn!("replicate {r}, size {size}: key {key} has no transitions, skipped");
                        skipped += 1;
                        continue;
                    }
                    let est = map_estimate(ks, family, &prior, &init_params)?;
                    let truth = model.phi(key.node, key.state, key.parent_state);
                    for ((role, t), e) in family.roles().iter().zip(truth.params()).zip(&est.params) {
                        rows.push(EstimateRow { replicate: r, size, key: key.to_string(), role: role.to_string(), truth: *t, estimate: *e });
                    }
                }
            }
            Ok((rows, skipped))
        })
        .collect::<Result<Vec<_>>>()?;

    let skipped_keys = per_replicate.iter().map(|(_, s)| s).sum();
    let estimates: Vec<EstimateRow> = per_replicate.into_iter().flat_map(|(rows, _)| rows).collect();

    let mut rows = Vec::new();
    for &size in &cfg.sample_sizes {
        for role in family.roles() {
            let mse: Vec<f64> = (0..cfg.replicates)
                .filter_map(|r| {
                    let sq: Vec<f64> = estimates
                        .iter()
                        .filter(|e| e.replicate == r && e.size == size && e.role == *role)
                        .map(|e| (e.estimate - e.truth).powi(2))
                        .collect();
                    (!sq.is_empty()).then(|| sq.iter().sum::<f64>() / sq.len() as f64)
                })
                .collect();
            rows.push(MseRow {
                size,
                role: role.to_string(),
                replicates: mse.len(),
                q10: quantile(&mse, 0.1),
                median: quantile(&mse, 0.5),
                q90: quantile(&mse, 0.9),
            });
        }
    }

    let mut grouped: BTreeMap<(usize, String, String), (f64, Vec<f64>)> = BTreeMap::new();
    for e in &estimates {
        grouped
            .entry((e.size, e.key.clone(), e.role.clone()))
            .or_insert_with(|| (e.truth, Vec::new()))
            .1
            .push(((e.estimate - e.truth) / e.truth).abs());
    }
    let relative_errors = grouped
        .into_iter()
        .map(|((size, key, role), (truth, errs))| RelErrorRow {
            size,
            key,
            role,
            truth,
            replicates: errs.len(),
            median_rel_error: quantile(&errs, 0.5),
        })
        .collect();

    Ok(MseReport { graph_edges: graph.edges(), rows, relative_errors, estimates, skipped_keys })
}

/// Scores of one graph after a given number of trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureRow {
    pub graph: usize,
    pub trajectories: usize,
    pub auroc_augmented: f64,
    pub aupr_augmented: f64,
    pub auroc_baseline: f64,
    pub aupr_baseline: f64,
}

/// Quantiles (0.2 / 0.5 / 0.8) of a score across graphs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub q20: f64,
    pub median: f64,
    pub q80: f64,
}

impl Band {
    pub fn of(values: &[f64]) -> Self {
        Self { q20: quantile(values, 0.2), median: quantile(values, 0.5), q80: quantile(values, 0.8) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureSummaryRow {
    pub trajectories: usize,
    pub auroc_augmented: Band,
    pub aupr_augmented: Band,
    pub auroc_baseline: Band,
    pub aupr_baseline: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub rows: Vec<StructureRow>,
    pub summary: Vec<StructureSummaryRow>,
}

/// Random graph with at least one edge and one non-edge, plus its model.
fn random_instance(cfg: &ExperimentConfig, family: Family, fixed_shape: Option<f64>, rng: &mut ChaCha8Rng) -> Result<NetworkModel> {
    let cards = vec![cfg.cardinality; cfg.num_nodes];
    let possible = cfg.num_nodes * (cfg.num_nodes - 1);
    for _ in 0..1000 {
        let graph = random_graph(cfg.num_nodes, cfg.max_indegree, rng)?;
        let edges = graph.edges().len();
        if edges > 0 && edges < possible {
            return random_params(family, &graph, &cards, fixed_shape, rng);
        }
    }
    Err(Error::DegenerateTruth("could not draw a graph with both edges and non-edges".into()))
}

/// Streams trajectories of one model through the augmented and baseline
/// scorers and scores both posteriors at each checkpoint.
fn score_instance(
    cfg: &ExperimentConfig,
    model: &NetworkModel,
    graph_index: usize,
    trajectories: usize,
    augmented_family: Family,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<StructureRow>> {
    let cards = model.cardinalities().to_vec();
    let truth = model.graph().adjacency();
    let make = |marginal: MarginalConfig| StructureConfig {
        max_indegree: cfg.max_indegree.min(cfg.num_nodes - 1),
        graph_prior: cfg.graph_prior(),
        ..StructureConfig::new(marginal)
    };
    let augmented = MarginalConfig {
        prior: ParamPrior::Box(cfg.box_prior(augmented_family)?),
        ..MarginalConfig::augmented(augmented_family)
    };
    let mut aug = StructureScorer::new(&cards, make(augmented));
    let mut base = StructureScorer::new(&cards, make(MarginalConfig::exponential_baseline()));
    let checkpoints = cfg.checkpoints_for(trajectories);
    let mut rows = Vec::new();
    for t in 1..=trajectories {
        let init = random_initial(&cards, rng);
        let traj: Trajectory = gillespie_sample(model, &init, cfg.horizon, rng)?;
        aug.add_trajectory(&traj)?;
        base.add_trajectory(&traj)?;
        if checkpoints.contains(&t) {
            let ea = edge_marginals(&aug.posterior()?);
            let eb = edge_marginals(&base.posterior()?);
            rows.push(StructureRow {
                graph: graph_index,
                trajectories: t,
                auroc_augmented: auroc(&ea, &truth)?,
                aupr_augmented: aupr(&ea, &truth)?,
                auroc_baseline: auroc(&eb, &truth)?,
                aupr_baseline: aupr(&eb, &truth)?,
            });
        }
    }
    Ok(rows)
}

/// Structure recovery on `graphs` random models of the configured family.
pub fn structure_experiment(cfg: &ExperimentConfig) -> Result<StructureReport> {
    cfg.validate()?;
    let family = cfg.family;
    let per_graph = (0..cfg.graphs)
        .into_par_iter()
        .map(|g| {
            let mut rng = stream_rng(cfg.seed, 1 + g as u64);
            let model = if family == Family::Exponential {
                exponential_instance(cfg, &mut rng)?
            } else {
                random_instance(cfg, family, None, &mut rng)?
            };
            score_instance(cfg, &model, g, cfg.trajectories, family, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<StructureRow> = per_graph.into_iter().flatten().collect();
    let summary = cfg
        .checkpoints_for(cfg.trajectories)
        .into_iter()
        .map(|t| {
            let at: Vec<&StructureRow> = rows.iter().filter(|r| r.trajectories == t).collect();
            let col = |f: fn(&StructureRow) -> f64| Band::of(&at.iter().map(|r| f(r)).collect::<Vec<_>>());
            StructureSummaryRow {
                trajectories: t,
                auroc_augmented: col(|r| r.auroc_augmented),
                aupr_augmented: col(|r| r.aupr_augmented),
                auroc_baseline: col(|r| r.auroc_baseline),
                aupr_baseline: col(|r| r.aupr_baseline),
            }
        })
        .collect();
    Ok(StructureReport { rows, summary })
}

/// Exponential holding times: Weibull draws with the shape pinned to one,
/// expressed in the exponential family.
fn exponential_instance(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<NetworkModel> {
    let weibull = random_instance(cfg, Family::Weibull, Some(1.0), rng)?;
    let phi = weibull
        .phi_table()
        .iter()
        .map(|row| row.iter().map(|p| SurvivalParams::exponential(p.params()[1])).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    NetworkModel::new(weibull.graph().clone(), weibull.cardinalities().to_vec(), phi, weibull.theta_table().to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub shape: f64,
    pub graph: usize,
    pub auroc_augmented: f64,
    pub auroc_baseline: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummaryRow {
    pub shape: f64,
    pub auroc_augmented: Band,
    pub auroc_baseline: Band,
    /// Median augmented AUROC minus median baseline AUROC.
    pub median_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummaryRow>,
    /// Spearman correlation of per-graph gaps with the shape.
    pub trend_rho: f64,
    /// One-sided p-value of `trend_rho > 0`.
    pub trend_p_value: f64,
}

/// Structure recovery with every shape pinned to each value of `shapes`
/// (rates stay random), augmented Weibull scoring versus the baseline.
pub fn shape_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    if cfg.family != Family::Weibull {
        return Err(Error::Config("the shape sweep requires the weibull family".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.shapes.len()).flat_map(|s| (0..cfg.sweep_graphs).map(move |g| (s, g))).collect();
    let sweep_cfg = ExperimentConfig { checkpoints: Some(vec![cfg.sweep_trajectories]), ..cfg.clone() };
    let rows = jobs
        .into_par_iter()
        .map(|(s, g)| {
            let shape = cfg.shapes[s];
            let mut rng = stream_rng(cfg.seed, 1 + (s * cfg.sweep_graphs + g) as u64);
            let model = random_instance(cfg, Family::Weibull, Some(shape), &mut rng)?;
            let scored = score_instance(&sweep_cfg, &model, g, cfg.sweep_trajectories, Family::Weibull, &mut rng)?;
            let last = scored.last().expect("final checkpoint is scored");
            Ok(SweepRow {
                shape,
                graph: g,
                auroc_augmented: last.auroc_augmented,
                auroc_baseline: last.auroc_baseline,
                gap: last.auroc_augmented - last.auroc_baseline,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = cfg
        .shapes
        .iter()
        .map(|&shape| {
            let at: Vec<&SweepRow> = rows.iter().filter(|r| r.shape == shape).collect();
            let aug = Band::of(&at.iter().map(|r| r.auroc_augmented).collect::<Vec<_>>());
            let base = Band::of(&at.iter().map(|r| r.auroc_baseline).collect::<Vec<_>>());
            SweepSummaryRow { shape, median_gap: aug.median - base.median, auroc_augmented: aug, auroc_baseline: base }
        })
        .collect();
    let (trend_rho, trend_p_value) =
        spearman(&rows.iter().map(|r| r.shape).collect::<Vec<_>>(), &rows.iter().map(|r| r.gap).collect::<Vec<_>>());
    Ok(SweepReport { rows, summary, trend_rho, trend_p_value })
}

/// Serializes records as CSV with a header row.
pub fn to_csv<T: Serialize>(records: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_indegree_gives_empty_graph() {
        let mut rng = stream_rng(1, 0);
        assert!(random_graph(5, 0, &mut rng).unwrap().edges().is_empty());
    }

    #[test]
    fn two_nodes_with_degree_one_pick_the_other_node() {
        let mut rng = stream_rng(2, 0);
        for _ in 0..50 {
            let g = random_graph(2, 1, &mut rng).unwrap();
            for n in 0..2 {
                assert!(g.parents(n).is_empty() || g.parents(n) == [1 - n]);
            }
        }
    }

    #[test]
    fn in_degree_is_uniform() {
        let mut rng = stream_rng(3, 0);
        let mut counts = [0usize; 4];
        for _ in 0..4000 {
            let g = random_graph(4, 3, &mut rng).unwrap();
            counts[g.parents(0).len()] += 1;
        }
        for c in counts {
            assert!((c as f64 - 1000.0).abs() < 120.0, "{counts:?}");
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let draw = || {
            let mut rng = stream_rng(11, 5);
            let g = random_graph(4, 3, &mut rng).unwrap();
            random_params(Family::Gamma, &g, &[2; 4], None, &mut rng).unwrap()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn hyperprior_means() {
        let g = Graph::from_parent_sets(&[vec![1, 2, 3], vec![0, 2, 3], vec![0, 1, 3], vec![0, 1, 2]]).unwrap();
        for (family, shape_mean, rate_mean) in [(Family::Weibull, 16.0, 5.0 / 3.0), (Family::Gamma, 8.0, 10.0)] {
            let mut rng = stream_rng(4, 0);
            let mut shapes = Vec::new();
            let mut rates = Vec::new();
            for _ in 0..100 {
                let m = random_params(family, &g, &[2; 4], None, &mut rng).unwrap();
                for row in m.phi_table() {
                    for p in row {
                        shapes.push(p.params()[0]);
                        rates.push(p.params()[1]);
                    }
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            assert!((mean(&shapes) / shape_mean - 1.0).abs() < 0.02, "{family}: {}", mean(&shapes));
            assert!((mean(&rates) / rate_mean - 1.0).abs() < 0.03, "{family}: {}", mean(&rates));
        }
    }

    #[test]
    fn multistate_theta_rows_are_valid() {
        let mut rng = stream_rng(6, 0);
        let g = random_graph(3, 2, &mut rng).unwrap();
        let m = random_params(Family::Weibull, &g, &[3, 4, 2], None, &mut rng).unwrap();
        assert_eq!(m.cardinalities(), &[3, 4, 2]);
    }

    #[test]
    fn pinned_shapes() {
        let mut rng = stream_rng(7, 0);
        let g = random_graph(3, 2, &mut rng).unwrap();
        let m = random_params(Family::Weibull, &g, &[2; 3], Some(5.0), &mut rng).unwrap();
        assert!(m.phi_table().iter().flatten().all(|p| p.params()[0] == 5.0));
    }

    #[test]
    fn spearman_known_values() {
        let (rho, p) = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!((rho, p), (1.0, 0.0));
        let (rho, _) = spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]);
        assert!((rho + 1.0).abs() < 1e-15);
        // ties: x = (1,1,2,2), y = (1,2,3,4): ranks (1.5,1.5,3.5,3.5) vs (1,2,3,4)
        let (rho, _) = spearman(&[1.0, 1.0, 2.0, 2.0], &[1.0, 2.0, 3.0, 4.0]);
        assert!((rho - 4.0 / 20f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"seed": 3}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::new(3));
        assert_eq!(cfg.num_nodes, 4);
        cfg.validate().unwrap();
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"seed": 3, "bogus": 1}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"num_nodes": 3}"#).is_err());
        let bad = ExperimentConfig { sample_sizes: vec![100, 10], ..ExperimentConfig::new(1) };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        assert_eq!(ExperimentConfig::new(1).paper_scale().sample_sizes, vec![100, 1000, 10_000]);
    }

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            num_nodes: 3,
            max_indegree: 1,
            replicates: 3,
            sample_sizes: vec![50, 200],
            graphs: 2,
            trajectories: 4,
            checkpoints: Some(vec![2, 4]),
            shapes: vec![1.0, 5.0],
            sweep_graphs: 2,
            sweep_trajectories: 3,
            ..ExperimentConfig::new(99)
        }
    }

    #[test]
    fn mse_experiment_shape_and_determinism() {
        let cfg = small();
        let a = mse_experiment(&cfg).unwrap();
        let b = mse_experiment(&cfg).unwrap();
        assert_eq!(to_csv(&a.rows).unwrap(), to_csv(&b.rows).unwrap());
        assert_eq!(to_csv(&a.estimates).unwrap(), to_csv(&b.estimates).unwrap());
        assert_eq!(a.rows.len(), 4);
        assert!(to_csv(&a.rows).unwrap().starts_with("size,role,replicates,q10,median,q90\n"));
        let single = mse_experiment(&ExperimentConfig { sample_sizes: vec![200], ..cfg }).unwrap();
        assert!(single.rows.iter().all(|r| r.size == 200));
    }

    #[test]
    fn structure_and_sweep_are_deterministic() {
        let cfg = small();
        let a = structure_experiment(&cfg).unwrap();
        assert_eq!(a, structure_experiment(&cfg).unwrap());
        assert_eq!(a.rows.len(), 4);
        assert_eq!(a.summary.iter().map(|r| r.trajectories).collect::<Vec<_>>(), vec![2, 4]);
        let s = shape_sweep(&cfg).unwrap();
        assert_eq!(s, shape_sweep(&cfg).unwrap());
        assert_eq!(s.rows.len(), 4);
        assert!(shape_sweep(&ExperimentConfig { family: Family::Gamma, ..cfg }).is_err());
    }
}
