use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clockctbn::experiments::{mse_experiment, shape_sweep, structure_experiment, to_csv, ExperimentConfig};
use clockctbn::ingest::{discretize, filter_min_transitions, load_timeseries};
use clockctbn::io::{read_model_file, read_trajectory_file, trajectories_to_string, ModelFile};
use clockctbn::likelihood::{regime_stats, sufficient_stats, trajectory_log_likelihood_by_node, SuffStats};
use clockctbn::params::{grid_posterior, map_estimate, BoxPrior, DirichletPosterior, ParamPrior};
use clockctbn::rng::stream_rng;
use clockctbn::simulator::gillespie_sample;
use clockctbn::structure::{aupr, auroc, edge_marginals, EvidenceMode, GraphPrior, MarginalConfig, StructureConfig, StructureScorer};
use clockctbn::{ClockedState, Error, Family, Trajectory};
use serde_json::{json, Value};

use crate::{Command, ExperimentArgs, FitParamsArgs, FitStructureArgs, IngestArgs, SampleArgs, ScoreArgs, StatsArgs, Study, ValidateArgs};

pub enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.into())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))
}

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Experiment(args) => experiment(args),
        other => pool(1)?.install(|| match other {
            Command::Sample(a) => sample(a),
            Command::Loglik(a) => loglik(&a.model, &a.traj),
            Command::Stats(a) => stats(a),
            Command::FitParams(a) => fit_params(a),
            Command::FitStructure(a) => fit_structure(a),
            Command::Score(a) => score(a),
            Command::IngestGnw(a) => ingest(a),
            Command::Validate(a) => validate(a),
            Command::Experiment(_) => unreachable!("handled above"),
        }),
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn emit_json(value: &Value) -> CliResult {
    emit(None, &format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn sample(a: SampleArgs) -> CliResult {
    if !(a.end_time > 0.0 && a.end_time.is_finite()) {
        return Err(CliError::Usage("--end-time must be positive".into()));
    }
    let model = read_model_file(&a.model)?.to_model()?;
    let init = ClockedState::fresh(a.init.unwrap_or_else(|| vec![0; model.num_nodes()]));
    let trajs = (0..a.count)
        .map(|k| gillespie_sample(&model, &init, a.end_time, &mut stream_rng(a.seed, k as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    log::info!("sampled {} trajectories", trajs.len());
    emit(a.out.as_deref(), &trajectories_to_string(&trajs)?)
}

fn loglik(model: &Path, traj: &Path) -> CliResult {
    let model = read_model_file(model)?.to_model()?;
    let trajs = read_trajectory_file(traj)?;
    let mut per_node = vec![0.0; model.num_nodes()];
    let mut per_traj = Vec::with_capacity(trajs.len());
    for t in &trajs {
        let by_node = trajectory_log_likelihood_by_node(&model, t)?;
        for (acc, v) in per_node.iter_mut().zip(&by_node) {
            *acc += v;
        }
        per_traj.push(by_node.iter().sum::<f64>());
    }
    emit_json(&json!({
        "total": per_node.iter().sum::<f64>(),
        "per_node": per_node,
        "per_trajectory": per_traj,
    }))
}

fn stats(a: StatsArgs) -> CliResult {
    let file = read_model_file(&a.model)?;
    let graph = file.graph()?;
    let cards = file.cardinalities();
    let mut total = SuffStats::default();
    for t in read_trajectory_file(&a.traj)? {
        let s = if a.regime { regime_stats(&t, &graph, &cards)? } else { sufficient_stats(&t, &graph, &cards)? };
        total.merge(&s);
    }
    emit_json(&total.to_json())
}

fn log_grid(lower: f64, upper: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![(lower * upper).sqrt()];
    }
    (0..points)
        .map(|i| (lower.ln() + (upper.ln() - lower.ln()) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

fn fit_params(a: FitParamsArgs) -> CliResult {
    let file = read_model_file(&a.model_structure)?;
    let family = a.family.or(file.family).unwrap_or(Family::Weibull);
    let graph = file.graph()?;
    let cards = file.cardinalities();
    let prior = BoxPrior::uniform(family, a.lower, a.upper).map_err(|e| CliError::Usage(e.to_string()))?;
    if a.grid && a.grid_points == 0 {
        return Err(CliError::Usage("--grid-points must be positive".into()));
    }
    let mut total = SuffStats::default();
    for t in read_trajectory_file(&a.traj)? {
        total.merge(&regime_stats(&t, &graph, &cards)?);
    }
    let theta = DirichletPosterior::default().update(&total, 1.0);
    let axis = log_grid(a.lower, a.upper, a.grid_points);
    let grid: Vec<Vec<f64>> = if family.arity() == 1 {
        axis.iter().map(|&v| vec![v]).collect()
    } else {
        axis.iter().flat_map(|&p| axis.iter().map(move |&q| vec![p, q])).collect()
    };
    let init = vec![1.0f64.clamp(a.lower, a.upper); family.arity()];
    let mut keys = Vec::new();
    for (key, ks) in &total.keys {
        let mut entry = json!({
            "key": key.to_string(),
            "node": key.node,
            "state": key.state,
            "parent_state": key.parent_state,
            "full": ks.full.len(),
            "censored": ks.censored.len(),
            "truncated": ks.truncated.len(),
            "theta_concentration": theta.concentrations.get(key),
            "theta_mean": theta.predictive(key),
        });
        match map_estimate(ks, family, &prior, &init) {
            Ok(est) => {
                entry["map"] = json!(est.params);
                entry["log_posterior"] = json!(est.log_posterior);
                entry["converged"] = json!(est.converged);
            }
            Err(Error::InsufficientData(msg)) => {
                log::warn!("key {key}: {msg}");
                entry["map"] = Value::Null;
            }
            Err(e) => return Err(e.into()),
        }
        if a.grid {
            let weights = grid_posterior(ks, family, &grid, &ParamPrior::Box(prior.clone()))?;
            entry["grid"] = json!({ "points": grid, "weights": weights });
        }
        keys.push(entry);
    }
    emit_json(&json!({
        "family": family,
        "prior": { "lower": prior.lower, "upper": prior.upper },
        "keys": keys,
    }))
}

fn trajectory_files(path: &Path) -> CliResult<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(Error::InsufficientData(format!("no .jsonl files in {}", path.display()))));
    }
    Ok(files)
}

fn infer_cardinalities(trajs: &[Trajectory]) -> CliResult<Vec<usize>> {
    let n = trajs.first().map(|t| t.num_nodes()).ok_or_else(|| Error::InsufficientData("no trajectories".into()))?;
    let mut cards = vec![2; n];
    for t in trajs {
        if t.num_nodes() != n {
            return Err(Error::InvalidTrajectory(format!("trajectories disagree on the node count ({} vs {n})", t.num_nodes())).into());
        }
        for (c, &s) in cards.iter_mut().zip(&t.initial.states) {
            *c = (*c).max(s + 1);
        }
        for e in &t.events {
            cards[e.node] = cards[e.node].max(e.state + 1);
        }
    }
    Ok(cards)
}

fn fit_structure(a: FitStructureArgs) -> CliResult {
    let mut trajs = Vec::new();
    for f in trajectory_files(&a.trajs)? {
        trajs.extend(read_trajectory_file(&f)?);
    }
    let cards = match a.cardinalities {
        Some(c) => c,
        None => infer_cardinalities(&trajs)?,
    };
    if a.max_indegree >= cards.len() && cards.len() > 1 {
        log::warn!("max indegree {} capped at {}", a.max_indegree, cards.len() - 1);
    }
    let marginal = if a.baseline { MarginalConfig::exponential_baseline() } else { MarginalConfig::augmented(a.family) };
    let graph_prior = match a.edge_penalty {
        Some(rho) if rho >= 0.0 && rho.is_finite() => GraphPrior::EdgePenalty { rho },
        Some(rho) => return Err(CliError::Usage(format!("--edge-penalty must be nonnegative, got {rho}"))),
        None => GraphPrior::Uniform,
    };
    let cfg = StructureConfig {
        max_indegree: a.max_indegree,
        graph_prior,
        mode: if a.per_trajectory { EvidenceMode::PerTrajectory } else { EvidenceMode::Pooled },
        ..StructureConfig::new(marginal)
    };
    let family = cfg.marginal.family;
    let mut scorer = StructureScorer::new(&cards, cfg);
    for t in &trajs {
        scorer.add_trajectory(t)?;
    }
    let post = scorer.posterior()?;
    let nodes: Vec<Value> = post
        .nodes
        .iter()
        .map(|np| {
            let sets: Vec<Value> = np
                .sets
                .iter()
                .zip(&np.log_marginals)
                .zip(&np.log_weights)
                .map(|((s, m), w)| json!({ "parents": s, "log_marginal": m, "weight": w.exp() }))
                .collect();
            json!({ "node": np.node, "map_parents": np.best(), "sets": sets })
        })
        .collect();
    let out = json!({
        "family": family,
        "baseline": a.baseline,
        "trajectories": trajs.len(),
        "cardinalities": cards,
        "nodes": nodes,
        "edge_marginals": edge_marginals(&post),
    });
    emit(a.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&out)?))
}

fn read_matrix<T: serde::de::DeserializeOwned>(value: &Value, field: &str) -> CliResult<Vec<Vec<T>>> {
    let m = value.get(field).unwrap_or(value);
    Ok(serde_json::from_value(m.clone())?)
}

fn read_truth(path: &Path) -> CliResult<Vec<Vec<u8>>> {
    let value: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    if value.get("nodes").is_some() {
        let file: ModelFile = serde_json::from_value(value)?;
        return Ok(file.graph()?.adjacency());
    }
    read_matrix(&value, "adjacency")
}

fn score(a: ScoreArgs) -> CliResult {
    let scores: Vec<Vec<f64>> = read_matrix(&serde_json::from_str(&fs::read_to_string(&a.scores)?)?, "edge_marginals")?;
    let truth = read_truth(&a.truth)?;
    emit_json(&json!({ "auroc": auroc(&scores, &truth)?, "aupr": aupr(&scores, &truth)? }))
}

fn ingest(a: IngestArgs) -> CliResult {
    if !a.threshold.is_finite() {
        return Err(CliError::Usage("--threshold must be finite".into()));
    }
    let series = load_timeseries(&a.input)?;
    let trajs: Vec<Trajectory> = series.iter().map(|s| discretize(s, a.threshold)).collect();
    let total = trajs.len();
    let kept = filter_min_transitions(trajs, a.min_transitions);
    log::info!("kept {} of {total} series with at least {} transitions", kept.len(), a.min_transitions);
    emit(a.out.as_deref(), &trajectories_to_string(&kept)?)
}

fn write_file(dir: &Path, name: &str, text: &str) -> CliResult {
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn experiment(a: ExperimentArgs) -> CliResult {
    let text = fs::read_to_string(&a.config)?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| CliError::Data(Error::Config(e.to_string())))?;
    if a.paper_scale {
        cfg = cfg.paper_scale();
    }
    cfg.validate()?;
    let threads = match a.threads {
        Some(0) => return Err(CliError::Usage("--threads must be positive".into())),
        Some(k) => k,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    fs::create_dir_all(&a.out)?;
    let dir = a.out.as_path();
    pool(threads)?.install(|| -> CliResult {
        match a.study {
            Study::Mse => {
                let r = mse_experiment(&cfg)?;
                write_file(dir, "mse.csv", &to_csv(&r.rows)?)?;
                write_file(dir, "relative_errors.csv", &to_csv(&r.relative_errors)?)?;
                write_file(dir, "estimates.csv", &to_csv(&r.estimates)?)?;
                let summary = json!({ "config": cfg, "graph_edges": r.graph_edges, "skipped_keys": r.skipped_keys, "mse": r.rows });
                write_file(dir, "summary.json", &format!("{}\n", serde_json::to_string_pretty(&summary)?))
            }
            Study::Structure => {
                let r = structure_experiment(&cfg)?;
                write_file(dir, "structure.csv", &to_csv(&r.rows)?)?;
                let summary = json!({ "config": cfg, "summary": r.summary });
                write_file(dir, "summary.json", &format!("{}\n", serde_json::to_string_pretty(&summary)?))
            }
            Study::ShapeSweep => {
                let r = shape_sweep(&cfg)?;
                write_file(dir, "shape_sweep.csv", &to_csv(&r.rows)?)?;
                let summary = json!({
                    "config": cfg,
                    "summary": r.summary,
                    "trend_rho": r.trend_rho,
                    "trend_p_value": r.trend_p_value,
                });
                write_file(dir, "summary.json", &format!("{}\n", serde_json::to_string_pretty(&summary)?))
            }
        }
    })
}

fn validate(a: ValidateArgs) -> CliResult {
    let mut report = serde_json::Map::new();
    let mut cards = None;
    if let Some(path) = &a.model {
        let file = read_model_file(path)?;
        let kind = if file.phi.is_some() || file.theta.is_some() || file.family.is_some() {
            file.to_model()?;
            "model"
        } else {
            file.graph()?;
            "structure"
        };
        cards = Some(file.cardinalities());
        report.insert("model".into(), json!(kind));
    }
    if let Some(path) = &a.traj {
        let trajs = read_trajectory_file(path)?;
        if let Some(c) = &cards {
            for t in &trajs {
                if t.num_nodes() != c.len() {
                    return Err(Error::InvalidTrajectory(format!("trajectory has {} nodes, model has {}", t.num_nodes(), c.len())).into());
                }
                t.validate(Some(c))?;
            }
        }
        report.insert("trajectories".into(), json!(trajs.len()));
    }
    if let Some(path) = &a.config {
        let cfg: ExperimentConfig =
            serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| CliError::Data(Error::Config(e.to_string())))?;
        cfg.validate()?;
        report.insert("config".into(), json!("ok"));
    }
    if let Some(path) = &a.tsv {
        let series = load_timeseries(path)?;
        report.insert("series".into(), json!(series.len()));
    }
    if let Some(path) = &a.matrix {
        let m: Vec<Vec<f64>> = read_matrix(&serde_json::from_str(&fs::read_to_string(path)?)?, "edge_marginals")?;
        let n = m.len();
        if m.iter().any(|r| r.len() != n) {
            return Err(Error::Config("matrix is not square".into()).into());
        }
        report.insert("matrix".into(), json!(n));
    }
    if report.is_empty() {
        return Err(CliError::Usage("nothing to validate; pass --model, --traj, --config, --tsv or --matrix".into()));
    }
    emit_json(&Value::Object(report))
}
