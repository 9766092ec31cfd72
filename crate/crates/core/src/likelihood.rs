//! Path measures and sufficient statistics.
//!
//! For every key `(node, state, parent_state)` the survival part of the
//! likelihood only depends on three multisets of clock values:
//!
//! * `full`: clock just before the node's own transition (contributes `f`),
//! * `censored`: clock when a window ends for another reason (contributes `Λ`),
//! * `truncated`: nonzero clock at window entry (contributes `1 / Λ`).
//!
//! The transition part only depends on the counts of visited target states.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{derive_windows, num_parent_states, parent_state_index_of, Graph, NetworkModel, NodeId, Outcome, Trajectory, Window};
use crate::special::{ln_gamma, ln_gamma_q};
use crate::survival::{Family, SurvivalParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct StatKey {
    pub node: NodeId,
    pub state: usize,
    pub parent_state: usize,
}

impl std::fmt::Display for StatKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.node, self.state, self.parent_state)
    }
}

/// Clock samples and target counts of one key.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct KeyStats {
    pub full: Vec<f64>,
    pub censored: Vec<f64>,
    pub truncated: Vec<f64>,
    pub target_counts: Vec<u64>,
}

impl KeyStats {
    pub fn new(cardinality: usize) -> Self {
        Self {
            target_counts: vec![0; cardinality],
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.full.is_empty() && self.censored.is_empty() && self.truncated.is_empty()
    }

    /// Multiset union with `other`; target counts add up.
    pub fn merge(&mut self, other: &KeyStats) {
        self.full.extend_from_slice(&other.full);
        self.censored.extend_from_slice(&other.censored);
        self.truncated.extend_from_slice(&other.truncated);
        if self.target_counts.len() < other.target_counts.len() {
            self.target_counts.resize(other.target_counts.len(), 0);
        }
        for (a, b) in self.target_counts.iter_mut().zip(&other.target_counts) {
            *a += b;
        }
    }

    /// Removes values that appear in both `censored` and `truncated`; their
    /// likelihood factors `Λ(v) / Λ(v)` cancel exactly.
    pub fn compact(&self) -> KeyStats {
        let mut c = self.censored.clone();
        let mut t = self.truncated.clone();
        c.sort_by(f64::total_cmp);
        t.sort_by(f64::total_cmp);
        let (mut i, mut j) = (0, 0);
        let (mut keep_c, mut keep_t) = (Vec::new(), Vec::new());
        while i < c.len() && j < t.len() {
            match c[i].total_cmp(&t[j]) {
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => {
                    keep_c.push(c[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    keep_t.push(t[j]);
                    j += 1;
                }
            }
        }
        keep_c.extend_from_slice(&c[i..]);
        keep_t.extend_from_slice(&t[j..]);
        KeyStats {
            full: self.full.clone(),
            censored: keep_c,
            truncated: keep_t,
            target_counts: self.target_counts.clone(),
        }
    }

    pub fn num_transitions(&self) -> u64 {
        self.target_counts.iter().sum()
    }

    /// `Σ_full g + Σ_censored g - Σ_truncated g`.
    pub fn exposure(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.full.iter().map(|&s| g(s)).sum::<f64>() + self.censored.iter().map(|&s| g(s)).sum::<f64>()
            - self.truncated.iter().map(|&s| g(s)).sum::<f64>()
    }
}

/// Sufficient statistics of a set of trajectories, keyed by
/// `(node, state, parent_state)`. Keys never visited are absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuffStats {
    pub keys: BTreeMap<StatKey, KeyStats>,
}

impl SuffStats {
    pub fn get(&self, key: &StatKey) -> Option<&KeyStats> {
        self.keys.get(key)
    }

    pub fn merge(&mut self, other: &SuffStats) {
        for (k, v) in &other.keys {
            self.keys.entry(*k).or_default().merge(v);
        }
    }

    pub fn compact(&self) -> SuffStats {
        SuffStats {
            keys: self.keys.iter().map(|(k, v)| (*k, v.compact())).collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Entry<'a> {
            #[serde(flatten)]
            key: StatKey,
            #[serde(flatten)]
            stats: &'a KeyStats,
        }
        let entries: Vec<_> = self.keys.iter().map(|(k, v)| Entry { key: *k, stats: v }).collect();
        serde_json::json!({ "keys": entries })
    }
}

/// Log path measure of a single window.
pub fn window_log_density(model: &NetworkModel, w: &Window) -> Result<f64> {
    Ok(window_terms(model, w)?.iter().sum())
}

/// Per-node contributions of a window; they sum to its log density.
fn window_terms(model: &NetworkModel, w: &Window) -> Result<Vec<f64>> {
    let states = &w.entry.states;
    let mut terms = Vec::with_capacity(model.num_nodes());
    for n in 0..model.num_nodes() {
        let p = model.phi_at(n, states);
        let tau = w.entry.clocks[n];
        let exit = tau + w.duration;
        let base = p.log_survival(tau)?;
        let term = match w.outcome {
            Outcome::Transition { node, state } if node == n => {
                let prob = model.theta_at(n, states)[state];
                if prob == 0.0 {
                    log::warn!(
                        "transition of node {n} from {} to {state} has probability 0",
                        states[n]
                    );
                }
                prob.ln() + p.log_density(exit)? - base
            }
            _ => p.log_survival(exit)? - base,
        };
        terms.push(term);
    }
    Ok(terms)
}

/// Log likelihood of a trajectory under `model`, split by node.
pub fn trajectory_log_likelihood_by_node(model: &NetworkModel, traj: &Trajectory) -> Result<Vec<f64>> {
    traj.validate(Some(model.cardinalities()))?;
    let mut per_node = vec![0.0; model.num_nodes()];
    for w in derive_windows(traj)? {
        for (acc, t) in per_node.iter_mut().zip(window_terms(model, &w)?) {
            *acc += t;
        }
    }
    Ok(per_node)
}

/// Log likelihood of a trajectory: the sum of its window log densities.
pub fn trajectory_log_likelihood(model: &NetworkModel, traj: &Trajectory) -> Result<f64> {
    traj.validate(Some(model.cardinalities()))?;
    let mut total = 0.0;
    for w in derive_windows(traj)? {
        total += window_log_density(model, &w)?;
    }
    Ok(total)
}

/// Window-level statistics for every node: each window adds the exit clock
/// of every node to `full` (own transition) or `censored` (anything else),
/// and every nonzero entry clock to `truncated`.
pub fn sufficient_stats(traj: &Trajectory, graph: &Graph, cardinalities: &[usize]) -> Result<SuffStats> {
    traj.validate(Some(cardinalities))?;
    let windows = derive_windows(traj)?;
    let mut out = SuffStats::default();
    for w in &windows {
        for n in 0..graph.num_nodes() {
            let key = StatKey {
                node: n,
                state: w.entry.states[n],
                parent_state: parent_state_index_of(graph.parents(n), cardinalities, &w.entry.states),
            };
            let ks = out.keys.entry(key).or_insert_with(|| KeyStats::new(cardinalities[n]));
            let tau = w.entry.clocks[n];
            if tau > 0.0 {
                ks.truncated.push(tau);
            }
            match w.outcome {
                Outcome::Transition { node, state } if node == n => {
                    ks.full.push(w.exit_clock(n));
                    ks.target_counts[state] += 1;
                }
                _ => ks.censored.push(w.exit_clock(n)),
            }
        }
    }
    Ok(out)
}

/// Regime-level statistics of node `n` under the parent set `parents`,
/// indexed by `state * U + parent_state`.
///
/// A regime is a maximal run of windows during which neither `n` nor any
/// of `parents` changes. Compared with [`sufficient_stats`], the censored /
/// truncated pairs produced by changes of unrelated nodes are omitted,
/// which leaves every likelihood unchanged.
pub fn node_stats(windows: &[Window], n: NodeId, parents: &[NodeId], cardinalities: &[usize]) -> Vec<KeyStats> {
    let card = cardinalities[n];
    let rows = card * num_parent_states(parents, cardinalities);
    let mut out = vec![KeyStats::new(card); rows];
    let u_count = rows / card;
    let mut regime_open = false;
    for w in windows {
        let row = w.entry.states[n] * u_count + parent_state_index_of(parents, cardinalities, &w.entry.states);
        let ks = &mut out[row];
        if !regime_open {
            let tau = w.entry.clocks[n];
            if tau > 0.0 {
                ks.truncated.push(tau);
            }
            regime_open = true;
        }
        match w.outcome {
            Outcome::Transition { node, state } if node == n => {
                ks.full.push(w.exit_clock(n));
                ks.target_counts[state] += 1;
                regime_open = false;
            }
            Outcome::Transition { node, .. } if parents.binary_search(&node).is_ok() => {
                ks.censored.push(w.exit_clock(n));
                regime_open = false;
            }
            Outcome::Transition { .. } => {}
            Outcome::Censored => ks.censored.push(w.exit_clock(n)),
        }
    }
    out
}

/// Regime-level statistics for all nodes of `graph`.
pub fn regime_stats(traj: &Trajectory, graph: &Graph, cardinalities: &[usize]) -> Result<SuffStats> {
    traj.validate(Some(cardinalities))?;
    let windows = derive_windows(traj)?;
    let mut out = SuffStats::default();
    for n in 0..graph.num_nodes() {
        let parents = graph.parents(n);
        let u_count = num_parent_states(parents, cardinalities);
        for (row, ks) in node_stats(&windows, n, parents, cardinalities).into_iter().enumerate() {
            if ks.is_empty() {
                continue;
            }
            let key = StatKey {
                node: n,
                state: row / u_count,
                parent_state: row % u_count,
            };
            out.keys.insert(key, ks);
        }
    }
    Ok(out)
}

/// Survival part of the log likelihood of one key:
/// `Σ_full ln f + Σ_censored ln Λ - Σ_truncated ln Λ`.
pub fn stats_log_likelihood(stats: &KeyStats, p: &SurvivalParams) -> Result<f64> {
    if stats.is_empty() {
        return Ok(0.0);
    }
    if let Some(bad) = stats
        .full
        .iter()
        .chain(&stats.censored)
        .chain(&stats.truncated)
        .find(|s| !(s.is_finite() && **s >= 0.0))
    {
        return Err(Error::Domain(format!("invalid clock sample {bad}")));
    }
    if stats.full.iter().any(|&s| s == 0.0) {
        return Err(Error::Domain("full-transition clock sample of 0".into()));
    }
    Ok(stats_log_likelihood_raw(stats, p))
}

pub(crate) fn stats_log_likelihood_raw(stats: &KeyStats, p: &SurvivalParams) -> f64 {
    let n = stats.full.len() as f64;
    let v = p.params();
    match (p.family(), v) {
        (Family::Gamma, &[a, b]) if a != 1.0 => {
            let ln_full: f64 = stats.full.iter().map(|s| s.ln()).sum();
            let sum_full: f64 = stats.full.iter().sum();
            let censored: f64 = stats.censored.iter().map(|&s| ln_gamma_q(a, b * s)).sum();
            let truncated: f64 = stats.truncated.iter().map(|&s| ln_gamma_q(a, b * s)).sum();
            n * (a * b.ln() - ln_gamma(a)) + (a - 1.0) * ln_full - b * sum_full + censored - truncated
        }
        (Family::Weibull, &[k, b]) => {
            let ln_full: f64 = stats.full.iter().map(|s| s.ln()).sum();
            n * (b.ln() + k.ln()) + (k - 1.0) * ln_full - b * stats.exposure(|s| s.powf(k))
        }
        (Family::Rayleigh, &[var]) => {
            let ln_full: f64 = stats.full.iter().map(|s| s.ln()).sum();
            ln_full - n * var.ln() - stats.exposure(|s| s * s) / (2.0 * var)
        }
        (Family::Exponential, &[rate]) | (Family::Gamma, &[_, rate]) => n * rate.ln() - rate * stats.exposure(|s| s),
        _ => unreachable!("parameter arity is checked at construction"),
    }
}

/// `Σ_{x'} counts(x') ln θ(x')` for one key.
pub fn theta_log_likelihood(stats: &KeyStats, theta: &[f64]) -> f64 {
    stats
        .target_counts
        .iter()
        .zip(theta)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &p)| c as f64 * p.ln())
        .sum()
}

/// Log likelihood assembled from sufficient statistics alone.
pub fn log_likelihood_from_stats(model: &NetworkModel, stats: &SuffStats) -> Result<f64> {
    let mut total = 0.0;
    for (key, ks) in &stats.keys {
        total += stats_log_likelihood(ks, model.phi(key.node, key.state, key.parent_state))?;
        total += theta_log_likelihood(ks, model.theta(key.node, key.state, key.parent_state));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClockedState, Event};
    use crate::rng::stream_rng;
    use crate::simulator::gillespie_sample;

    fn traj(init: Vec<usize>, events: &[(f64, usize, usize)], end: f64) -> Trajectory {
        Trajectory {
            initial: ClockedState::fresh(init),
            events: events.iter().map(|&(time, node, state)| Event { time, node, state }).collect(),
            end_time: end,
        }
    }

    fn key(node: usize, state: usize, parent_state: usize) -> StatKey {
        StatKey { node, state, parent_state }
    }

    fn binary_model(graph: Graph, param: impl Fn(usize, usize, usize) -> SurvivalParams) -> NetworkModel {
        let cards = vec![2; graph.num_nodes()];
        let mut phi = Vec::new();
        let mut theta = Vec::new();
        for n in 0..graph.num_nodes() {
            let u = num_parent_states(graph.parents(n), &cards);
            phi.push((0..2 * u).map(|r| param(n, r / u, r % u)).collect());
            theta.push((0..2 * u).map(|r| NetworkModel::binary_theta_row(r / u)).collect());
        }
        NetworkModel::new(graph, cards, phi, theta).unwrap()
    }

    #[test]
    fn single_node_stats() {
        let g = Graph::empty(1).unwrap();
        let s = sufficient_stats(&traj(vec![0], &[(2.0, 0, 1)], 3.0), &g, &[2]).unwrap();
        let a = s.get(&key(0, 0, 0)).unwrap();
        assert_eq!((a.full.clone(), a.censored.clone(), a.truncated.clone()), (vec![2.0], vec![], vec![]));
        assert_eq!(a.target_counts, vec![0, 1]);
        let b = s.get(&key(0, 1, 0)).unwrap();
        assert_eq!((b.full.clone(), b.censored.clone(), b.truncated.clone()), (vec![], vec![1.0], vec![]));
    }

    #[test]
    fn parent_change_censors_then_truncates() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let s = sufficient_stats(&traj(vec![0, 0], &[(1.0, 0, 1), (1.5, 1, 1)], 2.0), &g, &[2, 2]).unwrap();
        let before = s.get(&key(1, 0, 0)).unwrap();
        assert_eq!(before.censored, vec![1.0]);
        assert!(before.truncated.is_empty() && before.full.is_empty());
        let after = s.get(&key(1, 0, 1)).unwrap();
        assert_eq!(after.truncated, vec![1.0]);
        assert_eq!(after.full, vec![1.5]);
        assert_eq!(after.target_counts, vec![0, 1]);
    }

    #[test]
    fn no_events_gives_one_censored_sample_per_node() {
        let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let s = sufficient_stats(&traj(vec![0, 1, 0], &[], 4.0), &g, &[2, 2, 2]).unwrap();
        assert_eq!(s.keys.len(), 3);
        for ks in s.keys.values() {
            assert_eq!(ks.censored, vec![4.0]);
            assert!(ks.full.is_empty() && ks.truncated.is_empty());
        }
    }

    #[test]
    fn stats_likelihood_examples() {
        let ks = KeyStats { full: vec![1.0], ..KeyStats::new(2) };
        let e = SurvivalParams::exponential(2.0).unwrap();
        assert!((stats_log_likelihood(&ks, &e).unwrap() - (2f64.ln() - 2.0)).abs() < 1e-15);

        let ks = KeyStats { full: vec![1.0], censored: vec![2.0], truncated: vec![1.0], ..KeyStats::new(2) };
        let w = SurvivalParams::weibull(2.0, 1.0).unwrap();
        assert!((stats_log_likelihood(&ks, &w).unwrap() - (2f64.ln() - 4.0)).abs() < 1e-14);

        let ks = KeyStats { full: vec![0.3, 1.7], censored: vec![2.5, 0.4], truncated: vec![0.2], ..KeyStats::new(2) };
        let a = stats_log_likelihood(&ks, &SurvivalParams::weibull(1.0, 1.7).unwrap()).unwrap();
        let b = stats_log_likelihood(&ks, &SurvivalParams::exponential(1.7).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(stats_log_likelihood(&KeyStats::new(2), &w).unwrap(), 0.0);
    }

    #[test]
    fn closed_forms_match_elementwise_sums() {
        let ks = KeyStats { full: vec![0.3, 1.7, 0.9], censored: vec![2.5, 0.4], truncated: vec![0.2, 0.35], ..KeyStats::new(2) };
        for p in [
            SurvivalParams::exponential(0.8).unwrap(),
            SurvivalParams::weibull(2.7, 0.6).unwrap(),
            SurvivalParams::gamma(3.2, 1.9).unwrap(),
            SurvivalParams::rayleigh(0.45).unwrap(),
        ] {
            let direct: f64 = ks.full.iter().map(|&s| p.log_density(s).unwrap()).sum::<f64>()
                + ks.censored.iter().map(|&s| p.log_survival(s).unwrap()).sum::<f64>()
                - ks.truncated.iter().map(|&s| p.log_survival(s).unwrap()).sum::<f64>();
            let closed = stats_log_likelihood(&ks, &p).unwrap();
            assert!((direct - closed).abs() < 1e-12 * direct.abs().max(1.0), "{p:?}");
        }
    }

    #[test]
    fn window_examples() {
        let m = binary_model(Graph::empty(1).unwrap(), |_, _, _| SurvivalParams::exponential(2.0).unwrap());
        let w = derive_windows(&traj(vec![0], &[(1.0, 0, 1)], 3.0)).unwrap();
        assert!((window_log_density(&m, &w[0]).unwrap() - (2f64.ln() - 2.0)).abs() < 1e-15);
        let empty = traj(vec![0], &[], 2.5);
        assert!((trajectory_log_likelihood(&m, &empty).unwrap() + 5.0).abs() < 1e-15);

        let mut shifted = w[0].clone();
        shifted.entry.clocks = vec![7.0];
        assert!((window_log_density(&m, &shifted).unwrap() - window_log_density(&m, &w[0]).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn impossible_transition_is_minus_infinity() {
        let g = Graph::empty(1).unwrap();
        let p = SurvivalParams::exponential(1.0).unwrap();
        let theta = vec![vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]]];
        let m = NetworkModel::new(g, vec![3], vec![vec![p; 3]], theta).unwrap();
        let t = traj(vec![0], &[(1.0, 0, 2)], 2.0);
        assert_eq!(trajectory_log_likelihood(&m, &t).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn simulated_path_measure_factorizes() {
        let g = Graph::new(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let m = binary_model(g.clone(), |n, x, u| SurvivalParams::weibull(1.5 + n as f64 + 0.5 * x as f64, 0.5 + u as f64).unwrap());
        let tr = gillespie_sample(&m, &ClockedState::fresh(vec![0, 1, 0]), 10.0, &mut stream_rng(9, 0)).unwrap();
        assert!(tr.events.len() >= 10);
        let windows = trajectory_log_likelihood(&m, &tr).unwrap();
        let by_node: f64 = trajectory_log_likelihood_by_node(&m, &tr).unwrap().iter().sum();
        let stats = log_likelihood_from_stats(&m, &sufficient_stats(&tr, &g, m.cardinalities()).unwrap()).unwrap();
        let regimes = log_likelihood_from_stats(&m, &regime_stats(&tr, &g, m.cardinalities()).unwrap()).unwrap();
        for other in [by_node, stats, regimes] {
            assert!((windows - other).abs() <= 1e-9 * windows.abs(), "{windows} vs {other}");
        }
    }

    #[test]
    fn regime_stats_equal_compacted_window_stats() {
        let g = Graph::new(3, &[(0, 2)]).unwrap();
        let m = binary_model(g.clone(), |_, x, u| SurvivalParams::weibull(2.0 + x as f64, 1.0 + u as f64).unwrap());
        let tr = gillespie_sample(&m, &ClockedState::fresh(vec![0, 0, 0]), 15.0, &mut stream_rng(2, 0)).unwrap();
        let mut windowed = sufficient_stats(&tr, &g, m.cardinalities()).unwrap().compact();
        windowed.keys.retain(|_, v| !v.is_empty());
        let mut regimes = regime_stats(&tr, &g, m.cardinalities()).unwrap();
        for ks in regimes.keys.values_mut().chain(windowed.keys.values_mut()) {
            for v in [&mut ks.full, &mut ks.censored, &mut ks.truncated] {
                v.sort_by(f64::total_cmp);
            }
        }
        assert_eq!(windowed, regimes);
    }

    #[test]
    fn truncations_are_dominated_by_exits() {
        let g = Graph::new(2, &[(1, 0)]).unwrap();
        let m = binary_model(g.clone(), |_, _, u| SurvivalParams::gamma(3.0, 2.0 + u as f64).unwrap());
        let tr = gillespie_sample(&m, &ClockedState::fresh(vec![0, 0]), 30.0, &mut stream_rng(4, 0)).unwrap();
        let s = sufficient_stats(&tr, &g, m.cardinalities()).unwrap();
        for ks in s.keys.values() {
            assert!(ks.truncated.len() <= ks.full.len() + ks.censored.len());
            assert!(ks.truncated.iter().all(|&t| t > 0.0));
        }
    }
}
