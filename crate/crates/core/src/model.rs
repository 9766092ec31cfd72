//! Network structure, parameter tables, clocked states and trajectories.

use crate::error::{Error, Result};
use crate::survival::SurvivalParams;

/// Index of a node, in `0..num_nodes`.
pub type NodeId = usize;

/// Tolerance on the normalization of transition-probability rows.
pub const THETA_SUM_TOLERANCE: f64 = 1e-12;

/// Directed dependency graph. Cycles are allowed, self-loops are not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    parents: Vec<Vec<NodeId>>,
}

impl Graph {
    pub fn new(num_nodes: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidModel("graph needs at least one node".into()));
        }
        let mut parents = vec![Vec::new(); num_nodes];
        for &(src, dst) in edges {
            if src >= num_nodes || dst >= num_nodes {
                return Err(Error::InvalidModel(format!(
                    "edge ({src}, {dst}) out of range for {num_nodes} nodes"
                )));
            }
            if src == dst {
                return Err(Error::InvalidModel(format!("self-loop on node {src}")));
            }
            parents[dst].push(src);
        }
        for p in &mut parents {
            p.sort_unstable();
            p.dedup();
        }
        Ok(Self { parents })
    }

    pub fn empty(num_nodes: usize) -> Result<Self> {
        Self::new(num_nodes, &[])
    }

    /// Builds a graph from per-node parent lists.
    pub fn from_parent_sets(parent_sets: &[Vec<NodeId>]) -> Result<Self> {
        let edges: Vec<_> = parent_sets
            .iter()
            .enumerate()
            .flat_map(|(n, ps)| ps.iter().map(move |&m| (m, n)))
            .collect();
        Self::new(parent_sets.len(), &edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.parents.len()
    }

    /// Parents of `n` in ascending order.
    pub fn parents(&self, n: NodeId) -> &[NodeId] {
        &self.parents[n]
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId) -> bool {
        self.parents[dst].binary_search(&src).is_ok()
    }

    /// All edges ordered by (source, target).
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut e: Vec<_> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(n, ps)| ps.iter().map(move |&m| (m, n)))
            .collect();
        e.sort_unstable();
        e
    }

    /// 0/1 adjacency matrix with entry `[m][n] = 1` for an edge m → n.
    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        let n = self.num_nodes();
        let mut a = vec![vec![0u8; n]; n];
        for (src, dst) in self.edges() {
            a[src][dst] = 1;
        }
        a
    }
}

/// Number of joint configurations of `parents`.
pub fn num_parent_states(parents: &[NodeId], cardinalities: &[usize]) -> usize {
    parents.iter().map(|&p| cardinalities[p]).product()
}

/// Mixed-radix index of the parents' joint state; the lowest parent id is the
/// least significant digit. Zero for an empty parent set.
pub fn parent_state_index_of(parents: &[NodeId], cardinalities: &[usize], states: &[usize]) -> usize {
    let mut index = 0;
    let mut radix = 1;
    for &p in parents {
        index += states[p] * radix;
        radix *= cardinalities[p];
    }
    index
}

/// Augmented CTBN: graph, state spaces, survival parameters φ and
/// transition probabilities θ for every (node, local state, parent state).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    graph: Graph,
    cardinalities: Vec<usize>,
    /// `phi[n][x * U_n + u]`
    phi: Vec<Vec<SurvivalParams>>,
    /// `theta[n][x * U_n + u][x']`
    theta: Vec<Vec<Vec<f64>>>,
}

impl NetworkModel {
    /// Validates and assembles a model. Tables are indexed `[n][x * U_n + u]`
    /// where `U_n` is the number of parent configurations of node n.
    pub fn new(
        graph: Graph,
        cardinalities: Vec<usize>,
        phi: Vec<Vec<SurvivalParams>>,
        theta: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n_nodes = graph.num_nodes();
        if cardinalities.len() != n_nodes {
            return Err(Error::InvalidModel(format!(
                "{} cardinalities for {n_nodes} nodes",
                cardinalities.len()
            )));
        }
        if let Some(n) = cardinalities.iter().position(|&c| c < 2) {
            return Err(Error::InvalidModel(format!("node {n} has fewer than two states")));
        }
        if phi.len() != n_nodes || theta.len() != n_nodes {
            return Err(Error::InvalidModel("phi/theta tables must have one entry per node".into()));
        }
        for n in 0..n_nodes {
            let card = cardinalities[n];
            let rows = card * num_parent_states(graph.parents(n), &cardinalities);
            if phi[n].len() != rows || theta[n].len() != rows {
                return Err(Error::InvalidModel(format!(
                    "node {n}: expected {rows} (state, parent-state) entries, got phi {} theta {}",
                    phi[n].len(),
                    theta[n].len()
                )));
            }
            let u_count = rows / card;
            for (row, probs) in theta[n].iter().enumerate() {
                let x = row / u_count;
                validate_theta_row(probs, card, x)
                    .map_err(|msg| Error::InvalidModel(format!("theta {n}/{x}/{}: {msg}", row % u_count)))?;
            }
        }
        Ok(Self {
            graph,
            cardinalities,
            phi,
            theta,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn num_parent_states(&self, n: NodeId) -> usize {
        num_parent_states(self.graph.parents(n), &self.cardinalities)
    }

    pub fn parent_state_index(&self, n: NodeId, states: &[usize]) -> usize {
        parent_state_index_of(self.graph.parents(n), &self.cardinalities, states)
    }

    fn row(&self, n: NodeId, x: usize, u: usize) -> usize {
        x * self.num_parent_states(n) + u
    }

    pub fn phi(&self, n: NodeId, x: usize, u: usize) -> &SurvivalParams {
        &self.phi[n][self.row(n, x, u)]
    }

    pub fn theta(&self, n: NodeId, x: usize, u: usize) -> &[f64] {
        &self.theta[n][self.row(n, x, u)]
    }

    /// Survival parameters governing node `n` in the joint state `states`.
    pub fn phi_at(&self, n: NodeId, states: &[usize]) -> &SurvivalParams {
        self.phi(n, states[n], self.parent_state_index(n, states))
    }

    pub fn theta_at(&self, n: NodeId, states: &[usize]) -> &[f64] {
        self.theta(n, states[n], self.parent_state_index(n, states))
    }

    pub fn phi_table(&self) -> &[Vec<SurvivalParams>] {
        &self.phi
    }

    pub fn theta_table(&self) -> &[Vec<Vec<f64>>] {
        &self.theta
    }

    /// Deterministic transition table for binary nodes: every state jumps to
    /// the other one.
    pub fn binary_theta_row(x: usize) -> Vec<f64> {
        let mut row = vec![0.0; 2];
        row[1 - x] = 1.0;
        row
    }
}

fn validate_theta_row(probs: &[f64], card: usize, x: usize) -> std::result::Result<(), String> {
    if probs.len() != card {
        return Err(format!("expected {card} probabilities, got {}", probs.len()));
    }
    if probs[x] != 0.0 {
        return Err("self-transition probability must be 0".into());
    }
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err("probabilities must be finite and nonnegative".into());
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > THETA_SUM_TOLERANCE {
        return Err(format!("probabilities sum to {sum}"));
    }
    Ok(())
}

/// Joint local states and local clocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockedState {
    pub states: Vec<usize>,
    pub clocks: Vec<f64>,
}

impl ClockedState {
    /// States with all clocks at zero.
    pub fn fresh(states: Vec<usize>) -> Self {
        let clocks = vec![0.0; states.len()];
        Self { states, clocks }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Ages every clock by `s`, then resets the clock of `node` and moves it
    /// to `new_state`.
    pub fn apply_transition(&mut self, s: f64, node: NodeId, new_state: usize) {
        for c in &mut self.clocks {
            *c += s;
        }
        self.clocks[node] = 0.0;
        self.states[node] = new_state;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub node: NodeId,
    pub state: usize,
}

/// A fully observed path on `[0, end_time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: ClockedState,
    pub events: Vec<Event>,
    pub end_time: f64,
}

impl Trajectory {
    /// Checks ordering and consistency; with `cardinalities`, also state ranges.
    pub fn validate(&self, cardinalities: Option<&[usize]>) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTrajectory(msg));
        let n = self.initial.states.len();
        if n == 0 || self.initial.clocks.len() != n {
            return bad("initial states and clocks must be nonempty and of equal length".into());
        }
        if self.initial.clocks.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return bad("initial clocks must be finite and >= 0".into());
        }
        if !(self.end_time.is_finite() && self.end_time > 0.0) {
            return bad(format!("end time must be finite and > 0, got {}", self.end_time));
        }
        if let Some(cards) = cardinalities {
            if cards.len() != n {
                return bad(format!("trajectory has {n} nodes, model has {}", cards.len()));
            }
            if let Some(i) = (0..n).find(|&i| self.initial.states[i] >= cards[i]) {
                return bad(format!("initial state of node {i} out of range"));
            }
        }
        let mut states = self.initial.states.clone();
        let mut last = 0.0;
        for (i, e) in self.events.iter().enumerate() {
            if !(e.time > last) || !e.time.is_finite() {
                return bad(format!("event {i} at time {} is not after {last}", e.time));
            }
            if e.time >= self.end_time {
                return bad(format!("event {i} at time {} is not before the end time", e.time));
            }
            if e.node >= n {
                return bad(format!("event {i} names node {} of {n}", e.node));
            }
            if let Some(cards) = cardinalities {
                if e.state >= cards[e.node] {
                    return bad(format!("event {i}: state {} out of range", e.state));
                }
            }
            if states[e.node] == e.state {
                return bad(format!("event {i}: node {} already in state {}", e.node, e.state));
            }
            states[e.node] = e.state;
            last = e.time;
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.initial.states.len()
    }

    /// Rebuilds a trajectory from its windows.
    pub fn from_windows(windows: &[Window]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::InvalidTrajectory("no windows".into()))?;
        let mut events = Vec::with_capacity(windows.len().saturating_sub(1));
        let mut t = 0.0;
        for w in windows {
            t += w.duration;
            if let Outcome::Transition { node, state } = w.outcome {
                events.push(Event { time: t, node, state });
            }
        }
        Ok(Self {
            initial: first.entry.clone(),
            events,
            end_time: t,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Transition { node: NodeId, state: usize },
    Censored,
}

/// Interval between two consecutive events (or the last event and the end
/// of observation), entered in `entry` and left after `duration`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub entry: ClockedState,
    pub duration: f64,
    pub outcome: Outcome,
}

impl Window {
    /// Clock of node `n` at the end of the window.
    pub fn exit_clock(&self, n: NodeId) -> f64 {
        self.entry.clocks[n] + self.duration
    }
}

/// Splits a trajectory into time windows, propagating clocks with the update
/// rule: all clocks age by the window duration, the transitioning node's
/// clock restarts at zero. The last window is censored.
pub fn derive_windows(traj: &Trajectory) -> Result<Vec<Window>> {
    traj.validate(None)?;
    let mut windows = Vec::with_capacity(traj.events.len() + 1);
    let mut current = traj.initial.clone();
    let mut t = 0.0;
    for e in &traj.events {
        let s = e.time - t;
        windows.push(Window {
            entry: current.clone(),
            duration: s,
            outcome: Outcome::Transition {
                node: e.node,
                state: e.state,
            },
        });
        current.apply_transition(s, e.node, e.state);
        t = e.time;
    }
    windows.push(Window {
        entry: current,
        duration: traj.end_time - t,
        outcome: Outcome::Censored,
    });
    Ok(windows)
}
