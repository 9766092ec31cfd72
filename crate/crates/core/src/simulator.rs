//! Exact simulation of the clock-augmented CTBN.
//!
//! At every step each node draws a residual holding time from its survival
//! law truncated at its current clock; the smallest residual decides both
//! the time to the next event and the node that moves. The minimum of these
//! competing draws has the global survival `Π_n Λ_n(τ_n + s) / Λ_n(τ_n)`
//! and the winner is distributed proportionally to the hazards at `τ + s`.
//!
//! Randomness is consumed in a fixed order per step: one residual for each
//! node `0..N`, then one uniform for the next-state categorical.

use crate::error::{Error, Result};
use crate::model::{ClockedState, Event, NetworkModel, NodeId, Trajectory};
use crate::rng::UniformSource;
use crate::special::log_sum_exp;

/// `ln` of the probability that no node moves within `s`, given `state`.
pub fn global_log_survival(model: &NetworkModel, state: &ClockedState, s: f64) -> Result<f64> {
    let mut total = 0.0;
    for n in 0..model.num_nodes() {
        let p = model.phi_at(n, &state.states);
        let tau = state.clocks[n];
        total += p.log_survival(s + tau)? - p.log_survival(tau)?;
    }
    Ok(total)
}

/// Log density of the time to the next event, given `state`.
pub fn global_survival_log_density(model: &NetworkModel, state: &ClockedState, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("density requires s > 0, got {s}")));
    }
    let n_nodes = model.num_nodes();
    let mut ratios = Vec::with_capacity(n_nodes);
    let mut densities = Vec::with_capacity(n_nodes);
    for n in 0..n_nodes {
        let p = model.phi_at(n, &state.states);
        let tau = state.clocks[n];
        let base = p.log_survival(tau)?;
        ratios.push(p.log_survival(s + tau)? - base);
        densities.push(p.log_density(s + tau)? - base);
    }
    let terms: Vec<f64> = (0..n_nodes)
        .map(|n| {
            let others: f64 = (0..n_nodes).filter(|&k| k != n).map(|k| ratios[k]).sum();
            densities[n] + others
        })
        .collect();
    Ok(log_sum_exp(&terms))
}

/// Distribution of the moving node (proportional to hazards at `τ + s`) and,
/// per node, of its next state.
pub fn transition_categoricals(
    model: &NetworkModel,
    state: &ClockedState,
    s: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let hazards = (0..model.num_nodes())
        .map(|n| model.phi_at(n, &state.states).hazard(state.clocks[n] + s))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = hazards.iter().sum();
    if !(total > 0.0) {
        return Err(Error::StalledProcess);
    }
    let node_probs = hazards.iter().map(|h| h / total).collect();
    let next = (0..model.num_nodes())
        .map(|n| model.theta_at(n, &state.states).to_vec())
        .collect();
    Ok((node_probs, next))
}

fn check_initial(model: &NetworkModel, init: &ClockedState) -> Result<()> {
    let cards = model.cardinalities();
    if init.states.len() != cards.len() || init.clocks.len() != cards.len() {
        return Err(Error::InvalidTrajectory(format!(
            "initial state has {} entries, model has {} nodes",
            init.states.len(),
            cards.len()
        )));
    }
    for n in 0..cards.len() {
        if init.states[n] >= cards[n] {
            return Err(Error::InvalidTrajectory(format!("initial state of node {n} out of range")));
        }
        let tau = init.clocks[n];
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidTrajectory(format!("initial clock of node {n} is {tau}")));
        }
        if model.phi_at(n, &init.states).log_survival(tau)? == f64::NEG_INFINITY {
            return Err(Error::Domain(format!("node {n} has zero survival at its initial clock")));
        }
    }
    Ok(())
}

/// Draws an index from `probs` with one uniform, skipping zero entries.
fn draw_categorical(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = i;
            if target < cum {
                return i;
            }
        }
    }
    last_positive
}

/// One competing-clocks step: the waiting time, the moving node and its new state.
fn step<U: UniformSource + ?Sized>(
    model: &NetworkModel,
    state: &ClockedState,
    src: &mut U,
) -> Result<(f64, NodeId, usize)> {
    let mut best = f64::INFINITY;
    let mut winner = 0;
    for n in 0..model.num_nodes() {
        let r = model
            .phi_at(n, &state.states)
            .sample_truncated(state.clocks[n], src)?;
        if r < best {
            best = r;
            winner = n;
        }
    }
    if !best.is_finite() {
        return Err(Error::StalledProcess);
    }
    let next = draw_categorical(model.theta_at(winner, &state.states), src.next_uniform());
    Ok((best, winner, next))
}

/// Samples a trajectory on `[0, end_time]`; the last window is censored at
/// `end_time`.
pub fn gillespie_sample<U: UniformSource + ?Sized>(
    model: &NetworkModel,
    init: &ClockedState,
    end_time: f64,
    src: &mut U,
) -> Result<Trajectory> {
    if !(end_time.is_finite() && end_time > 0.0) {
        return Err(Error::Domain(format!("end time must be finite and > 0, got {end_time}")));
    }
    run(model, init, Some(end_time), usize::MAX, src)
}

/// Samples until `num_events` events have occurred; observation ends at the
/// time of the following event, which is not recorded.
pub fn gillespie_sample_events<U: UniformSource + ?Sized>(
    model: &NetworkModel,
    init: &ClockedState,
    num_events: usize,
    src: &mut U,
) -> Result<Trajectory> {
    run(model, init, None, num_events, src)
}

fn run<U: UniformSource + ?Sized>(
    model: &NetworkModel,
    init: &ClockedState,
    end_time: Option<f64>,
    max_events: usize,
    src: &mut U,
) -> Result<Trajectory> {
    check_initial(model, init)?;
    let mut state = init.clone();
    let mut events = Vec::new();
    let mut t = 0.0f64;
    loop {
        let (s, node, new_state) = step(model, &state, src)?;
        let mut next_t = t + s;
        if next_t <= t {
            next_t = t.next_up();
        }
        if let Some(end) = end_time {
            if next_t > end {
                return Ok(Trajectory {
                    initial: init.clone(),
                    events,
                    end_time: end,
                });
            }
        }
        if events.len() == max_events {
            return Ok(Trajectory {
                initial: init.clone(),
                events,
                end_time: next_t,
            });
        }
        state.apply_transition(next_t - t, node, new_state);
        events.push(Event {
            time: next_t,
            node,
            state: new_state,
        });
        t = next_t;
    }
}

impl Trajectory {
    /// The first `m` events, observed until the time of event `m + 1` (or the
    /// original end time when fewer events exist).
    pub fn prefix(&self, m: usize) -> Trajectory {
        let m = m.min(self.events.len());
        let end_time = self.events.get(m).map_or(self.end_time, |e| e.time);
        Trajectory {
            initial: self.initial.clone(),
            events: self.events[..m].to_vec(),
            end_time,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_windows, Graph, Outcome};
    use crate::rng::{stream_rng, ReplayUniforms};
    use crate::survival::SurvivalParams;

    fn independent(params: Vec<SurvivalParams>) -> NetworkModel {
        let n = params.len();
        NetworkModel::new(
            Graph::empty(n).unwrap(),
            vec![2; n],
            params.iter().map(|p| vec![*p, *p]).collect(),
            (0..n)
                .map(|_| vec![NetworkModel::binary_theta_row(0), NetworkModel::binary_theta_row(1)])
                .collect(),
        )
        .unwrap()
    }

    fn weibull_pair() -> NetworkModel {
        let w = SurvivalParams::weibull(2.0, 1.0).unwrap();
        independent(vec![w, w])
    }

    #[test]
    fn global_survival_examples() {
        let m = weibull_pair();
        let st = ClockedState { states: vec![0, 0], clocks: vec![1.0, 0.0] };
        assert!((global_log_survival(&m, &st, 1.0).unwrap() + 4.0).abs() < 1e-14);
        let ld = global_survival_log_density(&m, &st, 1.0).unwrap();
        assert!((ld - (6f64.ln() - 4.0)).abs() < 1e-13);

        let e = independent(vec![SurvivalParams::exponential(1.0).unwrap(), SurvivalParams::exponential(3.0).unwrap()]);
        let st2 = ClockedState { states: vec![0, 1], clocks: vec![2.0, 0.3] };
        assert!((global_log_survival(&e, &st2, 0.5).unwrap() + 2.0).abs() < 1e-14);
        assert!((global_survival_log_density(&e, &st2, 0.5).unwrap() - (4f64.ln() - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn single_node_matches_local_kernel() {
        let p = SurvivalParams::gamma(2.5, 1.5).unwrap();
        let m = independent(vec![p]);
        let st = ClockedState::fresh(vec![0]);
        assert_eq!(global_log_survival(&m, &st, 0.7).unwrap(), p.log_survival(0.7).unwrap());
        assert!((global_survival_log_density(&m, &st, 0.7).unwrap() - p.log_density(0.7).unwrap()).abs() < 1e-15);
        let (probs, _) = transition_categoricals(&m, &st, 0.7).unwrap();
        assert_eq!(probs, vec![1.0]);
    }

    #[test]
    fn categoricals_follow_hazards() {
        let e = independent(vec![SurvivalParams::exponential(1.0).unwrap(), SurvivalParams::exponential(3.0).unwrap()]);
        let (p, next) = transition_categoricals(&e, &ClockedState::fresh(vec![0, 0]), 4.0).unwrap();
        assert_eq!(p, vec![0.25, 0.75]);
        assert_eq!(next[1], vec![0.0, 1.0]);
        let m = weibull_pair();
        let st = ClockedState { states: vec![0, 0], clocks: vec![1.0, 0.0] };
        let (p, _) = transition_categoricals(&m, &st, 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_hazard_everywhere_stalls() {
        let m = independent(vec![SurvivalParams::weibull(2.0, 1.0).unwrap()]);
        let err = transition_categoricals(&m, &ClockedState::fresh(vec![0]), 0.0).unwrap_err();
        assert!(matches!(err, Error::StalledProcess));
    }

    #[test]
    fn injected_uniform_gives_inverse_cdf_time() {
        let m = independent(vec![SurvivalParams::exponential(1.0).unwrap()]);
        let mut src = ReplayUniforms::new(vec![(-2.0f64).exp(), 0.5, (-2.0f64).exp(), 0.5]);
        let tr = gillespie_sample(&m, &ClockedState::fresh(vec![0]), 3.0, &mut src).unwrap();
        assert_eq!(tr.events.len(), 1);
        assert!((tr.events[0].time - 2.0).abs() < 1e-15);
        assert_eq!(tr.events[0].state, 1);
        assert_eq!(tr.end_time, 3.0);
    }

    #[test]
    fn weibull_pair_hand_trace() {
        // Step 1 from clocks (0, 0): residuals sqrt(-ln u) = (1.0, 1.5), node 0 wins at t = 1.
        // Step 2 from clocks (0, 1): node 0 residual sqrt(4) = 2; node 1 residual
        // sqrt(1 + 1.25) - 1 = 0.5, node 1 wins at t = 1.5.
        // Step 3 from clocks (0.5, 0): residuals 2.5 and 3 overshoot T = 2.5.
        let m = weibull_pair();
        let u = |e: f64| (-e).exp();
        let stream = vec![u(1.0), u(2.25), 0.3, u(4.0), u(1.25), 0.9, u(9.0), u(9.0), 0.1];
        let mut src = ReplayUniforms::new(stream);
        let tr = gillespie_sample(&m, &ClockedState::fresh(vec![0, 0]), 2.5, &mut src).unwrap();
        assert_eq!(src.consumed(), 9);
        assert_eq!(tr.events.len(), 2);
        assert_eq!((tr.events[0].node, tr.events[0].state), (0, 1));
        assert!((tr.events[0].time - 1.0).abs() < 1e-14);
        assert_eq!((tr.events[1].node, tr.events[1].state), (1, 1));
        assert!((tr.events[1].time - 1.5).abs() < 1e-14);
        let w = derive_windows(&tr).unwrap();
        assert!((w[2].entry.clocks[0] - 0.5).abs() < 1e-14);
        assert_eq!(w[2].outcome, Outcome::Censored);
    }

    #[test]
    fn seeded_runs_are_reproducible_and_valid() {
        let m = independent(vec![
            SurvivalParams::weibull(3.0, 2.0).unwrap(),
            SurvivalParams::gamma(4.0, 3.0).unwrap(),
            SurvivalParams::rayleigh(0.5).unwrap(),
        ]);
        let init = ClockedState::fresh(vec![0, 1, 0]);
        let a = gillespie_sample(&m, &init, 20.0, &mut stream_rng(11, 0)).unwrap();
        let b = gillespie_sample(&m, &init, 20.0, &mut stream_rng(11, 0)).unwrap();
        assert_eq!(a, b);
        assert!(!a.events.is_empty());
        a.validate(Some(m.cardinalities())).unwrap();
    }

    #[test]
    fn event_capped_sampling_and_prefixes() {
        let m = weibull_pair();
        let tr = gillespie_sample_events(&m, &ClockedState::fresh(vec![0, 0]), 50, &mut stream_rng(5, 0)).unwrap();
        assert_eq!(tr.events.len(), 50);
        tr.validate(None).unwrap();
        let p = tr.prefix(10);
        assert_eq!(p.events.len(), 10);
        assert_eq!(p.end_time, tr.events[10].time);
        p.validate(None).unwrap();
        assert_eq!(tr.prefix(50), tr);
    }
}
