use clockctbn::io::{read_trajectories, trajectories_to_string};
use clockctbn::likelihood::{regime_stats, StatKey};
use clockctbn::params::{map_estimate, BoxPrior};
use clockctbn::rng::stream_rng;
use clockctbn::simulator::gillespie_sample;
use clockctbn::{ClockedState, Family, Graph, NetworkModel, SurvivalParams, Trajectory};

fn switch(k0: f64, b0: f64, k1: f64, b1: f64) -> NetworkModel {
    NetworkModel::new(
        Graph::new(1, &[]).unwrap(),
        vec![2],
        vec![vec![SurvivalParams::weibull(k0, b0).unwrap(), SurvivalParams::weibull(k1, b1).unwrap()]],
        vec![(0..2).map(NetworkModel::binary_theta_row).collect()],
    )
    .unwrap()
}

#[test]
fn map_recovers_weibull_parameters_from_simulated_paths() {
    let model = switch(3.0, 1.0, 1.5, 2.0);
    let mut rng = stream_rng(17, 0);
    let traj = gillespie_sample(&model, &ClockedState::fresh(vec![0]), 4000.0, &mut rng).unwrap();
    let stats = regime_stats(&traj, model.graph(), model.cardinalities()).unwrap();
    for (state, truth) in [(0, [3.0, 1.0]), (1, [1.5, 2.0])] {
        let key = StatKey { node: 0, state, parent_state: 0 };
        let est = map_estimate(stats.get(&key).unwrap(), Family::Weibull, &BoxPrior::default_for(Family::Weibull), &[1.0, 1.0]).unwrap();
        assert!(est.converged);
        for (e, t) in est.params.iter().zip(truth) {
            assert!((e - t).abs() < 0.1 * t, "state {state}: {:?} vs {truth:?}", est.params);
        }
    }
}

#[test]
fn trajectories_survive_a_jsonl_round_trip() {
    let model = switch(2.0, 1.0, 2.0, 1.0);
    let mut rng = stream_rng(3, 0);
    let trajs: Vec<Trajectory> =
        (0..4).map(|_| gillespie_sample(&model, &ClockedState { states: vec![1], clocks: vec![0.25] }, 6.0, &mut rng).unwrap()).collect();
    let text = trajectories_to_string(&trajs).unwrap();
    let back = read_trajectories(text.as_bytes()).unwrap();
    assert_eq!(back, trajs);
}
