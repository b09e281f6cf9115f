mod common;

use common::{raw_sensor, to_model};
use disorder_core::equilibrium::{
    best_response_value, joint_policy_risk_exact, reachable_grids, CanonicalProfile, DEFAULT_STATE_BUDGET,
};
use disorder_core::policy::JointPolicy;
use disorder_core::single_solver::DEFAULT_TREE_LIMIT;
use disorder_core::{solve_finite_horizon, solve_game, verify_equilibrium, NetModel, PiGrid, SimpleGame};
use disorder_core::simple_game::Coalition;
use disorder_oracle::{joint_rule_risk, min_over_stop_subsets, Outcome, RawSensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_player_games() -> Vec<SimpleGame> {
    vec![
        SimpleGame::unanimity(2).unwrap(),
        SimpleGame::dictator(2, 0).unwrap(),
        SimpleGame::dictator(2, 1).unwrap(),
        SimpleGame::from_minimal(2, &[Coalition(1), Coalition(2)]).unwrap(),
    ]
}

fn net_of(raws: &[RawSensor], horizon: usize) -> NetModel {
    NetModel::new(raws.iter().map(to_model).collect(), horizon).unwrap()
}

#[test]
fn best_response_equals_subset_minimization() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let games = two_player_games();
    let horizon = 2;
    for k in 0..10 {
        let raws = vec![raw_sensor(&mut rng, 2), raw_sensor(&mut rng, 2)];
        let net = net_of(&raws, horizon);
        let game = &games[k % games.len()];
        let winning: Vec<u32> = game.winning().iter().map(|c| c.0).collect();
        let sol = solve_game(&net, game, reachable_grids(&net), DEFAULT_STATE_BUDGET).unwrap();
        let points = disorder_core::equilibrium::decision_points(&net, DEFAULT_TREE_LIMIT).unwrap();
        for (n, x, pi_bits) in points {
            let pi: Vec<f64> = pi_bits.iter().map(|&b| f64::from_bits(b)).collect();
            let g: Vec<usize> = (0..2).map(|r| sol.grid.grids()[r].index_of(pi[r]).unwrap()).collect();
            let s = sol.grid.state_of(&x, &g);
            let stage = horizon - n;
            let prev = &sol.stages[stage - 1];
            for i in 0..2 {
                let outcomes: Vec<Outcome> = sol
                    .grid
                    .successors(s)
                    .iter()
                    .map(|t| {
                        let c = t.point.nearest();
                        Outcome {
                            prob: t.prob,
                            stop_payoff: 1.0 - t.point.pi[i],
                            cont: prev.values[i][c],
                            others_yes: (0..2).filter(|&j| prev.stop[j][c]).fold(0, |m, j| m | 1 << j),
                        }
                    })
                    .collect();
                let brute = min_over_stop_subsets(&winning, 2, i, &outcomes);
                let others = CanonicalProfile { cont: &prev.values };
                let br = best_response_value(&sol.grid, game, i, &others, &prev.values[i], s);
                assert!((br.value - brute).abs() <= 1e-12, "{} vs {brute}", br.value);
                let v = net.sensors[i].delay_cost * pi[i] + brute;
                assert!((sol.stages[stage].values[i][s] - v).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn no_unilateral_deviation_helps() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let games = two_player_games();
    for k in 0..4 {
        let raws = vec![raw_sensor(&mut rng, 2), raw_sensor(&mut rng, 2)];
        let net = net_of(&raws, 3);
        let sol = solve_game(&net, &games[k], reachable_grids(&net), DEFAULT_STATE_BUDGET).unwrap();
        assert!(sol.cycle_free());
        let report = verify_equilibrium(&sol, 50, k as u64, DEFAULT_TREE_LIMIT).unwrap();
        assert!(report.passed(), "{report:?}");
        for (i, p) in report.players.iter().enumerate() {
            assert!((p.base_risk - sol.initial_values()[i]).abs() <= 1e-10);
        }
    }
}

#[test]
fn joint_evaluator_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    struct Thresholds(Vec<Vec<f64>>);
    impl JointPolicy for Thresholds {
        fn votes(&self, _: usize, x: &[usize], pi: &[f64], _: &[bool], out: &mut [bool]) {
            for r in 0..out.len() {
                out[r] = pi[r] >= self.0[r][x[r]];
            }
        }
    }
    for game in two_player_games() {
        let raws = vec![raw_sensor(&mut rng, 2), raw_sensor(&mut rng, 2)];
        let net = net_of(&raws, 3);
        let thr: Vec<Vec<f64>> = (0..2).map(|_| (0..2).map(|_| rng.random::<f64>()).collect()).collect();
        let winning: Vec<u32> = game.winning().iter().map(|c| c.0).collect();
        let exact = joint_policy_risk_exact(&net, &game, &Thresholds(thr.clone()), DEFAULT_TREE_LIMIT).unwrap();
        let brute = joint_rule_risk(&raws, &winning, 3, &|_, hist| {
            (0..2)
                .map(|r| raws[r].posterior(hist[r]).unwrap_or(0.0) >= thr[r][hist[r][hist[r].len() - 1]])
                .collect()
        });
        for i in 0..2 {
            assert!((exact[i] - brute[i]).abs() <= 1e-12, "{} vs {}", exact[i], brute[i]);
        }
    }
}

#[test]
fn dictator_and_single_player_reduce_to_single_sensor() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let horizon = 6;
    let grid = PiGrid::uniform(20).unwrap();
    for d in 0..2 {
        let raws = vec![raw_sensor(&mut rng, 2), raw_sensor(&mut rng, 2)];
        let net = net_of(&raws, horizon);
        let game = SimpleGame::dictator(2, d).unwrap();
        let sol = solve_game(&net, &game, vec![grid.clone(), grid.clone()], DEFAULT_STATE_BUDGET).unwrap();
        let single = solve_finite_horizon(&net.sensors[d], &grid, horizon);
        for k in 0..=horizon {
            for s in 0..sol.grid.len() {
                let (x, g) = sol.grid.local(s, d);
                assert!((sol.stages[k].entry_values[d][s] - single.values[k].get(x, g)).abs() <= 1e-9);
            }
        }
    }
    let raws = vec![raw_sensor(&mut rng, 3)];
    let net = net_of(&raws, horizon);
    let game = SimpleGame::dictator(1, 0).unwrap();
    let sol = solve_game(&net, &game, vec![grid.clone()], DEFAULT_STATE_BUDGET).unwrap();
    let single = solve_finite_horizon(&net.sensors[0], &grid, horizon);
    for k in 0..=horizon {
        for s in 0..sol.grid.len() {
            let (x, g) = sol.grid.local(s, 0);
            assert!((sol.stages[k].entry_values[0][s] - single.values[k].get(x, g)).abs() <= 1e-9);
        }
    }
    assert!((sol.initial_values()[0] - single.initial_value()).abs() <= 1e-9);
}

#[test]
fn verifier_detects_a_spoiled_profile() {
    let raws = vec![common::two_state(0.1, 0.8, 0.05), common::two_state(0.2, 0.7, 0.05)];
    let net = net_of(&raws, 3);
    let game = SimpleGame::dictator(2, 0).unwrap();
    let mut sol = solve_game(&net, &game, reachable_grids(&net), DEFAULT_STATE_BUDGET).unwrap();
    let top = sol.stages.len() - 1;
    // the dictator now always stops at time 0
    sol.stages[top].canonical = false;
    sol.stages[top].stop[0].fill(true);
    let report = verify_equilibrium(&sol, 10, 0, DEFAULT_TREE_LIMIT).unwrap();
    assert!(!report.passed());
    assert!(report.players[0].max_decrease > 1e-3);
    assert!(report.players[0].single_flips > 0);
}
