mod common;

use common::{raw_sensor, to_model, two_state};
use disorder_core::equilibrium::{joint_policy_risk_exact, reachable_grids, DEFAULT_STATE_BUDGET};
use disorder_core::fusion::evaluate_fusion_mc;
use disorder_core::mc::estimate_many;
use disorder_core::policy::AlwaysStop;
use disorder_core::single_solver::{policy_risk_exact, DEFAULT_TREE_LIMIT};
use disorder_core::{compare, estimate_policy_risk, solve_game, NaiveFusion, NetModel, PiGrid, SimpleGame};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn estimates_cover_exact_risk() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let raws = vec![raw_sensor(&mut rng, 2), raw_sensor(&mut rng, 2)];
    let net = NetModel::new(raws.iter().map(to_model).collect(), 4).unwrap();
    let game = SimpleGame::unanimity(2).unwrap();
    let sol = solve_game(&net, &game, reachable_grids(&net), DEFAULT_STATE_BUDGET).unwrap();
    let exact = joint_policy_risk_exact(&net, &game, &sol, DEFAULT_TREE_LIMIT).unwrap();
    let mut covered = 0;
    for meta in 0..100u64 {
        let e = estimate_policy_risk(&net, &game, &sol, 10_000, 1000 + meta).unwrap();
        let r = e.sensors[(meta % 2) as usize].risk;
        if (r.mean - exact[(meta % 2) as usize]).abs() <= 3.0 * r.se.unwrap() {
            covered += 1;
        }
    }
    assert!(covered >= 99, "{covered}");
}

#[test]
fn dictator_fusion_matches_single_sensor_risk() {
    let net = NetModel::new(vec![to_model(&two_state(0.05, 0.85, 0.1))], 8).unwrap();
    let game = SimpleGame::dictator(1, 0).unwrap();
    let fusion = NaiveFusion::solve(&net, &[PiGrid::uniform(100).unwrap()]).unwrap();
    let exact = policy_risk_exact(&net.sensors[0], &fusion.policies[0], 8, DEFAULT_TREE_LIMIT).unwrap();
    let report = evaluate_fusion_mc(&net, &game, &fusion, 100_000, 5).unwrap();
    let r = report.estimate.sensors[0];
    assert!((r.risk.mean - exact.risk).abs() <= 3.0 * r.risk.se.unwrap());
    assert!((r.false_alarm.mean - exact.false_alarm).abs() <= 3.0 * r.false_alarm.se.unwrap());
    assert!((r.delay.mean - exact.delay).abs() <= 3.0 * r.delay.se.unwrap());
}

#[test]
fn equilibrium_value_is_the_mc_target_for_one_player() {
    let net = NetModel::new(vec![to_model(&two_state(0.05, 0.85, 0.1))], 6).unwrap();
    let game = SimpleGame::dictator(1, 0).unwrap();
    let sol = solve_game(&net, &game, reachable_grids(&net), DEFAULT_STATE_BUDGET).unwrap();
    let e = estimate_policy_risk(&net, &game, &sol, 100_000, 6).unwrap();
    let r = e.sensors[0].risk;
    assert!((r.mean - sol.initial_values()[0]).abs() <= 3.0 * r.se.unwrap());
}

#[test]
fn always_stop_false_alarm_is_one_minus_pi0() {
    let net = NetModel::new(vec![to_model(&two_state(0.3, 0.9, 0.1))], 3).unwrap();
    let game = SimpleGame::dictator(1, 0).unwrap();
    let e = estimate_policy_risk(&net, &game, &AlwaysStop, 100_000, 7).unwrap();
    let fa = e.sensors[0].false_alarm;
    assert!((fa.mean - 0.7).abs() <= 3.0 * fa.se.unwrap());
}

#[test]
fn unanimity_alarms_later_than_a_dictator() {
    let s = to_model(&two_state(0.05, 0.85, 0.1));
    let net = NetModel::new(vec![s.clone(), s], 10).unwrap();
    let fusion = NaiveFusion::solve(&net, &[PiGrid::uniform(100).unwrap(), PiGrid::uniform(100).unwrap()]).unwrap();
    let una = evaluate_fusion_mc(&net, &SimpleGame::unanimity(2).unwrap(), &fusion, 50_000, 8).unwrap();
    let dic = evaluate_fusion_mc(&net, &SimpleGame::dictator(2, 0).unwrap(), &fusion, 50_000, 8).unwrap();
    assert!(una.estimate.sensors[0].false_alarm.mean < dic.estimate.sensors[0].false_alarm.mean);
    assert!(una.estimate.sensors[0].delay.mean > dic.estimate.sensors[0].delay.mean);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let raws = vec![raw_sensor(&mut rng, 2), raw_sensor(&mut rng, 3)];
    let net = NetModel::new(raws.iter().map(to_model).collect(), 10).unwrap();
    let game = SimpleGame::unanimity(2).unwrap();
    let grids = vec![PiGrid::uniform(20).unwrap(), PiGrid::uniform(20).unwrap()];
    let run = |workers: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        pool.install(|| {
            let sol = solve_game(&net, &game, grids.clone(), DEFAULT_STATE_BUDGET).unwrap();
            let fusion = NaiveFusion::solve(&net, &grids).unwrap();
            let cmp = compare(&net, &game, &fusion, &sol, 5000, 9).unwrap();
            (sol.stages, cmp)
        })
    };
    let (a_stages, a_cmp) = run(1);
    let (b_stages, b_cmp) = run(4);
    assert_eq!(a_stages, b_stages);
    assert_eq!(a_cmp, b_cmp);
}

#[test]
fn compared_policies_see_the_same_paths() {
    let s = to_model(&two_state(0.1, 0.8, 0.2));
    let net = NetModel::new(vec![s.clone(), s], 5).unwrap();
    let game = SimpleGame::unanimity(2).unwrap();
    let grids = reachable_grids(&net);
    let sol = solve_game(&net, &game, grids.clone(), DEFAULT_STATE_BUDGET).unwrap();
    let fusion = NaiveFusion::solve(&net, &grids).unwrap();
    let cmp = compare(&net, &game, &fusion, &sol, 3000, 10).unwrap();
    let alone = estimate_policy_risk(&net, &game, &sol, 3000, 10).unwrap();
    assert_eq!(cmp.naive.digest, cmp.equilibrium.digest);
    assert_eq!(cmp.equilibrium.digest, alone.digest);
    assert_eq!(cmp.equilibrium, alone);
    let other_seed = estimate_policy_risk(&net, &game, &sol, 3000, 11).unwrap();
    assert_ne!(other_seed.digest, alone.digest);
    let many = estimate_many(&net, &game, &[&sol, &sol], 3000, 10).unwrap();
    assert!(many.paired[0].iter().all(|d| d.mean == 0.0));
}

#[test]
fn one_player_naive_and_equilibrium_coincide() {
    let net = NetModel::new(vec![to_model(&two_state(0.05, 0.85, 0.1))], 6).unwrap();
    let game = SimpleGame::dictator(1, 0).unwrap();
    let grids = reachable_grids(&net);
    let sol = solve_game(&net, &game, grids.clone(), DEFAULT_STATE_BUDGET).unwrap();
    let fusion = NaiveFusion::solve(&net, &grids).unwrap();
    let cmp = compare(&net, &game, &fusion, &sol, 20_000, 12).unwrap();
    assert_eq!(cmp.difference[0].mean, 0.0);
}
