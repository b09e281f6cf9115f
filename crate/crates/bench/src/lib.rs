//! Fixtures shared by the benchmarks.

use disorder_core::{GeometricPrior, NetModel, SensorModel, SimpleGame, TransitionKernel};

pub fn sensor(pi0: f64, p: f64, c: f64) -> SensorModel {
    SensorModel::new(
        TransitionKernel::new(&[vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap(),
        TransitionKernel::new(&[vec![0.3, 0.7], vec![0.1, 0.9]]).unwrap(),
        GeometricPrior::new(pi0, p).unwrap(),
        c,
        0,
    )
    .unwrap()
}

/// `sensors` two-state sensors observed for `horizon` steps.
pub fn net(sensors: usize, horizon: usize) -> NetModel {
    let list = (0..sensors).map(|r| sensor(0.05 + 0.02 * r as f64, 0.85, 0.1 + 0.05 * r as f64)).collect();
    NetModel::new(list, horizon).unwrap()
}

pub fn majority(players: usize) -> SimpleGame {
    SimpleGame::majority(players).unwrap()
}
