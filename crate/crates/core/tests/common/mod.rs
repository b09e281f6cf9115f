#![allow(dead_code)]

use disorder_core::{GeometricPrior, SensorModel, TransitionKernel};
use disorder_oracle::RawSensor;
use rand::Rng;

pub fn random_kernel<R: Rng>(rng: &mut R, states: usize, zero_rate: f64) -> Vec<Vec<f64>> {
    (0..states)
        .map(|_| loop {
            let row: Vec<f64> = (0..states)
                .map(|_| if rng.random::<f64>() < zero_rate { 0.0 } else { rng.random::<f64>() })
                .collect();
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                break row.iter().map(|v| v / sum).collect();
            }
        })
        .collect()
}

pub fn raw_sensor<R: Rng>(rng: &mut R, states: usize) -> RawSensor {
    RawSensor {
        pre: random_kernel(rng, states, 0.0),
        post: random_kernel(rng, states, 0.0),
        pi0: rng.random_range(0.0..0.5),
        p: rng.random_range(0.5..0.99),
        c: rng.random_range(0.02..0.5),
        x0: rng.random_range(0..states),
    }
}

pub fn to_model(s: &RawSensor) -> SensorModel {
    SensorModel::new(
        TransitionKernel::new(&s.pre).unwrap(),
        TransitionKernel::new(&s.post).unwrap(),
        GeometricPrior::new(s.pi0, s.p).unwrap(),
        s.c,
        s.x0,
    )
    .unwrap()
}

/// Hand-made edge cases: identical regimes, certain disorder, no prior
/// mass at zero, deterministic kernels and forbidden transitions.
pub fn crafted_sensors() -> Vec<RawSensor> {
    let base = RawSensor {
        pre: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        post: vec![vec![0.3, 0.7], vec![0.1, 0.9]],
        pi0: 0.1,
        p: 0.9,
        c: 0.1,
        x0: 0,
    };
    vec![
        RawSensor { post: base.pre.clone(), ..base.clone() },
        RawSensor { pi0: 1.0, ..base.clone() },
        RawSensor { pi0: 0.0, p: 0.6, ..base.clone() },
        RawSensor {
            pre: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            post: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            ..base.clone()
        },
        RawSensor {
            pre: vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5]],
            post: vec![vec![0.0, 0.5, 0.5], vec![0.2, 0.0, 0.8], vec![0.0, 0.0, 1.0]],
            x0: 1,
            ..base
        },
    ]
}

/// Two-state sensor used across tests.
pub fn two_state(pi0: f64, p: f64, c: f64) -> RawSensor {
    RawSensor {
        pre: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        post: vec![vec![0.3, 0.7], vec![0.2, 0.8]],
        pi0,
        p,
        c,
        x0: 0,
    }
}
