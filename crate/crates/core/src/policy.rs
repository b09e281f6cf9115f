//! Stopping rules for one sensor and for the whole net.

/// Markov stopping rule of a single sensor: decides at time `n` from the
/// current symbol and posterior.
pub trait SensorPolicy: Sync {
    fn stop(&self, n: usize, x: usize, pi: f64) -> bool;
}

/// Per-player stop votes for the net.
///
/// `prev` holds the votes cast at `n - 1` (all `false` at `n = 0`), which
/// lets persistent-alarm rules be expressed without hidden state.
pub trait JointPolicy: Sync {
    fn votes(&self, n: usize, x: &[usize], pi: &[f64], prev: &[bool], out: &mut [bool]);
}

/// Stop at the first opportunity.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysStop;

impl SensorPolicy for AlwaysStop {
    fn stop(&self, _: usize, _: usize, _: f64) -> bool {
        true
    }
}

impl JointPolicy for AlwaysStop {
    fn votes(&self, _: usize, _: &[usize], _: &[f64], _: &[bool], out: &mut [bool]) {
        out.fill(true);
    }
}

/// Never stop voluntarily; evaluation still forces a stop at the horizon.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeverStop;

impl SensorPolicy for NeverStop {
    fn stop(&self, _: usize, _: usize, _: f64) -> bool {
        false
    }
}

impl JointPolicy for NeverStop {
    fn votes(&self, _: usize, _: &[usize], _: &[f64], _: &[bool], out: &mut [bool]) {
        out.fill(false);
    }
}

/// Stop once the posterior reaches a per-symbol threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRule {
    pub thresholds: Vec<f64>,
}

impl SensorPolicy for ThresholdRule {
    fn stop(&self, _: usize, x: usize, pi: f64) -> bool {
        pi >= self.thresholds[x]
    }
}

/// Pseudo-random Markov rule: the decision is a fixed hash of
/// `(seed, n, x, pi)`, so it is reproducible and consistent across calls.
#[derive(Debug, Clone, Copy)]
pub struct HashedRule {
    pub seed: u64,
    pub stop_probability: f64,
}

impl HashedRule {
    fn mix(mut z: u64) -> u64 {
        // splitmix64 finalizer
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

impl SensorPolicy for HashedRule {
    fn stop(&self, n: usize, x: usize, pi: f64) -> bool {
        let h = Self::mix(self.seed ^ Self::mix(n as u64 ^ Self::mix(x as u64 ^ Self::mix(pi.to_bits()))));
        ((h >> 11) as f64 / (1u64 << 53) as f64) < self.stop_probability
    }
}
