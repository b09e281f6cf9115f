//! Sensors, disorder priors and the kernel-switching observation process.
//!
//! Each sensor observes a Markov chain on a finite alphabet. Before its
//! disorder time `theta` the chain moves with the `pre` kernel; the
//! transition into `X_n` uses the `post` kernel for every `n >= max(theta, 1)`.
//! `theta` has the geometric-with-atom prior
//!
//! ```text
//! P(theta = 0) = pi0,   P(theta = j) = (1 - pi0) p^(j-1) q,  j >= 1.
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row sums must be within this distance of one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Row-stochastic transition matrix over `0..states`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    states: usize,
    probs: Vec<f64>,
}

impl TransitionKernel {
    /// Validates `rows` as a square row-stochastic matrix. Rows are never
    /// renormalized: anything off by more than [`ROW_SUM_TOLERANCE`] is
    /// rejected.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let states = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != states) {
            return Err(Error::BadKernelShape { rows: states, cols: bad.len() });
        }
        if states < 2 {
            return Err(Error::BadKernelShape { rows: states, cols: states });
        }
        for (row, r) in rows.iter().enumerate() {
            for (col, &value) in r.iter().enumerate() {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(Error::NegativeEntry { row, col, value });
                }
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NonStochasticRow { row, sum });
            }
        }
        Ok(Self {
            states,
            probs: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn identity(states: usize) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..states)
            .map(|i| (0..states).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(&rows)
    }

    pub fn states(&self) -> usize {
        self.states
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.states + to]
    }

    #[inline]
    pub fn row(&self, from: usize) -> &[f64] {
        &self.probs[from * self.states..(from + 1) * self.states]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.states).map(|i| self.row(i).to_vec()).collect()
    }

    /// Draws the next symbol by inverting the row CDF.
    pub fn sample_next<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = self.row(from);
        let mut acc = 0.0;
        let mut last = from;
        for (to, &w) in row.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last = to;
                if u < acc {
                    return to;
                }
            }
        }
        // u landed in the rounding gap above the cumulative sum
        last
    }
}

/// Geometric disorder prior with an atom at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricPrior {
    pi0: f64,
    p: f64,
    q: f64,
}

impl GeometricPrior {
    /// `pi0` may be 0 or 1 (degenerate but well-defined); `p` must lie in
    /// the open unit interval.
    pub fn new(pi0: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi0) {
            return Err(Error::InvalidPrior(format!("pi0 = {pi0} is outside [0, 1]")));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidPrior(format!("p = {p} is outside (0, 1)")));
        }
        Ok(Self { pi0, p, q: 1.0 - p })
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    /// Probability that the disorder has not happened yet at the next step.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Per-step hazard, `1 - p`.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// P(theta = j).
    pub fn pmf(&self, j: u64) -> f64 {
        if j == 0 {
            self.pi0
        } else {
            (1.0 - self.pi0) * self.p.powf((j - 1) as f64) * self.q
        }
    }

    /// P(theta > n).
    pub fn tail(&self, n: u64) -> f64 {
        (1.0 - self.pi0) * self.p.powf(n as f64)
    }

    /// Inverse-CDF draw from a single uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        if u < self.pi0 {
            return 0;
        }
        // (u - pi0) / (1 - pi0) is uniform on [0, 1); flip it onto (0, 1]
        let v = 1.0 - (u - self.pi0) / (1.0 - self.pi0);
        let v = v.clamp(f64::MIN_POSITIVE, 1.0);
        let extra = (v.ln() / self.p.ln()).floor();
        if extra >= (u64::MAX - 1) as f64 {
            u64::MAX
        } else {
            1 + extra as u64
        }
    }
}

/// One sensor: both regime kernels, the disorder prior, the delay cost and
/// the starting symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub pre: TransitionKernel,
    pub post: TransitionKernel,
    pub prior: GeometricPrior,
    pub delay_cost: f64,
    pub initial_state: usize,
}

impl SensorModel {
    pub fn new(
        pre: TransitionKernel,
        post: TransitionKernel,
        prior: GeometricPrior,
        delay_cost: f64,
        initial_state: usize,
    ) -> Result<Self> {
        if pre.states() != post.states() {
            return Err(Error::InvalidSensor(format!(
                "pre kernel has {} states, post kernel has {}",
                pre.states(),
                post.states()
            )));
        }
        if !(delay_cost > 0.0 && delay_cost.is_finite()) {
            return Err(Error::InvalidSensor(format!("delay cost {delay_cost} must be positive")));
        }
        if initial_state >= pre.states() {
            return Err(Error::InvalidSensor(format!(
                "initial state {initial_state} is outside 0..{}",
                pre.states()
            )));
        }
        Ok(Self { pre, post, prior, delay_cost, initial_state })
    }

    pub fn states(&self) -> usize {
        self.pre.states()
    }

    /// Prior weights of the post and pre regimes for the next transition
    /// given posterior `pi`: `(pi + (1 - pi) q, (1 - pi) p)`.
    #[inline]
    pub fn regime_weights(&self, pi: f64) -> (f64, f64) {
        let post = pi + (1.0 - pi) * self.prior.q();
        let pre = (1.0 - pi) * self.prior.p();
        (post, pre)
    }

    /// Predictive probability of observing `to` next, given the current
    /// symbol and posterior.
    #[inline]
    pub fn predictive(&self, from: usize, pi: f64, to: usize) -> f64 {
        let (a1, a0) = self.regime_weights(pi);
        a1 * self.post.prob(from, to) + a0 * self.pre.prob(from, to)
    }
}

/// A net of independent sensors observed up to a common horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct NetModel {
    pub sensors: Vec<SensorModel>,
    pub horizon: usize,
}

impl NetModel {
    pub fn new(sensors: Vec<SensorModel>, horizon: usize) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::InvalidSensor("a net needs at least one sensor".into()));
        }
        Ok(Self { sensors, horizon })
    }

    pub fn size(&self) -> usize {
        self.sensors.len()
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self { sensors: self.sensors.clone(), horizon }
    }
}

/// Observations of one sensor, `X_0..X_N`, with the disorder time that
/// generated them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SensorPath {
    pub observations: Vec<usize>,
    pub theta: u64,
}

/// Random stream for replication `rep` of sensor `sensor` under master
/// seed `seed`.
///
/// Streams are counter-based: the ChaCha8 key comes from the master seed
/// and the stream id is `rep * 256 + sensor`. Adding a sensor or a
/// replication never shifts the draws of any other (rep, sensor) pair, and
/// results do not depend on which worker runs which replication.
pub fn sensor_stream(seed: u64, rep: u64, sensor: usize) -> ChaCha8Rng {
    debug_assert!(sensor < 256);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((rep << 8) | sensor as u64);
    rng
}

/// Draws a disorder time from the prior.
pub fn sample_disorder<R: Rng + ?Sized>(prior: &GeometricPrior, rng: &mut R) -> u64 {
    prior.sample(rng)
}

/// Simulates `X_0..X_horizon` for a known disorder time.
pub fn simulate_sensor<R: Rng + ?Sized>(
    model: &SensorModel,
    theta: u64,
    horizon: usize,
    rng: &mut R,
) -> SensorPath {
    let mut observations = Vec::with_capacity(horizon + 1);
    let mut x = model.initial_state;
    observations.push(x);
    let switch = theta.max(1);
    for n in 1..=horizon as u64 {
        let kernel = if n >= switch { &model.post } else { &model.pre };
        x = kernel.sample_next(x, rng);
        observations.push(x);
    }
    SensorPath { observations, theta }
}

/// Simulates every sensor of the net for replication `rep`. Each sensor
/// draws its disorder time and then its path from its own stream.
pub fn simulate_net(net: &NetModel, seed: u64, rep: u64) -> (Vec<SensorPath>, Vec<u64>) {
    let paths: Vec<SensorPath> = net
        .sensors
        .iter()
        .enumerate()
        .map(|(r, model)| {
            let mut rng = sensor_stream(seed, rep, r);
            let theta = sample_disorder(&model.prior, &mut rng);
            simulate_sensor(model, theta, net.horizon, &mut rng)
        })
        .collect();
    let thetas = paths.iter().map(|p| p.theta).collect();
    (paths, thetas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn kernel(rows: &[&[f64]]) -> TransitionKernel {
        TransitionKernel::new(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn sensor(pi0: f64) -> SensorModel {
        SensorModel::new(
            kernel(&[&[0.8, 0.2], &[0.3, 0.7]]),
            kernel(&[&[0.4, 0.6], &[0.1, 0.9]]),
            GeometricPrior::new(pi0, 0.9).unwrap(),
            0.1,
            0,
        )
        .unwrap()
    }

    #[test]
    fn kernel_validation() {
        assert!(TransitionKernel::new(&[vec![1.0, 0.0], vec![0.0, 1.0]]).is_ok());
        assert!(TransitionKernel::new(&[vec![0.5, 0.5], vec![0.3, 0.7]]).is_ok());
        match TransitionKernel::new(&[vec![0.5, 0.6], vec![0.3, 0.7]]) {
            Err(Error::NonStochasticRow { row: 0, sum }) => assert!((sum - 1.1).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            TransitionKernel::new(&[vec![1.5, -0.5], vec![0.3, 0.7]]),
            Err(Error::NegativeEntry { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            TransitionKernel::new(&[vec![1.0]]),
            Err(Error::BadKernelShape { .. })
        ));
        assert!(matches!(
            TransitionKernel::new(&[vec![1.0, 0.0], vec![1.0]]),
            Err(Error::BadKernelShape { .. })
        ));
    }

    #[test]
    fn prior_pmf_values() {
        let prior = GeometricPrior::new(0.1, 0.9).unwrap();
        assert!((prior.pmf(0) - 0.1).abs() < 1e-15);
        assert!((prior.pmf(1) - 0.09).abs() < 1e-15);
        assert!((prior.pmf(3) - 0.0729).abs() < 1e-15);
        assert_eq!(prior.q(), 1.0 - 0.9);
    }

    #[test]
    fn prior_mass_sums_to_one() {
        for &p in &[0.1, 0.5, 0.9, 0.97, 0.99] {
            let prior = GeometricPrior::new(0.2, p).unwrap();
            let total: f64 = (0..=1000).map(|j| prior.pmf(j)).sum();
            // the partial sum misses exactly the tail mass
            assert!((total + prior.tail(1000) - 1.0).abs() < 1e-12, "p = {p}: {total}");
            if p <= 0.97 {
                assert!((total - 1.0).abs() < 1e-9, "p = {p}: {total}");
            }
        }
    }

    #[test]
    fn prior_rejects_bad_parameters() {
        assert!(GeometricPrior::new(1.2, 0.5).is_err());
        assert!(GeometricPrior::new(0.5, 1.0).is_err());
        assert!(GeometricPrior::new(0.5, 0.0).is_err());
    }

    #[test]
    fn sensor_validation() {
        let k2 = kernel(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let k3 = TransitionKernel::identity(3).unwrap();
        let prior = GeometricPrior::new(0.1, 0.9).unwrap();
        assert!(SensorModel::new(k2.clone(), k3, prior, 1.0, 0).is_err());
        assert!(SensorModel::new(k2.clone(), k2.clone(), prior, 0.0, 0).is_err());
        assert!(SensorModel::new(k2.clone(), k2, prior, 1.0, 2).is_err());
    }

    #[test]
    fn near_certain_atom_at_zero() {
        let prior = GeometricPrior::new(0.999999, 0.5).unwrap();
        let mut rng = sensor_stream(7, 0, 0);
        let draws = 1_000_000;
        let zeros = (0..draws).filter(|_| prior.sample(&mut rng) == 0).count();
        let freq = zeros as f64 / draws as f64;
        let se = (0.999999f64 * 1e-6 / draws as f64).sqrt();
        assert!((freq - 0.999999).abs() <= 3.0 * se.max(1.0 / draws as f64));
    }

    #[test]
    fn empirical_pmf_matches_prior() {
        let prior = GeometricPrior::new(0.1, 0.9).unwrap();
        let mut rng = sensor_stream(2024, 0, 0);
        let draws = 1_000_000usize;
        let mut counts = [0usize; 21];
        for _ in 0..draws {
            let t = prior.sample(&mut rng);
            if t <= 20 {
                counts[t as usize] += 1;
            }
        }
        // 3 sigma for the family of 21 cells (per-cell level Sidak-adjusted)
        let cell_level = 1.0 - (1.0 - 0.0027f64).powf(1.0 / counts.len() as f64);
        let z = Normal::standard().inverse_cdf(1.0 - cell_level / 2.0);
        for (j, &c) in counts.iter().enumerate() {
            let p = prior.pmf(j as u64);
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let freq = c as f64 / draws as f64;
            assert!((freq - p).abs() <= z * se, "j = {j}: {freq} vs {p}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let prior = GeometricPrior::new(0.1, 0.9).unwrap();
        let a: Vec<u64> = {
            let mut rng = sensor_stream(99, 3, 1);
            (0..100).map(|_| prior.sample(&mut rng)).collect()
        };
        let b: Vec<u64> = {
            let mut rng = sensor_stream(99, 3, 1);
            (0..100).map(|_| prior.sample(&mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn regime_switching_uses_the_right_kernel() {
        // pre is the identity, post always jumps to the other symbol
        let model = SensorModel::new(
            TransitionKernel::identity(2).unwrap(),
            kernel(&[&[0.0, 1.0], &[1.0, 0.0]]),
            GeometricPrior::new(0.1, 0.9).unwrap(),
            1.0,
            0,
        )
        .unwrap();
        let mut rng = sensor_stream(1, 0, 0);
        let late = simulate_sensor(&model, 10, 5, &mut rng);
        assert_eq!(late.observations, vec![0; 6]);
        let early = simulate_sensor(&model, 0, 4, &mut rng);
        assert_eq!(early.observations, vec![0, 1, 0, 1, 0]);
        let one = simulate_sensor(&model, 1, 4, &mut rng);
        assert_eq!(one.observations, early.observations);
        let mid = simulate_sensor(&model, 3, 5, &mut rng);
        assert_eq!(mid.observations, vec![0, 0, 0, 1, 0, 1]);
    }

    #[test]
    fn removing_a_sensor_keeps_other_paths() {
        let three = NetModel::new(vec![sensor(0.1), sensor(0.2), sensor(0.3)], 12).unwrap();
        let two = NetModel::new(vec![sensor(0.1), sensor(0.2)], 12).unwrap();
        for rep in 0..20 {
            let (a, _) = simulate_net(&three, 5, rep);
            let (b, _) = simulate_net(&two, 5, rep);
            assert_eq!(&a[..2], &b[..]);
        }
    }

    #[test]
    fn disorder_times_are_uncorrelated_across_sensors() {
        let net = NetModel::new(vec![sensor(0.1), sensor(0.1)], 0).unwrap();
        let n = 100_000;
        let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for rep in 0..n {
            let (_, th) = simulate_net(&net, 11, rep);
            let (a, b) = (th[0] as f64, th[1] as f64);
            sa += a;
            sb += b;
            sab += a * b;
            saa += a * a;
            sbb += b * b;
        }
        let nf = n as f64;
        let cov = sab / nf - sa / nf * sb / nf;
        let corr = cov / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
        assert!(corr.abs() <= 3.0 / nf.sqrt(), "corr = {corr}");
    }
}
