//! Monte Carlo evaluation of joint policies.
//!
//! Replication `rep` draws its paths from the counter-based streams of
//! [`crate::model::sensor_stream`], so its outcome does not depend on which
//! worker runs it. Replications are grouped into fixed shards of
//! [`SHARD_SIZE`]; shard statistics are merged in shard order, which makes
//! the output bit-identical for any number of workers.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{simulate_net, NetModel, SensorPath};
use crate::policy::JointPolicy;
use crate::posterior;
use crate::simple_game::SimpleGame;

pub const SHARD_SIZE: u64 = 1024;

/// Sample mean with its 1-sigma standard error (`None` for one sample).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: Option<f64>,
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64);
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self) -> Estimate {
        let se = (self.n > 1).then(|| (self.m2.max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt());
        Estimate { mean: self.mean, se }
    }
}

/// Per-sensor estimates of `P(t < theta)`, `E(t - theta)^+` and the risk
/// at the system alarm time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub false_alarm: Estimate,
    pub delay: Estimate,
    pub risk: Estimate,
    pub reps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEstimate {
    pub sensors: Vec<RiskEstimate>,
    pub alarm_time: Estimate,
    /// SHA-256 over every simulated path, in replication order.
    pub digest: [u8; 32],
}

impl PolicyEstimate {
    pub fn digest_hex(&self) -> String {
        hex(&self.digest)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Outcome of one replication under one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Alarm time; the system is forced to stop at the horizon.
    pub alarm: usize,
    pub false_alarm: Vec<bool>,
    pub delay: Vec<u64>,
    pub risk: Vec<f64>,
}

/// Runs `policy` along given paths.
pub fn run_paths(
    net: &NetModel,
    game: &SimpleGame,
    policy: &dyn JointPolicy,
    paths: &[SensorPath],
    posteriors: &[Vec<f64>],
) -> Outcome {
    let p = net.size();
    let mut prev = vec![false; p];
    let mut votes = vec![false; p];
    let mut x = vec![0; p];
    let mut pi = vec![0.0; p];
    let mut alarm = net.horizon;
    for n in 0..=net.horizon {
        for r in 0..p {
            x[r] = paths[r].observations[n];
            pi[r] = posteriors[r][n];
        }
        policy.votes(n, &x, &pi, &prev, &mut votes);
        if game.aggregate(&votes) {
            alarm = n;
            break;
        }
        std::mem::swap(&mut prev, &mut votes);
    }
    let t = alarm as u64;
    let false_alarm: Vec<bool> = paths.iter().map(|s| t < s.theta).collect();
    let delay: Vec<u64> = paths.iter().map(|s| t.saturating_sub(s.theta)).collect();
    let risk = (0..p)
        .map(|r| f64::from(u8::from(false_alarm[r])) + net.sensors[r].delay_cost * delay[r] as f64)
        .collect();
    Outcome { alarm, false_alarm, delay, risk }
}

fn hash_paths(hasher: &mut Sha256, paths: &[SensorPath]) {
    for path in paths {
        hasher.update(path.theta.to_le_bytes());
        for &x in &path.observations {
            hasher.update((x as u64).to_le_bytes());
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    false_alarm: Vec<Moments>,
    delay: Vec<Moments>,
    risk: Vec<Moments>,
    alarm: Moments,
}

impl Accumulator {
    fn new(p: usize) -> Self {
        Self {
            false_alarm: vec![Moments::default(); p],
            delay: vec![Moments::default(); p],
            risk: vec![Moments::default(); p],
            alarm: Moments::default(),
        }
    }

    fn push(&mut self, o: &Outcome) {
        for r in 0..self.risk.len() {
            self.false_alarm[r].push(f64::from(u8::from(o.false_alarm[r])));
            self.delay[r].push(o.delay[r] as f64);
            self.risk[r].push(o.risk[r]);
        }
        self.alarm.push(o.alarm as f64);
    }

    fn merge(&mut self, other: &Accumulator) {
        for r in 0..self.risk.len() {
            self.false_alarm[r].merge(&other.false_alarm[r]);
            self.delay[r].merge(&other.delay[r]);
            self.risk[r].merge(&other.risk[r]);
        }
        self.alarm.merge(&other.alarm);
    }

    fn finish(&self, digest: [u8; 32]) -> PolicyEstimate {
        let sensors = (0..self.risk.len())
            .map(|r| RiskEstimate {
                false_alarm: self.false_alarm[r].estimate(),
                delay: self.delay[r].estimate(),
                risk: self.risk[r].estimate(),
                reps: self.risk[r].count(),
            })
            .collect();
        PolicyEstimate { sensors, alarm_time: self.alarm.estimate(), digest }
    }
}

struct Shard {
    policies: Vec<Accumulator>,
    /// Risk of policy `k` minus policy 0, per sensor, for `k >= 1`.
    paired: Vec<Vec<Moments>>,
    digest: [u8; 32],
}

/// Estimates for several policies on common random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiEstimate {
    pub policies: Vec<PolicyEstimate>,
    /// `paired[k - 1][r]`: risk of policy `k` minus risk of policy 0 for
    /// sensor `r`, estimated on identical paths.
    pub paired: Vec<Vec<Estimate>>,
}

pub fn estimate_many(
    net: &NetModel,
    game: &SimpleGame,
    policies: &[&dyn JointPolicy],
    reps: u64,
    seed: u64,
) -> Result<MultiEstimate> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if policies.is_empty() {
        return Err(Error::InvalidArgument("no policy to evaluate".into()));
    }
    if game.players() != net.size() {
        return Err(Error::InvalidArgument(format!(
            "game has {} players but the net has {} sensors",
            game.players(),
            net.size()
        )));
    }
    let p = net.size();
    let shards = reps.div_ceil(SHARD_SIZE);
    let results: Vec<Result<Shard>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut acc = vec![Accumulator::new(p); policies.len()];
            let mut paired = vec![vec![Moments::default(); p]; policies.len() - 1];
            let mut hasher = Sha256::new();
            for rep in shard * SHARD_SIZE..((shard + 1) * SHARD_SIZE).min(reps) {
                let (paths, _) = simulate_net(net, seed, rep);
                hash_paths(&mut hasher, &paths);
                let posteriors = paths
                    .iter()
                    .zip(&net.sensors)
                    .map(|(path, model)| posterior::filter_path(&path.observations, model))
                    .collect::<Result<Vec<_>>>()?;
                let outcomes: Vec<Outcome> = policies
                    .iter()
                    .map(|policy| run_paths(net, game, *policy, &paths, &posteriors))
                    .collect();
                for (a, o) in acc.iter_mut().zip(&outcomes) {
                    a.push(o);
                }
                for (k, o) in outcomes.iter().enumerate().skip(1) {
                    for r in 0..p {
                        paired[k - 1][r].push(o.risk[r] - outcomes[0].risk[r]);
                    }
                }
            }
            Ok(Shard { policies: acc, paired, digest: hasher.finalize().into() })
        })
        .collect();
    let mut total = vec![Accumulator::new(p); policies.len()];
    let mut paired = vec![vec![Moments::default(); p]; policies.len() - 1];
    let mut hasher = Sha256::new();
    for shard in results {
        let shard = shard?;
        for (t, s) in total.iter_mut().zip(&shard.policies) {
            t.merge(s);
        }
        for (t, s) in paired.iter_mut().zip(&shard.paired) {
            for (a, b) in t.iter_mut().zip(s) {
                a.merge(b);
            }
        }
        hasher.update(shard.digest);
    }
    let digest: [u8; 32] = hasher.finalize().into();
    Ok(MultiEstimate {
        policies: total.iter().map(|a| a.finish(digest)).collect(),
        paired: paired.iter().map(|v| v.iter().map(Moments::estimate).collect()).collect(),
    })
}

pub fn estimate_policy_risk(
    net: &NetModel,
    game: &SimpleGame,
    policy: &dyn JointPolicy,
    reps: u64,
    seed: u64,
) -> Result<PolicyEstimate> {
    Ok(estimate_many(net, game, &[policy], reps, seed)?.policies.remove(0))
}

/// Naive fusion against the equilibrium profile on common random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub naive: PolicyEstimate,
    pub equilibrium: PolicyEstimate,
    /// Equilibrium risk minus naive risk, per sensor.
    pub difference: Vec<Estimate>,
}

pub fn compare(
    net: &NetModel,
    game: &SimpleGame,
    naive: &dyn JointPolicy,
    equilibrium: &dyn JointPolicy,
    reps: u64,
    seed: u64,
) -> Result<ComparisonReport> {
    let mut m = estimate_many(net, game, &[naive, equilibrium], reps, seed)?;
    let equilibrium = m.policies.pop().unwrap();
    let naive = m.policies.pop().unwrap();
    Ok(ComparisonReport { naive, equilibrium, difference: m.paired.remove(0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GeometricPrior, SensorModel, TransitionKernel};
    use crate::policy::AlwaysStop;

    fn net(pi0: f64, horizon: usize) -> NetModel {
        let s = SensorModel::new(
            TransitionKernel::new(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap(),
            TransitionKernel::new(&[vec![0.2, 0.8], vec![0.1, 0.9]]).unwrap(),
            GeometricPrior::new(pi0, 0.8).unwrap(),
            0.1,
            0,
        )
        .unwrap();
        NetModel::new(vec![s], horizon).unwrap()
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..313].iter().for_each(|&x| a.push(x));
        xs[313..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean - all.mean).abs() < 1e-12);
        assert!((a.m2 - all.m2).abs() < 1e-8);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((all.mean - mean).abs() < 1e-12);
    }

    #[test]
    fn single_replication_has_no_standard_error() {
        let net = net(0.2, 5);
        let game = SimpleGame::dictator(1, 0).unwrap();
        let e = estimate_policy_risk(&net, &game, &AlwaysStop, 1, 7).unwrap();
        assert_eq!(e.sensors[0].risk.se, None);
        assert_eq!(e.sensors[0].reps, 1);
        let (paths, _) = simulate_net(&net, 7, 0);
        assert_eq!(e.sensors[0].false_alarm.mean, f64::from(u8::from(paths[0].theta > 0)));
    }

    #[test]
    fn zero_reps_are_rejected() {
        let net = net(0.2, 5);
        let game = SimpleGame::dictator(1, 0).unwrap();
        assert!(estimate_policy_risk(&net, &game, &AlwaysStop, 0, 7).is_err());
    }

    #[test]
    fn identical_policies_have_zero_difference() {
        let net = net(0.2, 5);
        let game = SimpleGame::dictator(1, 0).unwrap();
        let r = compare(&net, &game, &AlwaysStop, &AlwaysStop, 3000, 1).unwrap();
        assert_eq!(r.difference[0].mean, 0.0);
        assert_eq!(r.difference[0].se, Some(0.0));
        assert_eq!(r.naive.digest, r.equilibrium.digest);
    }

    #[test]
    fn always_stop_false_alarm_is_prior_tail() {
        let net = net(0.3, 4);
        let game = SimpleGame::dictator(1, 0).unwrap();
        let e = estimate_policy_risk(&net, &game, &AlwaysStop, 100_000, 2).unwrap();
        let fa = e.sensors[0].false_alarm;
        assert!((fa.mean - 0.7).abs() <= 3.0 * fa.se.unwrap());
        assert_eq!(e.sensors[0].delay.mean, 0.0);
    }
}
