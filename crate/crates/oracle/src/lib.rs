//! Brute-force reference computations for the disorder detection toolkit.
//!
//! Everything here works on raw matrices and plain parameters and shares no
//! code with `disorder-core`. The routines enumerate disorder times, whole
//! observation paths, or whole strategy families, so they are only usable on
//! tiny instances. They exist to be compared against the fast solvers.

/// Plain description of one sensor: pre/post transition matrices, geometric
/// disorder prior and delay cost.
#[derive(Debug, Clone)]
pub struct RawSensor {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
    pub pi0: f64,
    pub p: f64,
    pub c: f64,
    pub x0: usize,
}

impl RawSensor {
    pub fn states(&self) -> usize {
        self.pre.len()
    }

    /// P(theta = j), written out from the definition.
    pub fn prior_mass(&self, j: usize) -> f64 {
        if j == 0 {
            self.pi0
        } else {
            (1.0 - self.pi0) * self.p.powi(j as i32 - 1) * (1.0 - self.p)
        }
    }

    /// P(theta > n).
    pub fn prior_tail(&self, n: usize) -> f64 {
        1.0 - (0..=n).map(|j| self.prior_mass(j)).sum::<f64>()
    }

    /// Likelihood of the observed transitions of `path` given the disorder
    /// time. `theta = None` means the disorder happens after the last
    /// observation.
    pub fn likelihood_given(&self, path: &[usize], theta: Option<usize>) -> f64 {
        let mut l = 1.0;
        for m in 1..path.len() {
            let changed = match theta {
                Some(t) => m >= t.max(1),
                None => false,
            };
            let k = if changed { &self.post } else { &self.pre };
            l *= k[path[m - 1]][path[m]];
        }
        l
    }

    /// Joint probability of the observations `path` (path[0] is taken as
    /// given).
    pub fn path_probability(&self, path: &[usize]) -> f64 {
        let n = path.len() - 1;
        let mut total = (1.0 - self.pi0) * self.p.powi(n as i32) * self.likelihood_given(path, None);
        for t in 0..=n {
            total += self.prior_mass(t) * self.likelihood_given(path, Some(t));
        }
        total
    }

    /// P(theta <= n | X_0..X_n) by summing the joint law over every
    /// disorder time. Returns `None` for paths of probability zero.
    pub fn posterior(&self, path: &[usize]) -> Option<f64> {
        let n = path.len() - 1;
        let changed: f64 = (0..=n)
            .map(|t| self.prior_mass(t) * self.likelihood_given(path, Some(t)))
            .sum();
        let unchanged = (1.0 - self.pi0) * self.p.powi(n as i32) * self.likelihood_given(path, None);
        let total = changed + unchanged;
        if total > 0.0 {
            Some(changed / total)
        } else {
            None
        }
    }
}

/// Every observation path of length `horizon + 1` starting at `x0`.
pub fn all_paths(states: usize, x0: usize, horizon: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![x0]];
    for _ in 0..horizon {
        let mut next = Vec::with_capacity(out.len() * states);
        for p in &out {
            for x in 0..states {
                let mut q = p.clone();
                q.push(x);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// One backup of the Wald-Bellman operator at `(x, pi)`, expanded by hand:
/// the predictive law and the next posterior come straight from Bayes'
/// rule and the value table is interpolated by a linear scan.
pub fn hand_backup(s: &RawSensor, grid: &[f64], values: &[Vec<f64>], x: usize, pi: f64) -> f64 {
    let q = 1.0 - s.p;
    let mut expect = 0.0;
    for y in 0..s.states() {
        // changed before now, changes now, or still unchanged
        let joint_changed = pi * s.post[x][y] + (1.0 - pi) * q * s.post[x][y];
        let joint_unchanged = (1.0 - pi) * s.p * s.pre[x][y];
        let py = joint_changed + joint_unchanged;
        if py <= 0.0 {
            continue;
        }
        let next_pi = joint_changed / py;
        expect += py * scan_interpolate(grid, &values[y], next_pi);
    }
    (1.0 - pi).min(s.c * pi + expect)
}

fn scan_interpolate(grid: &[f64], row: &[f64], pi: f64) -> f64 {
    for k in 0..grid.len() {
        if grid[k] == pi {
            return row[k];
        }
        if k + 1 < grid.len() && grid[k] < pi && pi < grid[k + 1] {
            let w = (pi - grid[k]) / (grid[k + 1] - grid[k]);
            return row[k] * (1.0 - w) + row[k + 1] * w;
        }
    }
    row[grid.len() - 1]
}

/// False-alarm probability and expected delay of a history-dependent
/// stopping rule, computed by summing over every disorder time and every
/// observation path. `stop(history)` sees `X_0..X_n`; the rule is forced to
/// stop at `horizon`.
pub fn rule_risk(s: &RawSensor, horizon: usize, stop: &dyn Fn(&[usize]) -> bool) -> (f64, f64) {
    let mut false_alarm = 0.0;
    let mut delay = 0.0;
    for path in all_paths(s.states(), s.x0, horizon) {
        let tau = (0..horizon)
            .find(|&n| stop(&path[..=n]))
            .unwrap_or(horizon);
        for t in 0..=horizon + 1 {
            let (w, theta) = if t <= horizon {
                (s.prior_mass(t) * s.likelihood_given(&path, Some(t)), Some(t))
            } else {
                (
                    (1.0 - s.pi0) * s.p.powi(horizon as i32) * s.likelihood_given(&path, None),
                    None,
                )
            };
            if w == 0.0 {
                continue;
            }
            match theta {
                Some(t) if t <= tau => delay += w * (tau - t) as f64,
                _ => false_alarm += w,
            }
        }
    }
    (false_alarm, delay)
}

/// Minimum risk over every history-dependent stopping rule with forced stop
/// at `horizon`. The rules are enumerated as bitmasks over all histories of
/// length at most `horizon`.
pub fn exhaustive_min_risk(s: &RawSensor, horizon: usize) -> f64 {
    let e = s.states();
    let mut offsets = Vec::with_capacity(horizon);
    let mut nodes = 0usize;
    for n in 0..horizon {
        offsets.push(nodes);
        nodes += e.pow(n as u32);
    }
    assert!(nodes <= 20, "too many histories for exhaustive enumeration");
    let node_of = |h: &[usize]| -> usize {
        let n = h.len() - 1;
        let code = h[1..].iter().fold(0usize, |acc, &x| acc * e + x);
        offsets[n] + code
    };
    let mut best = f64::INFINITY;
    for mask in 0u64..(1u64 << nodes) {
        let rule = |h: &[usize]| mask >> node_of(h) & 1 == 1;
        let (fa, d) = rule_risk(s, horizon, &rule);
        best = best.min(fa + s.c * d);
    }
    best
}

/// Literal sum-of-products form of the aggregation function: the sum over
/// winning coalitions `C` of prod_{i in C} x_i * prod_{i not in C} (1 - x_i).
pub fn aggregation_sum(winning: &[u32], votes: &[bool]) -> u32 {
    let p = votes.len();
    winning
        .iter()
        .map(|&c| {
            (0..p)
                .map(|i| {
                    let x = u32::from(votes[i]);
                    if c >> i & 1 == 1 {
                        x
                    } else {
                        1 - x
                    }
                })
                .product::<u32>()
        })
        .sum()
}

/// One possible next state as seen by a single player.
#[derive(Debug, Clone, Copy)]
pub struct Outcome {
    pub prob: f64,
    /// Payoff if the system stops here (`1 - pi_i`).
    pub stop_payoff: f64,
    /// Continuation value if the system goes on.
    pub cont: f64,
    /// Bitmask of the other players voting to stop.
    pub others_yes: u32,
}

/// Minimum expected payoff over every subset of next states on which the
/// player votes to stop.
pub fn min_over_stop_subsets(winning: &[u32], p: usize, player: usize, outcomes: &[Outcome]) -> f64 {
    assert!(outcomes.len() <= 20);
    let mut best = f64::INFINITY;
    for subset in 0u32..(1u32 << outcomes.len()) {
        let mut total = 0.0;
        for (k, o) in outcomes.iter().enumerate() {
            let mut yes = o.others_yes & !(1 << player);
            if subset >> k & 1 == 1 {
                yes |= 1 << player;
            }
            let votes: Vec<bool> = (0..p).map(|j| yes >> j & 1 == 1).collect();
            let stops = aggregation_sum(winning, &votes) == 1;
            total += o.prob * if stops { o.stop_payoff } else { o.cont };
        }
        best = best.min(total);
    }
    best
}

/// Per-player risk P(t < theta_i) + c_i E(t - theta_i)^+ at the system
/// alarm time `t`, by enumerating every joint observation path and every
/// disorder time. `votes(n, histories)` returns each player's stop vote at
/// time `n` given each sensor's history `X_0..X_n`; the system stops at the
/// first winning vote or at `horizon`.
pub fn joint_rule_risk(
    sensors: &[RawSensor],
    winning: &[u32],
    horizon: usize,
    votes: &dyn Fn(usize, &[&[usize]]) -> Vec<bool>,
) -> Vec<f64> {
    let p = sensors.len();
    let per_sensor: Vec<Vec<Vec<usize>>> = sensors
        .iter()
        .map(|s| all_paths(s.states(), s.x0, horizon))
        .collect();
    let mut risk = vec![0.0; p];
    let mut idx = vec![0usize; p];
    loop {
        let paths: Vec<&[usize]> = (0..p).map(|r| per_sensor[r][idx[r]].as_slice()).collect();
        let mut t = horizon;
        for n in 0..horizon {
            let hist: Vec<&[usize]> = paths.iter().map(|h| &h[..=n]).collect();
            if aggregation_sum(winning, &votes(n, &hist)) == 1 {
                t = n;
                break;
            }
        }
        let probs: Vec<f64> = (0..p).map(|r| sensors[r].path_probability(paths[r])).collect();
        for i in 0..p {
            let others: f64 = (0..p).filter(|&r| r != i).map(|r| probs[r]).product();
            if others == 0.0 {
                continue;
            }
            let s = &sensors[i];
            let mut loss = 0.0;
            for th in 0..=horizon {
                let w = s.prior_mass(th) * s.likelihood_given(paths[i], Some(th));
                if th > t {
                    loss += w;
                } else {
                    loss += w * s.c * (t - th) as f64;
                }
            }
            // disorder after the horizon: always a false alarm
            loss += (1.0 - s.pi0) * s.p.powi(horizon as i32) * s.likelihood_given(paths[i], None);
            risk[i] += others * loss;
        }
        // odometer
        let mut r = 0;
        loop {
            if r == p {
                return risk;
            }
            idx[r] += 1;
            if idx[r] < per_sensor[r].len() {
                break;
            }
            idx[r] = 0;
            r += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensor() -> RawSensor {
        RawSensor {
            pre: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            post: vec![vec![0.4, 0.6], vec![0.1, 0.9]],
            pi0: 0.1,
            p: 0.9,
            c: 0.2,
            x0: 0,
        }
    }

    #[test]
    fn path_probabilities_sum_to_one() {
        let s = sensor();
        let total: f64 = all_paths(2, 0, 4).iter().map(|p| s.path_probability(p)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn prior_tail_matches_closed_form() {
        let s = sensor();
        for n in 0..10 {
            let closed = (1.0 - s.pi0) * s.p.powi(n as i32);
            assert!((s.prior_tail(n) - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn immediate_stop_risk_is_prior_no_change() {
        let s = sensor();
        let (fa, d) = rule_risk(&s, 3, &|_| true);
        assert!((fa - 0.9).abs() < 1e-14);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn aggregation_sum_majority() {
        let majority: Vec<u32> = (0u32..8).filter(|c| c.count_ones() >= 2).collect();
        assert_eq!(aggregation_sum(&majority, &[true, true, false]), 1);
        assert_eq!(aggregation_sum(&majority, &[false, true, false]), 0);
    }
}
