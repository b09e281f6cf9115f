//! Naive fusion: every sensor runs its own optimal stopping rule and the
//! system alarm is raised once the sensors that have alarmed form a winning
//! coalition.
//!
//! Alarms are persistent: sensor `r` votes stop at every `n >= tau_r`.

use crate::error::{Error, Result};
use crate::grid::PiGrid;
use crate::mc::{self, PolicyEstimate};
use crate::model::{NetModel, SensorPath};
use crate::policy::{JointPolicy, SensorPolicy};
use crate::posterior;
use crate::simple_game::SimpleGame;
use crate::single_solver::{solve_finite_horizon, FiniteHorizon};

/// `votes[n][r]` for one realization: sensor `r` votes stop from its own
/// stopping time on.
pub fn naive_votes(net: &NetModel, paths: &[SensorPath], policies: &[&dyn SensorPolicy]) -> Result<Vec<Vec<bool>>> {
    if paths.len() != net.size() || policies.len() != net.size() {
        return Err(Error::InvalidArgument("one path and one policy per sensor are required".into()));
    }
    let posteriors = paths
        .iter()
        .zip(&net.sensors)
        .map(|(path, model)| posterior::filter_path(&path.observations, model))
        .collect::<Result<Vec<_>>>()?;
    let len = paths.iter().map(|p| p.observations.len()).min().unwrap_or(0);
    let mut votes = vec![vec![false; net.size()]; len];
    for r in 0..net.size() {
        let obs = &paths[r].observations;
        if let Some(tau) = (0..len).find(|&n| policies[r].stop(n, obs[n], posteriors[r][n])) {
            for row in &mut votes[tau..] {
                row[r] = true;
            }
        }
    }
    Ok(votes)
}

/// First stage at which the yes-voters win; `None` if that never happens.
pub fn system_alarm(votes: &[Vec<bool>], game: &SimpleGame) -> Option<usize> {
    votes.iter().position(|v| game.aggregate(v))
}

/// Naive fusion as a joint policy: a sensor keeps voting stop once its own
/// rule has fired.
#[derive(Debug, Clone)]
pub struct NaiveFusion<P> {
    pub policies: Vec<P>,
}

impl NaiveFusion<FiniteHorizon> {
    /// Solves each sensor's finite-horizon problem on its grid.
    pub fn solve(net: &NetModel, grids: &[PiGrid]) -> Result<Self> {
        if grids.len() != net.size() {
            return Err(Error::InvalidArgument(format!("{} grids for {} sensors", grids.len(), net.size())));
        }
        let policies = net
            .sensors
            .iter()
            .zip(grids)
            .map(|(model, grid)| solve_finite_horizon(model, grid, net.horizon))
            .collect();
        Ok(Self { policies })
    }
}

impl<P: SensorPolicy> JointPolicy for NaiveFusion<P> {
    fn votes(&self, n: usize, x: &[usize], pi: &[f64], prev: &[bool], out: &mut [bool]) {
        for (r, vote) in out.iter_mut().enumerate() {
            *vote = prev.get(r).copied().unwrap_or(false) || self.policies[r].stop(n, x[r], pi[r]);
        }
    }
}

/// Monte Carlo risk of naive fusion for every sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionReport {
    pub estimate: PolicyEstimate,
}

pub fn evaluate_fusion_mc<P: SensorPolicy>(
    net: &NetModel,
    game: &SimpleGame,
    fusion: &NaiveFusion<P>,
    reps: u64,
    seed: u64,
) -> Result<FusionReport> {
    Ok(FusionReport { estimate: mc::estimate_policy_risk(net, game, fusion, reps, seed)? })
}
