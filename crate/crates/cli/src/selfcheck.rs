//! `--self-check`: recompute results with the brute-force oracle crate and
//! fail with exit status 3 on disagreement.

use disorder_core::equilibrium::joint_policy_risk_exact;
use disorder_core::mc::PolicyEstimate;
use disorder_core::policy::JointPolicy;
use disorder_core::single_solver::ValueFunction;
use disorder_core::{EquilibriumSolution, Error, NetModel, PiGrid, SensorModel, SimpleGame};
use disorder_oracle::{hand_backup, min_over_stop_subsets, Outcome, RawSensor};
use log::{info, warn};

use crate::Failure;

const POSTERIOR_TOLERANCE: f64 = 1e-12;
const SUBSET_TOLERANCE: f64 = 1e-12;
/// Largest joint tree the Monte Carlo check will enumerate exactly.
const EXACT_LIMIT: usize = 200_000;
/// Stage states checked per stage, spread evenly over the grid.
const SUBSET_SAMPLE: usize = 200;
/// Most successor corners enumerated by subset minimization.
const SUBSET_OUTCOMES: usize = 12;

fn raw(model: &SensorModel) -> RawSensor {
    RawSensor {
        pre: model.pre.rows(),
        post: model.post.rows(),
        pi0: model.prior.pi0(),
        p: model.prior.p(),
        c: model.delay_cost,
        x0: model.initial_state,
    }
}

pub fn posterior(model: &SensorModel, obs: &[usize], pis: &[f64]) -> Result<(), Failure> {
    let oracle = RawSensor { x0: obs[0], ..raw(model) };
    for n in 0..obs.len() {
        let Some(expected) = oracle.posterior(&obs[..=n]) else {
            continue;
        };
        if (expected - pis[n]).abs() > POSTERIOR_TOLERANCE {
            return Err(Failure::Contract(format!(
                "posterior at n={n} is {} but enumeration gives {expected}",
                pis[n]
            )));
        }
    }
    info!("self-check: {} posteriors match enumeration", obs.len());
    Ok(())
}

/// The stationary value must solve the hand-expanded Bellman equation to
/// within the iteration tolerance.
pub fn bellman(model: &SensorModel, grid: &PiGrid, value: &ValueFunction, tol: f64) -> Result<(), Failure> {
    let oracle = raw(model);
    let rows: Vec<Vec<f64>> = (0..model.states()).map(|x| value.row(x).to_vec()).collect();
    let mut worst: f64 = 0.0;
    for x in 0..model.states() {
        for (g, &pi) in grid.points().iter().enumerate() {
            worst = worst.max((hand_backup(&oracle, grid.points(), &rows, x, pi) - value.get(x, g)).abs());
        }
    }
    if worst > tol + 1e-12 {
        return Err(Failure::Contract(format!("Bellman residual {worst:e} exceeds tolerance {tol:e}")));
    }
    info!("self-check: Bellman residual {worst:e}");
    Ok(())
}

/// Each player's stage value against brute-force minimization over every
/// set of successor corners on which it could vote stop.
pub fn stage_values(sol: &EquilibriumSolution) -> Result<(), Failure> {
    let p = sol.game.players();
    let winning: Vec<u32> = sol.game.winning().iter().map(|c| c.0).collect();
    let stride = sol.grid.len().div_ceil(SUBSET_SAMPLE).max(1);
    let mut checked = 0usize;
    for k in 1..sol.stages.len() {
        let prev = &sol.stages[k - 1];
        let stage = &sol.stages[k];
        for s in (0..sol.grid.len()).step_by(stride) {
            let succ = sol.grid.successors(s);
            let corners: Vec<(f64, usize)> = succ
                .iter()
                .flat_map(|t| t.point.corners().iter().map(move |&(c, w)| (t.prob * w, c)))
                .collect();
            if corners.len() > SUBSET_OUTCOMES {
                continue;
            }
            for i in 0..p {
                let outcomes: Vec<Outcome> = corners
                    .iter()
                    .map(|&(prob, c)| Outcome {
                        prob,
                        stop_payoff: 1.0 - sol.grid.pi(c, i),
                        cont: prev.values[i][c],
                        others_yes: (0..p).filter(|&j| j != i && prev.stop[j][c]).fold(0, |m, j| m | 1 << j),
                    })
                    .collect();
                let brute = sol.net.sensors[i].delay_cost * sol.grid.pi(s, i)
                    + min_over_stop_subsets(&winning, p, i, &outcomes);
                let got = stage.values[i][s];
                if (brute - got).abs() > SUBSET_TOLERANCE * brute.abs().max(1.0) {
                    return Err(Failure::Contract(format!(
                        "stage {k}, state {s}, player {}: value {got} but subset minimization gives {brute}",
                        i + 1
                    )));
                }
                checked += 1;
            }
        }
    }
    if checked == 0 {
        warn!("self-check: no state has few enough successors for subset enumeration");
    } else {
        info!("self-check: {checked} stage values match subset minimization");
    }
    Ok(())
}

/// Monte Carlo risks must lie within 5 standard errors of the exact risks.
pub fn mc_against_exact(
    net: &NetModel,
    game: &SimpleGame,
    policy: &dyn JointPolicy,
    estimate: &PolicyEstimate,
) -> Result<(), Failure> {
    let exact = match joint_policy_risk_exact(net, game, policy, EXACT_LIMIT) {
        Ok(v) => v,
        Err(e @ Error::TreeTooLarge { .. }) => {
            warn!("self-check skipped: {e}");
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    for (r, (s, x)) in estimate.sensors.iter().zip(&exact).enumerate() {
        let Some(se) = s.risk.se else {
            continue;
        };
        if (s.risk.mean - x).abs() > 5.0 * se + 1e-12 {
            return Err(Failure::Contract(format!(
                "sensor {}: Monte Carlo risk {} is more than 5 standard errors from the exact {x}",
                r + 1,
                s.risk.mean
            )));
        }
    }
    info!("self-check: Monte Carlo risks agree with exact evaluation");
    Ok(())
}
