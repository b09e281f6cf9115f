//! Equilibrium of the multilateral stopping game.
//!
//! Every sensor is a player that votes stop/continue at each time; the
//! system stops at the first time the yes-voters form a winning coalition
//! of the simple game, and player `i` bears the risk
//! `P(t < theta_i) + c_i E(t - theta_i)^+` at that common time.
//!
//! The game is solved backward on the joint grid
//! `prod_r (symbols_r x PiGrid_r)`. With `k` steps to go the continuation
//! value of player `i` is
//!
//! ```text
//! v_{i,0}(s) = 1 - pi_i
//! v_{i,k}(s) = c_i pi_i + psi_i(s)
//! psi_i(s)   = E[g] + E[(1 - Pi'_i - g)^+ 1{D(empty)}] - E[(1 - Pi'_i - g)^- 1{D(all)}]
//! ```
//!
//! where `g = v_{i,k-1}(S')`, `D(empty)` is the event that the others stop
//! the system without `i` and `D(all)` the event that `i`'s stop vote would
//! stop it. Player `i` votes stop at `s` iff `1 - pi_i <= v_{i,k}(s)`.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::grid::{Bracket, PiGrid};
use crate::model::NetModel;
use crate::policy::JointPolicy;
use crate::posterior;
use crate::simple_game::{mask, SimpleGame};

/// Default cap on the number of joint grid states.
pub const DEFAULT_STATE_BUDGET: usize = 250_000;

/// Largest admissible risk decrease of a unilateral deviation.
pub const DEVIATION_TOLERANCE: f64 = 1e-9;

type Small<T> = SmallVec<[T; 4]>;

/// Joint state `(x, pi)` with its multilinear interpolation weights on the
/// joint grid.
#[derive(Debug, Clone)]
pub struct JointPoint {
    pub x: Small<usize>,
    pub pi: Small<f64>,
    corners: SmallVec<[(usize, f64); 8]>,
}

impl JointPoint {
    #[inline]
    pub fn interpolate(&self, table: &[f64]) -> f64 {
        self.corners.iter().map(|&(k, w)| w * table[k]).sum()
    }

    /// Joint grid states and weights the point interpolates between.
    pub fn corners(&self) -> &[(usize, f64)] {
        &self.corners
    }

    /// Joint index of the corner with the largest weight.
    #[inline]
    pub fn nearest(&self) -> usize {
        let mut best = self.corners[0];
        for &c in &self.corners[1..] {
            if c.1 > best.1 {
                best = c;
            }
        }
        best.0
    }
}

/// Next joint state with its probability.
#[derive(Debug, Clone)]
pub struct JointSuccessor {
    pub prob: f64,
    pub point: JointPoint,
}

#[derive(Debug, Clone)]
struct LocalSuccessor {
    symbol: usize,
    prob: f64,
    pi: f64,
    bracket: Bracket,
}

/// Product grid over the sensors' `(symbol, posterior)` spaces.
#[derive(Debug, Clone)]
pub struct JointGrid {
    grids: Vec<PiGrid>,
    local_len: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
    successors: Vec<Vec<Vec<LocalSuccessor>>>,
}

impl JointGrid {
    pub fn new(net: &NetModel, grids: Vec<PiGrid>, budget: usize) -> Result<Self> {
        if grids.len() != net.size() {
            return Err(Error::InvalidArgument(format!(
                "{} grids for {} sensors",
                grids.len(),
                net.size()
            )));
        }
        let local_len: Vec<usize> = net.sensors.iter().zip(&grids).map(|(s, g)| s.states() * g.len()).collect();
        let len = local_len
            .iter()
            .try_fold(1usize, |acc, &l| acc.checked_mul(l))
            .unwrap_or(usize::MAX);
        if len > budget {
            return Err(Error::BudgetExceeded { states: len, limit: budget });
        }
        let mut strides = Vec::with_capacity(local_len.len());
        let mut stride = 1;
        for &l in &local_len {
            strides.push(stride);
            stride *= l;
        }
        let successors = net
            .sensors
            .iter()
            .zip(&grids)
            .map(|(model, grid)| {
                (0..model.states() * grid.len())
                    .map(|local| {
                        let (x, g) = (local / grid.len(), local % grid.len());
                        posterior::successors(model, x, grid.points()[g])
                            .into_iter()
                            .map(|s| LocalSuccessor {
                                symbol: s.symbol,
                                prob: s.prob,
                                pi: s.pi,
                                bracket: grid.bracket(s.pi),
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { grids, local_len, strides, len, successors })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sensors(&self) -> usize {
        self.grids.len()
    }

    pub fn grids(&self) -> &[PiGrid] {
        &self.grids
    }

    /// `(symbol, grid index)` of sensor `r` at joint state `state`.
    #[inline]
    pub fn local(&self, state: usize, r: usize) -> (usize, usize) {
        let l = state / self.strides[r] % self.local_len[r];
        (l / self.grids[r].len(), l % self.grids[r].len())
    }

    pub fn state_of(&self, x: &[usize], g: &[usize]) -> usize {
        (0..self.sensors())
            .map(|r| (x[r] * self.grids[r].len() + g[r]) * self.strides[r])
            .sum()
    }

    #[inline]
    pub fn pi(&self, state: usize, r: usize) -> f64 {
        self.grids[r].points()[self.local(state, r).1]
    }

    pub fn point_of_state(&self, state: usize) -> JointPoint {
        let x: Small<usize> = (0..self.sensors()).map(|r| self.local(state, r).0).collect();
        let pi: Small<f64> = (0..self.sensors()).map(|r| self.pi(state, r)).collect();
        JointPoint { x, pi, corners: SmallVec::from_elem((state, 1.0), 1) }
    }

    /// Interpolation point for an arbitrary joint state.
    pub fn point(&self, x: &[usize], pi: &[f64]) -> JointPoint {
        let brackets: Small<Bracket> = (0..self.sensors()).map(|r| self.grids[r].bracket(pi[r])).collect();
        JointPoint {
            x: x.iter().copied().collect(),
            pi: pi.iter().copied().collect(),
            corners: self.corners(x, &brackets),
        }
    }

    fn corners(&self, x: &[usize], brackets: &[Bracket]) -> SmallVec<[(usize, f64); 8]> {
        let mut corners: SmallVec<[(usize, f64); 8]> = SmallVec::from_elem((0, 1.0), 1);
        for r in 0..self.sensors() {
            let base = x[r] * self.grids[r].len();
            let b = brackets[r];
            let stride = self.strides[r];
            if b.lo == b.hi {
                for c in corners.iter_mut() {
                    c.0 += (base + b.lo) * stride;
                }
            } else {
                let mut next = SmallVec::with_capacity(corners.len() * 2);
                for &(k, w) in &corners {
                    next.push((k + (base + b.lo) * stride, w * (1.0 - b.w_hi)));
                    next.push((k + (base + b.hi) * stride, w * b.w_hi));
                }
                corners = next;
            }
        }
        corners
    }

    /// Every next joint state of positive probability from `state`.
    pub fn successors(&self, state: usize) -> Vec<JointSuccessor> {
        let p = self.sensors();
        let lists: Small<&[LocalSuccessor]> = (0..p)
            .map(|r| {
                let (x, g) = self.local(state, r);
                self.successors[r][x * self.grids[r].len() + g].as_slice()
            })
            .collect();
        if lists.iter().any(|l| l.is_empty()) {
            return Vec::new();
        }
        let total: usize = lists.iter().map(|l| l.len()).product();
        let mut out = Vec::with_capacity(total);
        let mut idx: Small<usize> = SmallVec::from_elem(0, p);
        loop {
            let picks: Small<&LocalSuccessor> = (0..p).map(|r| &lists[r][idx[r]]).collect();
            let x: Small<usize> = picks.iter().map(|s| s.symbol).collect();
            let brackets: Small<Bracket> = picks.iter().map(|s| s.bracket).collect();
            out.push(JointSuccessor {
                prob: picks.iter().map(|s| s.prob).product(),
                point: JointPoint {
                    corners: self.corners(&x, &brackets),
                    pi: picks.iter().map(|s| s.pi).collect(),
                    x,
                },
            });
            let mut r = 0;
            loop {
                if r == p {
                    return out;
                }
                idx[r] += 1;
                if idx[r] < lists[r].len() {
                    break;
                }
                idx[r] = 0;
                r += 1;
            }
        }
    }
}

/// Stop votes of the players at arbitrary joint states.
pub trait StopProfile: Sync {
    fn stops(&self, player: usize, point: &JointPoint) -> bool;
}

/// Each player stops iff its stopping payoff does not exceed its
/// (interpolated) continuation value.
pub struct CanonicalProfile<'a> {
    pub cont: &'a [Vec<f64>],
}

impl StopProfile for CanonicalProfile<'_> {
    fn stops(&self, player: usize, point: &JointPoint) -> bool {
        1.0 - point.pi[player] <= point.interpolate(&self.cont[player])
    }
}

/// Explicit per-player boolean tables on the joint grid, read at the
/// nearest grid corner.
pub struct TableProfile<'a> {
    pub tables: &'a [Vec<bool>],
}

impl StopProfile for TableProfile<'_> {
    fn stops(&self, player: usize, point: &JointPoint) -> bool {
        self.tables[player][point.nearest()]
    }
}

/// Player `i`'s optimal expected payoff over the next step and its best
/// stop votes at each successor.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub value: f64,
    pub stop: Vec<bool>,
    /// Probability of landing where `i`'s vote decides the outcome.
    pub pivotal_mass: f64,
}

/// Sum that does not depend on the order of the terms, so that relabeling
/// the sensors gives bit-identical values.
fn ordered_sum(terms: &mut [f64]) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Player `i`'s payoff at grid state `state` after the votes there, when
/// its own vote is chosen optimally against the others'. Returns the
/// payoff and whether `i` is pivotal.
pub fn grid_payoff(
    grid: &JointGrid,
    game: &SimpleGame,
    player: usize,
    others: &dyn StopProfile,
    cont: &[f64],
    state: usize,
) -> (f64, bool) {
    let point = grid.point_of_state(state);
    let yes = (0..game.players())
        .filter(|&j| j != player && others.stops(j, &point))
        .fold(0u32, |m, j| m | 1 << j);
    let (without, with) = game.pivotal_gap_mask(player, yes);
    let g = cont[state];
    let h = (1.0 - point.pi[player]) - g;
    let mut payoff = g;
    if without {
        payoff += h.max(0.0);
    }
    if with {
        payoff -= (-h).max(0.0);
    }
    (payoff, with && !without)
}

/// `min over stopping sets` for player `i`, given the others' votes and
/// `i`'s continuation table. Payoffs are taken at grid corners and
/// interpolated to the successors.
pub fn best_response_over(
    grid: &JointGrid,
    game: &SimpleGame,
    player: usize,
    others: &dyn StopProfile,
    cont: &[f64],
    successors: &[JointSuccessor],
) -> BestResponse {
    let mut terms = Vec::new();
    let mut pivotal_mass = 0.0;
    let mut stop = Vec::with_capacity(successors.len());
    for s in successors {
        for &(c, w) in &s.point.corners {
            let (payoff, pivotal) = grid_payoff(grid, game, player, others, cont, c);
            terms.push(s.prob * (w * payoff));
            if pivotal {
                pivotal_mass += s.prob * w;
            }
        }
        stop.push(1.0 - s.point.pi[player] <= s.point.interpolate(cont));
    }
    BestResponse { value: ordered_sum(&mut terms), stop, pivotal_mass }
}

/// [`best_response_over`] at joint grid state `state`.
pub fn best_response_value(
    grid: &JointGrid,
    game: &SimpleGame,
    player: usize,
    others: &dyn StopProfile,
    cont: &[f64],
    state: usize,
) -> BestResponse {
    best_response_over(grid, game, player, others, cont, &grid.successors(state))
}

/// One stage of the backward induction.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSolution {
    /// `values[i][s]`: continuation value `v_{i,k}` of player `i`.
    pub values: Vec<Vec<f64>>,
    /// `entry_values[i][s]`: value on arriving at `s` before voting.
    pub entry_values: Vec<Vec<f64>>,
    /// `stop[i][s]`: player `i` votes stop at `s`.
    pub stop: Vec<Vec<bool>>,
    /// Whether `stop` is the canonical rule `1 - pi_i <= v_{i,k}`.
    pub canonical: bool,
    pub iterations: usize,
    pub cycle: bool,
    /// Number of grid states where each player is pivotal.
    pub pivotal_states: Vec<usize>,
}

/// Synchronous best-response iteration over the grid tables from the
/// all-stop profile. Returns `(profile, iterations, cycle, pivotal counts)`.
fn best_response_tables(
    grid: &JointGrid,
    game: &SimpleGame,
    values: &[Vec<f64>],
    stage: usize,
) -> Result<(Vec<Vec<bool>>, usize, bool, Vec<usize>)> {
    let p = game.players();
    let mut profile = vec![vec![true; grid.len()]; p];
    let mut history: Vec<Vec<Vec<bool>>> = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut pivotal = vec![0usize; p];
        let mut next = vec![vec![false; grid.len()]; p];
        for s in 0..grid.len() {
            let yes = (0..p).filter(|&j| profile[j][s]).fold(0u32, |m, j| m | 1 << j);
            for i in 0..p {
                let (without, with) = game.pivotal_gap_mask(i, yes);
                if with != without {
                    pivotal[i] += 1;
                }
                // off the pivotal region the vote is payoff-irrelevant and
                // is canonicalized to the same comparison
                next[i][s] = 1.0 - grid.pi(s, i) <= values[i][s];
            }
        }
        if next == profile {
            return Ok((profile, iterations, false, pivotal));
        }
        if let Some(start) = history.iter().position(|h| *h == next) {
            let cycle: Vec<Vec<Vec<bool>>> = history.drain(start..).chain(std::iter::once(profile)).collect();
            let chosen = select_from_cycle(grid, game, values, cycle).ok_or(Error::CycleUnresolved { stage })?;
            return Ok((chosen, iterations, true, pivotal));
        }
        history.push(std::mem::replace(&mut profile, next));
    }
}

/// Profile of a best-response cycle with the smallest total entry value.
fn select_from_cycle(
    grid: &JointGrid,
    game: &SimpleGame,
    values: &[Vec<f64>],
    cycle: Vec<Vec<Vec<bool>>>,
) -> Option<Vec<Vec<bool>>> {
    let total = |profile: &Vec<Vec<bool>>| -> f64 {
        let p = game.players();
        (0..grid.len())
            .map(|s| {
                let votes: Small<bool> = (0..p).map(|j| profile[j][s]).collect();
                let stops = game.aggregate(&votes);
                (0..p)
                    .map(|i| if stops { 1.0 - grid.pi(s, i) } else { values[i][s] })
                    .sum::<f64>()
            })
            .sum()
    };
    cycle
        .into_iter()
        .map(|p| (total(&p), p))
        .filter(|(t, _)| t.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p)| p)
}

/// Solves stage `k` given the solution of stage `k - 1`.
pub fn stage_equilibrium(
    grid: &JointGrid,
    net: &NetModel,
    game: &SimpleGame,
    k: usize,
    prev: Option<&StageSolution>,
) -> Result<StageSolution> {
    let p = game.players();
    let values: Vec<Vec<f64>> = match prev {
        None => (0..p)
            .map(|i| (0..grid.len()).map(|s| 1.0 - grid.pi(s, i)).collect())
            .collect(),
        Some(prev) => {
            let canonical = CanonicalProfile { cont: &prev.values };
            let tables = TableProfile { tables: &prev.stop };
            let others: &dyn StopProfile = if prev.canonical { &canonical } else { &tables };
            let payoffs: Vec<Vec<f64>> = (0..p)
                .map(|i| {
                    (0..grid.len())
                        .into_par_iter()
                        .map(|c| grid_payoff(grid, game, i, others, &prev.values[i], c).0)
                        .collect()
                })
                .collect();
            let per_state: Vec<Small<f64>> = (0..grid.len())
                .into_par_iter()
                .map(|s| {
                    let succ = grid.successors(s);
                    let mut terms = Vec::new();
                    (0..p)
                        .map(|i| {
                            terms.clear();
                            for t in &succ {
                                terms.extend(t.point.corners.iter().map(|&(c, w)| t.prob * (w * payoffs[i][c])));
                            }
                            net.sensors[i].delay_cost * grid.pi(s, i) + ordered_sum(&mut terms)
                        })
                        .collect()
                })
                .collect();
            (0..p).map(|i| per_state.iter().map(|v| v[i]).collect()).collect()
        }
    };
    let (stop, iterations, cycle, pivotal_states) = best_response_tables(grid, game, &values, k)?;
    let entry_values = (0..p)
        .map(|i| {
            (0..grid.len())
                .map(|s| {
                    let votes: Small<bool> = (0..p).map(|j| stop[j][s]).collect();
                    if game.aggregate(&votes) {
                        1.0 - grid.pi(s, i)
                    } else {
                        values[i][s]
                    }
                })
                .collect()
        })
        .collect();
    Ok(StageSolution {
        values,
        entry_values,
        stop,
        canonical: !cycle,
        iterations,
        cycle,
        pivotal_states,
    })
}

/// Full backward-induction solution; `stages[k]` has `k` steps to go and
/// governs decisions at time `horizon - k`.
#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub net: NetModel,
    pub game: SimpleGame,
    pub grid: JointGrid,
    pub horizon: usize,
    pub stages: Vec<StageSolution>,
}

pub fn solve_game(net: &NetModel, game: &SimpleGame, grids: Vec<PiGrid>, budget: usize) -> Result<EquilibriumSolution> {
    if game.players() != net.size() {
        return Err(Error::InvalidArgument(format!(
            "game has {} players but the net has {} sensors",
            game.players(),
            net.size()
        )));
    }
    let grid = JointGrid::new(net, grids, budget)?;
    let mut stages: Vec<StageSolution> = Vec::with_capacity(net.horizon + 1);
    for k in 0..=net.horizon {
        let stage = stage_equilibrium(&grid, net, game, k, stages.last())?;
        stages.push(stage);
    }
    Ok(EquilibriumSolution { net: net.clone(), game: game.clone(), grid, horizon: net.horizon, stages })
}

/// Per-sensor grids containing every reachable posterior, so that the
/// solution involves no interpolation along reachable paths.
pub fn reachable_grids(net: &NetModel) -> Vec<PiGrid> {
    net.sensors.iter().map(|s| PiGrid::reachable(s, net.horizon)).collect()
}

impl EquilibriumSolution {
    /// Votes at time `n` for an arbitrary joint state.
    pub fn votes_at(&self, n: usize, x: &[usize], pi: &[f64]) -> Vec<bool> {
        let mut out = vec![false; self.game.players()];
        self.votes(n, x, pi, &[], &mut out);
        out
    }

    /// Each player's value at time 0 from the model's starting state.
    pub fn initial_values(&self) -> Vec<f64> {
        let x: Vec<usize> = self.net.sensors.iter().map(|s| s.initial_state).collect();
        let pi: Vec<f64> = self.net.sensors.iter().map(|s| s.prior.pi0()).collect();
        let stops = self.game.aggregate(&self.votes_at(0, &x, &pi));
        let point = self.grid.point(&x, &pi);
        let stage = &self.stages[self.horizon];
        (0..self.game.players())
            .map(|i| if stops { 1.0 - pi[i] } else { point.interpolate(&stage.values[i]) })
            .collect()
    }

    pub fn cycle_free(&self) -> bool {
        self.stages.iter().all(|s| !s.cycle)
    }
}

impl JointPolicy for EquilibriumSolution {
    fn votes(&self, n: usize, x: &[usize], pi: &[f64], _prev: &[bool], out: &mut [bool]) {
        let k = self.horizon.saturating_sub(n);
        if k == 0 {
            out.fill(true);
            return;
        }
        let stage = &self.stages[k];
        let point = self.grid.point(x, pi);
        for (j, vote) in out.iter_mut().enumerate() {
            *vote = if stage.canonical {
                1.0 - pi[j] <= point.interpolate(&stage.values[j])
            } else {
                stage.stop[j][point.nearest()]
            };
        }
    }
}

/// Key of a joint node: symbols, posterior bit patterns, previous votes.
type NodeKey = (Small<usize>, Small<u64>, u32);

#[derive(Clone)]
struct JointLayer {
    index: HashMap<NodeKey, usize>,
    nodes: Vec<(Small<usize>, Small<f64>, u32, f64)>,
}

impl JointLayer {
    fn new() -> Self {
        Self { index: HashMap::new(), nodes: Vec::new() }
    }

    fn add(&mut self, x: Small<usize>, pi: Small<f64>, prev: u32, mass: f64) {
        let key = (x.clone(), pi.iter().map(|v| v.to_bits()).collect(), prev);
        let len = self.nodes.len();
        let k = *self.index.entry(key).or_insert(len);
        if k == len {
            self.nodes.push((x, pi, prev, 0.0));
        }
        self.nodes[k].3 += mass;
    }
}

fn joint_successors(net: &NetModel, x: &[usize], pi: &[f64]) -> Vec<(f64, Small<usize>, Small<f64>)> {
    let lists: Vec<_> = net
        .sensors
        .iter()
        .enumerate()
        .map(|(r, m)| posterior::successors(m, x[r], pi[r]))
        .collect();
    let mut out = vec![(1.0, Small::new(), Small::new())];
    for list in &lists {
        let mut next = Vec::with_capacity(out.len() * list.len());
        for (prob, xs, ps) in &out {
            for s in list {
                let mut xs = xs.clone();
                let mut ps = ps.clone();
                xs.push(s.symbol);
                ps.push(s.pi);
                next.push((prob * s.prob, xs, ps));
            }
        }
        out = next;
    }
    out
}

/// Exact per-player risk of a joint policy, from the posterior form
/// `E[(1 - Pi^i_t) + c_i sum_{k < t} Pi^i_k]` over the joint observable
/// chain. The system is forced to stop at the horizon.
pub fn joint_policy_risk_exact(
    net: &NetModel,
    game: &SimpleGame,
    policy: &dyn JointPolicy,
    limit: usize,
) -> Result<Vec<f64>> {
    let mut start = JointLayer::new();
    start.add(
        net.sensors.iter().map(|s| s.initial_state).collect(),
        net.sensors.iter().map(|s| s.prior.pi0()).collect(),
        0,
        1.0,
    );
    Ok(risk_from(net, game, policy, start, 0, limit, false)?.0)
}

/// Risk accumulated from time `n0` on, starting from the weighted nodes of
/// `layer`. With `record`, also returns the layer reached at every time.
fn risk_from(
    net: &NetModel,
    game: &SimpleGame,
    policy: &dyn JointPolicy,
    mut layer: JointLayer,
    n0: usize,
    limit: usize,
    record: bool,
) -> Result<(Vec<f64>, Vec<JointLayer>)> {
    let p = net.size();
    let mut risk = vec![0.0; p];
    let mut layers = Vec::new();
    let mut votes = vec![false; p];
    let mut prev = vec![false; p];
    for n in n0..=net.horizon {
        if layer.nodes.len() > limit {
            return Err(Error::TreeTooLarge { nodes: layer.nodes.len(), limit });
        }
        let mut next = JointLayer::new();
        for (x, pi, prev_mask, mass) in &layer.nodes {
            for (j, v) in prev.iter_mut().enumerate() {
                *v = prev_mask >> j & 1 == 1;
            }
            policy.votes(n, x, pi, &prev, &mut votes);
            if n == net.horizon || game.aggregate(&votes) {
                for i in 0..p {
                    risk[i] += mass * (1.0 - pi[i]);
                }
                continue;
            }
            for i in 0..p {
                risk[i] += mass * net.sensors[i].delay_cost * pi[i];
            }
            let vote_mask = mask(&votes);
            for (prob, xs, ps) in joint_successors(net, x, pi) {
                next.add(xs, ps, vote_mask, mass * prob);
            }
        }
        if record {
            layers.push(std::mem::replace(&mut layer, next));
        } else {
            layer = next;
        }
    }
    Ok((risk, layers))
}

/// Decision point `(time, symbols, posterior bits)` of the joint chain.
pub type DecisionPoint = (usize, Small<usize>, Small<u64>);

/// A policy with player `player`'s vote flipped at the given points.
pub struct Deviation<'a> {
    pub base: &'a dyn JointPolicy,
    pub player: usize,
    pub flips: HashSet<DecisionPoint>,
}

impl JointPolicy for Deviation<'_> {
    fn votes(&self, n: usize, x: &[usize], pi: &[f64], prev: &[bool], out: &mut [bool]) {
        self.base.votes(n, x, pi, prev, out);
        let key: DecisionPoint = (n, x.iter().copied().collect(), pi.iter().map(|v| v.to_bits()).collect());
        if self.flips.contains(&key) {
            out[self.player] = !out[self.player];
        }
    }
}

/// Every decision point at times `0..horizon` reachable when nobody stops.
pub fn decision_points(net: &NetModel, limit: usize) -> Result<Vec<DecisionPoint>> {
    let mut out = Vec::new();
    let mut layer: Vec<(Small<usize>, Small<f64>)> = vec![(
        net.sensors.iter().map(|s| s.initial_state).collect(),
        net.sensors.iter().map(|s| s.prior.pi0()).collect(),
    )];
    for n in 0..net.horizon {
        let mut seen = HashSet::new();
        for (x, pi) in &layer {
            out.push((n, x.clone(), pi.iter().map(|v| v.to_bits()).collect()));
        }
        if out.len() > limit {
            return Err(Error::TreeTooLarge { nodes: out.len(), limit });
        }
        let mut next = Vec::new();
        for (x, pi) in &layer {
            for (_, xs, ps) in joint_successors(net, x, pi) {
                let key: (Small<usize>, Small<u64>) = (xs.clone(), ps.iter().map(|v| v.to_bits()).collect());
                if seen.insert(key) {
                    next.push((xs, ps));
                }
            }
        }
        layer = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerDeviations {
    /// Exact risk under the equilibrium profile.
    pub base_risk: f64,
    pub single_flips: usize,
    pub random_flips: usize,
    /// Largest risk reduction any checked deviation achieved (0 if none).
    pub max_decrease: f64,
    /// Description of the best deviation found.
    pub worst: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub players: Vec<PlayerDeviations>,
    pub tolerance: f64,
}

impl DeviationReport {
    pub fn max_decrease(&self) -> f64 {
        self.players.iter().map(|p| p.max_decrease).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_decrease() <= self.tolerance
    }
}

/// Checks that no unilateral deviation lowers a player's exact risk: every
/// single-point flip of the player's votes, plus `random_deviations`
/// random multi-point flips per player.
pub fn verify_equilibrium(
    solution: &EquilibriumSolution,
    random_deviations: usize,
    seed: u64,
    limit: usize,
) -> Result<DeviationReport> {
    let net = &solution.net;
    let game = &solution.game;
    let mut start = JointLayer::new();
    start.add(
        net.sensors.iter().map(|s| s.initial_state).collect(),
        net.sensors.iter().map(|s| s.prior.pi0()).collect(),
        0,
        1.0,
    );
    let (base, layers) = risk_from(net, game, solution, start, 0, limit, true)?;
    let points = decision_points(net, limit)?;
    let mut players = Vec::with_capacity(game.players());
    for i in 0..game.players() {
        let evaluate = |flips: HashSet<DecisionPoint>| -> Result<f64> {
            let dev = Deviation { base: solution, player: i, flips };
            Ok(joint_policy_risk_exact(net, game, &dev, limit)?[i])
        };
        // a single flip only changes the subtrees below the flipped point
        let single: Vec<Result<(f64, usize)>> = points
            .par_iter()
            .enumerate()
            .map(|(k, pt)| {
                let (n, x, bits) = pt;
                let mut sub = JointLayer::new();
                for (nx, npi, prev, mass) in &layers[*n].nodes {
                    if nx == x && npi.iter().map(|v| v.to_bits()).eq(bits.iter().copied()) {
                        sub.add(nx.clone(), npi.clone(), *prev, *mass);
                    }
                }
                if sub.nodes.is_empty() {
                    return Ok((0.0, k));
                }
                let dev = Deviation { base: solution, player: i, flips: HashSet::from([pt.clone()]) };
                let kept = risk_from(net, game, solution, sub.clone(), *n, limit, false)?.0[i];
                let flipped = risk_from(net, game, &dev, sub, *n, limit, false)?.0[i];
                Ok((kept - flipped, k))
            })
            .collect();
        let mut max_decrease = 0.0;
        let mut worst = None;
        for r in single {
            let (dec, k) = r?;
            if dec > max_decrease {
                max_decrease = dec;
                worst = Some(format!("flip at time {} state {:?}", points[k].0, points[k].1));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let subsets: Vec<HashSet<DecisionPoint>> = (0..random_deviations)
            .map(|_| {
                let rate: f64 = rng.random_range(0.05..0.5);
                points.iter().filter(|_| rng.random::<f64>() < rate).cloned().collect()
            })
            .collect();
        let random: Vec<Result<(f64, usize)>> = subsets
            .into_par_iter()
            .map(|flips| {
                let size = flips.len();
                Ok((base[i] - evaluate(flips)?, size))
            })
            .collect();
        for r in random {
            let (dec, size) = r?;
            if dec > max_decrease {
                max_decrease = dec;
                worst = Some(format!("random deviation flipping {size} points"));
            }
        }
        players.push(PlayerDeviations {
            base_risk: base[i],
            single_flips: points.len(),
            random_flips: random_deviations,
            max_decrease,
            worst,
        });
    }
    Ok(DeviationReport { players, tolerance: DEVIATION_TOLERANCE })
}
