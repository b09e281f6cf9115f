//! Optimal detection for a single sensor.
//!
//! The Bayes risk `P(tau < theta) + c E(tau - theta)^+` equals
//! `E[(1 - Pi_tau) + c sum_{k < tau} Pi_k]`, so the optimal risk solves the
//! Wald-Bellman equation
//!
//! ```text
//! rho(x, pi) = min{ 1 - pi,  c pi + E_{x,pi} rho(X_1, Pi_1) }
//! ```
//!
//! The value is tabulated on `symbols x PiGrid`; next posteriors that fall
//! between grid points are linearly interpolated.

use std::collections::HashMap;

use log::{debug, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::PiGrid;
use crate::model::SensorModel;
use crate::policy::SensorPolicy;
use crate::posterior;

/// Default limit on the number of nodes per time step in exact evaluation.
pub const DEFAULT_TREE_LIMIT: usize = 1_000_000;

/// Value table `v(x, pi)` over symbols and grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    states: usize,
    grid_len: usize,
    values: Vec<f64>,
}

impl ValueFunction {
    /// The stopping payoff `1 - pi` on every row.
    pub fn stopping_payoff(states: usize, grid: &PiGrid) -> Self {
        let values = (0..states)
            .flat_map(|_| grid.points().iter().map(|&pi| 1.0 - pi))
            .collect();
        Self { states, grid_len: grid.len(), values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        Self {
            states: rows.len(),
            grid_len: rows[0].len(),
            values: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.values[x * self.grid_len..(x + 1) * self.grid_len]
    }

    #[inline]
    pub fn get(&self, x: usize, g: usize) -> f64 {
        self.values[x * self.grid_len + g]
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Value at an arbitrary posterior, interpolated along the grid.
    pub fn interpolate(&self, grid: &PiGrid, x: usize, pi: f64) -> f64 {
        grid.interpolate(self.row(x), pi)
    }
}

/// Stop/continue decisions on the grid plus a per-symbol threshold summary.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRegion {
    grid_len: usize,
    stop: Vec<bool>,
    /// Smallest grid posterior at which the rule stops, per symbol.
    pub thresholds: Vec<Option<f64>>,
    /// Whether `{pi : stop(x, pi)}` is an upper set, per symbol.
    pub upper_set: Vec<bool>,
}

impl StoppingRegion {
    fn new(stop: Vec<bool>, states: usize, grid: &PiGrid) -> Self {
        let grid_len = grid.len();
        let mut thresholds = Vec::with_capacity(states);
        let mut upper_set = Vec::with_capacity(states);
        for x in 0..states {
            let row = &stop[x * grid_len..(x + 1) * grid_len];
            let first = row.iter().position(|&s| s);
            thresholds.push(first.map(|g| grid.points()[g]));
            upper_set.push(first.is_none_or(|g| row[g..].iter().all(|&s| s)));
        }
        Self { grid_len, stop, thresholds, upper_set }
    }

    #[inline]
    pub fn stops(&self, x: usize, g: usize) -> bool {
        self.stop[x * self.grid_len + g]
    }

    pub fn is_upper_set(&self) -> bool {
        self.upper_set.iter().all(|&u| u)
    }
}

/// `c pi + sum_y P(y | x, pi) v(y, Pi'(x, y, pi))`.
pub fn continuation(v: &ValueFunction, model: &SensorModel, grid: &PiGrid, x: usize, pi: f64) -> f64 {
    let expected: f64 = posterior::successors(model, x, pi)
        .iter()
        .map(|s| s.prob * v.interpolate(grid, s.symbol, s.pi))
        .sum();
    model.delay_cost * pi + expected
}

fn backup_with_region(v: &ValueFunction, model: &SensorModel, grid: &PiGrid) -> (ValueFunction, StoppingRegion) {
    let states = model.states();
    let cells: Vec<(f64, bool)> = (0..states * grid.len())
        .into_par_iter()
        .map(|cell| {
            let (x, g) = (cell / grid.len(), cell % grid.len());
            let pi = grid.points()[g];
            let stop_payoff = 1.0 - pi;
            let cont = continuation(v, model, grid, x, pi);
            // ties stop
            if stop_payoff <= cont {
                (stop_payoff, true)
            } else {
                (cont, false)
            }
        })
        .collect();
    let (values, stop): (Vec<f64>, Vec<bool>) = cells.into_iter().unzip();
    let value = ValueFunction { states, grid_len: grid.len(), values };
    (value, StoppingRegion::new(stop, states, grid))
}

/// One application of the Wald-Bellman operator.
pub fn bellman_backup(v: &ValueFunction, model: &SensorModel, grid: &PiGrid) -> ValueFunction {
    backup_with_region(v, model, grid).0
}

/// Stationary solution of the Wald-Bellman equation.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub model: SensorModel,
    pub grid: PiGrid,
    pub value: ValueFunction,
    pub region: StoppingRegion,
    pub iterations: usize,
    /// Sup-norm change of every iteration.
    pub residuals: Vec<f64>,
}

/// Value iteration from `v_0 = 1 - pi` until the sup-norm change is at most
/// `tol`.
pub fn solve_fixed_point(model: &SensorModel, grid: &PiGrid, tol: f64, max_iter: usize) -> Result<FixedPoint> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let mut v = ValueFunction::stopping_payoff(model.states(), grid);
    let mut residuals = Vec::new();
    for it in 1..=max_iter {
        let next = bellman_backup(&v, model, grid);
        let residual = next.sup_distance(&v);
        residuals.push(residual);
        v = next;
        if residual <= tol {
            debug!("value iteration converged after {it} iterations (residual {residual:e})");
            let (_, region) = backup_with_region(&v, model, grid);
            if !region.is_upper_set() {
                warn!("stopping region is not an upper set in pi for every symbol");
            }
            return Ok(FixedPoint {
                model: model.clone(),
                grid: grid.clone(),
                value: v,
                region,
                iterations: it,
                residuals,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

impl FixedPoint {
    /// `sup |T(v) - v|` at the returned value.
    pub fn bellman_residual(&self) -> f64 {
        bellman_backup(&self.value, &self.model, &self.grid).sup_distance(&self.value)
    }
}

impl SensorPolicy for FixedPoint {
    fn stop(&self, _: usize, x: usize, pi: f64) -> bool {
        1.0 - pi <= continuation(&self.value, &self.model, &self.grid, x, pi)
    }
}

/// Backward induction with a forced stop at the horizon.
///
/// `values[k]` is the optimal risk with `k` steps to go, so `values[0]` is
/// `1 - pi` and `values[horizon]` is the risk at time 0.
#[derive(Debug, Clone)]
pub struct FiniteHorizon {
    pub model: SensorModel,
    pub grid: PiGrid,
    pub horizon: usize,
    pub values: Vec<ValueFunction>,
    pub regions: Vec<StoppingRegion>,
}

pub fn solve_finite_horizon(model: &SensorModel, grid: &PiGrid, horizon: usize) -> FiniteHorizon {
    let terminal = ValueFunction::stopping_payoff(model.states(), grid);
    let all_stop = StoppingRegion::new(vec![true; model.states() * grid.len()], model.states(), grid);
    let mut values = vec![terminal];
    let mut regions = vec![all_stop];
    for _ in 0..horizon {
        let (v, r) = backup_with_region(values.last().unwrap(), model, grid);
        values.push(v);
        regions.push(r);
    }
    FiniteHorizon { model: model.clone(), grid: grid.clone(), horizon, values, regions }
}

impl FiniteHorizon {
    /// Optimal risk at time 0 from the model's starting state.
    pub fn initial_value(&self) -> f64 {
        let x0 = self.model.initial_state;
        self.values[self.horizon].interpolate(&self.grid, x0, self.model.prior.pi0())
    }
}

impl SensorPolicy for FiniteHorizon {
    /// Decision at time `n`; off-grid posteriors are decided by the same
    /// comparison, with the continuation interpolated.
    fn stop(&self, n: usize, x: usize, pi: f64) -> bool {
        let k = self.horizon.saturating_sub(n);
        if k == 0 {
            return true;
        }
        1.0 - pi <= continuation(&self.values[k - 1], &self.model, &self.grid, x, pi)
    }
}

/// Exact false-alarm probability, expected delay and risk of a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactRisk {
    pub false_alarm: f64,
    pub delay: f64,
    pub risk: f64,
}

/// Insertion-ordered node table keyed by `(symbol, posterior bits)`.
struct Layer<T> {
    index: HashMap<(usize, u64), usize>,
    nodes: Vec<(usize, f64, T)>,
}

impl<T: Default + Copy> Layer<T> {
    fn new() -> Self {
        Self { index: HashMap::new(), nodes: Vec::new() }
    }

    fn entry(&mut self, x: usize, pi: f64) -> &mut T {
        let len = self.nodes.len();
        let k = *self.index.entry((x, pi.to_bits())).or_insert(len);
        if k == len {
            self.nodes.push((x, pi, T::default()));
        }
        &mut self.nodes[k].2
    }
}

/// Evaluates `P(tau < theta) + c E(tau - theta)^+` exactly by pushing the
/// joint law of (symbol, posterior, disorder status) forward in time. The
/// policy is forced to stop at `horizon`.
pub fn policy_risk_exact(
    model: &SensorModel,
    policy: &dyn SensorPolicy,
    horizon: usize,
    limit: usize,
) -> Result<ExactRisk> {
    let (p, q) = (model.prior.p(), model.prior.q());
    let pi0 = model.prior.pi0();
    // node payload: (mass with theta > n, mass with theta <= n)
    let mut layer: Layer<(f64, f64)> = Layer::new();
    *layer.entry(model.initial_state, pi0) = (1.0 - pi0, pi0);
    let mut false_alarm = 0.0;
    let mut delay = 0.0;
    for n in 0..=horizon {
        if layer.nodes.len() > limit {
            return Err(Error::TreeTooLarge { nodes: layer.nodes.len(), limit });
        }
        let mut next: Layer<(f64, f64)> = Layer::new();
        for &(x, pi, (before, after)) in &layer.nodes {
            if n == horizon || policy.stop(n, x, pi) {
                false_alarm += before;
                continue;
            }
            delay += after;
            for y in 0..model.states() {
                let b = before * p * model.pre.prob(x, y);
                let a = (before * q + after) * model.post.prob(x, y);
                if a + b <= 0.0 {
                    continue;
                }
                let next_pi = posterior::update(pi, x, y, model)?;
                let slot = next.entry(y, next_pi);
                slot.0 += b;
                slot.1 += a;
            }
        }
        layer = next;
    }
    Ok(ExactRisk { false_alarm, delay, risk: false_alarm + model.delay_cost * delay })
}

/// The same risk computed from the posterior form
/// `E[(1 - Pi_tau) + c sum_{k < tau} Pi_k]` over the observable chain.
pub fn policy_risk_posterior_form(
    model: &SensorModel,
    policy: &dyn SensorPolicy,
    horizon: usize,
    limit: usize,
) -> Result<f64> {
    let mut layer: Layer<f64> = Layer::new();
    *layer.entry(model.initial_state, model.prior.pi0()) = 1.0;
    let mut risk = 0.0;
    for n in 0..=horizon {
        if layer.nodes.len() > limit {
            return Err(Error::TreeTooLarge { nodes: layer.nodes.len(), limit });
        }
        let mut next: Layer<f64> = Layer::new();
        for &(x, pi, mass) in &layer.nodes {
            if n == horizon || policy.stop(n, x, pi) {
                risk += mass * (1.0 - pi);
                continue;
            }
            risk += mass * model.delay_cost * pi;
            for s in posterior::successors(model, x, pi) {
                *next.entry(s.symbol, s.pi) += mass * s.prob;
            }
        }
        layer = next;
    }
    Ok(risk)
}
