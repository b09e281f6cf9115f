//! Recursive Bayes filter for `Pi_n = P(theta <= n | X_0..X_n)`.
//!
//! Given `Pi` and the transition `x -> y`, the next posterior is
//!
//! ```text
//! A   = Pi + (1 - Pi) q                 prior weight of the post regime
//! Pi' = A f1(y|x) / (A f1(y|x) + (1 - Pi) p f0(y|x))
//! ```
//!
//! `Pi_0 = pi0`; `X_0` carries no information because both regimes start
//! from the same symbol.

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::model::SensorModel;

/// Posterior disorder probability of a single sensor.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PosteriorState(f64);

impl PosteriorState {
    pub fn new(value: f64) -> Option<Self> {
        (0.0..=1.0).contains(&value).then_some(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn update(self, from: usize, to: usize, model: &SensorModel) -> Result<Self> {
        update(self.0, from, to, model).map(Self)
    }
}

/// One filter step. `pi = 1` is absorbing.
pub fn update(pi: f64, from: usize, to: usize, model: &SensorModel) -> Result<f64> {
    if pi >= 1.0 {
        return Ok(1.0);
    }
    let (a1, a0) = model.regime_weights(pi);
    let changed = a1 * model.post.prob(from, to);
    let total = changed + a0 * model.pre.prob(from, to);
    if total <= 0.0 {
        return Err(Error::ZeroLikelihood { from, to });
    }
    Ok((changed / total).min(1.0))
}

/// Posterior sequence `Pi_0..Pi_n` along an observed path.
pub fn filter_path(observations: &[usize], model: &SensorModel) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(observations.len());
    let mut pi = model.prior.pi0();
    out.push(pi);
    for w in observations.windows(2) {
        pi = update(pi, w[0], w[1], model)?;
        out.push(pi);
    }
    Ok(out)
}

/// Possible next observation with its predictive probability and the
/// posterior it leads to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Successor {
    pub symbol: usize,
    pub prob: f64,
    pub pi: f64,
}

/// All next observations of positive predictive probability from
/// `(from, pi)`.
pub fn successors(model: &SensorModel, from: usize, pi: f64) -> SmallVec<[Successor; 8]> {
    let (a1, a0) = model.regime_weights(pi);
    let mut out = SmallVec::new();
    for to in 0..model.states() {
        let changed = a1 * model.post.prob(from, to);
        let prob = changed + a0 * model.pre.prob(from, to);
        if prob > 0.0 {
            let next = if pi >= 1.0 { 1.0 } else { (changed / prob).min(1.0) };
            out.push(Successor { symbol: to, prob, pi: next });
        }
    }
    out
}

/// Residual of the one-step conditional-mean identity
/// `E[Pi' | x, Pi] = Pi + (1 - Pi) q`, computed by exact summation over the
/// next symbol.
pub fn drift_residual(pi: f64, from: usize, model: &SensorModel) -> f64 {
    let mean: f64 = successors(model, from, pi).iter().map(|s| s.prob * s.pi).sum();
    mean - (pi + (1.0 - pi) * model.prior.q())
}
