//! Discretization of the posterior axis `[0, 1]` and linear interpolation
//! on it.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::model::SensorModel;
use crate::posterior;

/// Posteriors within this distance of a grid point are read off that point
/// exactly instead of being interpolated.
pub const SNAP_TOLERANCE: f64 = 1e-14;

/// Strictly increasing points in `[0, 1]` including both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PiGrid {
    points: Vec<f64>,
    uniform_steps: Option<usize>,
}

/// Interpolation weights for one posterior value: the value is
/// `(1 - w_hi) * row[lo] + w_hi * row[hi]`. On a grid point `lo == hi` and
/// `w_hi == 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: usize,
    pub hi: usize,
    pub w_hi: f64,
}

impl Bracket {
    #[inline]
    pub fn apply(&self, row: &[f64]) -> f64 {
        if self.lo == self.hi {
            row[self.lo]
        } else {
            (1.0 - self.w_hi) * row[self.lo] + self.w_hi * row[self.hi]
        }
    }

    /// Grid index carrying the larger weight (ties go to `lo`).
    #[inline]
    pub fn nearest(&self) -> usize {
        if self.w_hi > 0.5 {
            self.hi
        } else {
            self.lo
        }
    }
}

impl PiGrid {
    /// `steps + 1` equally spaced points `k / steps`.
    pub fn uniform(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidGrid("a uniform grid needs at least one step".into()));
        }
        let points = (0..=steps).map(|k| k as f64 / steps as f64).collect();
        Ok(Self { points, uniform_steps: Some(steps) })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points[0] != 0.0 || *points.last().unwrap() != 1.0 {
            return Err(Error::InvalidGrid("points must start at 0 and end at 1".into()));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        Ok(Self { points, uniform_steps: None })
    }

    /// Grid made of every posterior value reachable from `(x0, pi0)` within
    /// `horizon` steps, plus the endpoints. Values closer than
    /// [`SNAP_TOLERANCE`] are merged.
    pub fn reachable(model: &SensorModel, horizon: usize) -> Self {
        let mut values = vec![0.0, 1.0];
        let mut seen: HashSet<(usize, u64)> = HashSet::new();
        let mut frontier = vec![(model.initial_state, model.prior.pi0())];
        seen.insert((model.initial_state, model.prior.pi0().to_bits()));
        values.push(model.prior.pi0());
        for _ in 0..horizon {
            let mut next = Vec::new();
            for &(x, pi) in &frontier {
                for s in posterior::successors(model, x, pi) {
                    if seen.insert((s.symbol, s.pi.to_bits())) {
                        values.push(s.pi);
                        next.push((s.symbol, s.pi));
                    }
                }
            }
            frontier = next;
        }
        values.sort_by(f64::total_cmp);
        let mut points: Vec<f64> = Vec::with_capacity(values.len());
        for v in values {
            match points.last() {
                Some(&last) if v - last <= SNAP_TOLERANCE => {}
                _ => points.push(v),
            }
        }
        // keep 1 exactly as the last point
        if *points.last().unwrap() != 1.0 {
            *points.last_mut().unwrap() = 1.0;
        }
        Self { points, uniform_steps: None }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bracket(&self, pi: f64) -> Bracket {
        let last = self.points.len() - 1;
        if pi <= 0.0 {
            return Bracket { lo: 0, hi: 0, w_hi: 0.0 };
        }
        if pi >= 1.0 {
            return Bracket { lo: last, hi: last, w_hi: 0.0 };
        }
        let lo = match self.uniform_steps {
            Some(steps) => ((pi * steps as f64).floor() as usize).min(last - 1),
            None => self.points.partition_point(|&g| g <= pi).saturating_sub(1).min(last - 1),
        };
        // the floor above can land one cell off after rounding
        let lo = if self.points[lo] > pi { lo - 1 } else if self.points[lo + 1] <= pi { lo + 1 } else { lo };
        let hi = (lo + 1).min(last);
        if pi - self.points[lo] <= SNAP_TOLERANCE {
            return Bracket { lo, hi: lo, w_hi: 0.0 };
        }
        if self.points[hi] - pi <= SNAP_TOLERANCE {
            return Bracket { lo: hi, hi, w_hi: 0.0 };
        }
        let w_hi = (pi - self.points[lo]) / (self.points[hi] - self.points[lo]);
        Bracket { lo, hi, w_hi }
    }

    /// Index of the grid point equal to `pi` (up to [`SNAP_TOLERANCE`]).
    pub fn index_of(&self, pi: f64) -> Option<usize> {
        let b = self.bracket(pi);
        (b.lo == b.hi).then_some(b.lo)
    }

    pub fn interpolate(&self, row: &[f64], pi: f64) -> f64 {
        self.bracket(pi).apply(row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_endpoints() {
        let g = PiGrid::uniform(1000).unwrap();
        assert_eq!(g.len(), 1001);
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(g.points()[1000], 1.0);
        assert!(PiGrid::uniform(0).is_err());
    }

    #[test]
    fn from_points_validation() {
        assert!(PiGrid::from_points(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(PiGrid::from_points(vec![0.1, 1.0]).is_err());
        assert!(PiGrid::from_points(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(PiGrid::from_points(vec![0.0, 0.9]).is_err());
    }

    #[test]
    fn exact_points_are_read_directly() {
        let g = PiGrid::from_points(vec![0.0, 0.25, 0.7, 1.0]).unwrap();
        let row = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(g.interpolate(&row, 0.7), 3.0);
        assert_eq!(g.interpolate(&row, 1.0), 4.0);
        assert_eq!(g.index_of(0.25), Some(1));
        assert_eq!(g.index_of(0.3), None);
        assert!((g.interpolate(&row, 0.475) - 2.5).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn interpolation_reproduces_linear_functions(pi in 0.0f64..=1.0, steps in 1usize..200) {
            let g = PiGrid::uniform(steps).unwrap();
            let row: Vec<f64> = g.points().iter().map(|&x| 3.0 * x - 1.0).collect();
            prop_assert!((g.interpolate(&row, pi) - (3.0 * pi - 1.0)).abs() < 1e-12);
            let b = g.bracket(pi);
            prop_assert!(g.points()[b.lo] <= pi + SNAP_TOLERANCE);
            prop_assert!(g.points()[b.hi] >= pi - SNAP_TOLERANCE);
        }

        #[test]
        fn uniform_and_explicit_grids_agree(pi in 0.0f64..=1.0, steps in 1usize..100) {
            let u = PiGrid::uniform(steps).unwrap();
            let e = PiGrid::from_points(u.points().to_vec()).unwrap();
            let row: Vec<f64> = u.points().iter().map(|x| (x * 7.0).sin()).collect();
            prop_assert!((u.interpolate(&row, pi) - e.interpolate(&row, pi)).abs() < 1e-12);
        }
    }
}
