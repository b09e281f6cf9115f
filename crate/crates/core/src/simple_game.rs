//! Monotone simple games on the sensor set and the aggregation function
//! `delta(votes) = 1` iff the set of "stop" voters is a winning coalition.

use std::fmt;

use crate::error::{Error, Result};

/// Largest supported number of players (coalitions are `u32` bitmasks and
/// the winning family is stored exhaustively).
pub const MAX_PLAYERS: usize = 24;

/// Set of players as a bitmask, bit `i` standing for player `i`
/// (zero-based). Displayed with one-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition(pub u32);

impl Coalition {
    pub fn from_players(players: &[usize]) -> Self {
        Self(players.iter().fold(0, |m, &i| m | 1 << i))
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn players(self) -> Vec<usize> {
        (0..32).filter(|&i| self.contains(i)).collect()
    }

    pub fn size(self) -> u32 {
        self.0.count_ones()
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.players().iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// Monotone simple game: `N` wins, the empty set loses, supersets of
/// winning coalitions win.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGame {
    players: usize,
    winning: Vec<bool>,
}

impl SimpleGame {
    /// Validates an explicit winning family. The family is not completed:
    /// a missing superset is reported as [`Error::NotMonotone`], which takes
    /// precedence over [`Error::FullLoses`].
    pub fn new(players: usize, winning: impl IntoIterator<Item = Coalition>) -> Result<Self> {
        if players == 0 || players > MAX_PLAYERS {
            return Err(Error::InvalidGame(format!("player count {players} is outside 1..={MAX_PLAYERS}")));
        }
        let size = 1usize << players;
        let mut table = vec![false; size];
        for c in winning {
            if c.0 as usize >= size {
                return Err(Error::InvalidGame(format!("coalition {c} names a player beyond {players}")));
            }
            table[c.0 as usize] = true;
        }
        if table[0] {
            return Err(Error::EmptyWins);
        }
        for s in 0..size {
            if !table[s] {
                continue;
            }
            for i in 0..players {
                let t = s | 1 << i;
                if !table[t] {
                    return Err(Error::NotMonotone {
                        winning: Coalition(s as u32),
                        superset: Coalition(t as u32),
                    });
                }
            }
        }
        if !table[size - 1] {
            return Err(Error::FullLoses);
        }
        Ok(Self { players, winning: table })
    }

    /// Game whose winning coalitions are the supersets of `minimal`.
    pub fn from_minimal(players: usize, minimal: &[Coalition]) -> Result<Self> {
        if players == 0 || players > MAX_PLAYERS {
            return Err(Error::InvalidGame(format!("player count {players} is outside 1..={MAX_PLAYERS}")));
        }
        let size = 1u32 << players;
        let winning = (0..size).filter(|&s| minimal.iter().any(|m| s & m.0 == m.0)).map(Coalition);
        Self::new(players, winning)
    }

    /// Winning iff strictly more than half of the players vote yes.
    pub fn majority(players: usize) -> Result<Self> {
        Self::from_predicate(players, |c| 2 * c.size() as usize > players)
    }

    pub fn unanimity(players: usize) -> Result<Self> {
        Self::from_predicate(players, |c| c.size() as usize == players)
    }

    /// Player `dictator` (zero-based) alone decides.
    pub fn dictator(players: usize, dictator: usize) -> Result<Self> {
        if dictator >= players {
            return Err(Error::InvalidGame(format!("dictator {} is not a player", dictator + 1)));
        }
        Self::from_predicate(players, |c| c.contains(dictator))
    }

    /// Winning iff the yes-voters' weights reach `quota`.
    pub fn weighted_threshold(weights: &[f64], quota: f64) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidGame("weights must be non-negative".into()));
        }
        Self::from_predicate(weights.len(), |c| {
            c.players().iter().map(|&i| weights[i]).sum::<f64>() >= quota
        })
    }

    fn from_predicate(players: usize, wins: impl Fn(Coalition) -> bool) -> Result<Self> {
        if players == 0 || players > MAX_PLAYERS {
            return Err(Error::InvalidGame(format!("player count {players} is outside 1..={MAX_PLAYERS}")));
        }
        Self::new(players, (0..1u32 << players).map(Coalition).filter(|&c| wins(c)))
    }

    pub fn players(&self) -> usize {
        self.players
    }

    #[inline]
    pub fn wins(&self, c: Coalition) -> bool {
        self.winning[c.0 as usize]
    }

    /// Every winning coalition in increasing bitmask order.
    pub fn winning(&self) -> Vec<Coalition> {
        (0..self.winning.len() as u32).map(Coalition).filter(|&c| self.wins(c)).collect()
    }

    /// `delta(votes)`.
    #[inline]
    pub fn aggregate(&self, votes: &[bool]) -> bool {
        debug_assert_eq!(votes.len(), self.players);
        self.winning[mask(votes) as usize]
    }

    /// `(delta(v), delta(v with i -> 1), delta(v with i -> 0))`. The first
    /// component always equals `v_i * second + (1 - v_i) * third`.
    pub fn decompose(&self, i: usize, votes: &[bool]) -> (bool, bool, bool) {
        let m = mask(votes);
        (
            self.winning[m as usize],
            self.winning[(m | 1 << i) as usize],
            self.winning[(m & !(1 << i)) as usize],
        )
    }

    /// Outcome with player `i` voting continue and voting stop, the other
    /// votes fixed (`votes[i]` is ignored). The first component never
    /// exceeds the second.
    #[inline]
    pub fn pivotal_gap(&self, i: usize, votes: &[bool]) -> (bool, bool) {
        self.pivotal_gap_mask(i, mask(votes))
    }

    #[inline]
    pub fn pivotal_gap_mask(&self, i: usize, yes: u32) -> (bool, bool) {
        (
            self.winning[(yes & !(1 << i)) as usize],
            self.winning[(yes | 1 << i) as usize],
        )
    }

    /// Minimal winning coalitions.
    pub fn minimal_winning(&self) -> Vec<Coalition> {
        self.winning()
            .into_iter()
            .filter(|c| c.players().iter().all(|&i| !self.wins(Coalition(c.0 & !(1 << i)))))
            .collect()
    }
}

/// Bitmask of the `true` entries.
#[inline]
pub fn mask(votes: &[bool]) -> u32 {
    votes
        .iter()
        .enumerate()
        .fold(0, |m, (i, &v)| if v { m | 1 << i } else { m })
}
