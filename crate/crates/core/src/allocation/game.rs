use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest player count for which the full coalition table is materialized.
pub const MAX_EXACT_PLAYERS: usize = 20;

/// The characteristic function `v` of a cooperative game.
///
/// Coalitions are bitmasks: bit `i` set means player `i` (position in the
/// ordered player list) is a member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Characteristic {
    /// `v(S) = sum of P_i over S`.
    Additive(Vec<f64>),
    /// Explicit value for each of the `2^n` coalitions, indexed by bitmask.
    Tabulated(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionGame {
    players: Vec<String>,
    v: Characteristic,
}

fn check_players(players: &[String]) -> Result<()> {
    if players.is_empty() {
        return Err(Error::validation("players", "a game needs at least one player"));
    }
    let mut sorted: Vec<&String> = players.iter().collect();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::validation("players", format!("duplicate player `{}`", w[0])));
    }
    Ok(())
}

impl CoalitionGame {
    /// An additive game. Power indices must be finite and nonnegative.
    pub fn additive(players: Vec<String>, powers: Vec<f64>) -> Result<Self> {
        check_players(&players)?;
        if players.len() != powers.len() {
            return Err(Error::Dimension(format!(
                "{} players but {} power indices",
                players.len(),
                powers.len()
            )));
        }
        if let Some((i, p)) = powers.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::validation(
                format!("powers.{}", players[i]),
                format!("power index must be finite and >= 0, got {p}"),
            ));
        }
        Ok(Self {
            players,
            v: Characteristic::Additive(powers),
        })
    }

    /// A game given by its full coalition table; `table[0]` must be 0.
    pub fn tabulated(players: Vec<String>, table: Vec<f64>) -> Result<Self> {
        check_players(&players)?;
        let n = players.len();
        if n > MAX_EXACT_PLAYERS {
            return Err(Error::TooManyPlayers {
                players: n,
                limit: MAX_EXACT_PLAYERS,
            });
        }
        if table.len() != 1 << n {
            return Err(Error::Dimension(format!(
                "{} players need {} coalition values, got {}",
                n,
                1usize << n,
                table.len()
            )));
        }
        if table[0] != 0.0 {
            return Err(Error::validation("v", format!("v(empty) must be 0, got {}", table[0])));
        }
        if let Some(mask) = table.iter().position(|x| !x.is_finite()) {
            return Err(Error::validation(
                format!("v[{mask:#b}]"),
                "coalition value must be finite",
            ));
        }
        Ok(Self {
            players,
            v: Characteristic::Tabulated(table),
        })
    }

    /// Tabulates `v` from a function of the coalition bitmask.
    pub fn from_fn(players: Vec<String>, mut v: impl FnMut(u64) -> f64) -> Result<Self> {
        let n = players.len();
        if n > MAX_EXACT_PLAYERS {
            return Err(Error::TooManyPlayers {
                players: n,
                limit: MAX_EXACT_PLAYERS,
            });
        }
        let table = (0..1u64 << n).map(|m| if m == 0 { 0.0 } else { v(m) }).collect();
        Self::tabulated(players, table)
    }

    pub fn players(&self) -> &[String] {
        &self.players
    }

    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }

    pub fn characteristic(&self) -> &Characteristic {
        &self.v
    }

    /// Power indices when the game is additive.
    pub fn powers(&self) -> Option<&[f64]> {
        match &self.v {
            Characteristic::Additive(p) => Some(p),
            Characteristic::Tabulated(_) => None,
        }
    }

    /// `v(S)` for the coalition bitmask `mask` (players beyond bit 63 are unreachable).
    pub fn value(&self, mask: u64) -> f64 {
        match &self.v {
            Characteristic::Additive(p) => p
                .iter()
                .take(64)
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, x)| x)
                .sum(),
            Characteristic::Tabulated(t) => t[mask as usize],
        }
    }

    /// Marginal contribution of `player` joining the coalition `mask`.
    pub(crate) fn marginal(&self, mask: u64, player: usize) -> f64 {
        match &self.v {
            Characteristic::Additive(p) => p[player],
            Characteristic::Tabulated(t) => t[(mask | 1 << player) as usize] - t[mask as usize],
        }
    }

    pub fn grand_value(&self) -> f64 {
        match &self.v {
            Characteristic::Additive(p) => p.iter().sum(),
            Characteristic::Tabulated(t) => t[t.len() - 1],
        }
    }
}
