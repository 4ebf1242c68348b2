use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::game::{CoalitionGame, MAX_EXACT_PLAYERS};
use crate::error::{Error, Result};

/// Shapley values and the percentage shares derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    pub values: IndexMap<String, f64>,
    pub shares: IndexMap<String, f64>,
    /// Characteristic-function evaluations performed.
    pub evaluations: usize,
}

impl ShapleyResult {
    fn new(players: &[String], values: Vec<f64>, evaluations: usize) -> Result<Self> {
        let shares = shares_from(&values)?;
        Ok(Self {
            values: players.iter().cloned().zip(values).collect(),
            shares: players.iter().cloned().zip(shares).collect(),
            evaluations,
        })
    }
}

/// `s_i = phi_i / sum_j phi_j * 100`.
pub fn shares_from(values: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = values.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::ZeroTotal);
    }
    Ok(values.iter().map(|v| 100.0 * v / total).collect())
}

/// `|S|!(n-|S|-1)!/n!` for every coalition size `|S|` in `0..n`.
fn size_weights(n: usize) -> Vec<f64> {
    // 1 / (n * C(n-1, s)); binomials up to C(19, 9) are exact in f64
    let mut binom = 1.0_f64;
    (0..n)
        .map(|s| {
            if s > 0 {
                binom = binom * (n - s) as f64 / s as f64;
            }
            1.0 / (n as f64 * binom)
        })
        .collect()
}

/// Exact Shapley values plus the number of coalition evaluations.
///
/// `v` is evaluated once per bitmask into a memo table (`2^n` evaluations),
/// then each player's value is the size-weighted sum of its marginal
/// contributions over all coalitions that exclude it.
pub fn shapley_values(game: &CoalitionGame) -> Result<(Vec<f64>, usize)> {
    let n = game.len();
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::TooManyPlayers {
            players: n,
            limit: MAX_EXACT_PLAYERS,
        });
    }
    let table: Vec<f64> = (0..1u64 << n).map(|m| game.value(m)).collect();
    let weights = size_weights(n);
    let values = (0..n)
        .into_par_iter()
        .map(|i| {
            let bit = 1usize << i;
            let mut phi = 0.0;
            for mask in (0..table.len()).filter(|m| m & bit == 0) {
                let size = mask.count_ones() as usize;
                phi += weights[size] * (table[mask | bit] - table[mask]);
            }
            phi
        })
        .collect();
    Ok((values, table.len()))
}

pub fn shapley_exact(game: &CoalitionGame) -> Result<ShapleyResult> {
    let (values, evaluations) = shapley_values(game)?;
    ShapleyResult::new(game.players(), values, evaluations)
}

/// Permutation-sampling estimate: the average marginal contribution of each
/// player over `permutations` uniformly random join orders. Unbiased for the
/// exact value. Additive games may exceed the exact-path player limit.
pub fn shapley_sampled<R: Rng + ?Sized>(
    game: &CoalitionGame,
    permutations: usize,
    rng: &mut R,
) -> Result<ShapleyResult> {
    if permutations == 0 {
        return Err(Error::validation("permutations", "must be at least 1"));
    }
    let n = game.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut sums = vec![0.0; n];
    let mut evaluations = 0;
    for _ in 0..permutations {
        order.shuffle(rng);
        let mut mask = 0u64;
        for &player in &order {
            sums[player] += game.marginal(mask, player);
            if n <= 64 {
                mask |= 1 << player;
            }
            evaluations += 1;
        }
    }
    let values = sums.into_iter().map(|s| s / permutations as f64).collect();
    ShapleyResult::new(game.players(), values, evaluations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    fn glove() -> CoalitionGame {
        // v({1,2}) = v({1,2,3}) = 1, everything else 0
        CoalitionGame::from_fn(names(3), |m| if m & 0b011 == 0b011 { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn size_weights_sum_to_one_per_player() {
        for n in 1..=20 {
            let w = size_weights(n);
            // sum over coalitions excluding i: sum_s C(n-1,s) * w[s] = 1
            let mut binom = 1.0;
            let total: f64 = (0..n)
                .map(|s| {
                    if s > 0 {
                        binom = binom * (n - s) as f64 / s as f64;
                    }
                    binom * w[s]
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n}: {total}");
        }
    }

    #[test]
    fn additive_game_returns_powers() {
        let g = CoalitionGame::additive(names(3), vec![1.0, 2.0, 3.0]).unwrap();
        let r = shapley_exact(&g).unwrap();
        let v: Vec<f64> = r.values.values().copied().collect();
        for (a, b) in v.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let s: Vec<f64> = r.shares.values().copied().collect();
        assert!((s[0] - 100.0 / 6.0).abs() < 1e-9);
        assert!((s[1] - 100.0 / 3.0).abs() < 1e-9);
        assert!((s[2] - 50.0).abs() < 1e-9);
    }

    #[test]
    fn two_of_three_glove_game() {
        let r = shapley_exact(&glove()).unwrap();
        assert!((r.values["p0"] - 0.5).abs() < 1e-12);
        assert!((r.values["p1"] - 0.5).abs() < 1e-12);
        assert!(r.values["p2"].abs() < 1e-12);
    }

    #[test]
    fn null_player_gets_zero() {
        let g = CoalitionGame::from_fn(names(4), |m| ((m & 0b0111).count_ones() as f64).powi(2)).unwrap();
        let r = shapley_exact(&g).unwrap();
        assert!(r.values["p3"].abs() < 1e-12);
    }

    #[test]
    fn evaluation_count_is_two_to_the_n() {
        let g = CoalitionGame::additive(names(7), vec![1.0; 7]).unwrap();
        assert_eq!(shapley_exact(&g).unwrap().evaluations, 128);
    }

    #[test]
    fn too_many_players() {
        let g = CoalitionGame::additive(names(21), vec![1.0; 21]).unwrap();
        assert!(matches!(shapley_exact(&g), Err(Error::TooManyPlayers { .. })));
    }

    #[test]
    fn zero_total_has_no_shares() {
        let g = CoalitionGame::additive(names(2), vec![0.0, 0.0]).unwrap();
        assert!(matches!(shapley_exact(&g), Err(Error::ZeroTotal)));
    }

    #[test]
    fn sampled_additive_is_exact() {
        let g = CoalitionGame::additive(names(3), vec![1.0, 2.0, 3.0]).unwrap();
        for seed in 0..5 {
            let r = shapley_sampled(&g, 17, &mut rng::stream(seed)).unwrap();
            assert_eq!(r.values.values().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn sampled_handles_large_additive_games() {
        let powers: Vec<f64> = (1..=30).map(f64::from).collect();
        let g = CoalitionGame::additive(names(30), powers.clone()).unwrap();
        let r = shapley_sampled(&g, 3, &mut rng::stream(1)).unwrap();
        assert_eq!(r.values.values().copied().collect::<Vec<_>>(), powers);
    }

    #[test]
    fn sampled_glove_game_converges() {
        let r = shapley_sampled(&glove(), 100_000, &mut rng::stream(42)).unwrap();
        assert!((r.values["p0"] - 0.5).abs() < 0.01);
        assert!((r.values["p1"] - 0.5).abs() < 0.01);
        assert_eq!(r.values["p2"], 0.0);
    }

    #[test]
    fn zero_permutations_rejected() {
        assert!(shapley_sampled(&glove(), 0, &mut rng::stream(0)).is_err());
    }
}
