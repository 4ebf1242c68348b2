use clio_core::allocation::{shapley_exact, shapley_sampled, shapley_values, CoalitionGame};
use clio_core::rng::stream;
use clio_validation::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn additive_games_give_powers_back(powers in prop::collection::vec(0.0f64..100.0, 1..9)) {
        prop_assume!(powers.iter().sum::<f64>() > 1e-6);
        let game = CoalitionGame::additive(names(powers.len()), powers.clone()).unwrap();
        let result = shapley_exact(&game).unwrap();
        let total: f64 = powers.iter().sum();
        for ((phi, share), p) in result.values.values().zip(result.shares.values()).zip(&powers) {
            prop_assert!((phi - p).abs() <= 1e-9 * total.max(1.0));
            prop_assert!((share - 100.0 * p / total).abs() <= 1e-9);
        }
    }

    #[test]
    fn shares_sum_to_one_hundred(seed in 0u64..10_000, n in 1usize..8) {
        let mut rng = stream(seed);
        let mut table = random_table(n, &mut rng);
        // keep the grand coalition clearly away from zero
        let last = table.len() - 1;
        table[last] = table[last].abs() + 1.0;
        let result = shapley_exact(&game(table)).unwrap();
        prop_assert!((result.shares.values().sum::<f64>() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn relabeling_players_permutes_values(seed in 0u64..10_000, n in 2usize..7) {
        let mut rng = stream(seed);
        let table = random_table(n, &mut rng);
        // reverse the player indices
        let flip = |m: usize| (0..n).filter(|i| m >> i & 1 == 1).fold(0, |acc, i| acc | 1 << (n - 1 - i));
        let flipped: Vec<f64> = (0..1 << n).map(|m| table[flip(m)]).collect();
        let (a, _) = shapley_values(&game(table)).unwrap();
        let (b, _) = shapley_values(&game(flipped)).unwrap();
        for i in 0..n {
            prop_assert!((a[i] - b[n - 1 - i]).abs() < 1e-9);
        }
    }
}

#[test]
fn exact_values_match_enumeration_of_orderings() {
    let mut rng = stream(5);
    for n in 1..=8 {
        let table = random_table(n, &mut rng);
        let (oracle, _) = permutation_oracle(&table);
        let (phi, evaluations) = shapley_values(&game(table.clone())).unwrap();
        assert_eq!(evaluations, 1 << n);
        for (a, b) in phi.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12 * scale(&table), "n = {n}: {a} vs {b}");
        }
    }
}

#[test]
fn sampled_estimates_fall_within_three_standard_errors() {
    let mut rng = stream(17);
    for n in [3, 5, 7] {
        let table = random_table(n, &mut rng);
        let (exact, variance) = permutation_oracle(&table);
        let permutations = 4000;
        let estimate = shapley_sampled(&game(table), permutations, &mut stream(1000 + n as u64)).unwrap();
        for (i, phi) in estimate.values.values().enumerate() {
            let se = (variance[i] / permutations as f64).sqrt();
            assert!(
                (phi - exact[i]).abs() <= 3.0 * se + 1e-12,
                "player {i}: {phi} vs {} (se {se})",
                exact[i]
            );
        }
    }
}

#[test]
fn sampled_error_shrinks_with_more_permutations() {
    let table = random_table(6, &mut stream(23));
    let (exact, _) = permutation_oracle(&table);
    let rmse = |m: usize| {
        let mut total = 0.0;
        for rep in 0..40 {
            let est = shapley_sampled(&game(table.clone()), m, &mut stream(rep)).unwrap();
            total += est
                .values
                .values()
                .zip(&exact)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        }
        (total / 40.0).sqrt()
    };
    let ratio = rmse(50) / rmse(5000);
    assert!((7.0..=14.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn tabulated_and_additive_agree_on_shipped_colonial_game() {
    let scenario = clio_core::load_shipped("colonial_1890").unwrap();
    let weights = scenario.weights.clone().unwrap();
    let additive = clio_core::allocation::build_power_game(&scenario, &weights).unwrap();
    let powers = additive.powers().unwrap().to_vec();
    let tabulated = CoalitionGame::from_fn(scenario.entity_names(), |m| {
        (0..7).filter(|i| m >> i & 1 == 1).map(|i| powers[i]).sum()
    })
    .unwrap();
    let a = shapley_exact(&additive).unwrap();
    let b = shapley_exact(&tabulated).unwrap();
    for (x, y) in a.shares.values().zip(b.shares.values()) {
        assert!((x - y).abs() < 1e-9);
    }
}
