/// Regrets `μ(a) = max_a' γ(a') − γ(a)` from blips `γ` indexed by action.
pub fn blip_to_regret(gamma: &[f64]) -> Vec<f64> {
    let best = gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    gamma.iter().map(|g| best - g).collect()
}

/// Blips relative to action 0: `γ(a) = μ(0) − μ(a)`.
pub fn regret_to_blip(mu: &[f64]) -> Vec<f64> {
    let base = mu.first().copied().unwrap_or(0.0);
    mu.iter().map(|m| base - m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn positive_blip() {
        assert_eq!(blip_to_regret(&[0.0, 5.0]), vec![5.0, 0.0]);
    }

    #[test]
    fn negative_blip() {
        assert_eq!(blip_to_regret(&[0.0, -3.0]), vec![0.0, 3.0]);
    }

    #[test]
    fn round_trip_over_table() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..10 {
            let gamma = [0.0, rng.random_range(-50.0..50.0)];
            let mu = blip_to_regret(&gamma);
            assert!(mu.iter().all(|m| *m >= 0.0));
            assert!(mu.contains(&0.0));
            let back = regret_to_blip(&mu);
            for (a, b) in back.iter().zip(&gamma) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
