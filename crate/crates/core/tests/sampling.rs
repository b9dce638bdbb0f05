mod common;

use common::{chi_square, chi_square_critical};
use polypcount::sampling::{sample_fragment_pair, sample_frame_pair, SamplingConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const ALPHA: f64 = 1e-3;

/// Conditional law of `j` given `i` on `[1, l]`, excluding `i`.
fn conditional_law(i: usize, l: usize, sigma: f64) -> Vec<f64> {
    let phi = Normal::new(i as f64, sigma).unwrap();
    let mut p: Vec<f64> = (1..=l)
        .map(|j| {
            if j == i {
                0.0
            } else {
                phi.cdf(j as f64 + 0.5) - phi.cdf(j as f64 - 0.5)
            }
        })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

#[test]
fn j_given_i_matches_truncated_gaussian() {
    let (l, sigma) = (20, 5.0);
    let cfg = SamplingConfig {
        sigma,
        seed: 17,
        ..Default::default()
    };
    let mut rng = cfg.rng();
    let mut counts = vec![vec![0u64; l]; l + 1];
    let mut first = vec![0u64; l];
    for _ in 0..200_000 {
        let (i, j) = sample_frame_pair(l, &cfg, &mut rng).unwrap();
        counts[i][j - 1] += 1;
        first[i - 1] += 1;
    }
    let (stat, df) = chi_square(&first, &vec![1.0 / l as f64; l], 200_000, 20.0);
    assert!(
        stat < chi_square_critical(df, ALPHA),
        "i not uniform: {stat} on {df} df"
    );
    for i in [1, 2, 10, 20] {
        let draws: u64 = counts[i].iter().sum();
        let law = conditional_law(i, l, sigma);
        let (stat, df) = chi_square(&counts[i], &law, draws, 20.0);
        assert!(
            stat < chi_square_critical(df, ALPHA),
            "i = {i}: {stat} on {df} df"
        );
    }
}

#[test]
fn fragment_bounds_over_many_draws() {
    let cfg = SamplingConfig {
        seed: 4,
        ..Default::default()
    };
    let mut rng = cfg.rng();
    for _ in 0..10_000 {
        let (a, b) = sample_fragment_pair(64, &cfg, &mut rng).unwrap();
        assert!((1..=32).contains(&a[0]));
        assert!((33..=64).contains(&b[0]));
        assert!(a.iter().chain(&b).all(|x| (1..=64).contains(x)));
        assert_eq!((a.len(), b.len()), (8, 8));
    }
}

#[test]
fn strides_are_uniform_when_they_fit() {
    // n = 200 fits every stride from any first-half start (100 + 7 * 4 <= 200).
    let cfg = SamplingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut counts = [0u64; 4];
    for _ in 0..40_000 {
        let (a, _) = sample_fragment_pair(200, &cfg, &mut rng).unwrap();
        counts[a[1] - a[0] - 1] += 1;
    }
    let (stat, df) = chi_square(&counts, &[0.25; 4], 40_000, 5.0);
    assert!(stat < chi_square_critical(df, ALPHA), "{counts:?}");
}
