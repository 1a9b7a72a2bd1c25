use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NotConfig, NotError};

/// Draws `config.n_intervals` intervals `(s, e)` whose endpoints are uniform
/// on `[0, n_obs - 1]`, keeping only those long enough to hold two minimum
/// segments. Deterministic in `config.seed`.
pub fn draw_intervals(n_obs: usize, config: &NotConfig) -> Result<Vec<(usize, usize)>, NotError> {
    config.validate()?;
    let min_len = 2 * config.min_seg_len;
    if n_obs < min_len {
        return Err(NotError::SeriesTooShort {
            n_obs,
            needed: min_len,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.n_intervals);
    while out.len() < config.n_intervals {
        let a = rng.random_range(0..n_obs);
        let b = rng.random_range(0..n_obs);
        let (s, e) = if a <= b { (a, b) } else { (b, a) };
        if e - s + 1 >= min_len {
            out.push((s, e));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_interval_when_series_is_minimal() {
        let cfg = NotConfig {
            n_intervals: 50,
            min_seg_len: 2,
            ..NotConfig::default()
        };
        let iv = draw_intervals(4, &cfg).unwrap();
        assert_eq!(iv.len(), 50);
        assert!(iv.iter().all(|&p| p == (0, 3)));
    }

    #[test]
    fn same_seed_same_intervals() {
        let cfg = NotConfig {
            n_intervals: 500,
            seed: 9,
            ..NotConfig::default()
        };
        let other = NotConfig {
            seed: 10,
            ..cfg.clone()
        };
        assert_eq!(
            draw_intervals(300, &cfg).unwrap(),
            draw_intervals(300, &cfg).unwrap()
        );
        assert_ne!(
            draw_intervals(300, &cfg).unwrap(),
            draw_intervals(300, &other).unwrap()
        );
    }

    #[test]
    fn lengths_cover_the_admissible_range() {
        let cfg = NotConfig {
            n_intervals: 10_000,
            min_seg_len: 2,
            seed: 3,
            ..NotConfig::default()
        };
        let iv = draw_intervals(1000, &cfg).unwrap();
        let lengths: Vec<usize> = iv.iter().map(|(s, e)| e - s + 1).collect();
        assert!(lengths.iter().all(|&l| (4..=1000).contains(&l)));
        assert!(iv.iter().all(|&(s, e)| s < e && e < 1000));
        // every decile of the length range is hit
        let mut bins = [0usize; 10];
        for l in &lengths {
            bins[((l - 4) * 10 / 997).min(9)] += 1;
        }
        assert!(bins.iter().all(|&c| c > 0), "{bins:?}");
        assert!(*lengths.iter().min().unwrap() <= 10);
        assert!(*lengths.iter().max().unwrap() >= 980);
    }

    #[test]
    fn too_short_series_is_rejected() {
        assert!(matches!(
            draw_intervals(
                3,
                &NotConfig {
                    min_seg_len: 2,
                    ..NotConfig::default()
                }
            ),
            Err(NotError::SeriesTooShort {
                n_obs: 3,
                needed: 4
            })
        ));
    }
}
