//! Per-round sampling of active workers.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey};

/// `ceil(rate * n)` active workers for round `t`, sorted by index. Worker 1
/// (index 0) is always active; the rest are drawn uniformly without
/// replacement from the round's stream.
pub fn sample_participation(n: usize, rate: f64, seed: u64, t: u64) -> Result<Vec<usize>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::invalid("participation", format!("{rate} is outside (0, 1]")));
    }
    if n == 0 {
        return Err(Error::EmptyInput("workers"));
    }
    let k = ((rate * n as f64).ceil() as usize).clamp(1, n);
    if k == n {
        return Ok((0..n).collect());
    }
    let mut rng = StreamKey::new(seed, Purpose::Participation, 0, t).rng();
    let mut active: Vec<usize> = std::iter::once(0)
        .chain(index::sample(&mut rng, n - 1, k - 1).into_iter().map(|i| i + 1))
        .collect();
    active.sort_unstable();
    Ok(active)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rate_is_everyone() {
        assert_eq!(sample_participation(6, 1.0, 3, 9).unwrap(), (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn half_rate_pins_server() {
        for t in 0..1000 {
            let w = sample_participation(10, 0.5, 42, t).unwrap();
            assert_eq!(w.len(), 5);
            assert_eq!(w[0], 0);
            assert!(w.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn deterministic_per_round() {
        assert_eq!(
            sample_participation(10, 0.3, 1, 17).unwrap(),
            sample_participation(10, 0.3, 1, 17).unwrap()
        );
    }

    #[test]
    fn rejects_bad_rate() {
        assert!(sample_participation(10, 0.0, 1, 0).is_err());
        assert!(sample_participation(10, 1.5, 1, 0).is_err());
    }
}
