use rand::Rng;

use super::network::log_softmax;
use super::ModelError;

/// Draws an index from `softmax(logits / temperature)`.
///
/// Temperature 0 is greedy (lowest index wins ties) and reports the
/// temperature-1 log-probability of the chosen index.
pub fn sample_categorical<R: Rng + ?Sized>(
    logits: &[f64],
    temperature: f64,
    rng: &mut R,
) -> Result<(usize, f64), ModelError> {
    if logits.is_empty() || logits.iter().any(|z| !z.is_finite()) {
        return Err(ModelError::NonFiniteLogits);
    }
    sample_masked(logits, temperature, None, rng)
}

/// As [`sample_categorical`], with index `mask` excluded from the support.
pub fn sample_masked<R: Rng + ?Sized>(
    logits: &[f64],
    temperature: f64,
    mask: Option<usize>,
    rng: &mut R,
) -> Result<(usize, f64), ModelError> {
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(ModelError::InvalidSpec(format!("temperature {temperature}")));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(ModelError::NonFiniteLogits);
    }
    let mut z = logits.to_vec();
    if let Some(m) = mask {
        if m < z.len() && z.len() > 1 {
            z[m] = f64::NEG_INFINITY;
        }
    }
    if temperature == 0.0 {
        let mut best = usize::MAX;
        for (i, &v) in z.iter().enumerate() {
            if v != f64::NEG_INFINITY && (best == usize::MAX || v > z[best]) {
                best = i;
            }
        }
        return Ok((best, log_softmax(&z, 1.0)[best]));
    }
    let logp = log_softmax(&z, temperature);
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_live = 0;
    for (i, lp) in logp.iter().enumerate() {
        if *lp == f64::NEG_INFINITY {
            continue;
        }
        last_live = i;
        cum += lp.exp();
        if u < cum {
            return Ok((i, *lp));
        }
    }
    Ok((last_live, logp[last_live]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_pair_logprob() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (i, lp) = sample_categorical(&[0.0, 0.0], 1.0, &mut rng).unwrap();
        assert!(i < 2);
        assert!((lp + std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn greedy_and_tie_break() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_categorical(&[1.0, 3.0, 2.0], 0.0, &mut rng).unwrap().0, 1);
        assert_eq!(sample_categorical(&[2.0, 2.0], 0.0, &mut rng).unwrap().0, 0);
        let (_, lp) = sample_categorical(&[2.0, 2.0], 0.0, &mut rng).unwrap();
        assert!((lp + std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn masking_takes_runner_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = [0.5, 2.0, 1.0, 0.0];
        assert_eq!(sample_masked(&logits, 0.0, Some(1), &mut rng).unwrap().0, 2);
        for _ in 0..200 {
            assert_ne!(sample_masked(&logits, 1.0, Some(1), &mut rng).unwrap().0, 1);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_categorical(&[f64::NAN, 0.0], 1.0, &mut rng), Err(ModelError::NonFiniteLogits));
        assert_eq!(sample_categorical(&[f64::INFINITY], 0.0, &mut rng), Err(ModelError::NonFiniteLogits));
    }

    #[test]
    fn empirical_frequencies_follow_tempered_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits = [0.0, 1.0, -1.0];
        let t = 0.5;
        let p: Vec<f64> = log_softmax(&logits, t).iter().map(|l| l.exp()).collect();
        let n = 40_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_categorical(&logits, t, &mut rng).unwrap().0] += 1;
        }
        for i in 0..3 {
            assert!((counts[i] as f64 / n as f64 - p[i]).abs() < 0.01);
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_categorical(&[0.1, 0.2, 0.3], 0.9, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
    }
}
