//! Sampling heads: categorical draws for actions, independent Bernoulli
//! draws for bit vectors. Both report the log-probability of the drawn
//! outcome and the entropy of the distribution.

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDraw {
    pub index: usize,
    pub log_prob: f64,
    pub entropy: f64,
}

/// Draws an index from a normalized probability vector. One uniform draw,
/// inverted through the cumulative distribution in index order.
///
/// Panics if the probabilities do not sum to 1 (within 1e-6) or contain
/// negative entries.
pub fn sample_categorical(probs: &[f64], rng: &mut Rng) -> CategoricalDraw {
    assert!(!probs.is_empty(), "empty probability vector");
    let total: f64 = probs.iter().sum();
    assert!(
        (total - 1.0).abs() < 1e-6,
        "unnormalized probabilities (sum = {total})"
    );
    assert!(
        probs.iter().all(|&p| p >= 0.0),
        "negative probability entry"
    );

    let u = rng.next_f64() * total;
    let mut acc = 0.0;
    let mut index = probs.len() - 1;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            index = i;
            break;
        }
    }
    // Skip back off any zero-probability tail we may have landed on.
    while probs[index] == 0.0 && index > 0 {
        index -= 1;
    }

    CategoricalDraw {
        index,
        log_prob: probs[index].ln(),
        entropy: entropy_of(probs),
    }
}

fn entropy_of(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliDraw {
    pub bits: Vec<u8>,
    pub log_prob: f64,
    pub entropy: f64,
}

/// Draws an independent bit per probability (one uniform draw each).
/// `log_prob` is the joint log-probability of the drawn bit vector and
/// `entropy` the sum of per-bit entropies.
pub fn sample_bernoulli(ps: &[f64], rng: &mut Rng) -> BernoulliDraw {
    assert!(
        ps.iter().all(|&p| (0.0..=1.0).contains(&p)),
        "bernoulli probability outside [0, 1]"
    );
    let mut bits = Vec::with_capacity(ps.len());
    let mut log_prob = 0.0;
    let mut entropy = 0.0;
    for &p in ps {
        let bit = rng.next_f64() < p;
        bits.push(bit as u8);
        let q = if bit { p } else { 1.0 - p };
        log_prob += q.ln();
        if p > 0.0 && p < 1.0 {
            entropy += -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        }
    }
    BernoulliDraw {
        bits,
        log_prob,
        entropy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn onehot_always_that_index() {
        let mut rng = Rng::from_seed(1);
        for _ in 0..100 {
            let d = sample_categorical(&[0.0, 1.0, 0.0], &mut rng);
            assert_eq!(d.index, 1);
            assert_eq!(d.log_prob, 0.0);
            assert_eq!(d.entropy, 0.0);
        }
    }

    #[test]
    #[should_panic(expected = "unnormalized")]
    fn rejects_unnormalized() {
        let mut rng = Rng::from_seed(1);
        let _ = sample_categorical(&[0.5, 0.2], &mut rng);
    }

    #[test]
    fn empirical_frequency_two_outcomes() {
        // Law of large numbers: frequencies of (0.3, 0.7) over 1e5 draws
        // land within ±0.01.
        let mut rng = Rng::from_seed(123);
        let n = 100_000;
        let mut count1 = 0usize;
        for _ in 0..n {
            if sample_categorical(&[0.3, 0.7], &mut rng).index == 1 {
                count1 += 1;
            }
        }
        let freq = count1 as f64 / n as f64;
        assert!((freq - 0.7).abs() < 0.01, "freq = {freq}");
    }

    #[test]
    fn bernoulli_zero_prob_bit_always_zero() {
        let mut rng = Rng::from_seed(5);
        for _ in 0..200 {
            let d = sample_bernoulli(&[0.0, 1.0, 0.5], &mut rng);
            assert_eq!(d.bits[0], 0);
            assert_eq!(d.bits[1], 1);
        }
    }

    #[test]
    fn bernoulli_log_prob_and_entropy() {
        let mut rng = Rng::from_seed(5);
        let d = sample_bernoulli(&[0.5, 0.5], &mut rng);
        assert!((d.log_prob - (0.25f64).ln()).abs() < 1e-12);
        // Each fair bit carries ln 2 of entropy.
        assert!((d.entropy - 2.0 * (2.0f64).ln()).abs() < 1e-12);
    }
}
