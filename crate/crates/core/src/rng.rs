//! Counter-based random draws.
//!
//! Every draw is a pure function of `(seed, counters...)`, so the value seen by
//! agent `i` at step `k` does not depend on evaluation order or thread count.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a seed and a sequence of counters into 64 random bits.
#[inline]
pub fn hash(seed: u64, counters: &[u64]) -> u64 {
    let mut h = mix(seed.wrapping_add(GOLDEN));
    for &c in counters {
        h = mix(h ^ mix(c.wrapping_add(GOLDEN).wrapping_mul(GOLDEN)));
    }
    h
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn uniform(seed: u64, counters: &[u64]) -> f64 {
    (hash(seed, counters) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seed for the `index`-th member of an ensemble derived from `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    hash(master, &[0x5EED, index])
}

/// Sample an index from a probability vector by inverse CDF.
///
/// Zero-probability entries are never returned.
pub fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (idx, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = idx;
        if u < acc {
            return idx;
        }
    }
    last
}

/// Small sequential generator on top of [`hash`] for builders that need a
/// stream of draws (random graphs, random instances).
#[derive(Debug, Clone)]
pub struct Stream {
    seed: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        hash(self.seed, &[self.counter])
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, upper)`; `upper` must be positive.
    pub fn below(&mut self, upper: usize) -> usize {
        debug_assert!(upper > 0);
        ((self.next_u64() as u128 * upper as u128) >> 64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// A random point of the probability simplex with `len` entries, all positive.
    pub fn simplex(&mut self, len: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..len).map(|_| -(1.0 - self.next_f64()).ln() + 1e-3).collect();
        let total: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= total);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_pure_functions_of_counters() {
        assert_eq!(hash(7, &[1, 2, 3]), hash(7, &[1, 2, 3]));
        assert_ne!(hash(7, &[1, 2, 3]), hash(7, &[1, 3, 2]));
        assert_ne!(hash(7, &[1]), hash(8, &[1]));
        let u = uniform(42, &[10, 3]);
        assert!((0.0..1.0).contains(&u));
    }

    #[test]
    fn uniform_mean_is_about_half() {
        let n = 100_000;
        let mean: f64 = (0..n).map(|k| uniform(1, &[k])).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn categorical_skips_zero_mass() {
        let p = [0.0, 0.5, 0.0, 0.5];
        for i in 0..1000 {
            let s = sample_categorical(&p, uniform(3, &[i]));
            assert!(s == 1 || s == 3);
        }
        assert_eq!(sample_categorical(&p, 0.999_999_999), 3);
    }

    #[test]
    fn categorical_frequencies_track_probabilities() {
        let p = [0.2, 0.3, 0.5];
        let mut counts = [0usize; 3];
        let n = 60_000;
        for i in 0..n {
            counts[sample_categorical(&p, uniform(9, &[i]))] += 1;
        }
        for (c, q) in counts.iter().zip(p) {
            assert!((*c as f64 / n as f64 - q).abs() < 0.01);
        }
    }
}
