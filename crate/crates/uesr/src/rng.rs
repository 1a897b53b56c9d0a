//! Seedable PRNG used everywhere randomness is needed.
//!
//! The generator is xoshiro256** (Blackman & Vigna), seeded through
//! splitmix64. Both algorithms are public domain and small enough to spell
//! out here, which keeps trajectories reproducible across implementations:
//! any port that follows the draw rules documented on the methods below will
//! produce bit-identical runs.

/// splitmix64 step; used for seeding and for deriving named substreams.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// xoshiro256** generator state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Seeds the four state words by running splitmix64 on `seed`.
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
    }

    /// Derives an independent stream from a base seed and a label.
    ///
    /// The label is hashed with FNV-1a and xor-folded into the seed, so
    /// `derive(seed, "env/0")` and `derive(seed, "agent/0/actor")` never
    /// interfere no matter how many draws each consumes.
    pub fn derive(seed: u64, label: &str) -> Self {
        Rng::from_seed(seed ^ fnv1a(label.as_bytes()))
    }

    /// Core xoshiro256** step.
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1]
            .wrapping_mul(5)
            .rotate_left(7)
            .wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform f64 in [0, 1) built from the top 53 bits of one draw.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform f64 in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). One draw, reduced with the 128-bit
    /// multiply-shift trick (Lemire) without rejection; the bias is below
    /// n / 2^64 and irrelevant at the sizes used here.
    pub fn range(&mut self, n: usize) -> usize {
        assert!(n > 0, "range over empty interval");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Bernoulli draw: true with probability p. One f64 draw.
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Picks one element of a slice (one `range` draw).
    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.range(items.len())]
    }

    /// Draws `k` distinct items by sequential index draws without
    /// replacement: pick an index into the shrinking remainder, remove it.
    /// Consumes exactly `k` `range` draws; order of the result is draw order.
    pub fn sample_distinct<T: Clone>(&mut self, items: &[T], k: usize) -> Vec<T> {
        assert!(k <= items.len(), "sample_distinct: k exceeds population");
        let mut pool: Vec<T> = items.to_vec();
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let i = self.range(pool.len());
            out.push(pool.swap_remove(i));
        }
        out
    }
}

/// FNV-1a over bytes; used for substream labels and config fingerprints.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
