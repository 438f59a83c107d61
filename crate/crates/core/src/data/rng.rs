//! A tiny documented generator for data plumbing (splits, synthetic noise).
//!
//! Weight initialization uses a cryptographic stream (ChaCha) elsewhere; data
//! shuffles and noise only need speed and a spelled-out algorithm that will
//! never change between versions, because split membership is part of every
//! experiment's identity.

/// Xorshift64* (Vigna 2016): xorshift the state by 12/25/27 and multiply by
/// an odd constant. Passes the usual statistical batteries for this use.
pub struct Xorshift64Star {
    state: u64,
}

impl Xorshift64Star {
    /// Seed 0 would lock the generator at zero, so it maps to a fixed
    /// nonzero constant instead.
    pub fn new(seed: u64) -> Xorshift64Star {
        Xorshift64Star { state: if seed == 0 { 0x9E37_79B9_7F4A_7C15 } else { seed } }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, bound)` by modulo; the bias is below 2^-40 for any
    /// bound this crate uses (pixel counts), which is fine for splits.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below: zero bound");
        self.next_u64() % bound
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box-Muller; draws two uniforms per call and uses
    /// the cosine branch only, trading half the bits for simplicity.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates, walking from the back so index `i` swaps with a uniform
    /// draw from `0..=i`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Xorshift64Star::new(42);
        let mut b = Xorshift64Star::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn zero_seed_is_usable() {
        let mut r = Xorshift64Star::new(0);
        let first = r.next_u64();
        assert_ne!(first, 0);
        assert_ne!(first, r.next_u64());
    }

    #[test]
    fn uniform_draws_stay_in_range() {
        let mut r = Xorshift64Star::new(7);
        for _ in 0..1000 {
            assert!(r.next_below(13) < 13);
            let f = r.next_f64();
            assert!((0.0..1.0).contains(&f));
        }
    }

    #[test]
    fn gaussian_moments_are_plausible() {
        let mut r = Xorshift64Star::new(99);
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| r.next_gaussian()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut r = Xorshift64Star::new(5);
        let mut items: Vec<u32> = (0..50).collect();
        r.shuffle(&mut items);
        let mut sorted = items.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<u32>>());
        assert_ne!(items, (0..50).collect::<Vec<u32>>(), "50 items should not stay in order");
    }
}
