//! Counter-based random streams.
//!
//! Every variate is a pure function of `(key, counter)`, so a stream can be
//! re-created at any position and independent streams are obtained by
//! hashing indices into the key. Parallel workers that own disjoint indices
//! therefore produce the same numbers regardless of scheduling.

use rand_core::RngCore;

const WEYL: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn from_seed(seed: u64) -> Self {
        StreamKey(mix64(seed ^ 0x6A09_E667_F3BC_C908))
    }

    /// Child stream `index` of this stream.
    pub fn derive(self, index: u64) -> Self {
        StreamKey(mix64(self.0 ^ mix64(index.wrapping_add(1).wrapping_mul(WEYL))))
    }

    pub fn derive2(self, a: u64, b: u64) -> Self {
        self.derive(a).derive(b)
    }

    pub fn rng(self) -> CounterRng {
        CounterRng::new(self)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

/// Sequential reader over a counter-based stream.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl CounterRng {
    pub fn new(key: StreamKey) -> Self {
        CounterRng {
            key: key.0,
            counter: 0,
            spare_normal: None,
        }
    }

    /// Value at an absolute position, independent of the reader state.
    #[inline]
    pub fn at(key: StreamKey, counter: u64) -> u64 {
        mix64(mix64(counter.wrapping_mul(WEYL) ^ key.0))
    }

    pub fn position(&self) -> u64 {
        self.counter
    }

    #[inline]
    fn next_raw(&mut self) -> u64 {
        let v = mix64(mix64(self.counter.wrapping_mul(WEYL) ^ self.key));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_raw() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal by Box–Muller; each pair of variates consumes two
    /// counter positions.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare_normal = Some(radius * s);
        radius * c
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_raw() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_raw()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_raw().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
