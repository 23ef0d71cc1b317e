//! Counter-based random numbers.
//!
//! Every random quantity in the crate is a pure function of a 64-bit key and
//! a 128-bit counter, evaluated with Philox4x32-10. Keys are derived by
//! hashing structured identifiers (master seed, replica, cell coordinates,
//! trajectory index), so draws do not depend on evaluation order and any
//! worker can reproduce any draw.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// One Philox4x32 block with 10 rounds.
#[inline]
pub fn philox4x32(key: [u32; 2], ctr: [u32; 4]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds keys from a sequence of words. Not a cryptographic hash; collisions
/// between distinct identifier tuples are as unlikely as for a random 64-bit map.
#[derive(Clone, Copy, Debug)]
pub struct KeyBuilder(u64);

impl KeyBuilder {
    pub fn new(domain: u64) -> Self {
        KeyBuilder(mix64(domain ^ 0x6A09_E667_F3BC_C908))
    }

    #[inline]
    pub fn push(self, word: u64) -> Self {
        KeyBuilder(mix64(self.0.wrapping_add(0x9E37_79B9_7F4A_7C15) ^ mix64(word)))
    }

    #[inline]
    pub fn push_i64(self, word: i64) -> Self {
        self.push(word as u64)
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

/// Stream tags keep draws for different purposes apart under the same key.
pub mod domain {
    pub const CELL_POINTS: u64 = 0x43454C4C;
    pub const REPLICA: u64 = 0x5245504C;
    pub const LATTICE_PHASE: u64 = 0x50484153;
    pub const BROWNIAN: u64 = 0x42524F57;
    pub const PROBE: u64 = 0x50524F42;
}

/// A deterministic stream of random words: block `i` is `philox(key, [i, stream])`.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: [u32; 2],
    stream: u64,
    block: u64,
    buf: [u32; 4],
    used: usize,
}

impl CounterRng {
    pub fn new(key: u64, stream: u64) -> Self {
        CounterRng {
            key: [key as u32, (key >> 32) as u32],
            stream,
            block: 0,
            buf: [0; 4],
            used: 4,
        }
    }

    /// Repositions the stream so the next word comes from block `block`.
    pub fn seek_block(&mut self, block: u64) {
        self.block = block;
        self.used = 4;
    }

    #[inline]
    fn refill(&mut self) {
        let ctr = [
            self.block as u32,
            (self.block >> 32) as u32,
            self.stream as u32,
            (self.stream >> 32) as u32,
        ];
        self.buf = philox4x32(self.key, ctr);
        self.block = self.block.wrapping_add(1);
        self.used = 0;
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.refill();
        }
        let w = self.buf[self.used];
        self.used += 1;
        w
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let hi = self.next_u32() as u64;
        let lo = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// A pair of independent standard normals (Box-Muller).
    #[inline]
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let (s, c) = libm::sincos(core::f64::consts::TAU * u2);
        (radius * c, radius * s)
    }

    /// Fills `out` with independent standard normals.
    pub fn fill_normals(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.normal_pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.normal_pair().0;
        }
    }
}

/// Poisson sampler by CDF inversion, truncated at a precomputed cap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonSampler {
    mean: f64,
    p0: f64,
    cap: u32,
}

impl PoissonSampler {
    /// `tail` is the probability mass allowed beyond the cap.
    pub fn new(mean: f64, tail: f64) -> Self {
        let p0 = libm::exp(-mean);
        let mut p = p0;
        let mut cdf = p0;
        let mut k = 0u32;
        while 1.0 - cdf > tail && k < 100_000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            if p == 0.0 && cdf < 1.0 - tail {
                // mean too large for direct inversion in double precision
                break;
            }
        }
        PoissonSampler { mean, p0, cap: k }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Largest count this sampler can return.
    pub fn cap(&self) -> u32 {
        self.cap
    }

    #[inline]
    pub fn sample(&self, u: f64) -> u32 {
        let mut k = 0u32;
        let mut p = self.p0;
        let mut cdf = p;
        while u >= cdf && k < self.cap {
            k += 1;
            p *= self.mean / k as f64;
            cdf += p;
        }
        k
    }
}
