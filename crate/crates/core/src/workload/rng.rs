//! Seedable, portable random number generation.
//!
//! The generator is SplitMix64: 64-bit state advanced by the golden-gamma
//! constant, finalized with two xor-shift-multiply rounds. It is tiny, has a
//! published reference implementation, and reproduces byte-identical streams
//! from the same seed in any language, which is why trace files carry its
//! identifier in their header instead of depending on a library RNG.
//!
//! Derived quantities are fixed too: uniforms take the top 53 bits, normals
//! come from the Box-Muller transform (cosine first, sine cached), and
//! bounded integers reduce with a plain modulus.

/// Identifier written into trace file headers.
pub const RNG_ALGORITHM: &str = "splitmix64";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 stream with a one-slot cache for the Box-Muller pair.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    cached_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 {
            state: seed,
            cached_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1): top 53 bits scaled by 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform strictly inside (0, 1); safe to pass to `ln`.
    pub fn next_open_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Plain modulus reduction; the bias is below
    /// n / 2^64 and irrelevant for workload shaping.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// Standard normal via Box-Muller. Consumes two uniforms per pair and
    /// caches the second value.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fill a fresh vector with standard normals.
    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.next_normal()).collect()
    }
}

const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Expand one top-level seed into a component sub-seed.
///
/// Derivation: FNV-1a of the component name, xor-folded into the master
/// seed, finalized by one SplitMix64 draw. Every consumer of randomness in
/// the artifact names itself here, so the whole run is a function of the one
/// configured seed.
pub fn derive_seed(master: u64, component: &str) -> u64 {
    SplitMix64::new(master ^ fnv1a(component.as_bytes())).next_u64()
}
