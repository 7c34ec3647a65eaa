//! Deterministic counter-based random number generation.
//!
//! Every draw in the simulator is a pure function of a structured key
//! (domain tag, master seed, learner id, counter indices). Lazily
//! materialized values are therefore independent of evaluation order and
//! thread schedule, which is what makes sequential and parallel runs
//! byte-identical.
//!
//! SplitMix64 is used as the mixer: non-cryptographic, stable across
//! platforms, good bit diffusion.

/// Domain separation tags. Data draws and privacy-noise draws must come from
/// disjoint streams so that runs with different noise mechanisms share the
/// exact same data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Noise,
    Data,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Noise => 0x4e4f4953452d4f46, // "NOISE-OF"
            Domain::Data => 0x444154412d4f464c,  // "DATA-OFL"
        }
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collapse a structured key into a single well-mixed 64-bit state.
fn key_state(domain: Domain, parts: &[u64]) -> u64 {
    let mut state = mix(domain.tag().wrapping_add(GOLDEN_GAMMA));
    for &p in parts {
        state = mix(state.wrapping_add(GOLDEN_GAMMA) ^ p.wrapping_mul(0xA24B_AED4_963E_E407));
    }
    state
}

#[inline]
fn to_open01(x: u64) -> f64 {
    // 53 significant bits, shifted into (0, 1] so ln() is always finite.
    (((x >> 11) + 1) as f64) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn to_half_open01(x: u64) -> f64 {
    ((x >> 11) as f64) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw addressed by key. Box-Muller on two SplitMix64
/// outputs derived from the key state.
pub fn normal_from_key(domain: Domain, parts: &[u64]) -> f64 {
    let s = key_state(domain, parts);
    let a = mix(s.wrapping_add(GOLDEN_GAMMA));
    let b = mix(s.wrapping_add(GOLDEN_GAMMA.wrapping_mul(2)));
    let u1 = to_open01(a);
    let u2 = to_half_open01(b);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform draw in [0, 1) addressed by key.
pub fn uniform_from_key(domain: Domain, parts: &[u64]) -> f64 {
    let s = key_state(domain, parts);
    to_half_open01(mix(s.wrapping_add(GOLDEN_GAMMA)))
}

/// Sequential SplitMix64 stream, used where a naturally ordered sequence of
/// draws is clearer than counter addressing (e.g. drift direction vectors).
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Stream keyed by a structured prefix, domain-separated.
    pub fn from_key(domain: Domain, parts: &[u64]) -> Self {
        Self {
            state: key_state(domain, parts),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        to_half_open01(self.next_u64())
    }

    /// Standard normal via Box-Muller (cosine branch).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = to_open01(self.next_u64());
        let u2 = to_half_open01(self.next_u64());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
