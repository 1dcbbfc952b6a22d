//! Counter-based Gaussian streams. Every draw is a pure function of
//! `(seed, stream, step, slot)`, so coupled trajectories can share a noise
//! path exactly and ensembles parallelize without shared state.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn mix4(seed: u64, stream: u64, step: u64, slot: u64) -> u64 {
    let mut h = splitmix(seed ^ GAMMA);
    h = splitmix(h ^ stream.wrapping_mul(0xd134_2543_de82_ef95));
    h = splitmix(h ^ step.wrapping_mul(0xff51_afd7_ed55_8ccd));
    h = splitmix(h ^ slot.wrapping_mul(0xc4ce_b9fe_1a85_ec53));
    h
}

/// Uniform in (0, 1], from the top 53 bits.
#[inline]
fn to_unit_open(x: u64) -> f64 {
    ((x >> 11) + 1) as f64 / (1u64 << 53) as f64
}

/// Identifies one independent noise realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub stream: u64,
}

impl StreamKey {
    pub fn new(seed: u64, stream: u64) -> Self {
        StreamKey { seed, stream }
    }

    /// Derive a sub-stream, e.g. one per ensemble member.
    pub fn substream(&self, index: u64) -> Self {
        StreamKey {
            seed: self.seed,
            stream: splitmix(self.stream ^ index.wrapping_mul(GAMMA)),
        }
    }

    /// Standard normal attached to `(step, slot)`, via Box-Muller.
    pub fn gaussian(&self, step: u64, slot: u64) -> f64 {
        let h = mix4(self.seed, self.stream, step, slot);
        let u1 = to_unit_open(h);
        let u2 = to_unit_open(splitmix(h ^ GAMMA));
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform in [0, 1).
    pub fn uniform(&self, step: u64, slot: u64) -> f64 {
        (mix4(self.seed, self.stream, step, slot) >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform integer in [0, n).
    pub fn below(&self, step: u64, slot: u64, n: u64) -> u64 {
        mix4(self.seed, self.stream, step, slot) % n
    }
}
