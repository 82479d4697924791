//! Counter-based random number streams.
//!
//! Every consumer owns a stream keyed by `(seed, entity id, step, phase)`.
//! Draws are a pure function of the key and a draw counter, so the same
//! configuration produces the same numbers no matter how work is divided
//! between threads.

use crate::fmath;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer; good avalanche, cheap.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Phase labels keep the streams of distinct per-step consumers disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init = 1,
    Predict = 2,
    Boundary = 3,
    Recycle = 4,
    Diagnostics = 5,
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    base: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl CounterRng {
    /// Stream for entity `id` (particle or cell) at step `step` in `phase`.
    pub fn stream(seed: u64, id: u64, step: u64, phase: Phase) -> Self {
        let mut base = mix64(seed ^ GOLDEN.wrapping_mul(id.wrapping_add(1)));
        base = mix64(base ^ (step.wrapping_add(1)).wrapping_mul(0xd6e8_feb8_6659_fd93));
        base = mix64(base ^ (phase as u64).wrapping_mul(0xa076_1d64_78bd_642f));
        CounterRng {
            base,
            counter: 0,
            spare_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.base.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in (0, 1]; never returns 0 so `ln` is safe.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal draw (Box-Muller, pairwise).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = fmath::sqrt(-2.0 * fmath::ln(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * fmath::sin(theta));
        r * fmath::cos(theta)
    }

    /// Three independent standard normal draws.
    pub fn normal3(&mut self) -> [f64; 3] {
        [self.normal(), self.normal(), self.normal()]
    }
}
