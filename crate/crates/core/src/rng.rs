//! Seeded random sampling shared by the library and the command line.
//!
//! The bit stream is SplitMix64 (increment `0x9E3779B97F4A7C15`, output
//! multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`). Uniform
//! doubles use the top 53 bits, `(x >> 11) * 2^-53`, and normal deviates use
//! the Box-Muller transform on two consecutive uniforms. Every random field
//! in the crate is drawn in storage order, so a seed fixes the output on any
//! platform.

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::algebra::{AlgebraElement, GroupId};

pub struct LabRng {
    inner: SplitMix64,
}

impl LabRng {
    pub fn new(seed: u64) -> Self {
        LabRng {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal deviate.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Algebra element with independent standard normal components.
    pub fn algebra_normal(&mut self, group: GroupId) -> AlgebraElement {
        match group {
            GroupId::U1 => AlgebraElement::U1(self.normal()),
            GroupId::Su2 => AlgebraElement::Su2([self.normal(), self.normal(), self.normal()]),
        }
    }
}
