//! Computational z-basis configurations of an N-spin chain.

use crate::error::{Error, Result};

/// A z-basis product state: `spins[a]` is the eigenvalue of sigma^z_a, +1 or -1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    spins: Vec<i8>,
}

impl SpinConfiguration {
    /// Validates that every entry is +1 or -1.
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Contract(
                "spin configuration entries must be +1 or -1".into(),
            ));
        }
        Ok(Self { spins })
    }

    /// All spins up (+1).
    pub fn all_up(n: usize) -> Self {
        Self { spins: vec![1; n] }
    }

    /// All spins down (-1).
    pub fn all_down(n: usize) -> Self {
        Self { spins: vec![-1; n] }
    }

    /// Decodes a basis index: bit `a` of `index` set means spin `a` is +1.
    /// This is the ordering used by the dense oracle vectors.
    pub fn from_index(index: usize, n: usize) -> Self {
        let spins = (0..n)
            .map(|a| if index >> a & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { spins }
    }

    /// Inverse of [`from_index`](Self::from_index).
    pub fn to_index(&self) -> usize {
        self.spins
            .iter()
            .enumerate()
            .fold(0, |acc, (a, &s)| if s == 1 { acc | 1 << a } else { acc })
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    /// Spin value at site `a` as f64 (+1.0 or -1.0).
    #[inline]
    pub fn spin(&self, a: usize) -> f64 {
        f64::from(self.spins[a])
    }

    #[inline]
    pub fn spin_i8(&self, a: usize) -> i8 {
        self.spins[a]
    }

    /// Flips the spin at site `a` in place.
    #[inline]
    pub fn flip(&mut self, a: usize) {
        self.spins[a] = -self.spins[a];
    }

    /// Returns a copy with the listed sites flipped.
    pub fn flipped(&self, sites: &[usize]) -> Self {
        let mut out = self.clone();
        for &a in sites {
            out.flip(a);
        }
        out
    }

    /// Number of up spins; each sigma^- channel acts only on these.
    pub fn count_up(&self) -> usize {
        self.spins.iter().filter(|&&s| s == 1).count()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.spins
    }
}
