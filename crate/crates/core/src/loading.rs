//! Cyclic loading programs: constant-amplitude and block-wise
//! variable-amplitude stress spectra.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum LoadingError {
    #[error("loading block {index}: sigma_max ({sigma_max}) must exceed sigma_min ({sigma_min}) and sigma_min must be >= 0")]
    InvalidStressRange {
        index: usize,
        sigma_max: f64,
        sigma_min: f64,
    },
    #[error("loading block {0}: cycle count must be positive")]
    EmptyBlock(usize),
    #[error("loading spec must be either one repeat-forever block or a repeating sequence of finite blocks")]
    MixedBlocks,
    #[error("loading spec has no blocks")]
    NoBlocks,
    #[error("frequency must be positive")]
    NonPositiveFrequency,
}

/// One stress block: `cycle_count = None` means repeat forever.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingBlock<T> {
    pub sigma_max_mpa: T,
    pub sigma_min_mpa: T,
    pub cycle_count: Option<u64>,
}

impl<T: Real> LoadingBlock<T> {
    pub fn delta_sigma(&self) -> T {
        self.sigma_max_mpa - self.sigma_min_mpa
    }
}

/// A loading program. Valid shapes are exactly one repeat-forever block
/// (constant amplitude) or a sequence of finite blocks that repeats
/// indefinitely (variable amplitude).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingSpec<T> {
    blocks: Vec<LoadingBlock<T>>,
    frequency_hz: T,
}

impl<T: Real> LoadingSpec<T> {
    pub fn new(blocks: Vec<LoadingBlock<T>>, frequency_hz: T) -> Result<Self, LoadingError> {
        if blocks.is_empty() {
            return Err(LoadingError::NoBlocks);
        }
        if frequency_hz <= T::zero() {
            return Err(LoadingError::NonPositiveFrequency);
        }
        for (index, b) in blocks.iter().enumerate() {
            if b.sigma_min_mpa < T::zero() || b.sigma_max_mpa <= b.sigma_min_mpa {
                return Err(LoadingError::InvalidStressRange {
                    index,
                    sigma_max: b.sigma_max_mpa.to_f64().unwrap_or(f64::NAN),
                    sigma_min: b.sigma_min_mpa.to_f64().unwrap_or(f64::NAN),
                });
            }
            if b.cycle_count == Some(0) {
                return Err(LoadingError::EmptyBlock(index));
            }
        }
        let forever = blocks.iter().filter(|b| b.cycle_count.is_none()).count();
        match forever {
            0 => {}
            1 if blocks.len() == 1 => {}
            _ => return Err(LoadingError::MixedBlocks),
        }
        Ok(Self {
            blocks,
            frequency_hz,
        })
    }

    pub fn constant_amplitude(
        sigma_max_mpa: T,
        sigma_min_mpa: T,
        frequency_hz: T,
    ) -> Result<Self, LoadingError> {
        Self::new(
            vec![LoadingBlock {
                sigma_max_mpa,
                sigma_min_mpa,
                cycle_count: None,
            }],
            frequency_hz,
        )
    }

    pub fn blocks(&self) -> &[LoadingBlock<T>] {
        &self.blocks
    }

    pub fn frequency_hz(&self) -> T {
        self.frequency_hz
    }

    pub fn is_constant_amplitude(&self) -> bool {
        self.blocks.len() == 1 && self.blocks[0].cycle_count.is_none()
    }

    /// Total cycles in one pass over the finite blocks; `None` for
    /// constant amplitude.
    pub fn period(&self) -> Option<u64> {
        if self.is_constant_amplitude() {
            None
        } else {
            Some(self.blocks.iter().map(|b| b.cycle_count.unwrap()).sum())
        }
    }

    /// Stress range applied at cycle number `n` (blocks repeat).
    pub fn delta_sigma_at(&self, n: f64) -> T {
        if self.is_constant_amplitude() {
            return self.blocks[0].delta_sigma();
        }
        let period = self.period().unwrap() as f64;
        let mut pos = n.rem_euclid(period);
        for b in &self.blocks {
            let len = b.cycle_count.unwrap() as f64;
            if pos < len {
                return b.delta_sigma();
            }
            pos -= len;
        }
        self.blocks.last().unwrap().delta_sigma()
    }

    /// Split `[from, to)` on the cycle axis into maximal segments of
    /// constant stress range. Used by integrators so each step sees one
    /// delta-sigma.
    pub fn segments_between(&self, from: f64, to: f64) -> Vec<(f64, f64, T)> {
        assert!(to >= from, "segment range must be forward");
        if to == from {
            return Vec::new();
        }
        if self.is_constant_amplitude() {
            return vec![(from, to, self.blocks[0].delta_sigma())];
        }
        let period = self.period().unwrap() as f64;
        // Block boundaries as absolute cycle numbers.
        let mut out = Vec::new();
        let mut n = from;
        while n < to {
            let pos = n.rem_euclid(period);
            // Locate the block containing pos and its absolute end.
            let mut acc = 0.0;
            let mut ds = self.blocks[0].delta_sigma();
            let mut remaining = period - pos;
            for b in &self.blocks {
                let len = b.cycle_count.unwrap() as f64;
                if pos < acc + len {
                    ds = b.delta_sigma();
                    remaining = acc + len - pos;
                    break;
                }
                acc += len;
            }
            let end = (n + remaining).min(to);
            out.push((n, end, ds));
            n = end;
        }
        out
    }
}
