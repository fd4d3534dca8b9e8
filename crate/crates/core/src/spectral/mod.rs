//! Periodic-box fields and their Fourier-side machinery.
//!
//! The whole-space setting is replaced by a periodic box `[0,L₁)×[0,L₂)×[0,L₃)`
//! sampled on `N₁×N₂×N₃` points. Frequencies live on the lattice
//! `ξ_j = 2π k_j / L_j`, `k_j ∈ {−⌊N_j/2⌋, …, ⌈N_j/2⌉−1}`, and the grid carries
//! the thickness parameter `ε` used by rescaled operators.

mod fft;
mod io;
mod multiplier;

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::symbol::SymbolError;

pub use fft::{dft_forward, dft_inverse, dft_inverse_complex};
pub use io::{read_crml, read_crml_file, write_crml, write_crml_file, CRML_MAGIC, CRML_VERSION};
pub use multiplier::{
    apply_multiplier, constraint_residual, constraint_row_residuals, defect_norm,
    helmholtz_decompose, project_afree, split_zero_plane, AfreeProjector, MultiplierTable,
    ZeroModePolicy,
};

pub type Complex64 = rustfft::num_complex::Complex<f64>;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("field has {found} channels, expected {expected}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("field samples must be finite (first bad value at flat index {0})")]
    NonFinite(usize),
    #[error("sample buffer has length {found}, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("multiplier returned a {found:?} matrix, expected {expected:?}")]
    MultiplierShape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("multiplier is not even under ξ ↦ −ξ at wavenumber {k:?} (deviation {deviation:.3e})")]
    NotEven { k: [i64; 3], deviation: f64 },
    #[error("zero-mode identity needs a square multiplier")]
    NonSquareIdentity,
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error("CRML format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sample counts, box edge lengths and the thickness parameter `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    counts: [usize; 3],
    lengths: [f64; 3],
    eps: f64,
}

impl SpectralGrid {
    pub fn new(counts: [usize; 3], lengths: [f64; 3], eps: f64) -> Result<Self, SpectralError> {
        if let Some(n) = counts.iter().find(|&&n| n == 0) {
            return Err(SpectralError::Grid(format!(
                "every axis needs at least 1 sample, got {n}"
            )));
        }
        if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(SpectralError::Grid(format!(
                "box lengths must be positive, got {lengths:?}"
            )));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(SpectralError::Grid(format!(
                "eps must be positive, got {eps}"
            )));
        }
        Ok(Self {
            counts,
            lengths,
            eps,
        })
    }

    /// Unit-length box with the given counts and `ε = 1`.
    pub fn unit(counts: [usize; 3]) -> Result<Self, SpectralError> {
        Self::new(counts, [1.0; 3], 1.0)
    }

    pub fn with_eps(self, eps: f64) -> Result<Self, SpectralError> {
        Self::new(self.counts, self.lengths, eps)
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.counts[axis] as f64
    }

    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.counts[1] + i[1]) * self.counts[2] + i[2]
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let n3 = self.counts[2];
        let n2 = self.counts[1];
        [idx / (n2 * n3), (idx / n3) % n2, idx % n3]
    }

    /// Sample position `x_j = i_j L_j / N_j`.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let i = self.multi_index(idx);
        std::array::from_fn(|a| i[a] as f64 * self.spacing(a))
    }

    /// Signed integer wavenumber of FFT bin `i` along `axis`.
    #[inline]
    pub fn wavenumber(&self, axis: usize, i: usize) -> i64 {
        let n = self.counts[axis];
        if i < n.div_ceil(2) {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    pub fn wavenumbers(&self, idx: usize) -> [i64; 3] {
        let i = self.multi_index(idx);
        std::array::from_fn(|a| self.wavenumber(a, i[a]))
    }

    /// Unscaled frequency `ξ = 2π k / L` of flat bin `idx`.
    pub fn frequency(&self, idx: usize) -> [f64; 3] {
        let k = self.wavenumbers(idx);
        std::array::from_fn(|a| 2.0 * std::f64::consts::PI * k[a] as f64 / self.lengths[a])
    }

    /// Rescaled frequency `ξ_ε = (ξ₁, ξ₂, ξ₃/ε)`.
    pub fn scaled_frequency(&self, idx: usize) -> [f64; 3] {
        let mut xi = self.frequency(idx);
        xi[2] /= self.eps;
        xi
    }

    /// Unscaled frequency with every Nyquist component set to zero, so that
    /// symbols of first-order operators are odd on the discrete lattice.
    pub fn symmetric_frequency(&self, idx: usize) -> [f64; 3] {
        let i = self.multi_index(idx);
        let mut xi = self.frequency(idx);
        for a in 0..3 {
            if self.counts[a] % 2 == 0 && 2 * i[a] == self.counts[a] {
                xi[a] = 0.0;
            }
        }
        xi
    }

    /// Flat bin holding the wavenumber `−k` (mod N).
    pub fn negated(&self, idx: usize) -> usize {
        let i = self.multi_index(idx);
        self.index(std::array::from_fn(|a| {
            (self.counts[a] - i[a]) % self.counts[a]
        }))
    }
}

/// Real `n`-channel samples on a grid, flat index `(i₁, i₂, i₃)` row-major
/// with the channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: SpectralGrid,
    channels: usize,
    data: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: SpectralGrid, channels: usize) -> Self {
        Self {
            grid,
            channels,
            data: vec![0.0; grid.len() * channels],
        }
    }

    pub fn from_vec(
        grid: SpectralGrid,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, SpectralError> {
        let expected = grid.len() * channels;
        if data.len() != expected {
            return Err(SpectralError::Length {
                expected,
                found: data.len(),
            });
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite(bad));
        }
        Ok(Self {
            grid,
            channels,
            data,
        })
    }

    /// Evaluate `f(position, out)` at every sample.
    pub fn from_fn(
        grid: SpectralGrid,
        channels: usize,
        mut f: impl FnMut([f64; 3], &mut [f64]),
    ) -> Self {
        let mut field = Self::zeros(grid, channels);
        for idx in 0..grid.len() {
            f(grid.position(idx), field.at_mut(idx));
        }
        field
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    #[inline]
    pub fn at_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    /// Same samples, grid relabelled with another `ε`.
    pub fn with_eps(mut self, eps: f64) -> Result<Self, SpectralError> {
        self.grid = self.grid.with_eps(eps)?;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(∫|u|²)^{1/2}` with cell-volume weight.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.data.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.grid.cell_volume()
            * self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_compatible(&self, other: &Self) -> Result<(), SpectralError> {
        if self.grid.counts != other.grid.counts || self.grid.lengths != other.grid.lengths {
            return Err(SpectralError::GridMismatch);
        }
        if self.channels != other.channels {
            return Err(SpectralError::ChannelMismatch {
                expected: self.channels,
                found: other.channels,
            });
        }
        Ok(())
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self, SpectralError> {
        self.check_compatible(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| x + a * y)
            .collect();
        Ok(Self { data, ..*self })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SpectralError> {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &Self) -> Result<Self, SpectralError> {
        self.axpy(1.0, other)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            data: self.data.iter().map(|x| a * x).collect(),
            ..*self
        }
    }

    /// Concatenate channels, e.g. `(m, h)` into a 6-channel field.
    pub fn stack(parts: &[&Self]) -> Result<Self, SpectralError> {
        let first = parts.first().ok_or(SpectralError::ChannelMismatch {
            expected: 1,
            found: 0,
        })?;
        if parts
            .iter()
            .any(|p| p.grid.counts != first.grid.counts || p.grid.lengths != first.grid.lengths)
        {
            return Err(SpectralError::GridMismatch);
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(first.grid.len() * channels);
        for idx in 0..first.grid.len() {
            for p in parts {
                data.extend_from_slice(p.at(idx));
            }
        }
        Ok(Self {
            grid: first.grid,
            channels,
            data,
        })
    }

    /// Extract a contiguous channel range.
    pub fn channel_range(&self, range: Range<usize>) -> Self {
        let channels = range.len();
        let mut data = Vec::with_capacity(self.grid.len() * channels);
        for idx in 0..self.grid.len() {
            data.extend_from_slice(&self.at(idx)[range.clone()]);
        }
        Self {
            grid: self.grid,
            channels,
            data,
        }
    }
}

/// Complex spectral coefficients in FFT bin order, channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: SpectralGrid,
    channels: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, idx: usize) -> &[Complex64] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    #[inline]
    pub fn at_mut(&mut self, idx: usize) -> &mut [Complex64] {
        &mut self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    /// Discrete `L²` norm, equal to the field norm by Plancherel.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.data.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }
}
